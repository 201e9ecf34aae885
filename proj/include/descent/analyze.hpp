#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "integrate.hpp"
#include "pmp.hpp"
#include "types.hpp"

namespace descent {

enum class ArcKind
{
    max,
    min,
    singular,
};

inline const char *to_string(ArcKind k)
{
    switch (k) {
    case ArcKind::max: return "Max";
    case ArcKind::min: return "Min";
    case ArcKind::singular: return "Singular";
    }
    return "?";
}

struct Arc
{
    ArcKind kind = ArcKind::max;
    double t_start = 0.0;
    double t_end = 0.0;
    std::size_t first_node = 0;
    std::size_t last_node = 0;
};

enum class ContactKind
{
    contact_point,
    boundary_interval,
};

inline const char *to_string(ContactKind k)
{
    return k == ContactKind::contact_point ? "contact_point" : "boundary_interval";
}

struct Contact
{
    double t_c1 = 0.0;
    double t_c2 = 0.0;
    ContactKind kind = ContactKind::contact_point;
    ArcKind on_arc = ArcKind::max;
    std::size_t first_node = 0;
    std::size_t last_node = 0;
    bool final_point = false;
    /// Smallest throttle over the contact nodes.
    double min_throttle = 0.0;
};

enum class Verdict
{
    pass,
    fail,
    warning,
    skipped,
};

inline const char *to_string(Verdict v)
{
    switch (v) {
    case Verdict::pass: return "pass";
    case Verdict::fail: return "fail";
    case Verdict::warning: return "warning";
    case Verdict::skipped: return "skipped";
    }
    return "?";
}

struct Check
{
    Verdict verdict = Verdict::skipped;
    double margin = 0.0;
    std::string detail;
};

using Verdicts = std::map<std::string, Check>;

struct StructureReport
{
    std::vector<Arc> arcs;
    std::vector<double> switching_times;
    std::vector<Contact> contacts;
    Verdicts verdicts;
    std::vector<std::pair<double, double>> degenerate_intervals;

    bool passed() const
    {
        return std::none_of(verdicts.begin(), verdicts.end(),
                            [](const auto &kv) { return kv.second.verdict == Verdict::fail; });
    }

    std::size_t count(ArcKind kind) const
    {
        return static_cast<std::size_t>(
            std::count_if(arcs.begin(), arcs.end(), [&](const Arc &a) { return a.kind == kind; }));
    }

    /// e.g. "Max(0-21.3) Min(21.3-52.1) Max(52.1-75.0)"
    std::string arc_string() const
    {
        std::string out;
        char buf[96];
        for (const Arc &a : arcs) {
            std::snprintf(buf, sizeof buf, "%s%s(%.1f-%.1f)", out.empty() ? "" : " ", to_string(a.kind), a.t_start,
                          a.t_end);
            out += buf;
        }
        return out;
    }

    std::string pattern() const
    {
        std::string out;
        for (const Arc &a : arcs)
            out += (out.empty() ? "" : "-") + std::string(to_string(a.kind));
        return out;
    }
};

/// Default throttle tolerance: 2% of the throttle range.
inline double default_norm_tol(const VehicleParams &p) { return 0.02 * (p.throttle_max - p.throttle_min); }

inline constexpr double kDefaultContactTol = 0.5; // [m]

/// Labels nodes Max/Min/Singular by throttle, merges equal labels, absorbs single-node runs.
inline std::vector<Arc> classify_arcs(const Trajectory &traj, const VehicleParams &p, double norm_tol)
{
    std::vector<Arc> runs;
    if (traj.size() == 0)
        return runs;
    auto label = [&](double a) {
        if (std::abs(a - p.throttle_max) <= norm_tol)
            return ArcKind::max;
        if (std::abs(a - p.throttle_min) <= norm_tol)
            return ArcKind::min;
        return ArcKind::singular;
    };
    for (std::size_t k = 0; k < traj.size(); ++k) {
        const ArcKind kind = label(traj.controls[k].throttle);
        if (!runs.empty() && runs.back().kind == kind)
            runs.back().last_node = k;
        else
            runs.push_back({kind, 0.0, 0.0, k, k});
    }

    // Absorb isolated single-node runs; a run flanked by equal kinds bridges them.
    std::vector<Arc> merged;
    for (std::size_t i = 0; i < runs.size(); ++i) {
        Arc run = runs[i];
        const bool isolated = run.first_node == run.last_node && runs.size() > 1;
        if (isolated) {
            if (!merged.empty()) {
                merged.back().last_node = run.last_node;
                if (i + 1 < runs.size() && runs[i + 1].kind == merged.back().kind) {
                    merged.back().last_node = runs[i + 1].last_node;
                    ++i;
                }
                continue;
            }
            if (i + 1 < runs.size()) {
                runs[i + 1].first_node = run.first_node;
                continue;
            }
        }
        if (!merged.empty() && merged.back().kind == run.kind)
            merged.back().last_node = run.last_node;
        else
            merged.push_back(run);
    }

    for (std::size_t i = 0; i < merged.size(); ++i) {
        merged[i].t_start = traj.times[merged[i].first_node];
        merged[i].t_end = i + 1 < merged.size() ? traj.times[merged[i + 1].first_node] : traj.final_time();
    }
    return merged;
}

inline std::vector<Arc> classify_arcs(const Trajectory &traj, const VehicleParams &p)
{
    return classify_arcs(traj, p, default_norm_tol(p));
}

/// Switching times between consecutive arcs.
inline std::vector<double> arc_boundaries(const std::vector<Arc> &arcs)
{
    std::vector<double> out;
    for (std::size_t i = 1; i < arcs.size(); ++i)
        out.push_back(arcs[i].t_start);
    return out;
}

inline const Arc *arc_at_node(const std::vector<Arc> &arcs, std::size_t node)
{
    for (const Arc &a : arcs)
        if (node >= a.first_node && node <= a.last_node)
            return &a;
    return nullptr;
}

/// Maximal node runs with |h| <= h_tol. Requires glide-slope diagnostics.
inline std::vector<Contact> detect_contacts(const Trajectory &traj, const std::vector<Arc> &arcs, double h_tol)
{
    std::vector<Contact> out;
    const std::size_t n = traj.size();
    if (traj.diagnostics.size() != n)
        throw InvalidInput("detect_contacts: trajectory has no diagnostics");
    std::size_t k = 0;
    while (k < n) {
        if (!traj.diagnostics[k].h)
            throw InvalidInput("detect_contacts: glide-slope values missing (constraint disabled?)");
        if (std::abs(*traj.diagnostics[k].h) > h_tol) {
            ++k;
            continue;
        }
        Contact c;
        c.first_node = k;
        c.min_throttle = traj.controls[k].throttle;
        while (k + 1 < n && traj.diagnostics[k + 1].h && std::abs(*traj.diagnostics[k + 1].h) <= h_tol) {
            ++k;
            c.min_throttle = std::min(c.min_throttle, traj.controls[k].throttle);
        }
        c.last_node = k;
        c.t_c1 = traj.times[c.first_node];
        c.t_c2 = traj.times[c.last_node];
        c.kind = c.first_node == c.last_node ? ContactKind::contact_point : ContactKind::boundary_interval;
        c.final_point = c.last_node == n - 1;
        if (const Arc *a = arc_at_node(arcs, c.first_node))
            c.on_arc = a->kind;
        out.push_back(c);
        ++k;
    }
    return out;
}

namespace detail {

inline bool allowed_sequence(const std::vector<Arc> &arcs)
{
    std::vector<ArcKind> seq;
    for (const Arc &a : arcs)
        seq.push_back(a.kind);
    using K = ArcKind;
    static const std::vector<std::vector<K>> allowed = {
        {K::max}, {K::min}, {K::singular}, {K::max, K::min}, {K::max, K::singular}, {K::min, K::max},
        {K::singular, K::max}, {K::max, K::min, K::max}, {K::max, K::singular, K::max},
    };
    return std::find(allowed.begin(), allowed.end(), seq) != allowed.end();
}

} // namespace detail

/// Structural checks: arc sequence, contacts per arc, contact count bounds and
/// the thrust inequality at interior contacts.
inline Verdicts verify_structure(const StructureReport &report, const Scenario &sc)
{
    Verdicts v;
    const auto &p = sc.params;
    const auto &c = sc.constraints;

    v["arc_sequence"] = detail::allowed_sequence(report.arcs)
                            ? Check{Verdict::pass, 0.0, report.pattern()}
                            : Check{Verdict::fail, 0.0, "structure violation: " + report.pattern()};

    if (!c.glide_slope_enabled) {
        for (const char *name : {"contacts_per_arc", "contact_count", "min_arc_contacts", "contact_thrust"})
            v[name] = Check{Verdict::skipped, 0.0, "glide-slope constraint disabled"};
        return v;
    }

    std::size_t worst = 0;
    for (const Arc &a : report.arcs) {
        std::size_t count = 0;
        for (const Contact &k : report.contacts)
            count += (k.first_node >= a.first_node && k.first_node <= a.last_node);
        worst = std::max(worst, count);
    }
    v["contacts_per_arc"] = Check{worst <= 1 ? Verdict::pass : Verdict::fail, 1.0 - double(worst),
                                  "max contacts on one arc: " + std::to_string(worst)};

    const double weight_throttle = sc.initial.mass * p.gravity / p.thrust_max;
    const double cos_theta = c.pointing_enabled ? std::cos(c.pointing_half_angle) : 1.0;
    const std::size_t total = report.contacts.size();
    if (p.throttle_min * cos_theta >= weight_throttle) {
        bool only_final = total == 0 || (total == 1 && report.contacts.front().final_point);
        v["contact_count"] = Check{only_final ? Verdict::pass : Verdict::fail, 1.0 - double(total),
                                   "only the final point may touch; contacts: " + std::to_string(total)};
    } else {
        const std::size_t limit = p.throttle_min < weight_throttle ? 2 : 3;
        v["contact_count"] = Check{total <= limit ? Verdict::pass : Verdict::fail, double(limit) - double(total),
                                   "contacts: " + std::to_string(total) + " (bound " + std::to_string(limit) + ")"};
    }

    if (p.throttle_min < weight_throttle) {
        std::size_t on_min = 0;
        for (const Contact &k : report.contacts)
            on_min += (!k.final_point && k.on_arc == ArcKind::min);
        v["min_arc_contacts"] = Check{on_min == 0 ? Verdict::pass : Verdict::fail, -double(on_min),
                                      "interior contacts on Min arcs: " + std::to_string(on_min)};
    } else {
        v["min_arc_contacts"] = Check{Verdict::skipped, 0.0, "u_min*T compensates the weight"};
    }

    const double required = p.mass_empty * p.gravity * std::cos(c.glide_slope_angle);
    const double tol = 1e-3 * p.mass_empty * p.gravity;
    double margin = 0.0;
    bool any = false, ok = true;
    for (const Contact &k : report.contacts) {
        if (k.final_point)
            continue;
        const double m = p.thrust_max * k.min_throttle - required;
        margin = any ? std::min(margin, m) : m;
        any = true;
        ok = ok && m >= -tol;
    }
    v["contact_thrust"] = any ? Check{ok ? Verdict::pass : Verdict::fail, margin, "T|u| - m_e g0 cos(gamma) [N]"}
                              : Check{Verdict::skipped, 0.0, "no interior contact"};
    return v;
}

struct PmpTolerances
{
    double psi_sign = 1e-6;      // relative to T/m0
    double monotone_drift = 1e-8; // relative to max |<q_r,d>|
    double psi_rate = 1e-3;      // relative error
    double transversality = 1e-6; // relative to the Psi scale
    double collinear = 1e-3;

    PmpTolerances loosened(double factor) const
    {
        return {psi_sign * factor, monotone_drift * factor, psi_rate * factor, transversality * factor,
                collinear * factor};
    }
};

/// |det((x,y)(0), (v_x,v_y)(0))|, zero for collinear initial conditions.
inline double initial_collinearity(const State &x0)
{
    return std::abs(x0.position.x() * x0.velocity.y() - x0.position.y() * x0.velocity.x());
}

/// Numerical consequences of the maximum principle along a trajectory with costates.
inline Verdicts verify_pmp(const Trajectory &traj, const Scenario &sc, const std::vector<Arc> &arcs,
                           const PmpTolerances &tol = {})
{
    Verdicts v;
    const char *names[] = {"psi_sign", "qr_dot_d_monotone", "psi_rate", "transversality", "singular_collinearity"};
    if (!traj.costates || traj.diagnostics.size() != traj.size()) {
        for (const char *n : names)
            v[n] = Check{Verdict::skipped, 0.0, "no costates"};
        return v;
    }
    const auto &p = sc.params;
    const auto &ps = *traj.costates;
    const std::size_t n = traj.size();
    const double psi_scale = p.thrust_max / sc.initial.mass;

    std::vector<DirectionBranch> branch(n);
    for (std::size_t k = 0; k < n; ++k)
        branch[k] = direction_law(ps[k].p_v, sc.constraints.pointing_half_angle, sc.constraints.pointing_enabled).branch;

    auto at_bound = [&](std::size_t k, double level) { return traj.controls[k].throttle == level; };
    // Away from throttle switches, direction-branch changes and jumps of q_r at
    // contacts. Stencils touching the final node are skipped: for transcribed
    // solutions it only repeats the last control.
    auto same_measure = [&](std::size_t i, std::size_t j) {
        const double scale = std::max(ps[i].p_r.norm(), 1e-300);
        return (ps[i].mu_accum - ps[j].mu_accum).norm() <= 1e-12 * scale;
    };
    auto interior_node = [&](std::size_t k) {
        if (k == 0 || k + 2 >= n)
            return false;
        const double a = traj.controls[k].throttle;
        return traj.controls[k - 1].throttle == a && traj.controls[k + 1].throttle == a &&
               branch[k - 1] == branch[k] && branch[k + 1] == branch[k] && same_measure(k - 1, k) &&
               same_measure(k, k + 1);
    };

    // Throttle level must agree with the sign of Psi away from switches.
    {
        double worst = 0.0, worst_t = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            if (!interior_node(k))
                continue;
            const double psi = *traj.diagnostics[k].psi / psi_scale;
            double violation = 0.0;
            if (at_bound(k, p.throttle_max))
                violation = -psi;
            else if (at_bound(k, p.throttle_min))
                violation = psi;
            if (violation > worst) {
                worst = violation;
                worst_t = traj.times[k];
            }
        }
        char buf[96];
        std::snprintf(buf, sizeof buf, "Psi-sign mismatch at t=%.3f", worst_t);
        v["psi_sign"] = worst <= tol.psi_sign ? Check{Verdict::pass, tol.psi_sign - worst, "throttle follows sign(Psi)"}
                                              : Check{Verdict::fail, tol.psi_sign - worst, buf};
    }

    // <q_r, d> nonincreasing.
    {
        double scale = 0.0;
        for (std::size_t k = 0; k < n; ++k)
            scale = std::max(scale, std::abs(*traj.diagnostics[k].qr_dot_d));
        scale = std::max(scale, 1e-300);
        double worst = 0.0;
        for (std::size_t k = 1; k < n; ++k)
            worst = std::max(worst, (*traj.diagnostics[k].qr_dot_d - *traj.diagnostics[k - 1].qr_dot_d) / scale);
        v["qr_dot_d_monotone"] = Check{worst <= tol.monotone_drift ? Verdict::pass : Verdict::fail,
                                       tol.monotone_drift - worst, "largest scaled increase"};
    }

    // Central differences of Psi against the closed-form rate, away from switches.
    {
        double rate_scale = 0.0;
        std::vector<double> rates(n);
        for (std::size_t k = 0; k < n; ++k) {
            rates[k] = switching_rate(traj.states[k], ps[k], traj.controls[k].direction, p);
            rate_scale = std::max(rate_scale, std::abs(rates[k]));
        }
        double worst = 0.0;
        int checked = 0;
        for (std::size_t k = 1; k + 1 < n; ++k) {
            if (!interior_node(k))
                continue;
            const double hm = traj.times[k] - traj.times[k - 1], hp = traj.times[k + 1] - traj.times[k];
            const double fm = *traj.diagnostics[k - 1].psi, f0 = *traj.diagnostics[k].psi,
                         fp = *traj.diagnostics[k + 1].psi;
            // Second-order derivative on a nonuniform stencil.
            const double fd = (hm * hm * fp - hp * hp * fm + (hp * hp - hm * hm) * f0) / (hm * hp * (hm + hp));
            const double err = std::abs(fd - rates[k]) / std::max(std::abs(rates[k]), 1e-2 * rate_scale);
            worst = std::max(worst, err);
            ++checked;
        }
        v["psi_rate"] = checked == 0 ? Check{Verdict::skipped, 0.0, "no interior nodes"}
                                     : Check{worst <= tol.psi_rate ? Verdict::pass : Verdict::fail,
                                             tol.psi_rate - worst, "max relative error of dPsi/dt"};
    }

    // max_w H(t_f) = -p0 dl/dt.
    if (sc.final_time) {
        v["transversality"] = Check{Verdict::skipped, 0.0, "fixed final time"};
    } else {
        const Costate &pf = ps.back();
        const ControlDecision best = control_law(traj.states.back(), pf, sc.constraints, p, 0.0);
        const double h = hamiltonian(traj.states.back(), pf, best.control, p);
        const double target = sc.cost == Cost::min_time ? -pf.p0 : 0.0;
        const double scale = sc.cost == Cost::max_final_mass ? p.flow_rate : 1.0;
        const double err = std::abs(h - target) / scale;
        v["transversality"] = Check{err <= tol.transversality ? Verdict::pass : Verdict::fail,
                                    tol.transversality - err, "|H(t_f) - target|"};
    }

    // Singular arcs require collinear adjoints; flag non-generic initial data.
    {
        bool any = false, ok = true;
        double worst = 0.0;
        for (const Arc &a : arcs) {
            if (a.kind != ArcKind::singular)
                continue;
            any = true;
            for (std::size_t k = a.first_node; k <= a.last_node; ++k) {
                const Costate &c = ps[k];
                const DirectionResult dir =
                    direction_law(c.p_v, sc.constraints.pointing_half_angle, sc.constraints.pointing_enabled);
                double measure;
                if (dir.branch == DirectionBranch::interior) {
                    const double denom = c.p_v.norm() * c.q_r().norm();
                    measure = denom > 0 ? c.p_v.cross(c.q_r()).norm() / denom : 0.0;
                } else {
                    const Vec2 a2 = c.p_v.head<2>(), b2 = c.q_r().head<2>();
                    const double denom = a2.norm() * b2.norm();
                    measure = denom > 0 ? std::abs(a2.x() * b2.y() - a2.y() * b2.x()) / denom : 0.0;
                }
                worst = std::max(worst, measure);
            }
            ok = ok && worst <= tol.collinear;
        }
        if (!any) {
            v["singular_collinearity"] = Check{Verdict::skipped, 0.0, "no singular arc"};
        } else {
            v["singular_collinearity"] = Check{ok ? Verdict::pass : Verdict::fail, tol.collinear - worst,
                                               "collinearity of adjoints on singular arcs"};
            const double det = initial_collinearity(sc.initial);
            const double scale = sc.initial.position.head<2>().norm() * sc.initial.velocity.head<2>().norm();
            if (scale > 0 && det > 1e-9 * scale)
                v["singular_genericity"] = Check{Verdict::warning, det, "non-generic singular arc: inspect"};
            else
                v["singular_genericity"] = Check{Verdict::pass, det, "initial (x,y), (v_x,v_y) collinear"};
        }
    }
    return v;
}

/// Degenerate-direction intervals (p_v = 0 or p_v on the downward axis with the cone active).
inline std::vector<std::pair<double, double>> degenerate_intervals(const Trajectory &traj, const ConstraintSet &c)
{
    std::vector<std::pair<double, double>> out;
    if (!traj.costates)
        return out;
    bool open = false;
    for (std::size_t k = 0; k < traj.size(); ++k) {
        const auto branch = direction_law((*traj.costates)[k].p_v, c.pointing_half_angle, c.pointing_enabled).branch;
        const bool degenerate = branch == DirectionBranch::degenerate_tie;
        if (degenerate && !open) {
            out.emplace_back(traj.times[k], traj.times[k]);
            open = true;
        } else if (degenerate) {
            out.back().second = traj.times[k];
        } else {
            open = false;
        }
    }
    return out;
}

struct AnalysisOptions
{
    double norm_tol = -1.0; // < 0 selects default_norm_tol
    double h_tol = kDefaultContactTol;
    PmpTolerances pmp;
};

/// Full analysis: arcs, contacts, structural and PMP verdicts.
inline StructureReport analyze(const Trajectory &traj, const Scenario &sc, const AnalysisOptions &opt = {},
                               const std::vector<double> &switching_times = {})
{
    StructureReport r;
    const double norm_tol = opt.norm_tol >= 0.0 ? opt.norm_tol : default_norm_tol(sc.params);
    r.arcs = classify_arcs(traj, sc.params, norm_tol);
    r.switching_times = switching_times.empty() ? arc_boundaries(r.arcs) : switching_times;
    if (sc.constraints.glide_slope_enabled)
        r.contacts = detect_contacts(traj, r.arcs, opt.h_tol);
    r.degenerate_intervals = degenerate_intervals(traj, sc.constraints);
    r.verdicts = verify_structure(r, sc);
    for (auto &[name, check] : verify_pmp(traj, sc, r.arcs, opt.pmp))
        r.verdicts[name] = check;
    if (sc.constraints.pointing_enabled) {
        double worst = 0.0;
        double worst_t = 0.0;
        for (std::size_t k = 0; k < traj.size(); ++k) {
            const double slack = pointing_slack(traj.controls[k].direction, sc.constraints.pointing_half_angle);
            if (slack < worst) {
                worst = slack;
                worst_t = traj.times[k];
            }
        }
        char buf[64];
        std::snprintf(buf, sizeof buf, "pointing violation at t=%.3f", worst_t);
        r.verdicts["pointing"] = worst >= -1e-9 ? Check{Verdict::pass, worst, "min d_z - cos(theta)"}
                                                : Check{Verdict::fail, worst, buf};
    }
    if (!r.degenerate_intervals.empty())
        r.verdicts["degenerate_direction"] =
            Check{Verdict::warning, double(r.degenerate_intervals.size()), "direction tie encountered"};
    return r;
}

} // namespace descent
