#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <type_traits>
#include <vector>

#include "analyze.hpp"
#include "heuristics.hpp"
#include "integrate.hpp"
#include "optimize.hpp"
#include "pmp.hpp"
#include "types.hpp"

namespace descent {

struct TranscriptionConfig
{
    int n_nodes = 100;
    double penalty_growth = 10.0;
    double feasibility_tol = 1e-6;
    double optimality_tol = 1e-5;
    int max_outer = 40;
    /// Smoothing length [m] of |(x,y)| inside the glide-slope constraint.
    double smoothing = 1e-3;
    double contact_tol = kDefaultContactTol;

    void validate() const
    {
        if (n_nodes < 20)
            throw InvalidInput("transcription: n_nodes must be >= 20");
        if (!(penalty_growth > 1.0))
            throw InvalidInput("transcription: penalty_growth must be > 1");
        if (max_outer < 1)
            throw InvalidInput("transcription: max_outer must be >= 1");
    }
};

/// Thrust direction from tilt off the vertical and azimuth.
inline Vec3 direction_from_angles(double tilt, double azimuth)
{
    return {std::sin(tilt) * std::cos(azimuth), std::sin(tilt) * std::sin(azimuth), std::cos(tilt)};
}

/// Inverse of direction_from_angles with the azimuth folded into (-pi/2, pi/2].
inline std::pair<double, double> angles_from_direction(const Vec3 &d)
{
    double tilt = std::atan2(d.head<2>().norm(), d.z());
    double azimuth = d.head<2>().norm() > 0.0 ? std::atan2(d.y(), d.x()) : 0.0;
    if (azimuth > kPi / 2) {
        azimuth -= kPi;
        tilt = -tilt;
    } else if (azimuth <= -kPi / 2) {
        azimuth += kPi;
        tilt = -tilt;
    }
    return {tilt, azimuth};
}

/// The transcribed problem.
///
/// Controls are held constant on each of the n_nodes-1 intervals (throttle, tilt,
/// azimuth); with t_f they form the decision vector. The trapezoidal defects are
/// explicit in the next state, so states are obtained by forward recursion and
/// the defects hold exactly; mass follows m_{k+1} = m_k - q h a_k. Gradients are
/// accumulated in reverse through the recursion.
class DescentNlp
{
  public:
    DescentNlp(const Scenario &sc, const TranscriptionConfig &cfg) : sc_(sc), cfg_(cfg)
    {
        cfg.validate();
        intervals_ = cfg.n_nodes - 1;
        const auto &p = sc.params;
        t_ref_ = sc.final_time.value_or(gravity_turn_time(sc));
        length_ = std::max((sc.initial.position - sc.target_position()).norm(), 100.0);
        speed_ = std::max(sc.initial.velocity.norm(), 10.0);
        cost_scale_ = sc.cost == Cost::min_time ? t_ref_ : p.throttle_max * t_ref_;
        if (sc.constraints.glide_slope_enabled) {
            for (int k = 1; k < intervals_; ++k)
                glide_nodes_.push_back(k);
            if (!sc.pinpoint())
                glide_nodes_.push_back(intervals_);
        }
    }

    const Scenario &scenario() const { return sc_; }
    int intervals() const { return intervals_; }
    int n() const { return 3 * intervals_ + 1; }
    int n_eq() const { return sc_.pinpoint() ? 6 : 2; }
    int n_ineq() const { return static_cast<int>(glide_nodes_.size()) + (has_mass_constraint() ? 1 : 0); }
    const std::vector<int> &glide_nodes() const { return glide_nodes_; }
    double time_scale() const { return t_ref_; }
    double length_scale() const { return length_; }
    double speed_scale() const { return speed_; }

    /// Converts a Lagrangian gradient with respect to node states into the
    /// adjoint of the maximum principle (p0 = -1).
    double costate_factor() const
    {
        if (sc_.cost == Cost::max_final_mass)
            return sc_.params.flow_rate * cost_scale_;
        return cost_scale_;
    }

    int throttle_index(int k) const { return k; }
    int tilt_index(int k) const { return intervals_ + k; }
    int azimuth_index(int k) const { return 2 * intervals_ + k; }
    int time_index() const { return 3 * intervals_; }

    void bounds(VecX &lo, VecX &hi) const
    {
        const auto &p = sc_.params;
        const auto &c = sc_.constraints;
        lo.resize(n());
        hi.resize(n());
        const double tilt_max = c.pointing_enabled ? c.pointing_half_angle : kPi;
        for (int k = 0; k < intervals_; ++k) {
            lo[throttle_index(k)] = p.throttle_min;
            hi[throttle_index(k)] = p.throttle_max;
            lo[tilt_index(k)] = -tilt_max;
            hi[tilt_index(k)] = tilt_max;
            lo[azimuth_index(k)] = -kPi;
            hi[azimuth_index(k)] = kPi;
        }
        if (sc_.final_time) {
            lo[time_index()] = hi[time_index()] = 1.0;
        } else {
            lo[time_index()] = 0.1;
            hi[time_index()] = 10.0;
        }
    }

    struct Rollout
    {
        double step = 0.0;
        std::vector<Vec3> r, v, d, accel;
        std::vector<double> m;
    };

    Rollout rollout(const VecX &x) const
    {
        const auto &p = sc_.params;
        Rollout o;
        const int N = intervals_;
        o.step = x[time_index()] * t_ref_ / N;
        o.r.resize(N + 1);
        o.v.resize(N + 1);
        o.m.resize(N + 1);
        o.d.resize(N);
        o.accel.resize(N);
        o.r[0] = sc_.initial.position;
        o.v[0] = sc_.initial.velocity;
        o.m[0] = sc_.initial.mass;
        const double h = o.step;
        for (int k = 0; k < N; ++k) {
            const double a = x[throttle_index(k)];
            o.d[k] = direction_from_angles(x[tilt_index(k)], x[azimuth_index(k)]);
            o.m[k + 1] = o.m[k] - p.flow_rate * h * a;
            const double w = 1.0 / o.m[k] + 1.0 / o.m[k + 1];
            o.accel[k] = 0.5 * (p.thrust_max * a - p.pressure_term) * w * o.d[k] - p.gravity_vector();
            o.v[k + 1] = o.v[k] + h * o.accel[k];
            o.r[k + 1] = o.r[k] + 0.5 * h * (o.v[k] + o.v[k + 1]);
        }
        return o;
    }

    double glide_value(const Vec3 &r, Vec3 *gradient = nullptr) const
    {
        const double t = std::tan(sc_.constraints.glide_slope_angle);
        const double eps = cfg_.smoothing;
        const double rho = std::sqrt(r.head<2>().squaredNorm() + eps * eps);
        if (gradient)
            *gradient << -t * r.x() / rho, -t * r.y() / rho, 1.0;
        return r.z() - t * (rho - eps);
    }

    double evaluate(const VecX &x, VecX &c, VecX &g) const
    {
        return evaluate(x, c, g, rollout(x));
    }

    double evaluate(const VecX &x, VecX &c, VecX &g, const Rollout &o) const
    {
        const int N = intervals_;
        c.resize(n_eq());
        g.resize(n_ineq());
        const Vec3 dr = (o.r[N] - sc_.target_position()) / length_;
        const Vec3 dv = (o.v[N] - sc_.final_velocity) / speed_;
        if (sc_.pinpoint()) {
            c << dr, dv;
        } else {
            c << dr.z(), dv.z();
        }
        for (std::size_t j = 0; j < glide_nodes_.size(); ++j)
            g[j] = glide_value(o.r[glide_nodes_[j]]) / length_;
        if (has_mass_constraint())
            g[n_ineq() - 1] = (o.m[N] - sc_.params.mass_empty) / sc_.initial.mass;
        return objective(x, o);
    }

    double objective(const VecX &x, const Rollout &o) const
    {
        switch (sc_.cost) {
        case Cost::min_fuel: return o.step * x.head(intervals_).sum() / cost_scale_;
        case Cost::max_final_mass:
            return (sc_.initial.mass - o.m[intervals_]) / (sc_.params.flow_rate * cost_scale_);
        case Cost::min_time: return x[time_index()];
        }
        return 0.0;
    }

    /// Node adjoints of the Lagrangian: gradients with respect to r_k, v_k, m_k.
    struct NodeAdjoints
    {
        std::vector<Vec3> r, v;
        std::vector<double> m;
    };

    void lagrangian_gradient(const VecX &x, const VecX &w_eq, const VecX &w_ineq, VecX &grad) const
    {
        reverse(x, rollout(x), w_eq, w_ineq, grad, nullptr);
    }

    void reverse(const VecX &x, const Rollout &o, const VecX &w_eq, const VecX &w_ineq, VecX &grad,
                 NodeAdjoints *adj) const
    {
        const auto &p = sc_.params;
        const int N = intervals_;
        const double h = o.step;
        grad.setZero(n());
        std::vector<Vec3> rb(N + 1, Vec3::Zero()), vb(N + 1, Vec3::Zero());
        std::vector<double> mb(N + 1, 0.0);
        double hb = 0.0;

        if (sc_.pinpoint()) {
            rb[N] += w_eq.head<3>() / length_;
            vb[N] += w_eq.segment<3>(3) / speed_;
        } else {
            rb[N].z() += w_eq[0] / length_;
            vb[N].z() += w_eq[1] / speed_;
        }
        for (std::size_t j = 0; j < glide_nodes_.size(); ++j) {
            Vec3 n;
            glide_value(o.r[glide_nodes_[j]], &n);
            rb[glide_nodes_[j]] += w_ineq[j] * n / length_;
        }
        if (has_mass_constraint())
            mb[N] += w_ineq[n_ineq() - 1] / sc_.initial.mass;
        switch (sc_.cost) {
        case Cost::min_fuel: {
            const double sum = x.head(N).sum();
            for (int k = 0; k < N; ++k)
                grad[throttle_index(k)] += h / cost_scale_;
            hb += sum / cost_scale_;
            break;
        }
        case Cost::max_final_mass: mb[N] += -1.0 / (p.flow_rate * cost_scale_); break;
        case Cost::min_time: grad[time_index()] += 1.0; break;
        }

        for (int k = N - 1; k >= 0; --k) {
            const double a = x[throttle_index(k)];
            const Vec3 &R = rb[k + 1];
            rb[k] += R;
            hb += 0.5 * (o.v[k] + o.v[k + 1]).dot(R);
            const Vec3 Vp = vb[k + 1] + 0.5 * h * R;
            vb[k] += 0.5 * h * R + Vp;
            hb += o.accel[k].dot(Vp);
            const Vec3 acc_b = h * Vp;
            const double F = p.thrust_max * a - p.pressure_term;
            const double w = 1.0 / o.m[k] + 1.0 / o.m[k + 1];
            const double proj = o.d[k].dot(acc_b);
            const double Fb = 0.5 * w * proj;
            const double wb = 0.5 * F * proj;
            const Vec3 db = 0.5 * F * w * acc_b;
            mb[k] += -wb / (o.m[k] * o.m[k]);
            const double Mb = mb[k + 1] - wb / (o.m[k + 1] * o.m[k + 1]);
            mb[k] += Mb;
            grad[throttle_index(k)] += -p.flow_rate * h * Mb + p.thrust_max * Fb;
            hb += -p.flow_rate * a * Mb;

            const double tilt = x[tilt_index(k)], az = x[azimuth_index(k)];
            const Vec3 d_tilt(std::cos(tilt) * std::cos(az), std::cos(tilt) * std::sin(az), -std::sin(tilt));
            const Vec3 d_az(-std::sin(tilt) * std::sin(az), std::sin(tilt) * std::cos(az), 0.0);
            grad[tilt_index(k)] += db.dot(d_tilt);
            grad[azimuth_index(k)] += db.dot(d_az);
        }
        grad[time_index()] += hb * t_ref_ / N;
        if (sc_.final_time)
            grad[time_index()] = 0.0;
        if (adj) {
            // The adjoint of the per-node mass includes the (1/m) coupling only; the
            // mass entry at node k is the total derivative through later nodes.
            adj->r = rb;
            adj->v = vb;
            adj->m = mb;
        }
    }

    /// Decision vector from a trajectory, averaging throttle over each interval.
    VecX from_trajectory(const Trajectory &traj) const
    {
        const int N = intervals_;
        VecX x(n());
        const double tf = traj.final_time();
        const double h = tf / N;
        const std::size_t nt = traj.size();
        for (int k = 0; k < N; ++k) {
            const double a = k * h, b = (k + 1) * h;
            // Controls are held from each node to the next.
            double integral = 0.0;
            for (std::size_t j = 0; j + 1 < nt; ++j) {
                const double lo = std::max(a, traj.times[j]), hi = std::min(b, traj.times[j + 1]);
                if (hi > lo)
                    integral += (hi - lo) * traj.controls[j].throttle;
            }
            x[throttle_index(k)] = integral / h;
            const double mid = 0.5 * (a + b);
            const auto it = std::upper_bound(traj.times.begin(), traj.times.end(), mid);
            const std::size_t j = std::clamp<std::size_t>(it - traj.times.begin(), 1, nt) - 1;
            const auto [tilt, az] = angles_from_direction(traj.controls[j].direction);
            x[tilt_index(k)] = tilt;
            x[azimuth_index(k)] = az;
        }
        x[time_index()] = tf / t_ref_;
        VecX lo, hi;
        bounds(lo, hi);
        return project(x, lo, hi);
    }

    /// Cold start from the minimum-energy acceleration profile.
    VecX initial_guess() const
    {
        const auto &p = sc_.params;
        const int N = intervals_;
        VecX x(n());
        const auto [c0, c1] = min_energy_profile(sc_, t_ref_);
        for (int k = 0; k < N; ++k) {
            const double t = (k + 0.5) * t_ref_ / N;
            const Vec3 acc = c0 + c1 * t;
            const double norm = acc.norm();
            x[throttle_index(k)] = norm * sc_.initial.mass / p.thrust_max;
            const auto [tilt, az] = norm > 0 ? angles_from_direction(acc / norm) : std::pair{0.0, 0.0};
            x[tilt_index(k)] = tilt;
            x[azimuth_index(k)] = az;
        }
        x[time_index()] = 1.0;
        VecX lo, hi;
        bounds(lo, hi);
        return project(x, lo, hi);
    }

    /// Multipliers of the terminal conditions implied by final adjoint values.
    VecX eq_multipliers_from(const Costate &pf) const
    {
        const double K = costate_factor();
        VecX lambda(n_eq());
        if (sc_.pinpoint()) {
            lambda.head<3>() = -length_ * pf.q_r() / K;
            lambda.segment<3>(3) = -speed_ * pf.p_v / K;
        } else {
            lambda << -length_ * pf.q_r().z() / K, -speed_ * pf.p_v.z() / K;
        }
        return lambda;
    }

  private:
    bool has_mass_constraint() const { return sc_.params.flow_rate > 0.0; }

  public:
    /// Names the most violated constraint, empty when all hold.
    std::string worst_constraint(const VecX &c, const VecX &g) const
    {
        double worst = 0.0;
        std::string name;
        for (Eigen::Index i = 0; i < c.size(); ++i)
            if (std::abs(c[i]) > worst) {
                worst = std::abs(c[i]);
                name = "terminal condition " + std::to_string(i);
            }
        for (std::size_t j = 0; j < glide_nodes_.size(); ++j)
            if (-g[j] > worst) {
                worst = -g[j];
                name = "glide slope at node " + std::to_string(glide_nodes_[j]);
            }
        if (has_mass_constraint() && -g[n_ineq() - 1] > worst) {
            const double deficit = -g[n_ineq() - 1] * sc_.initial.mass;
            return " (final mass below mass_empty by " + std::to_string(deficit) + " kg)";
        }
        return name.empty() ? std::string() : " (" + name + ")";
    }

  private:

    Scenario sc_;
    TranscriptionConfig cfg_;
    int intervals_ = 0;
    double t_ref_ = 1.0, length_ = 1.0, speed_ = 1.0, cost_scale_ = 1.0;
    std::vector<int> glide_nodes_;
};

inline DescentNlp transcribe(const Scenario &sc, const TranscriptionConfig &cfg = {})
{
    sc.validate();
    return DescentNlp(sc, cfg);
}

/// Largest trapezoidal defect of a trajectory whose controls are held over each
/// interval, in units of the scenario scales (meters, m/s, kg).
inline double defect_norm(const Trajectory &traj, const VehicleParams &p)
{
    double worst = 0.0;
    for (std::size_t k = 0; k + 1 < traj.size(); ++k) {
        const State &a = traj.states[k], &b = traj.states[k + 1];
        const Control &u = traj.controls[k];
        const double h = traj.times[k + 1] - traj.times[k];
        const double F = p.thrust_max * u.throttle - p.pressure_term;
        const Vec3 acc_a = F / a.mass * u.direction - p.gravity_vector();
        const Vec3 acc_b = F / b.mass * u.direction - p.gravity_vector();
        worst = std::max(worst, (b.position - a.position - 0.5 * h * (a.velocity + b.velocity)).cwiseAbs().maxCoeff());
        worst = std::max(worst, (b.velocity - a.velocity - 0.5 * h * (acc_a + acc_b)).cwiseAbs().maxCoeff());
        worst = std::max(worst, std::abs(b.mass - a.mass + p.flow_rate * h * u.throttle));
    }
    return worst;
}

struct DirectResult
{
    Trajectory trajectory;
    StructureReport report;
    /// Glide-slope multipliers per node (zero where the constraint is not imposed).
    std::vector<double> multipliers;
    VecX terminal_multipliers;
    std::vector<double> switching_times;
    AugLagResult solver;
    bool converged = false;
    std::string diagnostic;
};

/// Switching times located inside the interval that carries an intermediate
/// throttle, by the fraction of the interval spent at each bound.
inline std::vector<double> interval_switching_times(const Trajectory &traj, const VehicleParams &p,
                                                    const std::vector<Arc> &arcs)
{
    std::vector<double> out;
    const double range = p.throttle_max - p.throttle_min;
    for (std::size_t i = 1; i < arcs.size(); ++i) {
        const Arc &prev = arcs[i - 1], &next = arcs[i];
        double t = next.t_start;
        const bool bang = (prev.kind == ArcKind::max || prev.kind == ArcKind::min) &&
                          (next.kind == ArcKind::max || next.kind == ArcKind::min) && prev.kind != next.kind;
        if (bang) {
            // The fractional interval is the last one absorbed into prev, if any.
            const std::size_t k = next.first_node - 1;
            const double a = traj.controls[k].throttle;
            const double h = traj.times[k + 1] - traj.times[k];
            const double frac_max = (a - p.throttle_min) / range;
            if (frac_max > 0.0 && frac_max < 1.0)
                t = traj.times[k] + h * (prev.kind == ArcKind::max ? frac_max : 1.0 - frac_max);
        }
        out.push_back(t);
    }
    return out;
}

/// Analysis settings for a transcribed solution with the given interval count.
/// Transcription adjoints are first-order accurate: tolerances are loosened by
/// ten and the Hamiltonian residual is allowed to scale with the grid spacing.
inline AnalysisOptions transcription_analysis_options(int intervals, double contact_tol = kDefaultContactTol)
{
    AnalysisOptions aopt;
    aopt.h_tol = contact_tol;
    aopt.pmp = PmpTolerances{}.loosened(10.0);
    aopt.pmp.transversality = std::max(aopt.pmp.transversality, 1.0 / intervals);
    return aopt;
}

/// Direct transcription solve with the augmented-Lagrangian optimizer.
inline DirectResult solve_direct(const Scenario &sc, const TranscriptionConfig &cfg = {},
                                 const std::optional<Trajectory> &warm_start = std::nullopt)
{
    const DescentNlp nlp = transcribe(sc, cfg);
    const int N = nlp.intervals();
    VecX x = nlp.initial_guess();
    VecX lambda, mu;
    AugLagOptions opt;
    opt.max_outer = cfg.max_outer;
    opt.feasibility_tol = cfg.feasibility_tol;
    opt.optimality_tol = cfg.optimality_tol;
    opt.penalty_growth = cfg.penalty_growth;
    if (warm_start && warm_start->size() >= 2) {
        x = nlp.from_trajectory(*warm_start);
        if (warm_start->costates)
            lambda = nlp.eq_multipliers_from(warm_start->costates->back());
        if (warm_start->constraint_multipliers.size() == static_cast<std::size_t>(N + 1)) {
            mu = VecX::Zero(nlp.n_ineq());
            const double K = nlp.costate_factor();
            for (std::size_t j = 0; j < nlp.glide_nodes().size(); ++j)
                mu[j] = warm_start->constraint_multipliers[nlp.glide_nodes()[j]] * nlp.length_scale() / K;
        }
        opt.penalty0 = 1e3;
    }

    DirectResult out;
    out.solver = augmented_lagrangian(nlp, x, lambda, mu, opt);
    x = out.solver.x;
    out.converged = out.solver.converged;
    out.diagnostic = out.solver.diagnostic;
    if (!out.converged) {
        VecX c, g;
        nlp.evaluate(x, c, g);
        out.diagnostic += nlp.worst_constraint(c, g);
    }
    out.terminal_multipliers = out.solver.eq_multipliers;

    // Trajectory on the node grid; node k carries the control of interval k.
    const auto ro = nlp.rollout(x);
    Trajectory &traj = out.trajectory;
    traj.model = sc.model();
    for (int k = 0; k <= N; ++k) {
        const int j = std::min(k, N - 1);
        traj.times.push_back(k * ro.step);
        traj.states.push_back({ro.r[k], ro.v[k], ro.m[k]});
        traj.controls.push_back({ro.d[j], x[nlp.throttle_index(j)]});
    }
    traj.times.back() = x[nlp.time_index()] * nlp.time_scale();
    traj.fuel_integral = ro.step * x.head(N).sum();
    traj.cost_value = evaluate_cost(sc.cost, traj);

    // Discrete adjoints of the converged Lagrangian serve as costates. The
    // control of interval k is stationary against the adjoint averaged over the
    // interval, so node k (which carries that control) gets the interval average;
    // the last node keeps the terminal adjoint.
    VecX grad;
    DescentNlp::NodeAdjoints adj;
    nlp.reverse(x, ro, out.solver.eq_multipliers, -out.solver.ineq_multipliers, grad, &adj);
    const double K = nlp.costate_factor();
    traj.costates.emplace();
    auto mid = [&](const auto &v, int k) {
        using T = std::decay_t<decltype(v[0])>;
        return k < N ? T(0.5 * (v[k] + v[k + 1])) : T(v[N]);
    };
    const Vec3 p_r = -K * mid(adj.r, 0);
    for (int k = 0; k <= N; ++k) {
        Costate c;
        c.p_r = p_r;
        c.mu_accum = p_r + K * mid(adj.r, k);
        c.p_v = -K * mid(adj.v, k);
        c.p_m = -K * mid(adj.m, k);
        c.p_fuel = sc.cost == Cost::min_fuel ? -1.0 : 0.0;
        traj.costates->push_back(c);
    }
    out.multipliers.assign(N + 1, 0.0);
    for (std::size_t j = 0; j < nlp.glide_nodes().size(); ++j)
        out.multipliers[nlp.glide_nodes()[j]] = out.solver.ineq_multipliers[j] * K / nlp.length_scale();
    traj.constraint_multipliers = out.multipliers;
    fill_diagnostics(traj, sc);

    const AnalysisOptions aopt = transcription_analysis_options(N, cfg.contact_tol);
    const std::vector<Arc> arcs = classify_arcs(traj, sc.params);
    out.switching_times = interval_switching_times(traj, sc.params, arcs);
    out.report = analyze(traj, sc, aopt, out.switching_times);

    std::size_t inside = 0;
    for (int k = 0; k < N; ++k) {
        const double a = x[nlp.throttle_index(k)];
        inside += (a > sc.params.throttle_min + 0.02 && a < sc.params.throttle_max - 0.02);
    }
    if (inside > 0.05 * N)
        out.report.verdicts["intermediate_throttle"] =
            Check{Verdict::warning, double(inside) / N, "possible singular/chattering region"};
    if (!out.converged)
        out.report.verdicts["solver"] = Check{Verdict::fail, out.solver.infeasibility, out.diagnostic};
    return out;
}

} // namespace descent
