#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <iosfwd>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "analyze.hpp"
#include "integrate.hpp"
#include "types.hpp"

namespace descent {

using Json = nlohmann::json;

/// Raised when a trajectory CSV does not follow the documented layout.
class CsvError : public std::runtime_error
{
  public:
    explicit CsvError(const std::string &what) : std::runtime_error(what) {}
};

enum class Method
{
    indirect,
    direct,
    automatic,
};

inline const char *to_string(Method m)
{
    switch (m) {
    case Method::indirect: return "indirect";
    case Method::direct: return "direct";
    case Method::automatic: return "auto";
    }
    return "?";
}

inline Method parse_method(const std::string &s, const std::string &key = "solver.method")
{
    if (s == "indirect")
        return Method::indirect;
    if (s == "direct")
        return Method::direct;
    if (s == "auto")
        return Method::automatic;
    throw InvalidInput(key + ": expected one of indirect, direct, auto (got '" + s + "')");
}

struct SolverSettings
{
    Method method = Method::automatic;
    int nodes = 100;
    unsigned seed = 0;
};

struct ScenarioFile
{
    Scenario scenario;
    SolverSettings solver;
};

namespace detail {

inline void reject_unknown(const Json &obj, const std::string &where, std::initializer_list<const char *> known)
{
    if (!obj.is_object())
        throw InvalidInput(where + ": expected an object");
    const std::set<std::string> allowed(known.begin(), known.end());
    for (const auto &item : obj.items())
        if (!allowed.count(item.key()))
            throw InvalidInput("unknown key '" + (where.empty() ? "" : where + ".") + item.key() + "'");
}

inline double number(const Json &obj, const char *key, const std::string &where)
{
    const std::string name = where + "." + key;
    if (!obj.contains(key))
        throw InvalidInput(name + ": missing");
    const Json &v = obj.at(key);
    if (!v.is_number())
        throw InvalidInput(name + ": expected a number");
    return v.get<double>();
}

inline double number_or(const Json &obj, const char *key, const std::string &where, double fallback)
{
    return obj.contains(key) ? number(obj, key, where) : fallback;
}

/// Angle in degrees; absent or null disables the constraint.
inline std::optional<double> angle(const Json &obj, const char *key, const std::string &where)
{
    if (!obj.contains(key) || obj.at(key).is_null())
        return std::nullopt;
    return deg2rad(number(obj, key, where));
}

template <int N>
Eigen::Matrix<double, N, 1> vec(const Json &obj, const char *key, const std::string &where)
{
    const std::string name = where + "." + key;
    if (!obj.contains(key))
        throw InvalidInput(name + ": missing");
    const Json &v = obj.at(key);
    if (!v.is_array() || v.size() != N)
        throw InvalidInput(name + ": expected an array of " + std::to_string(N) + " numbers");
    Eigen::Matrix<double, N, 1> out;
    for (int i = 0; i < N; ++i) {
        if (!v[i].is_number())
            throw InvalidInput(name + ": expected an array of " + std::to_string(N) + " numbers");
        out[i] = v[i].get<double>();
    }
    return out;
}

inline Cost parse_cost(const Json &v)
{
    if (!v.is_string())
        throw InvalidInput("cost: expected a string");
    const std::string s = v.get<std::string>();
    if (s == "min_fuel")
        return Cost::min_fuel;
    if (s == "max_final_mass")
        return Cost::max_final_mass;
    if (s == "min_time")
        return Cost::min_time;
    throw InvalidInput("cost: expected one of min_fuel, max_final_mass, min_time (got '" + s + "')");
}

} // namespace detail

/// Parses and validates a scenario document. Angles are in degrees.
inline ScenarioFile scenario_from_json(const Json &doc)
{
    using namespace detail;
    reject_unknown(doc, "", {"vehicle", "constraints", "initial", "final", "cost", "solver"});
    ScenarioFile out;
    Scenario &sc = out.scenario;

    if (!doc.contains("vehicle"))
        throw InvalidInput("vehicle: missing");
    const Json &v = doc.at("vehicle");
    reject_unknown(v, "vehicle",
                   {"thrust_max", "flow_rate", "mass_empty", "gravity", "throttle_min", "throttle_max", "pressure_term"});
    sc.params.thrust_max = number(v, "thrust_max", "vehicle");
    sc.params.flow_rate = number_or(v, "flow_rate", "vehicle", 0.0);
    sc.params.mass_empty = number(v, "mass_empty", "vehicle");
    sc.params.gravity = number(v, "gravity", "vehicle");
    sc.params.throttle_min = number(v, "throttle_min", "vehicle");
    sc.params.throttle_max = number(v, "throttle_max", "vehicle");
    sc.params.pressure_term = number_or(v, "pressure_term", "vehicle", 0.0);

    if (doc.contains("constraints")) {
        const Json &c = doc.at("constraints");
        reject_unknown(c, "constraints", {"glide_slope_angle", "pointing_half_angle"});
        if (auto g = angle(c, "glide_slope_angle", "constraints")) {
            sc.constraints.glide_slope_enabled = true;
            sc.constraints.glide_slope_angle = *g;
        }
        if (auto p = angle(c, "pointing_half_angle", "constraints")) {
            sc.constraints.pointing_enabled = true;
            sc.constraints.pointing_half_angle = *p;
        }
    }

    if (!doc.contains("initial"))
        throw InvalidInput("initial: missing");
    const Json &i = doc.at("initial");
    reject_unknown(i, "initial", {"position", "velocity", "mass"});
    sc.initial.position = vec<3>(i, "position", "initial");
    sc.initial.velocity = vec<3>(i, "velocity", "initial");
    sc.initial.mass = number(i, "mass", "initial");

    if (doc.contains("final")) {
        const Json &f = doc.at("final");
        reject_unknown(f, "final", {"position", "velocity", "time"});
        if (f.contains("position"))
            sc.final_position_xy = f.at("position").is_null() ? std::nullopt
                                                               : std::optional<Vec2>(vec<2>(f, "position", "final"));
        if (f.contains("velocity"))
            sc.final_velocity = vec<3>(f, "velocity", "final");
        if (f.contains("time") && !f.at("time").is_null())
            sc.final_time = number(f, "time", "final");
    }

    if (doc.contains("cost"))
        sc.cost = parse_cost(doc.at("cost"));

    if (doc.contains("solver")) {
        const Json &s = doc.at("solver");
        reject_unknown(s, "solver", {"method", "options"});
        if (s.contains("method")) {
            if (!s.at("method").is_string())
                throw InvalidInput("solver.method: expected a string");
            out.solver.method = parse_method(s.at("method").get<std::string>());
        }
        if (s.contains("options")) {
            const Json &o = s.at("options");
            reject_unknown(o, "solver.options", {"nodes", "seed"});
            if (o.contains("nodes")) {
                if (!o.at("nodes").is_number_integer())
                    throw InvalidInput("solver.options.nodes: expected an integer");
                out.solver.nodes = o.at("nodes").get<int>();
            }
            if (o.contains("seed")) {
                if (!o.at("seed").is_number_unsigned())
                    throw InvalidInput("solver.options.seed: expected a non-negative integer");
                out.solver.seed = o.at("seed").get<unsigned>();
            }
        }
    }
    sc.validate();
    return out;
}

inline ScenarioFile load_scenario(const std::string &path)
{
    std::ifstream in(path);
    if (!in)
        throw InvalidInput("cannot open scenario file '" + path + "'");
    Json doc;
    try {
        doc = Json::parse(in);
    } catch (const Json::parse_error &e) {
        throw InvalidInput("scenario file '" + path + "': " + e.what());
    }
    return scenario_from_json(doc);
}

inline Json scenario_to_json(const Scenario &sc)
{
    auto arr = [](const auto &v) {
        Json a = Json::array();
        for (Eigen::Index i = 0; i < v.size(); ++i)
            a.push_back(v[i]);
        return a;
    };
    const auto &p = sc.params;
    Json doc;
    doc["vehicle"] = {{"thrust_max", p.thrust_max},     {"flow_rate", p.flow_rate},
                      {"mass_empty", p.mass_empty},     {"gravity", p.gravity},
                      {"throttle_min", p.throttle_min}, {"throttle_max", p.throttle_max},
                      {"pressure_term", p.pressure_term}};
    Json c = Json::object();
    c["glide_slope_angle"] =
        sc.constraints.glide_slope_enabled ? Json(rad2deg(sc.constraints.glide_slope_angle)) : Json();
    c["pointing_half_angle"] =
        sc.constraints.pointing_enabled ? Json(rad2deg(sc.constraints.pointing_half_angle)) : Json();
    doc["constraints"] = c;
    doc["initial"] = {{"position", arr(sc.initial.position)},
                      {"velocity", arr(sc.initial.velocity)},
                      {"mass", sc.initial.mass}};
    doc["final"] = {{"position", sc.final_position_xy ? arr(*sc.final_position_xy) : Json()},
                    {"velocity", arr(sc.final_velocity)},
                    {"time", sc.final_time ? Json(*sc.final_time) : Json()}};
    doc["cost"] = to_string(sc.cost);
    return doc;
}

// Trajectory CSV. The first sixteen columns are the documented layout; the
// costate block and the glide-slope multiplier follow so that a solver's own
// output can be re-verified with its PMP checks.
inline const std::vector<std::string> &csv_columns()
{
    static const std::vector<std::string> cols = {"t",  "x",  "y",  "z",        "vx",  "vy",       "vz",
                                                  "m",  "ux", "uy", "uz",       "throttle", "h", "psi",
                                                  "qr_dot_d", "pointing_slack"};
    return cols;
}

inline const std::vector<std::string> &csv_costate_columns()
{
    static const std::vector<std::string> cols = {"p_rx", "p_ry", "p_rz", "p_vx", "p_vy",          "p_vz",
                                                  "p_m",  "mu_x", "mu_y", "mu_z", "glide_multiplier"};
    return cols;
}

inline void write_trajectory_csv(std::ostream &os, const Trajectory &traj)
{
    std::string line;
    for (const auto *cols : {&csv_columns(), &csv_costate_columns()})
        for (const std::string &c : *cols)
            line += (line.empty() ? "" : ",") + c;
    os << line << '\n';
    char buf[32];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return std::string(buf);
    };
    auto opt = [&](const std::optional<double> &v) { return v ? num(*v) : std::string(); };
    for (std::size_t k = 0; k < traj.size(); ++k) {
        const State &s = traj.states[k];
        const Control &u = traj.controls[k];
        const Vec3 uv = u.vector();
        const NodeDiagnostics d = k < traj.diagnostics.size() ? traj.diagnostics[k] : NodeDiagnostics{};
        std::vector<std::string> f = {num(traj.times[k]), num(s.position.x()), num(s.position.y()),
                                      num(s.position.z()), num(s.velocity.x()), num(s.velocity.y()),
                                      num(s.velocity.z()), num(s.mass),         num(uv.x()),
                                      num(uv.y()),         num(uv.z()),         num(u.throttle),
                                      opt(d.h),            opt(d.psi),          opt(d.qr_dot_d),
                                      opt(d.pointing_slack)};
        if (traj.costates) {
            const Costate &p = (*traj.costates)[k];
            for (double v : {p.p_r.x(), p.p_r.y(), p.p_r.z(), p.p_v.x(), p.p_v.y(), p.p_v.z(), p.p_m, p.mu_accum.x(),
                             p.mu_accum.y(), p.mu_accum.z()})
                f.push_back(num(v));
        } else {
            f.insert(f.end(), 10, std::string());
        }
        f.push_back(k < traj.constraint_multipliers.size() ? num(traj.constraint_multipliers[k]) : std::string());
        line.clear();
        for (std::size_t i = 0; i < f.size(); ++i)
            line += (i ? "," : "") + f[i];
        os << line << '\n';
    }
}

inline void write_trajectory_csv(const std::string &path, const Trajectory &traj)
{
    std::ofstream os(path);
    if (!os)
        throw std::runtime_error("cannot write '" + path + "'");
    write_trajectory_csv(os, traj);
}

namespace detail {

inline std::vector<std::string> split_csv(const std::string &line)
{
    std::vector<std::string> out;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ','))
        out.push_back(field);
    if (!line.empty() && line.back() == ',')
        out.emplace_back();
    return out;
}

inline std::optional<double> parse_field(const std::string &s, std::size_t row, const std::string &col)
{
    if (s.empty())
        return std::nullopt;
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw CsvError("row " + std::to_string(row) + ", column " + col + ": not a number ('" + s + "')");
    return v;
}

} // namespace detail

/// Reads a trajectory written by write_trajectory_csv, or one carrying only the
/// sixteen documented columns. Costates are restored when every costate field is
/// present; p_fuel follows the scenario cost, which the caller sets.
inline Trajectory read_trajectory_csv(std::istream &is, Cost cost = Cost::min_fuel)
{
    std::string line;
    if (!std::getline(is, line))
        throw CsvError("empty file");
    if (!line.empty() && line.back() == '\r')
        line.pop_back();
    const std::vector<std::string> header = detail::split_csv(line);
    const auto &base = csv_columns();
    const auto &extra = csv_costate_columns();
    const bool full = header.size() == base.size() + extra.size();
    if (header.size() != base.size() && !full)
        throw CsvError("expected " + std::to_string(base.size()) + " or " + std::to_string(base.size() + extra.size()) +
                       " columns, found " + std::to_string(header.size()));
    for (std::size_t i = 0; i < header.size(); ++i) {
        const std::string &want = i < base.size() ? base[i] : extra[i - base.size()];
        if (header[i] != want)
            throw CsvError("column " + std::to_string(i + 1) + ": expected '" + want + "', found '" + header[i] + "'");
    }

    Trajectory traj;
    std::vector<Costate> costates;
    bool have_costates = full, have_multipliers = full;
    std::size_t row = 1;
    while (std::getline(is, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty())
            continue;
        const std::vector<std::string> f = detail::split_csv(line);
        if (f.size() != header.size())
            throw CsvError("row " + std::to_string(row) + ": expected " + std::to_string(header.size()) +
                           " fields, found " + std::to_string(f.size()));
        std::vector<std::optional<double>> v(f.size());
        for (std::size_t i = 0; i < f.size(); ++i)
            v[i] = detail::parse_field(f[i], row, header[i]);
        for (std::size_t i = 0; i < 12; ++i)
            if (!v[i])
                throw CsvError("row " + std::to_string(row) + ", column " + header[i] + ": missing value");
        State s{Vec3(*v[1], *v[2], *v[3]), Vec3(*v[4], *v[5], *v[6]), *v[7]};
        const Vec3 u(*v[8], *v[9], *v[10]);
        Control c;
        c.throttle = *v[11];
        c.direction = u.norm() > 0.0 ? Vec3(u / u.norm()) : Vec3::UnitZ();
        traj.times.push_back(*v[0]);
        traj.states.push_back(s);
        traj.controls.push_back(c);
        if (full) {
            const std::size_t o = base.size();
            for (std::size_t i = o; i < o + 10; ++i)
                have_costates = have_costates && v[i].has_value();
            have_multipliers = have_multipliers && v[o + 10].has_value();
            if (have_costates) {
                Costate p;
                p.p_r = Vec3(*v[o], *v[o + 1], *v[o + 2]);
                p.p_v = Vec3(*v[o + 3], *v[o + 4], *v[o + 5]);
                p.p_m = *v[o + 6];
                p.mu_accum = Vec3(*v[o + 7], *v[o + 8], *v[o + 9]);
                p.p_fuel = cost == Cost::min_fuel ? -1.0 : 0.0;
                costates.push_back(p);
            }
            if (have_multipliers)
                traj.constraint_multipliers.push_back(*v[o + 10]);
        }
    }
    if (traj.size() < 2)
        throw CsvError("at least two rows are required");
    for (std::size_t k = 1; k < traj.size(); ++k)
        if (!(traj.times[k] > traj.times[k - 1]))
            throw CsvError("row " + std::to_string(k + 2) + ": time must increase");
    if (have_costates && costates.size() == traj.size())
        traj.costates = std::move(costates);
    if (!have_multipliers)
        traj.constraint_multipliers.clear();
    return traj;
}

inline Trajectory read_trajectory_csv(const std::string &path, Cost cost = Cost::min_fuel)
{
    std::ifstream in(path);
    if (!in)
        throw CsvError("cannot open '" + path + "'");
    return read_trajectory_csv(in, cost);
}

inline Json report_to_json(const StructureReport &r)
{
    Json doc;
    doc["pattern"] = r.pattern();
    doc["arcs"] = Json::array();
    for (const Arc &a : r.arcs)
        doc["arcs"].push_back({{"kind", to_string(a.kind)}, {"t_start", a.t_start}, {"t_end", a.t_end}});
    doc["switching_times"] = r.switching_times;
    doc["contacts"] = Json::array();
    for (const Contact &c : r.contacts)
        doc["contacts"].push_back({{"t_c1", c.t_c1},
                                   {"t_c2", c.t_c2},
                                   {"kind", to_string(c.kind)},
                                   {"on_arc", to_string(c.on_arc)},
                                   {"final_point", c.final_point}});
    doc["verdicts"] = Json::object();
    for (const auto &[name, check] : r.verdicts)
        doc["verdicts"][name] = {
            {"verdict", to_string(check.verdict)}, {"margin", check.margin}, {"detail", check.detail}};
    doc["degenerate_intervals"] = Json::array();
    for (const auto &[a, b] : r.degenerate_intervals)
        doc["degenerate_intervals"].push_back({a, b});
    doc["passed"] = r.passed();
    return doc;
}

} // namespace descent
