#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <thread>

#include "direct.hpp"
#include "indirect.hpp"
#include "io.hpp"

namespace descent {

/// Process exit codes of the command-line front end.
namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int solver_failure = 1;
inline constexpr int structure_failure = 2;
inline constexpr int bad_input = 64;
inline constexpr int bad_csv = 65;
} // namespace exit_code

struct SolveOutcome
{
    Method method = Method::indirect;
    bool solved = false;
    std::optional<Trajectory> trajectory;
    StructureReport report;
    std::string note;
    std::string error;

    int exit_code() const
    {
        if (!solved)
            return exit_code::solver_failure;
        return report.passed() ? exit_code::ok : exit_code::structure_failure;
    }
};

/// Runs the requested solver; "auto" tries the indirect method and falls back to
/// the transcription when the extremal meets a singular arc or an active glide
/// slope. Input errors propagate as InvalidInput.
inline SolveOutcome run_solver(const Scenario &sc, const SolverSettings &settings)
{
    sc.validate();
    TranscriptionConfig cfg;
    cfg.n_nodes = settings.nodes;
    cfg.validate();

    SolveOutcome out;
    auto direct = [&] {
        DirectResult res = solve_direct(sc, cfg);
        out.method = Method::direct;
        out.solved = res.converged;
        out.trajectory = std::move(res.trajectory);
        out.report = std::move(res.report);
        if (!res.converged)
            out.error = res.diagnostic;
    };
    if (settings.method == Method::direct) {
        direct();
        return out;
    }
    IndirectOptions opt;
    opt.seed = settings.seed;
    try {
        IndirectResult res = solve_indirect(sc, std::nullopt, opt);
        out.method = Method::indirect;
        out.solved = true;
        out.trajectory = std::move(res.trajectory);
        out.report = std::move(res.report);
    } catch (const SolverError &e) {
        const bool fallback = e.kind() == Failure::singular_arc || e.kind() == Failure::constraint_active;
        if (settings.method == Method::automatic && fallback) {
            direct();
            out.note = std::string("indirect: ") + e.what() + "; fell back to direct";
        } else {
            out.method = Method::indirect;
            out.error = e.what();
        }
    }
    return out;
}

inline std::string summary_line(const Scenario &sc, const SolveOutcome &o)
{
    std::ostringstream ss;
    ss << "method=" << to_string(o.method);
    if (o.trajectory) {
        const Trajectory &t = *o.trajectory;
        ss << std::fixed << std::setprecision(6) << " cost=" << t.cost_value << std::setprecision(3)
           << " t_f=" << t.final_time() << " " << o.report.arc_string();
        if (sc.constraints.glide_slope_enabled)
            ss << " contacts=" << o.report.contacts.size();
    }
    ss << (o.solved ? (o.report.passed() ? " verified" : " structure-fail") : " solver-fail");
    return ss.str();
}

inline Json outcome_to_json(const Scenario &sc, const SolveOutcome &o)
{
    Json doc = report_to_json(o.report);
    doc["method"] = to_string(o.method);
    doc["solved"] = o.solved;
    doc["scenario"] = scenario_to_json(sc);
    if (o.trajectory) {
        doc["cost"] = o.trajectory->cost_value;
        doc["final_time"] = o.trajectory->final_time();
        doc["final_mass"] = o.trajectory->states.back().mass;
    }
    if (!o.note.empty())
        doc["note"] = o.note;
    if (!o.error.empty())
        doc["error"] = o.error;
    doc["initial_collinearity"] = initial_collinearity(sc.initial);
    return doc;
}

struct SolveCommand
{
    std::string scenario_path;
    std::string out_dir = ".";
    std::optional<Method> method;
    std::optional<int> nodes;
    std::optional<unsigned> seed;
};

/// Solves a scenario file; writes trajectory.csv and structure_report.json.
inline int cmd_solve(const SolveCommand &cmd, std::ostream &out, std::ostream &err)
{
    ScenarioFile file;
    SolveOutcome o;
    try {
        file = load_scenario(cmd.scenario_path);
        if (cmd.method)
            file.solver.method = *cmd.method;
        if (cmd.nodes)
            file.solver.nodes = *cmd.nodes;
        if (cmd.seed)
            file.solver.seed = *cmd.seed;
        o = run_solver(file.scenario, file.solver);
    } catch (const InvalidInput &e) {
        err << "error: " << e.what() << '\n';
        return exit_code::bad_input;
    }
    std::filesystem::create_directories(cmd.out_dir);
    const std::filesystem::path dir(cmd.out_dir);
    if (o.trajectory)
        write_trajectory_csv((dir / "trajectory.csv").string(), *o.trajectory);
    std::ofstream((dir / "structure_report.json").string()) << outcome_to_json(file.scenario, o).dump(2) << '\n';
    if (!o.note.empty())
        err << "note: " << o.note << '\n';
    if (!o.error.empty())
        err << "solver: " << o.error << '\n';
    out << summary_line(file.scenario, o) << '\n';
    return o.exit_code();
}

inline void print_verdicts(std::ostream &out, const StructureReport &r)
{
    for (const auto &[name, c] : r.verdicts) {
        char buf[48];
        std::snprintf(buf, sizeof buf, "%.3e", c.margin);
        out << std::left << std::setw(24) << name << std::setw(9) << to_string(c.verdict) << std::setw(12) << buf
            << c.detail << '\n';
    }
}

/// Analyzes an externally produced trajectory against a scenario.
inline int cmd_verify(const std::string &csv_path, const std::string &scenario_path, std::ostream &out,
                      std::ostream &err, StructureReport *report = nullptr)
{
    ScenarioFile file;
    try {
        file = load_scenario(scenario_path);
    } catch (const InvalidInput &e) {
        err << "error: " << e.what() << '\n';
        return exit_code::bad_input;
    }
    const Scenario &sc = file.scenario;
    Trajectory traj;
    try {
        traj = read_trajectory_csv(csv_path, sc.cost);
    } catch (const CsvError &e) {
        err << "error: " << csv_path << ": " << e.what() << '\n';
        return exit_code::bad_csv;
    }
    traj.model = sc.model();
    fill_diagnostics(traj, sc);
    // Glide-slope multipliers mark a transcribed solution, whose adjoints are
    // checked with the transcription tolerances.
    const AnalysisOptions aopt = traj.constraint_multipliers.empty()
                                     ? AnalysisOptions{}
                                     : transcription_analysis_options(static_cast<int>(traj.size()) - 1);
    StructureReport r;
    try {
        r = analyze(traj, sc, aopt);
    } catch (const InvalidInput &e) {
        err << "error: " << e.what() << '\n';
        return exit_code::bad_csv;
    }
    out << r.arc_string() << '\n';
    print_verdicts(out, r);
    if (report)
        *report = r;
    return r.passed() ? exit_code::ok : exit_code::structure_failure;
}

/// Applies one sweep value; an empty optional disables an angle constraint.
inline void apply_sweep_value(Scenario &sc, const std::string &param, std::optional<double> value)
{
    auto need = [&]() {
        if (!value)
            throw InvalidInput("sweep: 'off' applies only to glide_slope_angle and pointing_half_angle");
        return *value;
    };
    if (param == "glide_slope_angle" || param == "gamma") {
        sc.constraints.glide_slope_enabled = value.has_value();
        sc.constraints.glide_slope_angle = value ? deg2rad(*value) : 0.0;
    } else if (param == "pointing_half_angle" || param == "theta") {
        // A 90 degree cone is the upper half-space, which never binds a descent
        // thrust here; sweeps treat it as the constraint switched off.
        if (value && *value == 90.0)
            value.reset();
        sc.constraints.pointing_enabled = value.has_value();
        sc.constraints.pointing_half_angle = value ? deg2rad(*value) : 0.0;
    } else if (param == "throttle_min" || param == "u_min") {
        sc.params.throttle_min = need();
    } else if (param == "throttle_max" || param == "u_max") {
        sc.params.throttle_max = need();
    } else if (param == "flow_rate" || param == "q") {
        sc.params.flow_rate = need();
    } else if (param == "pressure_term" || param == "sigma") {
        sc.params.pressure_term = need();
    } else {
        throw InvalidInput("sweep: unknown parameter '" + param +
                           "' (expected glide_slope_angle, pointing_half_angle, throttle_min, throttle_max, "
                           "flow_rate or pressure_term)");
    }
}

inline std::optional<double> parse_sweep_value(const std::string &s)
{
    if (s == "off")
        return std::nullopt;
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
        throw InvalidInput("sweep: value '" + s + "' is neither a number nor 'off'");
    return v;
}

/// Time spent on the pointing-cone boundary.
inline double pointing_saturation_time(const Trajectory &traj, const ConstraintSet &c, double tol = 1e-6)
{
    if (!c.pointing_enabled)
        return 0.0;
    double total = 0.0;
    for (std::size_t k = 0; k + 1 < traj.size(); ++k)
        if (pointing_slack(traj.controls[k].direction, c.pointing_half_angle) <= tol)
            total += traj.times[k + 1] - traj.times[k];
    return total;
}

struct SweepCommand
{
    std::string scenario_path;
    std::string param;
    std::vector<std::string> values;
    int jobs = 1;
    std::string out_dir = ".";
    std::optional<Method> method;
};

inline const char *sweep_header()
{
    return "value,status,method,cost,t_f,arcs,contacts,switching_times,pointing_saturation";
}

namespace detail {

inline std::string csv_quote(const std::string &s)
{
    if (s.find_first_of(",\"\n") == std::string::npos)
        return s;
    std::string out = "\"";
    for (char ch : s)
        out += ch == '"' ? std::string("\"\"") : std::string(1, ch);
    return out + "\"";
}

inline std::string sweep_row(const std::string &value, const Scenario &base, const SolverSettings &settings,
                             const std::string &param)
{
    char buf[64];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.10g", v);
        return std::string(buf);
    };
    Scenario sc = base;
    SolveOutcome o;
    try {
        apply_sweep_value(sc, param, parse_sweep_value(value));
        o = run_solver(sc, settings);
    } catch (const InvalidInput &e) {
        return csv_quote(value) + "," + csv_quote(std::string("invalid: ") + e.what()) + ",,,,,,,";
    } catch (const std::exception &e) {
        return csv_quote(value) + "," + csv_quote(std::string("error: ") + e.what()) + ",,,,,,,";
    }
    std::string status = !o.solved ? "solver_fail: " + o.error : o.report.passed() ? "ok" : "structure_fail";
    std::string row = csv_quote(value) + "," + csv_quote(status) + "," + to_string(o.method) + ",";
    if (!o.trajectory)
        return row + ",,,,,";
    const Trajectory &t = *o.trajectory;
    std::string switches;
    for (double s : o.report.switching_times)
        switches += (switches.empty() ? "" : ";") + num(s);
    row += num(t.cost_value) + "," + num(t.final_time()) + "," + o.report.pattern() + "," +
           std::to_string(o.report.contacts.size()) + "," + switches + "," +
           num(pointing_saturation_time(t, sc.constraints));
    return row;
}

} // namespace detail

/// Solves the base scenario once per value, concurrently, and writes sweep.csv
/// with rows in input order.
inline int cmd_sweep(const SweepCommand &cmd, std::ostream &out, std::ostream &err)
{
    ScenarioFile file;
    try {
        if (cmd.values.empty())
            throw InvalidInput("sweep: empty value list");
        if (cmd.jobs < 1)
            throw InvalidInput("sweep: --jobs must be >= 1");
        file = load_scenario(cmd.scenario_path);
        Scenario probe = file.scenario;
        apply_sweep_value(probe, cmd.param, 0.0); // rejects unknown parameter names early
        if (cmd.method)
            file.solver.method = *cmd.method;
    } catch (const InvalidInput &e) {
        err << "error: " << e.what() << '\n';
        return exit_code::bad_input;
    }

    std::vector<std::string> rows(cmd.values.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < rows.size(); i = next++)
            rows[i] = detail::sweep_row(cmd.values[i], file.scenario, file.solver, cmd.param);
    };
    const int n_threads = std::min<int>(cmd.jobs, static_cast<int>(rows.size()));
    std::vector<std::jthread> pool;
    for (int j = 1; j < n_threads; ++j)
        pool.emplace_back(worker);
    worker();
    pool.clear();

    std::filesystem::create_directories(cmd.out_dir);
    std::ofstream os((std::filesystem::path(cmd.out_dir) / "sweep.csv").string());
    os << sweep_header() << '\n';
    out << sweep_header() << '\n';
    for (const std::string &r : rows) {
        os << r << '\n';
        out << r << '\n';
    }
    return exit_code::ok;
}

} // namespace descent
