#include <iostream>

#include <CLI11.hpp>

#include <descent/commands.hpp>

using namespace descent;

namespace {

std::optional<Method> method_option(const std::string &s)
{
    if (s.empty())
        return std::nullopt;
    return parse_method(s, "--method");
}

} // namespace

int main(int argc, char **argv)
{
    CLI::App app{"Powered-descent optimal control: solve, verify and sweep landing scenarios"};
    app.require_subcommand(1);

    SolveCommand solve;
    std::string solve_method;
    int nodes = 0;
    unsigned seed = 0;
    auto *solve_cmd = app.add_subcommand("solve", "Solve a scenario and write trajectory.csv, structure_report.json");
    solve_cmd->add_option("scenario", solve.scenario_path, "Scenario JSON file")->required();
    solve_cmd->add_option("--method", solve_method, "indirect, direct or auto (default: from the file)");
    solve_cmd->add_option("--out-dir", solve.out_dir, "Output directory")->capture_default_str();
    auto *nodes_opt = solve_cmd->add_option("--nodes", nodes, "Transcription grid size");
    auto *seed_opt = solve_cmd->add_option("--seed", seed, "Seed for randomized shooting restarts");

    std::string csv_path, verify_scenario;
    auto *verify_cmd = app.add_subcommand("verify", "Verify the structure of an existing trajectory CSV");
    verify_cmd->add_option("trajectory", csv_path, "Trajectory CSV")->required();
    verify_cmd->add_option("scenario", verify_scenario, "Scenario JSON file")->required();

    SweepCommand sweep;
    std::string sweep_method, values;
    auto *sweep_cmd = app.add_subcommand("sweep", "Solve a scenario over a list of parameter values");
    sweep_cmd->add_option("scenario", sweep.scenario_path, "Scenario JSON file")->required();
    sweep_cmd->add_option("--param", sweep.param,
                          "glide_slope_angle|gamma, pointing_half_angle|theta, throttle_min|u_min, "
                          "throttle_max|u_max, flow_rate|q, pressure_term|sigma")
        ->required();
    sweep_cmd->add_option("--values", values, "Comma-separated values; angles in degrees, 'off' disables")
        ->required();
    sweep_cmd->add_option("--jobs", sweep.jobs, "Concurrent solves")->capture_default_str();
    sweep_cmd->add_option("--out-dir", sweep.out_dir, "Output directory")->capture_default_str();
    sweep_cmd->add_option("--method", sweep_method, "indirect, direct or auto (default: from the file)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : exit_code::bad_input;
    }

    try {
        if (*solve_cmd) {
            solve.method = method_option(solve_method);
            if (*nodes_opt)
                solve.nodes = nodes;
            if (*seed_opt)
                solve.seed = seed;
            return cmd_solve(solve, std::cout, std::cerr);
        }
        if (*verify_cmd)
            return cmd_verify(csv_path, verify_scenario, std::cout, std::cerr);
        sweep.method = method_option(sweep_method);
        std::string item;
        std::istringstream ss(values);
        while (std::getline(ss, item, ','))
            if (!item.empty())
                sweep.values.push_back(item);
        return cmd_sweep(sweep, std::cout, std::cerr);
    } catch (const InvalidInput &e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code::bad_input;
    }
}
