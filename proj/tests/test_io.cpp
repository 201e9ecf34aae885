#include <gtest/gtest.h>

#include <sstream>

#include <descent/indirect.hpp>
#include <descent/io.hpp>

#include "fixtures.hpp"

using namespace descent;
using namespace descent::testing;

namespace {

Json base_doc()
{
    return Json::parse(R"({
      "vehicle": {"thrust_max": 16573, "flow_rate": 0, "mass_empty": 1505, "gravity": 3.71,
                  "throttle_min": 0.3, "throttle_max": 0.8, "pressure_term": 0},
      "constraints": {"glide_slope_angle": 0, "pointing_half_angle": 45},
      "initial": {"position": [2000, 0, 1500], "velocity": [100, 0, -75], "mass": 1905},
      "final": {"position": [0, 0], "velocity": [0, 0, 0], "time": null},
      "cost": "min_fuel",
      "solver": {"method": "direct", "options": {"nodes": 80, "seed": 3}}
    })");
}

std::string error_of(const Json &doc)
{
    try {
        scenario_from_json(doc);
    } catch (const InvalidInput &e) {
        return e.what();
    }
    return "";
}

} // namespace

TEST(ScenarioJson, ParsesDegreesAndSettings)
{
    const ScenarioFile f = scenario_from_json(base_doc());
    EXPECT_TRUE(f.scenario.constraints.glide_slope_enabled);
    EXPECT_DOUBLE_EQ(f.scenario.constraints.glide_slope_angle, 0.0);
    EXPECT_TRUE(f.scenario.constraints.pointing_enabled);
    EXPECT_NEAR(f.scenario.constraints.pointing_half_angle, kPi / 4, 1e-15);
    EXPECT_EQ(f.solver.method, Method::direct);
    EXPECT_EQ(f.solver.nodes, 80);
    EXPECT_EQ(f.solver.seed, 3u);
    EXPECT_TRUE(f.scenario.pinpoint());
    EXPECT_FALSE(f.scenario.final_time.has_value());
}

TEST(ScenarioJson, NullAnglesDisableConstraints)
{
    Json doc = base_doc();
    doc["constraints"]["glide_slope_angle"] = nullptr;
    doc["constraints"].erase("pointing_half_angle");
    const ScenarioFile f = scenario_from_json(doc);
    EXPECT_FALSE(f.scenario.constraints.glide_slope_enabled);
    EXPECT_FALSE(f.scenario.constraints.pointing_enabled);
}

TEST(ScenarioJson, ErrorsNameTheKey)
{
    Json doc = base_doc();
    doc["vehicle"]["thrust"] = 1.0;
    EXPECT_NE(error_of(doc).find("vehicle.thrust"), std::string::npos);

    doc = base_doc();
    doc["extra"] = 1;
    EXPECT_NE(error_of(doc).find("'extra'"), std::string::npos);

    doc = base_doc();
    doc["initial"]["velocity"] = {1, 2};
    EXPECT_NE(error_of(doc).find("initial.velocity"), std::string::npos);

    doc = base_doc();
    doc["vehicle"].erase("gravity");
    EXPECT_NE(error_of(doc).find("vehicle.gravity"), std::string::npos);

    doc = base_doc();
    doc["constraints"]["pointing_half_angle"] = 95;
    EXPECT_NE(error_of(doc).find("constraints.pointing_half_angle"), std::string::npos);

    doc = base_doc();
    doc["cost"] = "fastest";
    EXPECT_NE(error_of(doc).find("cost"), std::string::npos);

    doc = base_doc();
    doc["solver"]["method"] = "shooting";
    EXPECT_NE(error_of(doc).find("solver.method"), std::string::npos);
}

TEST(ScenarioJson, RoundTripsThroughWriter)
{
    const Scenario sc = mars_varying_mass();
    const Scenario back = scenario_from_json(scenario_to_json(sc)).scenario;
    EXPECT_NEAR(back.constraints.glide_slope_angle, sc.constraints.glide_slope_angle, 1e-15);
    EXPECT_EQ(back.cost, Cost::max_final_mass);
    EXPECT_DOUBLE_EQ(back.params.flow_rate, sc.params.flow_rate);
    EXPECT_EQ(back.initial.position, sc.initial.position);
}

TEST(TrajectoryCsv, RoundTripKeepsValues)
{
    const IndirectResult res = solve_indirect(mars_unconstrained());
    std::stringstream first;
    write_trajectory_csv(first, res.trajectory);
    Trajectory back = read_trajectory_csv(first, Cost::min_fuel);
    ASSERT_TRUE(back.costates.has_value());
    ASSERT_EQ(back.size(), res.trajectory.size());
    for (std::size_t k = 0; k < back.size(); ++k) {
        EXPECT_EQ(back.states[k].position, res.trajectory.states[k].position);
        EXPECT_EQ((*back.costates)[k].p_v, (*res.trajectory.costates)[k].p_v);
    }
    EXPECT_TRUE(back.constraint_multipliers.empty());
    // The thrust columns hold throttle * direction, so the direction comes back
    // to within rounding only.
    for (std::size_t k = 0; k < back.size(); ++k) {
        EXPECT_EQ(back.controls[k].throttle, res.trajectory.controls[k].throttle);
        EXPECT_LE((back.controls[k].direction - res.trajectory.controls[k].direction).norm(), 1e-15);
    }
}

TEST(TrajectoryCsv, HeaderStartsWithDocumentedColumns)
{
    std::stringstream ss;
    Trajectory t;
    t.times = {0.0, 1.0};
    t.states = {State{}, State{}};
    t.controls = {Control{}, Control{}};
    write_trajectory_csv(ss, t);
    std::string header;
    std::getline(ss, header);
    EXPECT_EQ(header.rfind("t,x,y,z,vx,vy,vz,m,ux,uy,uz,throttle,h,psi,qr_dot_d,pointing_slack", 0), 0u);
    std::string row;
    std::getline(ss, row);
    EXPECT_EQ(row.substr(row.size() - 3), ",,,"); // missing diagnostics are empty fields
}

TEST(TrajectoryCsv, BaseColumnsOnly)
{
    std::stringstream ss("t,x,y,z,vx,vy,vz,m,ux,uy,uz,throttle,h,psi,qr_dot_d,pointing_slack\n"
                         "0,0,0,10,0,0,-1,1000,0,0,0.5,0.5,,,,\n"
                         "1,0,0,9,0,0,-1,1000,0,0,0.5,0.5,,,,\n");
    const Trajectory t = read_trajectory_csv(ss);
    EXPECT_FALSE(t.costates.has_value());
    EXPECT_EQ(t.size(), 2u);
    EXPECT_EQ(t.controls[0].direction, Vec3::UnitZ());
}

TEST(TrajectoryCsv, RejectsMalformedInput)
{
    std::stringstream wrong_header("t,x,y\n0,0,0\n");
    EXPECT_THROW(read_trajectory_csv(wrong_header), CsvError);
    std::stringstream renamed("t,x,y,z,vx,vy,vz,mass,ux,uy,uz,throttle,h,psi,qr_dot_d,pointing_slack\n");
    EXPECT_THROW(read_trajectory_csv(renamed), CsvError);
    std::stringstream short_row("t,x,y,z,vx,vy,vz,m,ux,uy,uz,throttle,h,psi,qr_dot_d,pointing_slack\n0,1,2\n");
    EXPECT_THROW(read_trajectory_csv(short_row), CsvError);
    std::stringstream text("t,x,y,z,vx,vy,vz,m,ux,uy,uz,throttle,h,psi,qr_dot_d,pointing_slack\n"
                           "0,0,0,abc,0,0,-1,1000,0,0,0.5,0.5,,,,\n"
                           "1,0,0,9,0,0,-1,1000,0,0,0.5,0.5,,,,\n");
    EXPECT_THROW(read_trajectory_csv(text), CsvError);
}

TEST(ReportJson, CarriesVerdictsAndArcs)
{
    const IndirectResult res = solve_indirect(mars_unconstrained());
    const Json doc = report_to_json(res.report);
    EXPECT_EQ(doc["pattern"], "Max-Min-Max");
    EXPECT_EQ(doc["arcs"].size(), 3u);
    EXPECT_EQ(doc["verdicts"]["psi_sign"]["verdict"], "pass");
    EXPECT_TRUE(doc["passed"].get<bool>());
}
