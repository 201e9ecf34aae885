#include <gtest/gtest.h>

#include <descent/indirect.hpp>

#include "bang_bang_oracle.hpp"
#include "fixtures.hpp"

using namespace descent;
using namespace descent::testing;

namespace {

const IndirectResult &planar_solution()
{
    static const IndirectResult res = solve_indirect(mars_unconstrained());
    return res;
}

Verdict verdict(const StructureReport &r, const std::string &name) { return r.verdicts.at(name).verdict; }

} // namespace

TEST(Shoot, ConvergedUnknownsGiveSmallResiduals)
{
    const IndirectResult &res = planar_solution();
    const ShootResult shot = shoot(mars_unconstrained(), res.unknowns);
    EXPECT_LE(shot.residuals.max_norm(), 1e-8);
    EXPECT_EQ(shot.residuals.values.size(), 8);
    EXPECT_EQ(shot.residuals.names.size(), 8u);
}

TEST(Shoot, PerturbedAdjointGivesNonzeroResidual)
{
    ShootingUnknowns u = planar_solution().unknowns;
    u.p_v0.x() += 1e-3;
    EXPECT_GT(shoot(mars_unconstrained(), u).residuals.max_norm(), 1e-6);
}

TEST(Shoot, FixedFinalTimeDropsHamiltonianResidual)
{
    Scenario sc = mars_unconstrained();
    sc.final_time = 80.0;
    ShootingUnknowns u = planar_solution().unknowns;
    u.t_f = 80.0;
    EXPECT_EQ(shoot(sc, u).residuals.values.size(), 7);
}

TEST(SolveIndirect, PlanarCaseIsMaxMinMax)
{
    const IndirectResult &res = planar_solution();
    EXPECT_EQ(res.report.pattern(), "Max-Min-Max");
    ASSERT_EQ(res.report.switching_times.size(), 2u);
    EXPECT_LT(res.report.switching_times[0], res.report.switching_times[1]);
    EXPECT_NEAR(res.trajectory.final_time(), 77.32, 0.05);
    EXPECT_TRUE(res.report.passed());
}

TEST(SolveIndirect, PsiSignMatchesArcs)
{
    const IndirectResult &res = planar_solution();
    const auto &traj = res.trajectory;
    const double t1 = res.report.switching_times[0], t2 = res.report.switching_times[1];
    for (std::size_t k = 0; k < traj.size(); ++k) {
        const double t = traj.times[k], psi = *traj.diagnostics[k].psi;
        if (t < t1 - 1e-9) {
            EXPECT_GT(psi, 0.0) << t;
        } else if (t > t1 + 1e-9 && t < t2 - 1e-9) {
            EXPECT_LT(psi, 0.0) << t;
        } else if (t > t2 + 1e-9) {
            EXPECT_GT(psi, 0.0) << t;
        }
    }
}

TEST(SolveIndirect, CertificatesPass)
{
    const auto &r = planar_solution().report;
    EXPECT_EQ(verdict(r, "qr_dot_d_monotone"), Verdict::pass);
    EXPECT_EQ(verdict(r, "psi_rate"), Verdict::pass);
    EXPECT_EQ(verdict(r, "psi_sign"), Verdict::pass);
    EXPECT_EQ(verdict(r, "transversality"), Verdict::pass);
}

TEST(SolveIndirect, VerticalCaseMatchesBangBangOracle)
{
    const Scenario sc = mars_unconstrained(true);
    const double m0 = sc.initial.mass, g = sc.params.gravity, T = sc.params.thrust_max;
    const BangBangOracle oracle =
        vertical_min_max(1500.0, -75.0, T * sc.params.throttle_min / m0 - g, T * sc.params.throttle_max / m0 - g);
    const IndirectResult res = solve_indirect(sc);
    EXPECT_EQ(res.report.pattern(), "Min-Max");
    ASSERT_EQ(res.report.switching_times.size(), 1u);
    EXPECT_NEAR(res.report.switching_times[0], oracle.switch_time, 0.01 * oracle.switch_time);
    EXPECT_NEAR(res.trajectory.final_time(), oracle.final_time, 0.01 * oracle.final_time);
}

TEST(SolveIndirect, MassCostsAgreeWhenFlowIsPositive)
{
    Scenario fuel = mars_unconstrained();
    fuel.params.flow_rate = 8.4294;
    Scenario mass = fuel;
    mass.cost = Cost::max_final_mass;
    const IndirectResult a = solve_indirect(fuel), b = solve_indirect(mass);
    EXPECT_NEAR(a.trajectory.final_time(), b.trajectory.final_time(), 1e-6);
    EXPECT_NEAR(b.trajectory.cost_value, -(fuel.initial.mass - fuel.params.flow_rate * a.trajectory.cost_value),
                1e-6);
}

TEST(SolveIndirect, AtmosphereMassAdjointIncreases)
{
    const IndirectResult res = solve_indirect(with_pressure(mars_unconstrained(), 2000.0));
    EXPECT_EQ(res.report.pattern(), "Max-Min-Max");
    const auto &ps = *res.trajectory.costates;
    for (std::size_t k = 1; k < ps.size(); ++k)
        EXPECT_GT(ps[k].p_m, ps[k - 1].p_m);
}

TEST(SolveIndirect, FixedFinalTime)
{
    Scenario sc = mars_unconstrained();
    sc.final_time = 85.0;
    const IndirectResult res = solve_indirect(sc);
    EXPECT_DOUBLE_EQ(res.trajectory.final_time(), 85.0);
    EXPECT_LE(res.residuals.max_norm(), 1e-8);
    EXPECT_GE(res.trajectory.cost_value, planar_solution().trajectory.cost_value - 1e-6);
}

TEST(SolveIndirect, ActiveGlideSlopeIsRejected)
{
    try {
        solve_indirect(mars_altitude(false));
        FAIL() << "expected constraint_active";
    } catch (const SolverError &e) {
        EXPECT_EQ(e.kind(), Failure::constraint_active);
    }
}

TEST(SolveIndirect, GuessFromSwitchesConvergesQuickly)
{
    const IndirectResult &res = planar_solution();
    const auto guess = guess_from_switches(mars_unconstrained(), res.trajectory, res.report.switching_times);
    ASSERT_TRUE(guess.has_value());
    const IndirectResult again = solve_indirect(mars_unconstrained(), guess);
    EXPECT_EQ(again.attempts, 1);
    EXPECT_NEAR(again.trajectory.final_time(), res.trajectory.final_time(), 1e-6);
}

TEST(SolveIndirect, Deterministic)
{
    const IndirectResult a = solve_indirect(mars_unconstrained(true));
    const IndirectResult b = solve_indirect(mars_unconstrained(true));
    EXPECT_EQ(a.trajectory.final_time(), b.trajectory.final_time());
    EXPECT_EQ(a.unknowns.p_v0, b.unknowns.p_v0);
}

TEST(SolveIndirect, MassBookkeeping)
{
    Scenario sc = mars_unconstrained();
    sc.params.flow_rate = 8.4294;
    const IndirectResult res = solve_indirect(sc);
    EXPECT_LE(mass_bookkeeping_error(res.trajectory, sc.params), 1e-6 * sc.initial.mass);
}
