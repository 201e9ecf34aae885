#include <gtest/gtest.h>

#include <random>

#include <descent/analyze.hpp>
#include <descent/indirect.hpp>

#include "fixtures.hpp"

using namespace descent;
using namespace descent::testing;

namespace {

// Synthetic trajectory on a uniform grid with the given throttle and altitude profiles.
template <class Throttle, class Altitude>
Trajectory synthetic(int n, double t_f, Throttle throttle, Altitude altitude)
{
    Trajectory traj;
    for (int k = 0; k <= n; ++k) {
        const double t = t_f * k / n;
        traj.times.push_back(t);
        traj.states.push_back({Vec3(0, 0, altitude(t)), Vec3::Zero(), 1905.0});
        traj.controls.push_back({Vec3::UnitZ(), throttle(t)});
        NodeDiagnostics d;
        d.h = altitude(t);
        traj.diagnostics.push_back(d);
    }
    return traj;
}

std::vector<ArcKind> kinds(const std::vector<Arc> &arcs)
{
    std::vector<ArcKind> out;
    for (const Arc &a : arcs)
        out.push_back(a.kind);
    return out;
}

const VehicleParams vehicle = mars_vehicle();

auto bang3(double t1, double t2)
{
    return [=](double t) { return (t < t1 || t >= t2) ? 0.8 : 0.3; };
}

auto high(double) { return 100.0; }

} // namespace

TEST(ClassifyArcs, ConstantMaxIsSingleArc)
{
    const Trajectory traj = synthetic(50, 10.0, [](double) { return 0.8; }, high);
    const auto arcs = classify_arcs(traj, vehicle);
    ASSERT_EQ(arcs.size(), 1u);
    EXPECT_EQ(arcs[0].kind, ArcKind::max);
    EXPECT_EQ(arcs[0].t_start, 0.0);
    EXPECT_EQ(arcs[0].t_end, 10.0);
}

TEST(ClassifyArcs, BangProfileTilesHorizon)
{
    const Trajectory traj = synthetic(100, 10.0, bang3(3.0, 7.0), high);
    const auto arcs = classify_arcs(traj, vehicle);
    ASSERT_EQ(kinds(arcs), (std::vector{ArcKind::max, ArcKind::min, ArcKind::max}));
    EXPECT_NEAR(arcs[1].t_start, 3.0, 1e-12);
    EXPECT_NEAR(arcs[2].t_start, 7.0, 1e-12);
    for (std::size_t i = 1; i < arcs.size(); ++i)
        EXPECT_EQ(arcs[i - 1].t_end, arcs[i].t_start);
    EXPECT_EQ(arcs.back().t_end, 10.0);
}

TEST(ClassifyArcs, MinMaxAccepted)
{
    const Trajectory traj = synthetic(100, 10.0, [](double t) { return t < 4 ? 0.3 : 0.8; }, high);
    StructureReport r;
    r.arcs = classify_arcs(traj, vehicle);
    EXPECT_EQ(r.pattern(), "Min-Max");
    EXPECT_EQ(verify_structure(r, mars_unconstrained()).at("arc_sequence").verdict, Verdict::pass);
}

TEST(ClassifyArcs, IsolatedIntermediateNodeIsAbsorbed)
{
    Trajectory traj = synthetic(100, 10.0, bang3(3.0, 7.0), high);
    traj.controls[30].throttle = 0.55; // fractional node at a switch
    traj.controls[50].throttle = 0.8;  // single-node blip inside the Min arc
    const auto arcs = classify_arcs(traj, vehicle);
    EXPECT_EQ(kinds(arcs), (std::vector{ArcKind::max, ArcKind::min, ArcKind::max}));
}

TEST(ClassifyArcs, Idempotent)
{
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> u(0.5, 9.5);
    for (int trial = 0; trial < 50; ++trial) {
        double t1 = u(rng), t2 = u(rng);
        if (t1 > t2)
            std::swap(t1, t2);
        const Trajectory traj = synthetic(80, 10.0, bang3(t1, t2), high);
        const auto arcs = classify_arcs(traj, vehicle);
        // Rebuild a throttle profile from the arcs and classify again.
        Trajectory again = traj;
        for (std::size_t k = 0; k < again.size(); ++k)
            again.controls[k].throttle = arc_at_node(arcs, k)->kind == ArcKind::max ? 0.8 : 0.3;
        const auto arcs2 = classify_arcs(again, vehicle);
        ASSERT_EQ(arcs.size(), arcs2.size());
        for (std::size_t i = 0; i < arcs.size(); ++i) {
            EXPECT_EQ(arcs[i].kind, arcs2[i].kind);
            EXPECT_EQ(arcs[i].t_start, arcs2[i].t_start);
        }
    }
}

TEST(ClassifyArcs, InvariantUnderRefinement)
{
    const Trajectory coarse = synthetic(40, 10.0, bang3(2.5, 7.5), high);
    // Insert a midpoint in every interval, holding the interval's control.
    Trajectory fine;
    for (std::size_t k = 0; k < coarse.size(); ++k) {
        fine.times.push_back(coarse.times[k]);
        fine.states.push_back(coarse.states[k]);
        fine.controls.push_back(coarse.controls[k]);
        fine.diagnostics.push_back(coarse.diagnostics[k]);
        if (k + 1 < coarse.size()) {
            fine.times.push_back(0.5 * (coarse.times[k] + coarse.times[k + 1]));
            fine.states.push_back(coarse.states[k]);
            fine.controls.push_back(coarse.controls[k]);
            fine.diagnostics.push_back(coarse.diagnostics[k]);
        }
    }
    const auto a = classify_arcs(coarse, vehicle), b = classify_arcs(fine, vehicle);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].kind, b[i].kind);
        EXPECT_DOUBLE_EQ(a[i].t_start, b[i].t_start);
        EXPECT_DOUBLE_EQ(a[i].t_end, b[i].t_end);
    }
}

TEST(DetectContacts, NoneAboveTolerance)
{
    const Trajectory traj = synthetic(100, 10.0, bang3(3, 7), high);
    EXPECT_TRUE(detect_contacts(traj, classify_arcs(traj, vehicle), 0.5).empty());
}

TEST(DetectContacts, GlidingIsBoundaryInterval)
{
    const Trajectory traj =
        synthetic(100, 20.0, bang3(3, 17), [](double t) { return (t >= 5 && t <= 10) ? 0.0 : 50.0; });
    const auto contacts = detect_contacts(traj, classify_arcs(traj, vehicle), 0.5);
    ASSERT_EQ(contacts.size(), 1u);
    EXPECT_EQ(contacts[0].kind, ContactKind::boundary_interval);
    EXPECT_NEAR(contacts[0].t_c1, 5.0, 1e-12);
    EXPECT_NEAR(contacts[0].t_c2, 10.0, 1e-12);
    EXPECT_EQ(contacts[0].on_arc, ArcKind::min);
}

TEST(DetectContacts, PointsAreSortedAndDisjoint)
{
    const Trajectory traj = synthetic(100, 10.0, bang3(3, 7), 
                                     [](double t) { return std::abs(std::sin(t * kPi / 2.5)) * 100; });
    const auto contacts = detect_contacts(traj, classify_arcs(traj, vehicle), 0.5);
    ASSERT_EQ(contacts.size(), 5u); // t = 0, 2.5, 5, 7.5, 10
    EXPECT_TRUE(contacts.back().final_point);
    for (std::size_t i = 0; i < contacts.size(); ++i) {
        EXPECT_LE(contacts[i].t_c1, contacts[i].t_c2);
        if (i > 0) {
            EXPECT_LT(contacts[i - 1].t_c2, contacts[i].t_c1);
        }
    }
}

TEST(DetectContacts, RequiresGlideSlopeValues)
{
    Trajectory traj = synthetic(20, 1.0, bang3(0.3, 0.7), high);
    traj.diagnostics[3].h.reset();
    EXPECT_THROW(detect_contacts(traj, {}, 0.5), InvalidInput);
}

TEST(VerifyStructure, AlternatingSequenceFails)
{
    StructureReport r;
    r.arcs = {{ArcKind::max}, {ArcKind::min}, {ArcKind::max}, {ArcKind::min}};
    const Check c = verify_structure(r, mars_unconstrained()).at("arc_sequence");
    EXPECT_EQ(c.verdict, Verdict::fail);
    EXPECT_NE(c.detail.find("structure violation"), std::string::npos);
}

TEST(VerifyStructure, ThresholdFromVehicleConstants)
{
    const Scenario sc = mars_altitude(true);
    // u_min T = 4971.9 < m0 g0 = 7067.55: at most two contacts.
    StructureReport r;
    r.arcs = {{ArcKind::max, 0, 30, 0, 30}, {ArcKind::min, 30, 60, 31, 60}, {ArcKind::max, 60, 75, 61, 75}};
    Contact early{10, 10, ContactKind::contact_point, ArcKind::max, 10, 10, false, 0.8};
    Contact final_pt{75, 75, ContactKind::contact_point, ArcKind::max, 75, 75, true, 0.8};
    r.contacts = {early, final_pt};
    Verdicts v = verify_structure(r, sc);
    EXPECT_EQ(v.at("contact_count").verdict, Verdict::pass);
    EXPECT_EQ(v.at("contacts_per_arc").verdict, Verdict::pass);
    EXPECT_EQ(v.at("min_arc_contacts").verdict, Verdict::pass);
    EXPECT_EQ(v.at("contact_thrust").verdict, Verdict::pass);

    Contact on_min{40, 40, ContactKind::contact_point, ArcKind::min, 40, 40, false, 0.3};
    r.contacts = {early, on_min, final_pt};
    v = verify_structure(r, sc);
    EXPECT_EQ(v.at("contact_count").verdict, Verdict::fail);
    EXPECT_EQ(v.at("min_arc_contacts").verdict, Verdict::fail);
    // 0.3 * 16573 = 4971.9 < m_e g0 = 5583.55
    EXPECT_EQ(v.at("contact_thrust").verdict, Verdict::fail);
}

TEST(VerifyStructure, OnlyFinalContactWhenMinimumThrustCarriesWeight)
{
    Scenario sc = mars_altitude(true);
    sc.params.throttle_min = 0.7; // 0.7 cos(45 deg) T = 8203 >= m0 g0
    StructureReport r;
    r.arcs = {{ArcKind::max, 0, 75, 0, 75}};
    r.contacts = {{75, 75, ContactKind::contact_point, ArcKind::max, 75, 75, true, 0.8}};
    EXPECT_EQ(verify_structure(r, sc).at("contact_count").verdict, Verdict::pass);
    r.contacts.insert(r.contacts.begin(), {10, 10, ContactKind::contact_point, ArcKind::max, 10, 10, false, 0.8});
    const Check c = verify_structure(r, sc).at("contact_count");
    EXPECT_EQ(c.verdict, Verdict::fail);
    EXPECT_NE(c.detail.find("only the final point"), std::string::npos);
}

TEST(VerifyStructure, SkipsContactChecksWithoutGlideSlope)
{
    StructureReport r;
    r.arcs = {{ArcKind::max}};
    EXPECT_EQ(verify_structure(r, mars_unconstrained()).at("contact_count").verdict, Verdict::skipped);
}

TEST(VerifyPmp, MissingCostatesAreSkipped)
{
    const Trajectory traj = synthetic(20, 1.0, bang3(0.3, 0.7), high);
    for (const auto &[name, check] : verify_pmp(traj, mars_unconstrained(), {}))
        EXPECT_EQ(check.verdict, Verdict::skipped) << name;
}

TEST(VerifyPmp, InjectedSignMismatchFails)
{
    const Scenario sc = mars_unconstrained();
    IndirectResult res = solve_indirect(sc);
    Trajectory traj = res.trajectory;
    // Force u_max on nodes in the middle of the Min arc.
    const double t1 = res.report.switching_times[0], t2 = res.report.switching_times[1];
    for (std::size_t k = 0; k < traj.size(); ++k)
        if (std::abs(traj.times[k] - 0.5 * (t1 + t2)) < 1.0)
            traj.controls[k].throttle = sc.params.throttle_max;
    const Check c = verify_pmp(traj, sc, classify_arcs(traj, sc.params)).at("psi_sign");
    EXPECT_EQ(c.verdict, Verdict::fail);
    EXPECT_NE(c.detail.find("Psi-sign mismatch"), std::string::npos);
}

TEST(VerifyPmp, SingularArcWithGenericInitialDataWarns)
{
    Scenario sc = mars_unconstrained();
    sc.initial.velocity = Vec3(50.0, 40.0, -75.0); // not collinear with (x, y)
    Trajectory traj = synthetic(30, 3.0, [](double) { return 0.55; }, high);
    traj.costates.emplace(traj.size(), Costate{});
    for (auto &p : *traj.costates) {
        p.p_v = Vec3(0, 0, 1);
        p.p_r = Vec3(0, 0, 2);
    }
    fill_diagnostics(traj, sc);
    const Verdicts v = verify_pmp(traj, sc, classify_arcs(traj, sc.params));
    EXPECT_EQ(v.at("singular_collinearity").verdict, Verdict::pass);
    EXPECT_EQ(v.at("singular_genericity").verdict, Verdict::warning);
    EXPECT_EQ(v.at("singular_genericity").detail, "non-generic singular arc: inspect");
}

TEST(InitialCollinearity, ZeroForPlanarData)
{
    EXPECT_EQ(initial_collinearity(mars_initial_2d()), 0.0);
    EXPECT_NEAR(initial_collinearity({Vec3(1, 0, 0), Vec3(0, 2, 0), 1}), 2.0, 1e-15);
}
