#include <doctest.h>

#include <cmath>
#include <random>

#include "flatlin/kappa.hpp"
#include "flatlin/tracking.hpp"
#include "harness.hpp"
#include "support.hpp"

using namespace flatlin;

TEST_CASE("coefficients from eigenvalue sets") {
    auto a = coeffs_from_eigenvalues({0.5, 0.5});
    REQUIRE(a.size() == 2);
    CHECK(a[0] == doctest::Approx(0.25));  // a^0
    CHECK(a[1] == doctest::Approx(-1.0));  // a^1

    auto deadbeat = coeffs_from_eigenvalues({0.0, 0.0});
    CHECK(deadbeat[0] == 0.0);
    CHECK(deadbeat[1] == 0.0);

    auto complex_pair = coeffs_from_eigenvalues(
        {std::complex<double>(0.3, 0.4), std::complex<double>(0.3, -0.4)});
    CHECK(complex_pair[0] == doctest::Approx(0.25));
    CHECK(complex_pair[1] == doctest::Approx(-0.6));

    CHECK_THROWS_AS(coeffs_from_eigenvalues({1.1}), UnstableEigenvalueError);
    CHECK_THROWS_AS(coeffs_from_eigenvalues({std::complex<double>(0.3, 0.4)}),
                    NonConjugatePairError);
}

namespace {

TrackingLaw robot_tracking(const std::vector<std::vector<double>>& coeffs) {
    const auto& robot = testsupport::robot();
    FeedbackLaw law = synthesize_from_kappa(robot, compute_kappa(robot));
    return make_tracking_law(law, coeffs);
}

}  // namespace

TEST_CASE("dead-beat v-window is pure reference shifts") {
    const auto& robot = testsupport::robot();
    TrackingLaw tlaw = make_tracking_law_deadbeat(
        synthesize_from_kappa(robot, compute_kappa(robot)));
    RefWindow ref;
    ref.vals = {{0.1, 0.2, 0.3, 0.4}, {-0.1, 0.0, 0.1}};
    Eigen::VectorXd x(3);
    x << 1.02, 0.05, 0.15;
    std::vector<Eigen::VectorXd> hist{(Eigen::VectorXd(2) << 0.05, 0.98).finished()};
    VSolveResult res = solve_v_window(tlaw, robot, hist, x, ref);
    CHECK(res.v.at(1, 0) == doctest::Approx(ref.at(1, 2)).epsilon(1e-14));
    CHECK(res.v.at(1, 1) == doctest::Approx(ref.at(1, 3)).epsilon(1e-14));
    CHECK(res.v.at(2, 0) == doctest::Approx(ref.at(2, 2)).epsilon(1e-14));
}

TEST_CASE("robot v-window matches an independently coded scalar recursion") {
    // Coefficients a^0 = 0.25, a^1 = -1 on both blocks.
    TrackingLaw tlaw = robot_tracking({{0.25, -1.0}, {0.25, -1.0}});
    const auto& robot = testsupport::robot();

    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> d(-0.1, 0.1);
    for (int t = 0; t < 25; ++t) {
        Eigen::VectorXd x(3);
        x << 1.0 + d(rng), d(rng), 0.3 + d(rng);
        const double zeta1 = 0.1 + d(rng), zeta2 = 1.0 + d(rng);
        std::vector<Eigen::VectorXd> hist{(Eigen::VectorXd(2) << zeta1, zeta2).finished()};
        RefWindow ref;
        ref.vals = {{0.4 + d(rng), 0.6 + d(rng), 0.8 + d(rng), 1.0 + d(rng)},
                    {d(rng), d(rng), d(rng)}};

        VSolveResult got = solve_v_window(tlaw, robot, hist, x, ref);

        // Hand-transcribed equations: the three shifted control laws with
        // the block expressions phi1 = zeta1[-1], phi1_[1] = x3,
        // phi2 = x1 sin((zeta1[-1]+x3)/2) - x2 cos(..),
        // phi2_[1] = x1 sin((x3+v1)/2) - x2 cos((x3+v1)/2).
        const double a0 = 0.25, a1 = -1.0;
        const double phi1 = zeta1;
        const double phi1s = x[2];
        const double v1 =
            ref.at(1, 2) - a1 * (phi1s - ref.at(1, 1)) - a0 * (phi1 - ref.at(1, 0));
        const double v1s =
            ref.at(1, 3) - a1 * (v1 - ref.at(1, 2)) - a0 * (phi1s - ref.at(1, 1));
        const double th0 = (zeta1 + x[2]) / 2.0;
        const double th1 = (x[2] + v1) / 2.0;
        const double phi2 = x[0] * std::sin(th0) - x[1] * std::cos(th0);
        const double phi2s = x[0] * std::sin(th1) - x[1] * std::cos(th1);
        const double v2 =
            ref.at(2, 2) - a1 * (phi2s - ref.at(2, 1)) - a0 * (phi2 - ref.at(2, 0));

        CHECK(std::abs(got.v.at(1, 0) - v1) < 1e-10);
        CHECK(std::abs(got.v.at(1, 1) - v1s) < 1e-10);
        CHECK(std::abs(got.v.at(2, 0) - v2) < 1e-10);
        // The predictions are exactly the block expressions.
        CHECK(std::abs(got.predictions[0][0] - phi1) < 1e-12);
        CHECK(std::abs(got.predictions[0][1] - phi1s) < 1e-12);
        CHECK(std::abs(got.predictions[1][0] - phi2) < 1e-10);
        CHECK(std::abs(got.predictions[1][1] - phi2s) < 1e-10);
    }
}

TEST_CASE("on-reference state: corrections vanish for any coefficients") {
    // Build a consistent (x, reference) pair by running example 1 open loop
    // and reading the recorded flat outputs as the reference.
    const auto& model = testsupport::example1();
    auto feas = testsupport::feasible_reference(model, 30, 4242);
    TrackingLaw tlaw = make_tracking_law(
        synthesize_from_kappa(model, compute_kappa(model)), {{0.3}, {0.25, -0.9}});

    const int k = 7;
    RefWindow ref = reference_window(feas.ref, model.spec.R, k);
    const Eigen::VectorXd& xk = feas.open_loop.steps[k].x;
    VSolveResult res = solve_v_window(tlaw, model, {}, xk, ref);
    // Dead-beat values = pure reference shifts.
    CHECK(res.v.at(1, 0) == doctest::Approx(ref.at(1, 1)).epsilon(1e-9));
    CHECK(res.v.at(1, 1) == doctest::Approx(ref.at(1, 2)).epsilon(1e-9));
    CHECK(res.v.at(2, 0) == doctest::Approx(ref.at(2, 2)).epsilon(1e-9));
}

TEST_CASE("tracking step at the equilibrium with an equilibrium reference returns u0") {
    for (const auto* model :
         {&testsupport::example1(), &testsupport::robot(), &testsupport::helicopter()}) {
        CAPTURE(model->sys.name);
        TrackingLaw tlaw = make_tracking_law_deadbeat(
            synthesize_from_kappa(*model, compute_kappa(*model)));
        Eigen::VectorXd y0 = equilibrium_flat_output(*model);
        ReferenceTrajectory ref = ReferenceTrajectory::constant(y0, 20);
        RefWindow rw = reference_window(ref, model->spec.R, 0);
        std::vector<Eigen::VectorXd> hist(static_cast<std::size_t>(model->spec.q1),
                                          model->sys.zeta_eq);
        TrackingStepResult st = tracking_step(tlaw, *model, hist, model->sys.x_eq, rw);
        for (int j = 0; j < model->m(); ++j)
            CHECK(std::abs(st.u[j] - model->sys.u_eq[j]) < 1e-10);
    }
}

TEST_CASE("exact tracking of a feasible reference reproduces the recorded inputs") {
    const auto& robot = testsupport::robot();
    auto feas = testsupport::feasible_reference(robot, 40, 321);
    TrackingLaw tlaw = make_tracking_law(
        synthesize_from_kappa(robot, compute_kappa(robot)), {{0.25, -1.0}, {0.25, -1.0}});
    ClosedLoopResult res = simulate_closed_loop_tracking(robot, tlaw, feas.ref, feas.x0,
                                                         feas.zeta_hist0, 30, 1e-8);
    CHECK(res.report.pass);
    for (int k = 0; k < 30; ++k) {
        for (int j = 0; j < 2; ++j) {
            CHECK(std::abs(res.traj.steps[static_cast<std::size_t>(k)].u[j] -
                           feas.open_loop.steps[static_cast<std::size_t>(k)].u[j]) < 1e-8);
            CHECK(std::abs(res.traj.steps[static_cast<std::size_t>(k)].e[j]) < 1e-9);
        }
    }
}

TEST_CASE("evaluation trace: only admissible data sources enter the law") {
    const auto& robot = testsupport::robot();
    TrackingLaw tlaw = robot_tracking({{0.25, -1.0}, {0.25, -1.0}});
    RefWindow ref;
    ref.vals = {{0.4, 0.5, 0.6, 0.7}, {0.0, 0.05, 0.1}};
    Eigen::VectorXd x(3);
    x << 1.0, 0.0, 0.2;
    std::vector<Eigen::VectorXd> hist{(Eigen::VectorXd(2) << 0.1, 1.0).finished()};
    TrackingTrace trace;
    solve_v_window(tlaw, robot, hist, x, ref, nullptr, &trace);
    const std::set<std::string> allowed{"state", "zeta-history", "reference-window",
                                        "solved-input-shifts"};
    for (const auto& s : trace.sources) {
        CAPTURE(s);
        CHECK(allowed.count(s) == 1);
    }
}
