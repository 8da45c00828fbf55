#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "flatlin/kappa.hpp"
#include "flatlin/sim.hpp"
#include "harness.hpp"
#include "support.hpp"

using namespace flatlin;

TEST_CASE("open loop: example 1 stays at the equilibrium under zero input") {
    const auto& model = testsupport::example1();
    std::vector<Eigen::VectorXd> us(20, Eigen::VectorXd::Zero(2));
    Trajectory traj = simulate_open_loop(model, Eigen::VectorXd::Zero(3), us);
    for (const auto& rec : traj.steps) {
        CHECK(rec.x.cwiseAbs().maxCoeff() == 0.0);
        CHECK(rec.y.cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("open loop: robot under constant transformed input, hand-iterated golden values") {
    const auto& robot = testsupport::robot();
    Eigen::VectorXd ubar(2);
    ubar << 1.0, 0.1;
    std::vector<Eigen::VectorXd> us(3, ubar);
    Eigen::VectorXd x0(3);
    x0 << 1.0, 0.0, 0.0;
    Trajectory traj = simulate_open_loop(robot, x0, us);

    // Hand iteration of the three-map recursion.
    double hx1 = 1.0, hx2 = 0.0, hx3 = 0.0;
    for (int k = 0; k < 3; ++k) {
        CHECK(traj.steps[static_cast<std::size_t>(k)].x[0] == doctest::Approx(hx1).epsilon(1e-15));
        CHECK(traj.steps[static_cast<std::size_t>(k)].x[1] == doctest::Approx(hx2).epsilon(1e-15));
        CHECK(traj.steps[static_cast<std::size_t>(k)].x[2] == doctest::Approx(hx3).epsilon(1e-15));
        const double nx1 = hx1 + 1.0 * std::cos(0.1);
        const double nx2 = hx2 + 1.0 * std::sin(0.1);
        const double nx3 = 2.0 * 0.1 - hx3;
        hx1 = nx1;
        hx2 = nx2;
        hx3 = nx3;
    }
    // zeta(k) = g(x(k), u(k)) at every logged step.
    for (const auto& rec : traj.steps) {
        CHECK(rec.zeta[0] == rec.x[2]);
        CHECK(rec.zeta[1] == rec.x[0]);
    }
}

TEST_CASE("open loop: helicopter hover input holds the equilibrium") {
    const auto& heli = testsupport::helicopter();
    std::vector<Eigen::VectorXd> us(25, heli.sys.u_eq);
    Trajectory traj = simulate_open_loop(heli, heli.sys.x_eq, us);
    for (const auto& rec : traj.steps)
        CHECK((rec.x - heli.sys.x_eq).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("logged transitions replay the map exactly") {
    const auto& robot = testsupport::robot();
    auto us = testsupport::smooth_open_loop_inputs(robot, 20, 9);
    Eigen::VectorXd x0(3);
    x0 << 1.0, 0.0, 0.0;
    Trajectory traj = simulate_open_loop(robot, x0, us);
    for (std::size_t k = 0; k + 1 < traj.steps.size(); ++k) {
        Assignment p;
        for (int i = 0; i < 3; ++i) p.emplace(state_var(i + 1), traj.steps[k].x[i]);
        for (int j = 0; j < 2; ++j) p.emplace(input_var(j + 1, 0), traj.steps[k].u[j]);
        for (int i = 0; i < 3; ++i)
            CHECK(std::abs(eval(robot.sys.f[static_cast<std::size_t>(i)], p) -
                           traj.steps[k + 1].x[i]) < 1e-12);
    }
}

TEST_CASE("closed loop: IO behaviour for each model's kappa law") {
    for (const auto* model :
         {&testsupport::example1(), &testsupport::robot(), &testsupport::helicopter()}) {
        CAPTURE(model->sys.name);
        FeedbackLaw law = synthesize_from_kappa(*model, compute_kappa(*model));
        const int N = 30;
        auto vsrc = testsupport::admissible_v_source(*model, 11, N + 8);
        auto x0 = testsupport::admissible_x0(*model, 12);
        ClosedLoopResult res = simulate_closed_loop(*model, law, vsrc, x0, {}, N, 1e-8);
        CAPTURE(res.report.max_io_residual);
        CHECK(res.report.pass);
        CHECK(res.report.max_newton_iterations <= 15);
    }
}

TEST_CASE("verify_io_behavior: identity and mismatch cases") {
    const auto& model = testsupport::example1();
    auto us = testsupport::smooth_open_loop_inputs(model, 20, 3);
    Trajectory traj = simulate_open_loop(model, Eigen::VectorXd::Zero(3), us);
    // Record v as the exact future y-shifts: residual is exactly zero.
    MultiIndex A{1, 2};
    for (std::size_t k = 0; k < traj.steps.size(); ++k) {
        auto& rec = traj.steps[k];
        rec.has_v = true;
        rec.v.resize(2);
        for (int j = 1; j <= 2; ++j) {
            const std::size_t ahead = k + static_cast<std::size_t>(A[j - 1]);
            rec.v[j - 1] = ahead < traj.steps.size() ? traj.steps[ahead].y[j - 1] : 0.0;
        }
    }
    // Trim the tail records whose look-ahead fell outside the horizon.
    traj.steps.resize(traj.steps.size() - 2);
    auto res = verify_io_behavior(traj, A);
    CHECK(res[0] == 0.0);
    CHECK(res[1] == 0.0);
    // A mismatched multi-index reports a large residual but is not an error.
    auto bad = verify_io_behavior(traj, MultiIndex{2, 1});
    CHECK((bad[0] > 1e-3 || bad[1] > 1e-3));
}

TEST_CASE("dead-beat horizon: error gone after max kappa steps") {
    struct Case {
        const Model* model;
        Eigen::VectorXd ref_value;
        Eigen::VectorXd x0;
    };
    std::vector<Case> cases;
    {
        const auto& e1 = testsupport::example1();
        cases.push_back({&e1, (Eigen::VectorXd(2) << 0.15, -0.1).finished(),
                         (Eigen::VectorXd(3) << 0.2, -0.15, 0.1).finished()});
        const auto& rb = testsupport::robot();
        cases.push_back({&rb, (Eigen::VectorXd(2) << 0.4, 0.2).finished(),
                         (Eigen::VectorXd(3) << 1.05, -0.03, 0.1).finished()});
        const auto& he = testsupport::helicopter();
        Eigen::VectorXd href = equilibrium_flat_output(he);
        href[0] += 0.002;
        href[1] += 0.001;
        cases.push_back({&he, href, testsupport::admissible_x0(he, 31)});
    }
    for (const auto& c : cases) {
        CAPTURE(c.model->sys.name);
        KappaResult kres = compute_kappa(*c.model);
        TrackingLaw tlaw = make_tracking_law_deadbeat(synthesize_from_kappa(*c.model, kres));
        const int N = 20;
        ReferenceTrajectory ref =
            ReferenceTrajectory::constant(c.ref_value, N + c.model->spec.R.max_entry() + 1);
        ClosedLoopResult res =
            simulate_closed_loop_tracking(*c.model, tlaw, ref, c.x0, {}, N, 1e-8);
        const int settle = kres.kappa.max_entry();
        for (int k = settle; k < N; ++k) {
            CAPTURE(k);
            CHECK(res.traj.steps[static_cast<std::size_t>(k)].e.cwiseAbs().maxCoeff() < 1e-9);
        }
    }
}

TEST_CASE("zeta-history consistency along closed-loop runs") {
    const auto& robot = testsupport::robot();
    FeedbackLaw law = synthesize_from_kappa(robot, compute_kappa(robot));
    auto vsrc = testsupport::admissible_v_source(robot, 21, 28);
    ClosedLoopResult res =
        simulate_closed_loop(robot, law, vsrc, testsupport::admissible_x0(robot, 22), {}, 20);
    // The logged zeta at step k equals g(x(k), u(k)); the history buffer the
    // law saw at step k+1 is exactly that value.
    for (std::size_t k = 0; k + 1 < res.traj.steps.size(); ++k) {
        Assignment p;
        for (int i = 0; i < 3; ++i) p.emplace(state_var(i + 1), res.traj.steps[k].x[i]);
        for (int j = 0; j < 2; ++j) p.emplace(input_var(j + 1, 0), res.traj.steps[k].u[j]);
        for (int c = 0; c < 2; ++c)
            CHECK(std::abs(eval(robot.sys.g[static_cast<std::size_t>(c)], p) -
                           res.traj.steps[k].zeta[c]) < 1e-14);
    }
}

TEST_CASE("robot input transformation round-trips away from the sinc zero") {
    const auto& robot = testsupport::robot();
    REQUIRE(robot.aux.has_value());
    const double T = robot.sys.params.at("T");
    std::mt19937_64 rng(55);
    std::uniform_real_distribution<double> du(-0.8 * 2.0 * M_PI / T, 0.8 * 2.0 * M_PI / T);
    std::uniform_real_distribution<double> dx(-1.0, 1.0);
    for (int t = 0; t < 200; ++t) {
        Assignment p;
        p.emplace(state_var(3), dx(rng));
        p.emplace(input_var(1, 0), dx(rng));
        p.emplace(input_var(2, 0), du(rng));
        // u -> ubar.
        const double ub1 = eval(robot.aux->to_bar[0], p);
        const double ub2 = eval(robot.aux->to_bar[1], p);
        // ubar -> u with the same heading state.
        Assignment q;
        q.emplace(state_var(3), p.at(state_var(3)));
        q.emplace(input_var(1, 0), ub1);
        q.emplace(input_var(2, 0), ub2);
        CHECK(std::abs(eval(robot.aux->from_bar[0], q) - p.at(input_var(1, 0))) < 1e-10);
        CHECK(std::abs(eval(robot.aux->from_bar[1], q) - p.at(input_var(2, 0))) < 1e-10);
    }
}

TEST_CASE("robot demo: tracking the simplified form drives the raw discretization") {
    const auto& robot = testsupport::robot();
    auto feas = testsupport::feasible_reference(robot, 40, 777);
    TrackingLaw tlaw = make_tracking_law(
        synthesize_from_kappa(robot, compute_kappa(robot)), {{0.25, -1.0}, {0.25, -1.0}});
    Eigen::VectorXd x0 = feas.x0;
    x0[0] += 0.05;
    x0[2] += 0.08;
    const int N = 25;
    ClosedLoopResult res =
        simulate_closed_loop_tracking(robot, tlaw, feas.ref, x0, feas.zeta_hist0, N, 1e-8);
    CHECK(res.report.pass);

    // Map the transformed inputs back and replay through the raw
    // discretization: the state trajectories must coincide.
    Eigen::VectorXd xr = x0;
    for (int k = 0; k < N; ++k) {
        const auto& rec = res.traj.steps[static_cast<std::size_t>(k)];
        CHECK((xr - rec.x).cwiseAbs().maxCoeff() < 1e-9);
        Assignment q;
        for (int i = 0; i < 3; ++i) q.emplace(state_var(i + 1), xr[i]);
        q.emplace(input_var(1, 0), rec.u[0]);
        q.emplace(input_var(2, 0), rec.u[1]);
        const double u1_raw = eval(robot.aux->from_bar[0], q);
        const double u2_raw = eval(robot.aux->from_bar[1], q);
        Assignment praw;
        for (int i = 0; i < 3; ++i) praw.emplace(state_var(i + 1), xr[i]);
        praw.emplace(input_var(1, 0), u1_raw);
        praw.emplace(input_var(2, 0), u2_raw);
        for (int i = 0; i < 3; ++i)
            xr[i] = eval(robot.aux->raw_f[static_cast<std::size_t>(i)], praw);
    }
}

TEST_CASE("emit: deterministic CSV, plot files, round-trip") {
    const auto& robot = testsupport::robot();
    auto feas = testsupport::feasible_reference(robot, 30, 2025);
    TrackingLaw tlaw = make_tracking_law_deadbeat(
        synthesize_from_kappa(robot, compute_kappa(robot)));
    ClosedLoopResult res = simulate_closed_loop_tracking(robot, tlaw, feas.ref, feas.x0,
                                                         feas.zeta_hist0, 15, 1e-8);
    namespace fs = std::filesystem;
    const fs::path dir1 = fs::temp_directory_path() / "flatlin_emit_a";
    const fs::path dir2 = fs::temp_directory_path() / "flatlin_emit_b";
    fs::remove_all(dir1);
    fs::remove_all(dir2);
    auto files1 = emit(res.traj, dir1.string());
    auto files2 = emit(res.traj, dir2.string());
    // CSV plus one plot per signal group: states, inputs, outputs, errors.
    CHECK(files1.size() == 5);
    int svg_count = 0;
    for (const auto& f : files1)
        if (f.size() > 4 && f.substr(f.size() - 4) == ".svg") ++svg_count;
    CHECK(svg_count == 4);

    // Byte-identical across runs.
    for (std::size_t i = 0; i < files1.size(); ++i) {
        std::ifstream a(files1[i], std::ios::binary), b(files2[i], std::ios::binary);
        std::stringstream sa, sb;
        sa << a.rdbuf();
        sb << b.rdbuf();
        CHECK(sa.str() == sb.str());
    }

    // CSV round-trip equals the in-memory trajectory bit for bit.
    Trajectory back = load_trajectory_csv((dir1 / "trajectory.csv").string(), 3, 2, true);
    REQUIRE(back.steps.size() == res.traj.steps.size());
    for (std::size_t k = 0; k < back.steps.size(); ++k) {
        CHECK(back.steps[k].x == res.traj.steps[k].x);
        CHECK(back.steps[k].u == res.traj.steps[k].u);
        CHECK(back.steps[k].y == res.traj.steps[k].y);
        CHECK(back.steps[k].e == res.traj.steps[k].e);
    }

    // Empty trajectory: header-only CSV.
    Trajectory empty;
    empty.model_id = "empty";
    const fs::path dir3 = fs::temp_directory_path() / "flatlin_emit_c";
    fs::remove_all(dir3);
    emit(empty, dir3.string());
    std::ifstream hdr(dir3 / "trajectory.csv");
    std::string first, second;
    std::getline(hdr, first);
    CHECK_FALSE(first.empty());
    CHECK_FALSE(std::getline(hdr, second));
}

TEST_CASE("a failed Newton step aborts with the step index and partial trajectory") {
    const auto& robot = testsupport::robot();
    FeedbackLaw law = synthesize_from_kappa(robot, compute_kappa(robot));
    // Constant heading command: after one step the lateral gain vanishes
    // while the lateral target keeps moving, which is unsolvable.
    auto vsrc = [](int j, int k) { return j == 1 ? 0.3 : (k % 2 ? 0.2 : -0.2); };
    Eigen::VectorXd x0(3);
    x0 << 1.0, 0.0, 0.0;
    Trajectory partial;
    bool threw = false;
    try {
        simulate_closed_loop(robot, law, vsrc, x0, {}, 10, 1e-8, &partial);
    } catch (const FlatlinError& e) {
        threw = true;
        CHECK(std::string(e.what()).find("aborted at step") != std::string::npos);
    }
    CHECK(threw);
    CHECK(partial.steps.size() >= 1);   // the regular first step was logged
    CHECK(partial.steps.size() < 10);
}

TEST_CASE("closed loop: dynamic laws with controller state are exact too") {
    // Example 1 with A = R (one controller state).
    {
        const auto& e1 = testsupport::example1();
        FeedbackLaw law = synthesize_general(e1, e1.spec.R);
        REQUIRE(law.kind == LawKind::Dynamic);
        for (int run = 0; run < 10; ++run) {
            auto vsrc = testsupport::admissible_v_source(e1, 600 + run, 40);
            ClosedLoopResult res = simulate_closed_loop(
                e1, law, vsrc, testsupport::admissible_x0(e1, 700 + run), {}, 30, 1e-8);
            CAPTURE(run);
            CHECK(res.report.pass);
            CHECK(res.report.max_consistency_residual < 1e-9);
        }
    }
    // Robot with A = R = (3,2) (two controller states, one of them the
    // stored past heading).
    {
        const auto& robot = testsupport::robot();
        FeedbackLaw law = synthesize_general(robot, robot.spec.R);
        REQUIRE(law.kind == LawKind::Dynamic);
        CHECK(law.z_dim() == 2);
        for (int run = 0; run < 10; ++run) {
            auto vsrc = testsupport::admissible_v_source(robot, 800 + run, 40);
            ClosedLoopResult res = simulate_closed_loop(
                robot, law, vsrc, testsupport::admissible_x0(robot, 900 + run), {}, 30, 1e-8);
            CAPTURE(run);
            CHECK(res.report.pass);
            CHECK(res.report.max_consistency_residual < 1e-9);
        }
    }
}
