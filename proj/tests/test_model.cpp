#include <doctest.h>

#include "flatlin/model.hpp"
#include "support.hpp"

using namespace flatlin;

TEST_CASE("all shipped models load and pass every invariant") {
    for (const char* name : {"example1.json", "robot.json", "helicopter.json"}) {
        CAPTURE(name);
        Model model = load_model(testsupport::model_path(name), false);
        ValidationReport rep = validate_model(model);
        for (const auto& item : rep.items) {
            CAPTURE(item.name);
            CAPTURE(item.detail);
            CHECK(item.pass);
        }
    }
}

TEST_CASE("shipped multi-indices R") {
    CHECK(testsupport::example1().spec.R == MultiIndex{2, 2});
    CHECK(testsupport::robot().spec.R == MultiIndex{3, 2});
    CHECK(testsupport::helicopter().spec.R == MultiIndex{4, 4});
}

TEST_CASE("equilibrium fixed point and extension data") {
    for (const auto* model :
         {&testsupport::example1(), &testsupport::robot(), &testsupport::helicopter()}) {
        ResidualCheck rc = check_equilibrium(*model);
        CHECK(rc.pass);
        CHECK(rc.max_residual < 1e-10);
    }
    // zeta0 = g(x0,u0): robot has zeta = (x3, x1) = (0, 1).
    const auto& robot = testsupport::robot();
    CHECK(robot.sys.zeta_eq[0] == doctest::Approx(0.0));
    CHECK(robot.sys.zeta_eq[1] == doctest::Approx(1.0));
}

TEST_CASE("submersivity holds for shipped models and fails for a degenerate one") {
    CHECK(check_submersivity(testsupport::example1()).pass);
    CHECK(check_submersivity(testsupport::robot()).pass);
    CHECK(check_submersivity(testsupport::helicopter()).pass);

    // x+ = 0: rank 0.
    Model degenerate;
    degenerate.sys.name = "degenerate";
    degenerate.sys.n = 1;
    degenerate.sys.m = 1;
    degenerate.sys.f = {constant(0.0)};
    degenerate.sys.g = {var(input_var(1, 0))};
    degenerate.sys.x_eq = Eigen::VectorXd::Zero(1);
    degenerate.sys.u_eq = Eigen::VectorXd::Zero(1);
    degenerate.sys.zeta_eq = Eigen::VectorXd::Zero(1);
    degenerate.spec.phi = {var(state_var(1))};
    degenerate.spec.Fx = {var(flat_var(1, 0))};
    degenerate.spec.Fu = {var(flat_var(1, 1))};
    degenerate.spec.R = MultiIndex{1};
    RankCheck rc = check_submersivity(degenerate);
    CHECK_FALSE(rc.pass);
    CHECK(rc.ranks.front() == 0);
}

TEST_CASE("extension Jacobian regular with reported condition number") {
    for (const auto* model :
         {&testsupport::example1(), &testsupport::robot(), &testsupport::helicopter()}) {
        RankCheck rc = check_extension_regularity(*model);
        CHECK(rc.pass);
        CHECK(rc.note.find("condition number") != std::string::npos);
    }
}

TEST_CASE("flat identity: residual < 1e-10 for all shipped models, three seeds") {
    for (const auto* model :
         {&testsupport::example1(), &testsupport::robot(), &testsupport::helicopter()}) {
        for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
            SampleOptions opts;
            opts.seed = seed;
            ResidualCheck rc = check_flat_identity(*model, opts);
            CAPTURE(model->sys.name);
            CAPTURE(seed);
            CAPTURE(rc.max_residual);
            CHECK(rc.pass);
        }
    }
}

TEST_CASE("flat identity: an injected parameterization fault is detected") {
    Model broken = testsupport::example1();
    broken.spec.Fu[0] = add(broken.spec.Fu[0], constant(1e-3));
    ResidualCheck rc = check_flat_identity(broken);
    CHECK_FALSE(rc.pass);
    CHECK(rc.max_residual == doctest::Approx(1e-3).epsilon(1e-6));
}

TEST_CASE("psi: closed form matches the Newton inverse") {
    for (const auto* model :
         {&testsupport::example1(), &testsupport::robot(), &testsupport::helicopter()}) {
        CHECK(model->sys.has_closed_form_psi());
        ResidualCheck rc = check_psi(*model);
        CAPTURE(model->sys.name);
        CAPTURE(rc.max_residual);
        CHECK(rc.pass);
    }
}

TEST_CASE("parameterization submersion rank n+m") {
    for (const auto* model :
         {&testsupport::example1(), &testsupport::robot(), &testsupport::helicopter()}) {
        RankCheck rc = check_parameterization_submersion(*model);
        CAPTURE(model->sys.name);
        CHECK(rc.pass);
    }
}

TEST_CASE("model file errors") {
    CHECK_THROWS_AS(load_model("/nonexistent/file.json"), IoError);
    CHECK_THROWS_AS(parse_model_json("{ not json"), ParseError);
    CHECK_THROWS_AS(parse_model_json("{\"n\": 1}"), ParseError);

    // A declared R that disagrees with the parameterization is rejected.
    Model bad = testsupport::example1();
    bad.spec.R = MultiIndex{2, 3};
    CHECK_THROWS_AS(validate_model(bad), InvariantViolation);
}

TEST_CASE("robot aux realization present") {
    const auto& robot = testsupport::robot();
    REQUIRE(robot.aux.has_value());
    CHECK(robot.aux->raw_f.size() == 3);
    CHECK(robot.aux->to_bar.size() == 2);
    CHECK(robot.aux->from_bar.size() == 2);
}
