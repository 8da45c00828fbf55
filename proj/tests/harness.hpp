#pragma once

#include <functional>
#include <random>
#include <vector>

#include "flatlin/feedback.hpp"
#include "flatlin/sim.hpp"
#include "flatlin/tracking.hpp"
#include "support.hpp"

namespace testsupport {

using flatlin::Model;

/// Bounded random v-sequences inside each model's admissible operating
/// region. The feedbacks are local: the robot needs the commanded heading to
/// keep changing (the lateral input gain is sin of the heading increment),
/// and the helicopter needs the collective input to stay away from zero.
inline flatlin::VSourceFn admissible_v_source(const Model& model, std::uint64_t seed,
                                              int horizon) {
    std::mt19937_64 rng(seed);
    const std::string& name = model.sys.name;
    auto table = std::make_shared<std::vector<Eigen::VectorXd>>();

    if (name == "robot") {
        std::uniform_real_distribution<double> head(0.2, 1.0);
        std::uniform_real_distribution<double> lat(-0.3, 0.3);
        double prev2 = model.sys.x_eq[2];  // x3(0) enters the first solve
        double prev1 = head(rng);
        for (int k = 0; k < horizon; ++k) {
            double v1 = head(rng);
            // Keep the heading increment, and with it the lateral input
            // gain sin((v1(k+1) - v1(k-1))/2), bounded away from zero.
            for (int guard = 0; guard < 200 && std::abs(v1 - prev2) < 0.2; ++guard)
                v1 = head(rng);
            table->push_back((Eigen::VectorXd(2) << v1, lat(rng)).finished());
            prev2 = prev1;
            prev1 = v1;
        }
    } else if (name == "helicopter") {
        // The collective input u1 tracks the second difference of the y1
        // commands divided by T^2 b2; amplitudes are sized so u1 stays far
        // from zero, where the u2 direction of the feedback degenerates.
        Eigen::VectorXd y0 = flatlin::equilibrium_flat_output(model);
        std::uniform_real_distribution<double> d1(-1e-3, 1e-3);
        std::uniform_real_distribution<double> d2(-5e-5, 5e-5);
        for (int k = 0; k < horizon; ++k)
            table->push_back((Eigen::VectorXd(2) << y0[0] + d1(rng), y0[1] + d2(rng)).finished());
    } else {
        std::uniform_real_distribution<double> d(-0.4, 0.4);
        for (int k = 0; k < horizon; ++k)
            table->push_back((Eigen::VectorXd(2) << d(rng), d(rng)).finished());
    }
    return [table](int j, int k) {
        return (*table)[static_cast<std::size_t>(k)][j - 1];
    };
}

inline Eigen::VectorXd admissible_x0(const Model& model, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const double radius = model.sys.name == "helicopter" ? 0.02 : 0.1;
    std::uniform_real_distribution<double> d(-radius, radius);
    Eigen::VectorXd x0 = model.sys.x_eq;
    for (int i = 0; i < x0.size(); ++i) x0[i] += d(rng);
    return x0;
}

/// Smooth open-loop input sequence used to generate feasible references.
inline std::vector<Eigen::VectorXd> smooth_open_loop_inputs(const Model& model, int horizon,
                                                            std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ph(0.0, 1.0);
    const double p1 = ph(rng), p2 = ph(rng);
    std::vector<Eigen::VectorXd> us;
    const std::string& name = model.sys.name;
    for (int k = 0; k < horizon; ++k) {
        Eigen::VectorXd u = model.sys.u_eq;
        if (name == "robot") {
            u[0] = 0.4 + 0.2 * std::sin(0.3 * k + p1);        // forward speed
            u[1] = 0.5 + 0.35 * std::sin(0.35 * k + p2);      // heading command
        } else if (name == "helicopter") {
            u[0] += 0.3 * std::sin(0.25 * k + p1);
            u[1] += 0.2 * std::sin(0.3 * k + p2);
        } else {
            u[0] = 0.3 * std::sin(0.4 * k + p1);
            u[1] = 0.3 * std::cos(0.3 * k + p2);
        }
        us.push_back(u);
    }
    return us;
}

/// Reference built by recording the flat output of an open-loop run; by
/// construction it is exactly trackable from the matching initial data.
struct FeasibleReference {
    flatlin::ReferenceTrajectory ref;
    flatlin::Trajectory open_loop;
    Eigen::VectorXd x0;
    std::vector<Eigen::VectorXd> zeta_hist0;
};

inline FeasibleReference feasible_reference(const Model& model, int horizon,
                                            std::uint64_t seed) {
    FeasibleReference out;
    const int extra = model.spec.R.max_entry() + 2;
    out.x0 = model.sys.x_eq;
    out.zeta_hist0.assign(static_cast<std::size_t>(std::max(model.spec.q1, 1)),
                          model.sys.zeta_eq);
    auto us = smooth_open_loop_inputs(model, horizon + extra, seed);
    out.open_loop = flatlin::simulate_open_loop(model, out.x0, us, out.zeta_hist0);
    std::vector<Eigen::VectorXd> rows;
    for (const auto& rec : out.open_loop.steps) rows.push_back(rec.y);
    out.ref = flatlin::ReferenceTrajectory(model.m(), std::move(rows));
    return out;
}

/// Persistently exciting reference for the robot: the commanded heading
/// keeps turning so the lateral gain never collapses.
inline flatlin::ReferenceTrajectory turning_reference(const Model& model, int horizon) {
    std::vector<Eigen::VectorXd> rows;
    for (int k = 0; k < horizon; ++k) {
        Eigen::VectorXd y(2);
        if (model.sys.name == "robot") {
            y[0] = 0.5 + 0.35 * std::sin(0.35 * k);
            y[1] = 0.3 * std::cos(0.2 * k);
        } else if (model.sys.name == "helicopter") {
            Eigen::VectorXd y0 = flatlin::equilibrium_flat_output(model);
            y[0] = y0[0] + (k >= 30 ? 1e-3 : 0.0);  // step on y1
            y[1] = y0[1] + (k >= 50 ? 1e-3 : 0.0);  // later step on y2
        } else {
            y[0] = 0.2 * std::sin(0.3 * k);
            y[1] = 0.2 * std::cos(0.25 * k);
        }
        rows.push_back(y);
    }
    return flatlin::ReferenceTrajectory(model.m(), std::move(rows));
}

}  // namespace testsupport
