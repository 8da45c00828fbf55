#pragma once

#include <random>
#include <string>

#include "flatlin/model.hpp"
#include "flatlin/shift.hpp"

namespace testsupport {

inline std::string model_path(const std::string& name) {
    return std::string(FLATLIN_MODELS_DIR) + "/" + name;
}

inline const flatlin::Model& example1() {
    static flatlin::Model m = flatlin::load_model(model_path("example1.json"), false);
    return m;
}

inline const flatlin::Model& robot() {
    static flatlin::Model m = flatlin::load_model(model_path("robot.json"), false);
    return m;
}

inline const flatlin::Model& helicopter() {
    static flatlin::Model m = flatlin::load_model(model_path("helicopter.json"), false);
    return m;
}

/// Central finite difference d e / d w at p with step h.
inline double central_diff(const flatlin::Expr& e, const flatlin::ShiftedVar& w,
                           const flatlin::Assignment& p, double h = 1e-6) {
    flatlin::Assignment hi = p, lo = p;
    hi[w] += h;
    lo[w] -= h;
    return (flatlin::eval(e, hi) - flatlin::eval(e, lo)) / (2.0 * h);
}

/// Random assignment over the given variables, uniform in [c-r, c+r] around 0.
inline flatlin::Assignment random_assignment(const std::set<flatlin::ShiftedVar>& vars,
                                             std::mt19937_64& rng, double center = 0.0,
                                             double radius = 0.5) {
    std::uniform_real_distribution<double> d(center - radius, center + radius);
    flatlin::Assignment p;
    for (const auto& v : vars) p.emplace(v, d(rng));
    return p;
}

}  // namespace testsupport
