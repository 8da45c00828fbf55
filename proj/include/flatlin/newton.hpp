#pragma once

#include <functional>

#include <Eigen/Core>

#include "flatlin/errors.hpp"

namespace flatlin {

struct NewtonOptions {
    double tol = 1e-12;       // infinity-norm residual target
    int max_iter = 50;
    double damping_min = 1e-6;  // smallest line-search step factor
    // Singular values below rank_tol * sigma_max are treated as zero when the
    // step is computed; rank-deficient but consistent systems get the
    // minimum-norm step instead of an error.
    double rank_tol = 1e-10;
};

struct NewtonResult {
    Eigen::VectorXd x;
    double residual = 0.0;  // infinity norm of F at x
    int iterations = 0;
    bool converged = false;
};

/// Damped Newton for F(x) = 0 with a dense Jacobian callback. Handles square,
/// overdetermined (consistent) and underdetermined systems through a
/// rank-revealing least-squares step. Throws NewtonDivergenceError when the
/// residual cannot be driven below tol, SingularJacobianError when no
/// descent direction exists at a point with nonzero residual.
NewtonResult newton_solve(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& F,
                          const std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>& J,
                          const Eigen::VectorXd& x0, const NewtonOptions& opts = {});

}  // namespace flatlin
