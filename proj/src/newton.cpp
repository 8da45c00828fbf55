#include "flatlin/newton.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <sstream>

namespace flatlin {

namespace {

std::string point_str(const Eigen::VectorXd& x) {
    std::ostringstream os;
    os << "[";
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        if (i) os << ", ";
        os << x[i];
    }
    os << "]";
    return os.str();
}

}  // namespace

NewtonResult newton_solve(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& F,
                          const std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>& J,
                          const Eigen::VectorXd& x0, const NewtonOptions& opts) {
    NewtonResult res;
    res.x = x0;
    Eigen::VectorXd fx = F(res.x);
    res.residual = fx.size() ? fx.lpNorm<Eigen::Infinity>() : 0.0;

    for (int iter = 0; iter < opts.max_iter; ++iter) {
        if (res.residual < opts.tol) {
            res.converged = true;
            res.iterations = iter;
            return res;
        }
        Eigen::MatrixXd Jx = J(res.x);
        Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(Jx);
        cod.setThreshold(opts.rank_tol);
        if (cod.rank() == 0) {
            throw SingularJacobianError("singular Jacobian (rank 0) at " + point_str(res.x) +
                                        ", residual " + std::to_string(res.residual));
        }
        Eigen::VectorXd step = cod.solve(-fx);
        if (!step.allFinite()) {
            throw SingularJacobianError("non-finite Newton step at " + point_str(res.x));
        }

        double alpha = 1.0;
        bool accepted = false;
        while (alpha >= opts.damping_min) {
            Eigen::VectorXd xn = res.x + alpha * step;
            Eigen::VectorXd fn = F(xn);
            const double rn = fn.lpNorm<Eigen::Infinity>();
            if (rn < res.residual || rn < opts.tol) {
                res.x = std::move(xn);
                fx = std::move(fn);
                res.residual = rn;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        res.iterations = iter + 1;
        if (!accepted) {
            throw NewtonDivergenceError("Newton stagnated at " + point_str(res.x) +
                                        ", residual " + std::to_string(res.residual));
        }
    }
    if (res.residual < opts.tol) {
        res.converged = true;
        return res;
    }
    throw NewtonDivergenceError("Newton did not converge within " +
                                std::to_string(opts.max_iter) + " iterations, residual " +
                                std::to_string(res.residual) + " at " + point_str(res.x));
}

}  // namespace flatlin
