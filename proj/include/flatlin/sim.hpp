#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "flatlin/feedback.hpp"
#include "flatlin/model.hpp"
#include "flatlin/tracking.hpp"

namespace flatlin {

struct StepRecord {
    int k = 0;
    Eigen::VectorXd x, u, zeta, y;
    Eigen::VectorXd v;  // commanded new input (shift 0), closed loop only
    Eigen::VectorXd e;  // tracking error, reference runs only
    bool has_v = false;
    bool has_e = false;
};

struct Trajectory {
    std::string model_id;
    std::string law_id;
    std::uint64_t seed = 0;
    int horizon = 0;
    int q1 = 0;
    std::vector<StepRecord> steps;  // complete records k = 0..horizon-1
};

/// v^j(k) supplier for exogenous-input closed-loop runs; must cover
/// k = 0..horizon-1+max(R-A).
using VSourceFn = std::function<double(int component, int k)>;

Trajectory simulate_open_loop(const Model& model, const Eigen::VectorXd& x0,
                              const std::vector<Eigen::VectorXd>& u_seq,
                              std::vector<Eigen::VectorXd> zeta_hist0 = {});

struct ClosedLoopReport {
    std::vector<double> io_residual_per_component;
    double max_io_residual = 0.0;
    double max_error_recursion_residual = 0.0;  // tracking runs
    double max_consistency_residual = 0.0;      // dynamic laws
    int max_newton_iterations = 0;
    double tol = 1e-8;
    bool pass = false;
};

struct ClosedLoopResult {
    Trajectory traj;
    ClosedLoopReport report;
};

/// Closed loop under an exogenous v-sequence. The report checks the
/// input-output behaviour y^j(k + a^j) = v^j(k) on the logged horizon.
/// A failed Newton step aborts with the step index in the error message;
/// when `partial` is given it receives the trajectory logged so far.
ClosedLoopResult simulate_closed_loop(const Model& model, const FeedbackLaw& law,
                                      const VSourceFn& v_source, const Eigen::VectorXd& x0,
                                      std::vector<Eigen::VectorXd> zeta_hist0, int horizon,
                                      double tol = 1e-8, Trajectory* partial = nullptr);

/// Closed loop under the tracking controller. The report additionally checks
/// the per-component error recursion e_[kappa] + sum a^beta e_[beta] = 0.
ClosedLoopResult simulate_closed_loop_tracking(const Model& model, const TrackingLaw& tlaw,
                                               const ReferenceTrajectory& ref,
                                               const Eigen::VectorXd& x0,
                                               std::vector<Eigen::VectorXd> zeta_hist0,
                                               int horizon, double tol = 1e-8,
                                               Trajectory* partial = nullptr);

/// Per-component max |y^j(k+a^j) - v^j(k)| over the logged horizon.
std::vector<double> verify_io_behavior(const Trajectory& traj, const MultiIndex& A);

/// Writes trajectory.csv (columns k, x.., u.., y.. and e.. when present) and
/// one SVG plot per signal group. Returns the file names written.
std::vector<std::string> emit(const Trajectory& traj, const std::string& dir);

/// Reads back a trajectory.csv produced by emit (for round-trip checks).
Trajectory load_trajectory_csv(const std::string& path, int n, int m, bool with_e);

}  // namespace flatlin
