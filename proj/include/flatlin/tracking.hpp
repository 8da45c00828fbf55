#pragma once

#include <complex>
#include <set>
#include <string>
#include <vector>

#include "flatlin/feedback.hpp"

namespace flatlin {

/// Expands prod(z - lambda_i) to a monic real polynomial and returns the
/// coefficients a^beta of z^beta, beta = 0..k-1. Eigenvalues must lie
/// strictly inside the unit circle and complex ones must come in conjugate
/// pairs. An empty a-vector (all zero) is the dead-beat choice.
std::vector<double> coeffs_from_eigenvalues(const std::vector<std::complex<double>>& eigs);

/// Reference signal y^d(k), columns k, y1d..ymd.
class ReferenceTrajectory {
public:
    ReferenceTrajectory() = default;
    ReferenceTrajectory(int m, std::vector<Eigen::VectorXd> values)
        : m_(m), values_(std::move(values)) {}

    static ReferenceTrajectory from_csv_file(const std::string& path, int m);
    static ReferenceTrajectory from_csv_text(const std::string& text, int m);
    static ReferenceTrajectory constant(const Eigen::VectorXd& y, int length);

    double at(int component, int k) const;  // 1-based component, 0-based step
    int length() const { return static_cast<int>(values_.size()); }
    int components() const { return m_; }

private:
    int m_ = 0;
    std::vector<Eigen::VectorXd> values_;
};

/// The look-ahead window y^d_[0..r^j] per component at one time step.
struct RefWindow {
    std::vector<std::vector<double>> vals;  // [component-1][shift]
    double at(int j, int shift) const {
        return vals.at(static_cast<std::size_t>(j - 1)).at(static_cast<std::size_t>(shift));
    }
};

RefWindow reference_window(const ReferenceTrajectory& ref, const MultiIndex& R, int k);

struct TrackingLaw {
    FeedbackLaw law;  // quasi-static law with A = kappa and block structure
    std::vector<std::vector<double>> coeffs;  // [component-1][beta], beta = 0..kappa^j-1

    const MultiIndex& kappa() const { return law.A; }
};

TrackingLaw make_tracking_law(const FeedbackLaw& law,
                              const std::vector<std::vector<double>>& coeffs);
TrackingLaw make_tracking_law_deadbeat(const FeedbackLaw& law);
TrackingLaw make_tracking_law_from_poles(
    const FeedbackLaw& law, const std::vector<std::vector<std::complex<double>>>& poles);

/// Audit record of what kinds of data entered a tracking evaluation; the
/// only admissible sources are the zeta history, the measured state, the
/// reference window and internally solved input shifts.
struct TrackingTrace {
    std::set<std::string> sources;
};

struct VSolveResult {
    VWindow v;
    // Predicted y^j_[beta], beta = 0..kappa^j-1, per component (the
    // phi-expressions of the block structure evaluated on zeta, x and the
    // already-determined v-values of earlier blocks).
    std::vector<std::vector<double>> predictions;
};

/// The triangular top-to-bottom solve of the shifted control laws for the
/// whole window v_[0,R-kappa].
VSolveResult solve_v_window(const TrackingLaw& tlaw, const Model& model,
                            const std::vector<Eigen::VectorXd>& zeta_hist,
                            const Eigen::VectorXd& x, const RefWindow& ref,
                            const Assignment* warm_start = nullptr,
                            TrackingTrace* trace = nullptr);

struct TrackingStepResult {
    Eigen::VectorXd u;
    VWindow v;
    std::vector<std::vector<double>> predictions;
    FeedbackEval feedback;
};

/// solve_v_window composed with evaluate_feedback: u = eta(zeta, x, y^d).
TrackingStepResult tracking_step(const TrackingLaw& tlaw, const Model& model,
                                 const std::vector<Eigen::VectorXd>& zeta_hist,
                                 const Eigen::VectorXd& x, const RefWindow& ref,
                                 const Assignment* warm_start = nullptr,
                                 TrackingTrace* trace = nullptr);

}  // namespace flatlin
