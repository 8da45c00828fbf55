#pragma once

#include <optional>
#include <string>
#include <vector>

#include "flatlin/kappa.hpp"
#include "flatlin/model.hpp"
#include "flatlin/multi_index.hpp"

namespace flatlin {

enum class LawKind { Dynamic, QuasiStatic };

/// One defining equation delta^{a^j + alpha}(phi^j) = v^j_[alpha].
struct VEquation {
    Expr lhs;            // original coordinates (zeta history, x, u-shifts)
    int out_component;   // j, 1-based
    int alpha;           // v-shift
    int block = 0;       // kappa-block index when available, else j
    int comp_in_block = 1;
};

/// Controller-state equation phi^j_[alpha] = z_i of the dynamic feedback.
struct ZEquation {
    Expr lhs;
    Expr lhs_next;  // delta(lhs); evaluated at the solved point it gives z+
    int z_index;    // 0-based
    int out_component;
    int alpha;
};

/// Values v^j_[0..r^j-a^j] per output component.
class VWindow {
public:
    VWindow() = default;
    VWindow(const MultiIndex& A, const MultiIndex& R);
    double at(int j, int alpha) const;
    double& at(int j, int alpha);
    int width(int j) const;  // r^j - a^j + 1
    int components() const { return static_cast<int>(vals_.size()); }

private:
    std::vector<std::vector<double>> vals_;
};

struct FeedbackLaw {
    LawKind kind = LawKind::QuasiStatic;
    MultiIndex A;  // achieved input-output orders, by output component
    MultiIndex R;
    int q1 = 0;
    int n = 0, m = 0;
    std::vector<VEquation> v_equations;
    std::vector<ZEquation> z_equations;
    std::vector<std::pair<int, int>> z_spec;  // (component, alpha) per z entry
    // u-shift variables the Newton solve determines.
    std::vector<ShiftedVar> unknowns;
    // u-shift variables that occur structurally but whose influence vanishes
    // numerically (trigonometric cancellations); held at warm values.
    std::vector<ShiftedVar> passthrough;
    int max_u_shift = 0;
    std::optional<std::vector<KappaBlock>> kappa_blocks;

    // Synthesis-time caches: the Newton system (indices into v/z equations)
    // and the gradients of its left-hand sides w.r.t. the unknowns.
    std::vector<int> newton_v;  // indices into v_equations
    std::vector<int> newton_z;  // indices into z_equations
    std::vector<std::vector<Expr>> newton_grad;

    int z_dim() const { return static_cast<int>(z_spec.size()); }
};

/// Quasi-static feedback for A = kappa, carrying the block structure: the
/// input is recovered from the flat parameterization on the zeta history,
/// the state and the v-window.
FeedbackLaw synthesize_from_kappa(const Model& model, const KappaResult& kres,
                                  const SampleOptions& opts = {});

/// General linearizing feedback for a feasible A, with controller state
/// z = phi_c of dimension #A - n; the controller state degenerates to
/// empty (quasi-static) when #A = n.
FeedbackLaw synthesize_general(const Model& model, const MultiIndex& A,
                               const SampleOptions& opts = {});

/// Greedy rank completion picking #A - n differentials from dphi_[0,A-1].
std::vector<std::pair<int, int>> select_phi_c(const Model& model, const MultiIndex& A,
                                              const SampleOptions& opts = {});

struct FeedbackEval {
    Eigen::VectorXd u;
    Assignment solved;  // all u-shift values used (unknowns and passthrough)
    Eigen::VectorXd z_next;
    int iterations = 0;
    double residual = 0.0;
    double consistency_residual = 0.0;  // z-equations without unknowns
};

/// Solves the stacked equation system for the unknown u-shifts at the given
/// data and returns the shift-0 components as u. zeta_hist[b-1] holds
/// zeta(k-b); it must have at least q1 entries.
FeedbackEval evaluate_feedback(const FeedbackLaw& law, const Model& model,
                               const std::vector<Eigen::VectorXd>& zeta_hist,
                               const Eigen::VectorXd& x, const VWindow& v,
                               const Eigen::VectorXd& z = Eigen::VectorXd(),
                               const Assignment* warm_start = nullptr);

inline MultiIndex closed_loop_io_orders(const FeedbackLaw& law) { return law.A; }

std::string law_to_json(const FeedbackLaw& law);
FeedbackLaw law_from_json(const std::string& text);

}  // namespace flatlin
