#pragma once

#include <vector>

#include "flatlin/model.hpp"
#include "flatlin/multi_index.hpp"

namespace flatlin {

enum class PsiMode { ClosedForm, Newton };

/// Forward- and backward-shift operators on expressions over the trajectory
/// manifold. Horizon bounds l_u / l_zeta grow on demand; shifting never
/// errors for admissible expressions.
///
/// One engine per thread: the horizon counters and the shifted-phi cache are
/// mutable. The expressions handed out are immutable and shareable.
class ShiftEngine {
public:
    explicit ShiftEngine(const Model& model);

    PsiMode psi_mode() const { return mode_; }
    int l_u() const { return l_u_; }
    int l_zeta() const { return l_zeta_; }

    /// delta^k(e): zeta_[-1] -> g(x,u), zeta_[-beta] -> zeta_[-beta+1],
    /// x -> f(x,u), u_[a] -> u_[a+1]; simplification after every pass.
    Expr forward_shift(const Expr& e, int k = 1);

    /// Symbolic delta^{-k}(e); requires closed-form psi.
    /// x -> psi_x(x, zeta_[-1]), u -> psi_u(x, zeta_[-1]), u_[a] -> u_[a-1],
    /// zeta_[-beta] -> zeta_[-beta-1].
    Expr backward_shift(const Expr& e, int k = 1);

    /// Pointwise delta^{-k}(e) at an assignment; works in Newton mode too.
    double backward_shift_eval(const Expr& e, const Assignment& p, int k = 1);

    /// Componentwise delta^{a^j}(phi^j).
    std::vector<Expr> shift_multi(const std::vector<Expr>& phi, const MultiIndex& A);

    /// delta^order(phi^component); cached, 1-based component.
    Expr shifted_phi(int component, int order);

    /// The backward-shift-by-one of an assignment: the point whose forward
    /// image is p. Uses closed-form psi when available, else Newton on (f,g).
    Assignment backward_point(const Assignment& p) const;

private:
    void note_horizons(const Expr& e);

    const Model* model_;
    PsiMode mode_;
    int l_u_ = 1;
    int l_zeta_ = 1;
    std::vector<std::vector<Expr>> phi_cache_;  // [component][order]
};

}  // namespace flatlin
