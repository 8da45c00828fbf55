#include "flatlin/shift.hpp"

#include <Eigen/Dense>

#include "flatlin/newton.hpp"

namespace flatlin {

ShiftEngine::ShiftEngine(const Model& model)
    : model_(&model),
      mode_(model.sys.has_closed_form_psi() ? PsiMode::ClosedForm : PsiMode::Newton) {
    phi_cache_.resize(static_cast<std::size_t>(model.m()));
    for (int j = 0; j < model.m(); ++j)
        phi_cache_[static_cast<std::size_t>(j)].push_back(model.spec.phi[static_cast<std::size_t>(j)]);
}

void ShiftEngine::note_horizons(const Expr& e) {
    for (const auto& v : variables_of(e)) {
        if (v.block == VarBlock::Input) l_u_ = std::max(l_u_, v.shift + 1);
        if (v.block == VarBlock::Zeta) l_zeta_ = std::max(l_zeta_, -v.shift + 1);
    }
}

Expr ShiftEngine::forward_shift(const Expr& e, int k) {
    note_horizons(e);
    Expr cur = e;
    for (int step = 0; step < k; ++step) {
        SubstMap s;
        for (const auto& v : variables_of(cur)) {
            switch (v.block) {
                case VarBlock::State:
                    s.emplace(v, model_->sys.f[static_cast<std::size_t>(v.component - 1)]);
                    break;
                case VarBlock::Input:
                    s.emplace(v, var(input_var(v.component, v.shift + 1)));
                    break;
                case VarBlock::Zeta:
                    if (v.shift == -1)
                        s.emplace(v, model_->sys.g[static_cast<std::size_t>(v.component - 1)]);
                    else
                        s.emplace(v, var(zeta_var(v.component, v.shift + 1)));
                    break;
                case VarBlock::FlatOutput:
                    s.emplace(v, var(flat_var(v.component, v.shift + 1)));
                    break;
                case VarBlock::NewInput:
                    s.emplace(v, var(vnew_var(v.group, v.component, v.shift + 1)));
                    break;
            }
        }
        cur = substitute(cur, s);
        note_horizons(cur);
    }
    return cur;
}

Expr ShiftEngine::backward_shift(const Expr& e, int k) {
    if (mode_ != PsiMode::ClosedForm)
        throw NoClosedFormPsiError(
            "symbolic backward shift requested but the model has no closed-form psi");
    note_horizons(e);
    Expr cur = e;
    for (int step = 0; step < k; ++step) {
        SubstMap s;
        for (const auto& v : variables_of(cur)) {
            switch (v.block) {
                case VarBlock::State:
                    s.emplace(v, model_->sys.psi_x[static_cast<std::size_t>(v.component - 1)]);
                    break;
                case VarBlock::Input:
                    if (v.shift == 0)
                        s.emplace(v, model_->sys.psi_u[static_cast<std::size_t>(v.component - 1)]);
                    else
                        s.emplace(v, var(input_var(v.component, v.shift - 1)));
                    break;
                case VarBlock::Zeta:
                    s.emplace(v, var(zeta_var(v.component, v.shift - 1)));
                    break;
                case VarBlock::FlatOutput:
                case VarBlock::NewInput:
                    throw std::logic_error(
                        "backward shift of flat-output/new-input variables is not defined");
            }
        }
        cur = substitute(cur, s);
        note_horizons(cur);
    }
    return cur;
}

Assignment ShiftEngine::backward_point(const Assignment& p) const {
    const auto& sys = model_->sys;
    const int n = sys.n;
    const int m = sys.m;

    Eigen::VectorXd x_cur(n), zeta_prev(m);
    for (int i = 0; i < n; ++i) {
        auto it = p.find(state_var(i + 1));
        if (it == p.end()) throw UnboundVariableError(to_string(state_var(i + 1)));
        x_cur[i] = it->second;
    }
    for (int c = 0; c < m; ++c) {
        auto it = p.find(zeta_var(c + 1, -1));
        if (it == p.end()) throw UnboundVariableError(to_string(zeta_var(c + 1, -1)));
        zeta_prev[c] = it->second;
    }

    Eigen::VectorXd x_prev(n), u_prev(m);
    if (sys.has_closed_form_psi()) {
        Assignment q;
        for (int i = 0; i < n; ++i) q.emplace(state_var(i + 1), x_cur[i]);
        for (int c = 0; c < m; ++c) q.emplace(zeta_var(c + 1, -1), zeta_prev[c]);
        for (int i = 0; i < n; ++i) x_prev[i] = eval(sys.psi_x[static_cast<std::size_t>(i)], q);
        for (int j = 0; j < m; ++j) u_prev[j] = eval(sys.psi_u[static_cast<std::size_t>(j)], q);
    } else {
        // Newton on (f,g)(xp,up) = (x_cur, zeta_prev).
        std::vector<ShiftedVar> unknowns;
        for (int i = 0; i < n; ++i) unknowns.push_back(state_var(i + 1));
        for (int j = 0; j < m; ++j) unknowns.push_back(input_var(j + 1, 0));
        std::vector<Expr> eqs = sys.f;
        eqs.insert(eqs.end(), sys.g.begin(), sys.g.end());
        Eigen::VectorXd target(n + m);
        target.head(n) = x_cur;
        target.tail(m) = zeta_prev;

        auto to_assignment = [&](const Eigen::VectorXd& xi) {
            Assignment q;
            for (std::size_t i = 0; i < unknowns.size(); ++i)
                q.emplace(unknowns[i], xi[static_cast<Eigen::Index>(i)]);
            return q;
        };
        auto F = [&](const Eigen::VectorXd& xi) {
            Assignment q = to_assignment(xi);
            Eigen::VectorXd r(n + m);
            for (int i = 0; i < n + m; ++i) r[i] = eval(eqs[static_cast<std::size_t>(i)], q) - target[i];
            return r;
        };
        auto J = [&](const Eigen::VectorXd& xi) {
            Assignment q = to_assignment(xi);
            return jacobian(std::span<const Expr>(eqs), std::span<const ShiftedVar>(unknowns), q);
        };
        Eigen::VectorXd warm(n + m);
        warm.head(n) = x_cur;
        for (int j = 0; j < m; ++j) {
            auto it = p.find(input_var(j + 1, 0));
            warm[n + j] = (it != p.end()) ? it->second : sys.u_eq[j];
        }
        NewtonResult res = newton_solve(F, J, warm, {});
        x_prev = res.x.head(n);
        u_prev = res.x.tail(m);
    }

    Assignment q;
    for (const auto& [v, val] : p) {
        switch (v.block) {
            case VarBlock::Zeta:
                if (v.shift <= -2) q[zeta_var(v.component, v.shift + 1)] = val;
                break;
            case VarBlock::Input:
                q[input_var(v.component, v.shift + 1)] = val;
                break;
            default:
                break;
        }
    }
    for (int i = 0; i < n; ++i) q[state_var(i + 1)] = x_prev[i];
    for (int j = 0; j < m; ++j) q[input_var(j + 1, 0)] = u_prev[j];
    return q;
}

double ShiftEngine::backward_shift_eval(const Expr& e, const Assignment& p, int k) {
    Assignment q = p;
    for (int step = 0; step < k; ++step) q = backward_point(q);
    return eval(e, q);
}

std::vector<Expr> ShiftEngine::shift_multi(const std::vector<Expr>& phi, const MultiIndex& A) {
    if (!A.nonnegative()) throw std::logic_error("shift_multi needs A >= 0");
    if (static_cast<int>(phi.size()) != A.size())
        throw std::logic_error("shift_multi: size mismatch");
    std::vector<Expr> out;
    out.reserve(phi.size());
    for (std::size_t j = 0; j < phi.size(); ++j)
        out.push_back(forward_shift(phi[j], A[static_cast<int>(j)]));
    return out;
}

Expr ShiftEngine::shifted_phi(int component, int order) {
    auto& cache = phi_cache_[static_cast<std::size_t>(component - 1)];
    while (static_cast<int>(cache.size()) <= order)
        cache.push_back(forward_shift(cache.back(), 1));
    return cache[static_cast<std::size_t>(order)];
}

}  // namespace flatlin
