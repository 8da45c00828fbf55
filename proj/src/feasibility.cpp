#include "flatlin/feasibility.hpp"

#include <Eigen/Dense>

#include <algorithm>

namespace flatlin {

std::vector<Expr> feasibility_functions(const Model& model, ShiftEngine& eng,
                                        const MultiIndex& A, std::vector<std::string>* names) {
    const int m = model.m();
    const int q1 = model.spec.q1;
    std::vector<Expr> fs;
    auto note = [&](const std::string& s) {
        if (names) names->push_back(s);
    };

    // Past zeta values a shifted output can still depend on: all components,
    // shifts -q1 + min(A) .. -1.
    const int oldest = -q1 + A.min_entry();
    for (int b = oldest; b <= -1; ++b) {
        for (int c = 1; c <= m; ++c) {
            fs.push_back(var(zeta_var(c, b)));
            note(to_string(zeta_var(c, b)));
        }
    }
    for (int i = 1; i <= model.n(); ++i) {
        fs.push_back(var(state_var(i)));
        note(to_string(state_var(i)));
    }
    for (int j = 1; j <= m; ++j) {
        for (int a = A[j - 1]; a <= model.spec.R[j - 1] - 1; ++a) {
            fs.push_back(eng.shifted_phi(j, a));
            note("delta^" + std::to_string(a) + "(phi" + std::to_string(j) + ")");
        }
    }
    return fs;
}

FeasibilityReport check_feasibility(const Model& model, ShiftEngine& eng, const MultiIndex& A,
                                    const SampleOptions& opts) {
    if (A.size() != model.m()) throw std::logic_error("A has wrong length");
    if (!A.nonnegative()) throw std::logic_error("A must be componentwise >= 0");

    FeasibilityReport rep;
    rep.A = A;
    rep.function_names.clear();
    std::vector<Expr> fs = feasibility_functions(model, eng, A, &rep.function_names);
    rep.rank_required = static_cast<int>(fs.size());

    std::set<ShiftedVar> vset = variables_of(std::span<const Expr>(fs));
    std::vector<ShiftedVar> ws(vset.begin(), vset.end());

    int lu = 0, lz = std::max(model.spec.q1, 1);
    for (const auto& v : ws) {
        if (v.block == VarBlock::Input) lu = std::max(lu, v.shift);
        if (v.block == VarBlock::Zeta) lz = std::max(lz, -v.shift);
    }

    std::mt19937_64 rng(opts.seed + 5);
    rep.feasible = true;
    bool stored_kernel = false;
    for (int s = -1; s < opts.count; ++s) {
        Assignment p = (s < 0) ? equilibrium_assignment(model.sys, lu, lz)
                               : sample_assignment(model.sys, rng, opts.radius, lu, lz);
        Eigen::MatrixXd J = jacobian(std::span<const Expr>(fs), std::span<const ShiftedVar>(ws), p);
        const int r = numeric_rank(J);
        rep.witness_ranks.push_back(r);
        rep.rank_found = std::max(rep.rank_found, r);
        if (r == rep.rank_required) {
            rep.generically_feasible = true;
        } else {
            rep.feasible = false;
            rep.failing_points.push_back(s + 1);
            if (!stored_kernel) {
                // Left kernel of J: combinations of the listed differentials
                // that vanish at this point.
                Eigen::JacobiSVD<Eigen::MatrixXd> svd(J.transpose(), Eigen::ComputeFullV);
                const auto& sv = svd.singularValues();
                const double tau = (sv.size() && sv[0] > 0.0)
                                       ? static_cast<double>(std::max(J.rows(), J.cols())) *
                                             std::numeric_limits<double>::epsilon() * sv[0]
                                       : 0.0;
                int rk = 0;
                for (Eigen::Index i = 0; i < sv.size(); ++i)
                    if (sv[i] > tau) ++rk;
                rep.deficient_directions =
                    svd.matrixV().rightCols(J.rows() - rk).transpose();
                stored_kernel = true;
            }
        }
    }
    return rep;
}

FeasibilityReport check_feasibility(const Model& model, const MultiIndex& A,
                                    const SampleOptions& opts) {
    ShiftEngine eng(model);
    return check_feasibility(model, eng, A, opts);
}

bool check_functional_dependence(const Expr& h, const std::vector<Expr>& gs, const Model& model,
                                 const SampleOptions& opts) {
    std::vector<Expr> stacked = gs;
    stacked.push_back(h);
    std::set<ShiftedVar> vset = variables_of(std::span<const Expr>(stacked));
    std::vector<ShiftedVar> ws(vset.begin(), vset.end());
    int lu = 0, lz = std::max(model.spec.q1, 1);
    for (const auto& v : ws) {
        if (v.block == VarBlock::Input) lu = std::max(lu, v.shift);
        if (v.block == VarBlock::Zeta) lz = std::max(lz, -v.shift);
    }
    std::mt19937_64 rng(opts.seed + 6);
    for (int s = -1; s < opts.count; ++s) {
        Assignment p = (s < 0) ? equilibrium_assignment(model.sys, lu, lz)
                               : sample_assignment(model.sys, rng, opts.radius, lu, lz);
        Eigen::MatrixXd Jg =
            jacobian(std::span<const Expr>(gs), std::span<const ShiftedVar>(ws), p);
        Eigen::MatrixXd Jh =
            jacobian(std::span<const Expr>(stacked), std::span<const ShiftedVar>(ws), p);
        if (numeric_rank(Jh) != numeric_rank(Jg)) return false;
    }
    return true;
}

std::vector<FeasibilityReport> feasibility_table(const Model& model, const SampleOptions& opts) {
    ShiftEngine eng(model);
    std::vector<FeasibilityReport> out;
    for (const auto& A : MultiIndex::all_up_to(model.spec.R))
        out.push_back(check_feasibility(model, eng, A, opts));
    return out;
}

}  // namespace flatlin
