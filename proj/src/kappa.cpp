#include "flatlin/kappa.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <sstream>

namespace flatlin {

namespace {

constexpr double kDepTol = 1e-9;

int max_input_shift(const Expr& e) {
    int l = -1;
    for (const auto& v : variables_of(e))
        if (v.block == VarBlock::Input) l = std::max(l, v.shift);
    return l;
}

/// Coordinate chart for one step of the procedure: inputs of the fixed
/// blocks are replaced, level by level, by forward-shifts of the selected
/// outputs; everything else keeps its raw coordinate. Shifts beyond the
/// replacement depth stay raw, which does not affect the dependence tests
/// as long as the depth covers the analyzed expressions.
struct Chart {
    std::vector<Expr> funcs;                 // chart coordinate functions (rows)
    std::vector<ShiftedVar> coords;          // original coordinates (columns)
    std::vector<std::vector<int>> raw_row;   // [comp-1][shift] -> row index, -1 if replaced
    std::vector<std::vector<Expr>> grad;     // cached d(funcs)/d(coords)
    int l_max = 0;
};

Chart build_chart(const Model& model, ShiftEngine& eng, const std::vector<KappaBlock>& fixed,
                  const std::vector<Expr>& hs) {
    const int m = model.m();
    const int n = model.n();
    const int q1 = model.spec.q1;

    int l_rep = 0;
    for (const auto& h : hs) l_rep = std::max(l_rep, max_input_shift(h));

    // Which fixed block (and position inside it) replaces each input component.
    std::vector<int> owner(static_cast<std::size_t>(m), -1), pos(static_cast<std::size_t>(m), -1);
    for (std::size_t b = 0; b < fixed.size(); ++b)
        for (std::size_t c = 0; c < fixed[b].inputs.size(); ++c) {
            owner[static_cast<std::size_t>(fixed[b].inputs[c] - 1)] = static_cast<int>(b);
            pos[static_cast<std::size_t>(fixed[b].inputs[c] - 1)] = static_cast<int>(c);
        }

    int l_max = l_rep;
    for (int jc = 0; jc < m; ++jc) {
        if (owner[static_cast<std::size_t>(jc)] < 0) continue;
        const auto& blk = fixed[static_cast<std::size_t>(owner[static_cast<std::size_t>(jc)])];
        const int kap = blk.kappa[static_cast<std::size_t>(pos[static_cast<std::size_t>(jc)])];
        const int out = blk.outputs[static_cast<std::size_t>(pos[static_cast<std::size_t>(jc)])];
        for (int a = 0; a <= l_rep; ++a)
            l_max = std::max(l_max, max_input_shift(eng.shifted_phi(out, kap + a)));
    }

    Chart ch;
    ch.l_max = l_max;
    ch.raw_row.assign(static_cast<std::size_t>(m), std::vector<int>(static_cast<std::size_t>(l_max + 1), -1));

    for (int b = 1; b <= q1; ++b)
        for (int c = 1; c <= m; ++c) {
            ch.funcs.push_back(var(zeta_var(c, -b)));
            ch.coords.push_back(zeta_var(c, -b));
        }
    for (int i = 1; i <= n; ++i) {
        ch.funcs.push_back(var(state_var(i)));
        ch.coords.push_back(state_var(i));
    }
    for (int a = 0; a <= l_max; ++a) {
        for (int jc = 1; jc <= m; ++jc) {
            const int ow = owner[static_cast<std::size_t>(jc - 1)];
            if (a <= l_rep && ow >= 0) {
                const auto& blk = fixed[static_cast<std::size_t>(ow)];
                const int c = pos[static_cast<std::size_t>(jc - 1)];
                ch.funcs.push_back(eng.shifted_phi(blk.outputs[static_cast<std::size_t>(c)],
                                                   blk.kappa[static_cast<std::size_t>(c)] + a));
            } else {
                ch.raw_row[static_cast<std::size_t>(jc - 1)][static_cast<std::size_t>(a)] =
                    static_cast<int>(ch.funcs.size());
                ch.funcs.push_back(var(input_var(jc, a)));
            }
            ch.coords.push_back(input_var(jc, a));
        }
    }

    ch.grad.resize(ch.funcs.size());
    for (std::size_t r = 0; r < ch.funcs.size(); ++r) {
        ch.grad[r].reserve(ch.coords.size());
        for (const auto& w : ch.coords) ch.grad[r].push_back(diff(ch.funcs[r], w));
    }
    return ch;
}

/// Row vector of partial derivatives of h with respect to the chart
/// coordinates at p: solves J_Phi^T w = grad(h).
Eigen::VectorXd chart_partials(const Chart& ch, const std::vector<Expr>& grad_h,
                               const Assignment& p) {
    const auto N = static_cast<Eigen::Index>(ch.funcs.size());
    Eigen::MatrixXd J(N, N);
    for (Eigen::Index r = 0; r < N; ++r)
        for (Eigen::Index c = 0; c < N; ++c)
            J(r, c) = eval(ch.grad[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)], p);
    Eigen::VectorXd gh(N);
    for (Eigen::Index c = 0; c < N; ++c)
        gh[c] = eval(grad_h[static_cast<std::size_t>(c)], p);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(J.transpose());
    if (!lu.isInvertible())
        throw RankSelectionFailure("step chart is singular at a sample point");
    return lu.solve(gh);
}

std::vector<Expr> grad_against(const Expr& h, const std::vector<ShiftedVar>& coords) {
    std::vector<Expr> g;
    g.reserve(coords.size());
    for (const auto& w : coords) g.push_back(diff(h, w));
    return g;
}

std::vector<Assignment> chart_samples(const Model& model, const Chart& ch,
                                      const SampleOptions& opts, std::uint64_t salt) {
    std::mt19937_64 rng(opts.seed + salt);
    std::vector<Assignment> pts;
    const int lz = std::max(model.spec.q1, 1);
    pts.push_back(equilibrium_assignment(model.sys, ch.l_max, lz));
    for (int s = 0; s < opts.count; ++s)
        pts.push_back(sample_assignment(model.sys, rng, opts.radius, ch.l_max, lz));
    return pts;
}

/// Partials of each h w.r.t. the shift-0 coordinates of `input_comps`,
/// stacked as one matrix per sample point (equilibrium first).
std::vector<Eigen::MatrixXd> dependence_matrices(const Model& model, ShiftEngine& eng,
                                                 const std::vector<KappaBlock>& fixed,
                                                 const std::vector<Expr>& hs,
                                                 const std::vector<int>& input_comps,
                                                 const SampleOptions& opts) {
    Chart ch = build_chart(model, eng, fixed, hs);
    std::vector<std::vector<Expr>> ghs;
    for (const auto& h : hs) ghs.push_back(grad_against(h, ch.coords));
    std::vector<Eigen::MatrixXd> out;
    for (const auto& p : chart_samples(model, ch, opts, 7)) {
        Eigen::MatrixXd M(hs.size(), input_comps.size());
        for (std::size_t r = 0; r < hs.size(); ++r) {
            Eigen::VectorXd w = chart_partials(ch, ghs[r], p);
            for (std::size_t c = 0; c < input_comps.size(); ++c) {
                const int row = ch.raw_row[static_cast<std::size_t>(input_comps[c] - 1)][0];
                M(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = w[row];
            }
        }
        out.push_back(std::move(M));
    }
    return out;
}

bool any_above(const std::vector<Eigen::MatrixXd>& mats, double tol) {
    for (const auto& M : mats)
        if (M.cwiseAbs().maxCoeff() > tol) return true;
    return false;
}

int generic_rank(const std::vector<Eigen::MatrixXd>& mats) {
    int r = 0;
    for (const auto& M : mats) r = std::max(r, numeric_rank(M));
    return r;
}

std::vector<std::vector<int>> subsets_of_size(const std::vector<int>& items, int k) {
    std::vector<std::vector<int>> out;
    std::vector<int> idx(static_cast<std::size_t>(k));
    const int n = static_cast<int>(items.size());
    std::function<void(int, int)> rec = [&](int start, int depth) {
        if (depth == k) {
            std::vector<int> s;
            for (int ii : idx) s.push_back(items[static_cast<std::size_t>(ii)]);
            out.push_back(std::move(s));
            return;
        }
        for (int i = start; i <= n - (k - depth); ++i) {
            idx[static_cast<std::size_t>(depth)] = i;
            rec(i + 1, depth + 1);
        }
    };
    if (k >= 0 && k <= n) rec(0, 0);
    return out;
}

}  // namespace

std::string KappaResult::table() const {
    std::ostringstream os;
    os << "kappa = " << kappa.str() << "   (#kappa = " << kappa.total() << ", n = " << n
       << (zeta_independent ? ", flat output independent of zeta)" : ")") << "\n";
    os << "step  outputs  inputs  kappa_i  m_i\n";
    for (const auto& b : blocks) {
        os << b.step << "     ";
        std::string ys, us, ks;
        for (std::size_t c = 0; c < b.outputs.size(); ++c) {
            ys += (c ? "," : "") + std::string("y") + std::to_string(b.outputs[c]);
            us += (c ? "," : "") + std::string("u") + std::to_string(b.inputs[c]);
            ks += (c ? "," : "") + std::to_string(b.kappa[c]);
        }
        os << ys << "      " << us << "      (" << ks << ")      " << b.m_i << "\n";
    }
    for (const auto& w : warnings) os << "warning: " << w << "\n";
    return os.str();
}

KappaResult compute_kappa(const Model& model, const TiebreakPolicy& policy,
                          const SampleOptions& opts) {
    const int m = model.m();
    ShiftEngine eng(model);

    // Restriction to flat outputs without future input values: a structural
    // occurrence of u_[a>=1] is only tolerated if its partial is numerically
    // zero everywhere sampled.
    for (int j = 0; j < m; ++j) {
        for (const auto& v : variables_of(model.spec.phi[static_cast<std::size_t>(j)])) {
            if (v.block != VarBlock::Input || v.shift == 0) continue;
            Expr d = diff(model.spec.phi[static_cast<std::size_t>(j)], v);
            std::mt19937_64 rng(opts.seed + 11);
            const int lz = std::max(model.spec.q1, 1);
            bool dead = true;
            for (int s = 0; s < opts.count && dead; ++s) {
                Assignment p = sample_assignment(model.sys, rng, opts.radius, v.shift, lz);
                if (std::abs(eval(d, p)) > kDepTol) dead = false;
            }
            if (!dead)
                throw NotInputIndependentFlatOutput(
                    "phi" + std::to_string(j + 1) + " depends on future input " + to_string(v));
        }
    }

    std::vector<int> pref = policy.output_preference;
    if (pref.empty())
        for (int j = 1; j <= m; ++j) pref.push_back(j);
    if (static_cast<int>(pref.size()) != m)
        throw std::logic_error("tiebreak preference must list every output component");

    KappaResult res;
    res.R = model.spec.R;
    res.n = model.n();
    res.zeta_independent = true;
    for (const auto& phi_j : model.spec.phi)
        for (const auto& v : variables_of(phi_j))
            if (v.block == VarBlock::Zeta) res.zeta_independent = false;

    std::vector<int> remaining_outputs = pref;  // preference order
    std::vector<int> remaining_inputs;
    for (int j = 1; j <= m; ++j) remaining_inputs.push_back(j);
    std::vector<int> kappa_by_comp(static_cast<std::size_t>(m), -1);
    std::vector<int> k_current(static_cast<std::size_t>(m), 0);  // scan position per output

    for (int step = 1; !remaining_inputs.empty(); ++step) {
        if (step > m)
            throw RankSelectionFailure("procedure did not terminate within m steps");

        // K_i: per remaining output, the first shift order that depends
        // explicitly on a remaining input in the step's coordinates.
        for (int j : remaining_outputs) {
            bool found = false;
            while (!found) {
                const int k = k_current[static_cast<std::size_t>(j - 1)];
                if (k > model.spec.R[j - 1])
                    throw RankSelectionFailure(
                        "no dependence of y" + std::to_string(j) +
                        " on the remaining inputs up to order R; flat data inconsistent");
                Expr h = eng.shifted_phi(j, k);
                bool structural = false;
                if (res.blocks.empty()) {
                    // Identity chart: a structural occurrence is necessary.
                    for (const auto& v : variables_of(h))
                        if (v.block == VarBlock::Input) structural = true;
                } else {
                    structural = true;
                }
                if (structural) {
                    auto mats = dependence_matrices(model, eng, res.blocks, {h},
                                                    remaining_inputs, opts);
                    if (any_above(mats, kDepTol)) found = true;
                }
                if (!found) ++k_current[static_cast<std::size_t>(j - 1)];
            }
        }

        // Step rank m_i over the remaining inputs.
        std::vector<Expr> hs;
        for (int j : remaining_outputs)
            hs.push_back(eng.shifted_phi(j, k_current[static_cast<std::size_t>(j - 1)]));
        auto mats = dependence_matrices(model, eng, res.blocks, hs, remaining_inputs, opts);
        const int m_i = generic_rank(mats);
        if (m_i < 1) throw RankSelectionFailure("step rank is zero");

        // Select m_i outputs and m_i inputs achieving the rank; prefer
        // selections whose block Jacobian is regular at the equilibrium, so
        // feedback singularities at the operating point are screened out.
        auto out_sets = subsets_of_size(remaining_outputs, m_i);
        auto in_sets = subsets_of_size(remaining_inputs, m_i);
        std::vector<int> sel_out, sel_in;
        std::vector<int> fallback_out, fallback_in;
        bool have_fallback = false;
        for (const auto& O : out_sets) {
            for (const auto& U : in_sets) {
                std::vector<Eigen::MatrixXd> sub;
                for (std::size_t s = 0; s < mats.size(); ++s) {
                    Eigen::MatrixXd M(m_i, m_i);
                    for (int r = 0; r < m_i; ++r) {
                        const auto row = static_cast<std::size_t>(
                            std::find(remaining_outputs.begin(), remaining_outputs.end(),
                                      O[static_cast<std::size_t>(r)]) -
                            remaining_outputs.begin());
                        for (int c = 0; c < m_i; ++c) {
                            const auto col = static_cast<std::size_t>(
                                std::find(remaining_inputs.begin(), remaining_inputs.end(),
                                          U[static_cast<std::size_t>(c)]) -
                                remaining_inputs.begin());
                            M(r, c) = mats[s](static_cast<Eigen::Index>(row),
                                              static_cast<Eigen::Index>(col));
                        }
                    }
                    sub.push_back(std::move(M));
                }
                if (generic_rank(sub) != m_i) continue;
                Eigen::JacobiSVD<Eigen::MatrixXd> svd(sub.front());
                const double sigma_min = svd.singularValues()[m_i - 1];
                if (sigma_min > kDepTol) {
                    sel_out = O;
                    sel_in = U;
                    break;
                }
                if (!have_fallback) {
                    fallback_out = O;
                    fallback_in = U;
                    have_fallback = true;
                }
            }
            if (!sel_out.empty()) break;
        }
        if (sel_out.empty()) {
            if (!have_fallback)
                throw RankSelectionFailure("no output/input subset achieves rank " +
                                           std::to_string(m_i) + " in step " +
                                           std::to_string(step));
            sel_out = fallback_out;
            sel_in = fallback_in;
            res.warnings.push_back(
                "step " + std::to_string(step) +
                ": selected block Jacobian is singular at the equilibrium; the feedback is "
                "valid on a punctured neighborhood only");
        }

        KappaBlock blk;
        blk.step = step;
        blk.outputs = sel_out;
        blk.inputs = sel_in;
        blk.m_i = m_i;
        for (int j : sel_out) {
            const int kj = k_current[static_cast<std::size_t>(j - 1)];
            blk.kappa.push_back(kj);
            blk.v_defs.push_back(eng.shifted_phi(j, kj));
            std::vector<Expr> lows;
            for (int b = 0; b < kj; ++b) lows.push_back(eng.shifted_phi(j, b));
            blk.lower_shifts.push_back(std::move(lows));
            kappa_by_comp[static_cast<std::size_t>(j - 1)] = kj;
        }
        for (std::size_t b = 0; b < res.blocks.size(); ++b) {
            bool dep = false;
            for (const auto& lows : blk.lower_shifts)
                for (const auto& e : lows)
                    for (const auto& v : variables_of(e))
                        if (v.block == VarBlock::Input &&
                            std::find(res.blocks[b].inputs.begin(), res.blocks[b].inputs.end(),
                                      v.component) != res.blocks[b].inputs.end())
                            dep = true;
            if (dep) blk.depends_on_blocks.push_back(static_cast<int>(b) + 1);
        }
        res.blocks.push_back(std::move(blk));

        for (int j : sel_out)
            remaining_outputs.erase(
                std::remove(remaining_outputs.begin(), remaining_outputs.end(), j),
                remaining_outputs.end());
        for (int j : sel_in)
            remaining_inputs.erase(std::remove(remaining_inputs.begin(), remaining_inputs.end(), j),
                                   remaining_inputs.end());
    }

    res.kappa = MultiIndex(kappa_by_comp);
    for (const auto& b : res.blocks)
        for (int k : b.kappa) res.kappa_blockwise.push_back(k);

    if (!res.kappa.leq(res.R))
        res.warnings.push_back("kappa exceeds R; flat data inconsistent");
    if (res.kappa.total() < res.n)
        res.warnings.push_back("#kappa < n; flat data inconsistent");
    return res;
}

bool verify_kappa_minimal(const Model& model, const KappaResult& result,
                          const SampleOptions& opts) {
    ShiftEngine eng(model);
    FeasibilityReport own = check_feasibility(model, eng, result.kappa, opts);
    if (!own.feasible)
        throw MinimalityViolated("A = kappa = " + result.kappa.str() +
                                 " fails the feasibility test");
    const int total = result.kappa.total();
    for (const auto& A : MultiIndex::all_up_to(model.spec.R)) {
        if (A.total() >= total) continue;
        FeasibilityReport rep = check_feasibility(model, eng, A, opts);
        if (rep.feasible)
            throw MinimalityViolated("feasible A = " + A.str() + " with #A = " +
                                     std::to_string(A.total()) + " < #kappa = " +
                                     std::to_string(total));
    }
    return true;
}

}  // namespace flatlin
