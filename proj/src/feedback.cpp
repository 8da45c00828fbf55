#include "flatlin/feedback.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <sstream>

#include <json.hpp>

#include "flatlin/feasibility.hpp"
#include "flatlin/newton.hpp"

namespace flatlin {

VWindow::VWindow(const MultiIndex& A, const MultiIndex& R) {
    vals_.resize(static_cast<std::size_t>(A.size()));
    for (int j = 0; j < A.size(); ++j)
        vals_[static_cast<std::size_t>(j)].assign(static_cast<std::size_t>(R[j] - A[j] + 1), 0.0);
}

double VWindow::at(int j, int alpha) const {
    return vals_.at(static_cast<std::size_t>(j - 1)).at(static_cast<std::size_t>(alpha));
}

double& VWindow::at(int j, int alpha) {
    return vals_.at(static_cast<std::size_t>(j - 1)).at(static_cast<std::size_t>(alpha));
}

int VWindow::width(int j) const {
    return static_cast<int>(vals_.at(static_cast<std::size_t>(j - 1)).size());
}

namespace {

int generic_rank_of(const std::vector<Expr>& fs, const Model& model,
                    const SampleOptions& opts, std::uint64_t salt) {
    std::set<ShiftedVar> vset = variables_of(std::span<const Expr>(fs));
    std::vector<ShiftedVar> ws(vset.begin(), vset.end());
    int lu = 0, lz = std::max(model.spec.q1, 1);
    for (const auto& v : ws) {
        if (v.block == VarBlock::Input) lu = std::max(lu, v.shift);
        if (v.block == VarBlock::Zeta) lz = std::max(lz, -v.shift);
    }
    std::mt19937_64 rng(opts.seed + salt);
    int best = 0;
    for (int s = -1; s < opts.count; ++s) {
        Assignment p = (s < 0) ? equilibrium_assignment(model.sys, lu, lz)
                               : sample_assignment(model.sys, rng, opts.radius, lu, lz);
        Eigen::MatrixXd J = jacobian(std::span<const Expr>(fs), std::span<const ShiftedVar>(ws), p);
        best = std::max(best, numeric_rank(J));
    }
    return best;
}

/// Partition the structural u-shift variables of the stacked equations into
/// numerically live unknowns and dead passthrough variables.
void split_unknowns(FeedbackLaw& law, const Model& model, const SampleOptions& opts) {
    std::vector<Expr> all;
    for (const auto& e : law.v_equations) all.push_back(e.lhs);
    for (const auto& e : law.z_equations) all.push_back(e.lhs);

    std::set<ShiftedVar> uvars;
    for (const auto& v : variables_of(std::span<const Expr>(all)))
        if (v.block == VarBlock::Input) uvars.insert(v);

    int lu = 0;
    for (const auto& v : uvars) lu = std::max(lu, v.shift);
    const int lz = std::max(model.spec.q1, 1);
    std::mt19937_64 rng(opts.seed + 21);
    std::vector<Assignment> pts;
    pts.push_back(equilibrium_assignment(model.sys, lu, lz));
    for (int s = 0; s < opts.count; ++s)
        pts.push_back(sample_assignment(model.sys, rng, opts.radius, lu, lz));

    for (const auto& w : uvars) {
        bool live = false;
        for (const auto& e : all) {
            Expr d = diff(e, w);
            for (const auto& p : pts) {
                if (std::abs(eval(d, p)) > 1e-9) {
                    live = true;
                    break;
                }
            }
            if (live) break;
        }
        if (live)
            law.unknowns.push_back(w);
        else
            law.passthrough.push_back(w);
        law.max_u_shift = std::max(law.max_u_shift, w.shift);
    }
}

std::string var_list(const std::vector<ShiftedVar>& vs) {
    std::string s;
    for (const auto& v : vs) s += (s.empty() ? "" : ", ") + to_string(v);
    return s.empty() ? "(none)" : s;
}

/// Newton system wiring and the square-count check.
void finish_synthesis(FeedbackLaw& law, const Model& model, const SampleOptions& opts) {
    split_unknowns(law, model, opts);

    auto has_unknown = [&](const Expr& e) {
        for (const auto& v : variables_of(e))
            if (std::find(law.unknowns.begin(), law.unknowns.end(), v) != law.unknowns.end())
                return true;
        return false;
    };
    for (std::size_t i = 0; i < law.v_equations.size(); ++i)
        if (has_unknown(law.v_equations[i].lhs)) law.newton_v.push_back(static_cast<int>(i));
    for (std::size_t i = 0; i < law.z_equations.size(); ++i)
        if (has_unknown(law.z_equations[i].lhs)) law.newton_z.push_back(static_cast<int>(i));

    const std::size_t n_eq = law.newton_v.size() + law.newton_z.size();
    if (n_eq != law.unknowns.size()) {
        std::ostringstream os;
        os << "equation/unknown count mismatch: " << n_eq << " equations vs "
           << law.unknowns.size() << " unknowns; unknowns: " << var_list(law.unknowns)
           << "; passthrough: " << var_list(law.passthrough);
        throw SelectionIncomplete(os.str());
    }
    for (int j = 1; j <= model.m(); ++j) {
        if (std::find(law.unknowns.begin(), law.unknowns.end(), input_var(j, 0)) ==
            law.unknowns.end())
            throw SelectionIncomplete("input u" + std::to_string(j) +
                                      " is not determined by the equation system");
    }

    law.newton_grad.clear();
    auto push_grads = [&](const Expr& lhs) {
        std::vector<Expr> g;
        g.reserve(law.unknowns.size());
        for (const auto& w : law.unknowns) g.push_back(diff(lhs, w));
        law.newton_grad.push_back(std::move(g));
    };
    for (int i : law.newton_v) push_grads(law.v_equations[static_cast<std::size_t>(i)].lhs);
    for (int i : law.newton_z) push_grads(law.z_equations[static_cast<std::size_t>(i)].lhs);

    // The controller-state update must be computable from the solved shifts.
    for (const auto& ze : law.z_equations) {
        for (const auto& v : variables_of(ze.lhs_next)) {
            if (v.block != VarBlock::Input) continue;
            const bool known =
                std::find(law.unknowns.begin(), law.unknowns.end(), v) != law.unknowns.end() ||
                std::find(law.passthrough.begin(), law.passthrough.end(), v) !=
                    law.passthrough.end();
            if (!known)
                throw SelectionIncomplete("controller-state update needs undetermined shift " +
                                          to_string(v));
        }
    }
}

}  // namespace

std::vector<std::pair<int, int>> select_phi_c(const Model& model, const MultiIndex& A,
                                              const SampleOptions& opts) {
    ShiftEngine eng(model);
    FeasibilityReport feas = check_feasibility(model, eng, A, opts);
    if (!feas.feasible)
        throw SelectionIncomplete("A = " + A.str() + " fails the feasibility condition");

    const int target = model.spec.R.total() + model.m();
    std::vector<Expr> base;
    for (int i = 1; i <= model.n(); ++i) base.push_back(var(state_var(i)));
    for (int j = 1; j <= model.m(); ++j)
        for (int a = A[j - 1]; a <= model.spec.R[j - 1]; ++a)
            base.push_back(eng.shifted_phi(j, a));

    std::vector<std::pair<int, int>> kept;
    int rank = generic_rank_of(base, model, opts, 31);
    for (int j = 1; j <= model.m() && rank < target; ++j) {
        for (int a = 0; a < A[j - 1] && rank < target; ++a) {
            std::vector<Expr> trial = base;
            trial.push_back(eng.shifted_phi(j, a));
            const int r = generic_rank_of(trial, model, opts, 31);
            if (r > rank) {
                base = std::move(trial);
                rank = r;
                kept.emplace_back(j, a);
            }
        }
    }
    if (rank != target)
        throw SelectionIncomplete("rank completion reached " + std::to_string(rank) + " of " +
                                  std::to_string(target));
    if (static_cast<int>(kept.size()) != A.total() - model.n())
        throw SelectionIncomplete("selection size " + std::to_string(kept.size()) +
                                  " does not equal #A - n");
    return kept;
}

FeedbackLaw synthesize_from_kappa(const Model& model, const KappaResult& kres,
                                  const SampleOptions& opts) {
    ShiftEngine eng(model);
    FeedbackLaw law;
    law.kind = LawKind::QuasiStatic;
    law.A = kres.kappa;
    law.R = model.spec.R;
    law.q1 = model.spec.q1;
    law.n = model.n();
    law.m = model.m();
    law.kappa_blocks = kres.blocks;
    for (const auto& blk : kres.blocks) {
        for (std::size_t c = 0; c < blk.outputs.size(); ++c) {
            const int j = blk.outputs[c];
            for (int alpha = 0; alpha <= model.spec.R[j - 1] - blk.kappa[c]; ++alpha) {
                VEquation eq;
                eq.lhs = eng.shifted_phi(j, blk.kappa[c] + alpha);
                eq.out_component = j;
                eq.alpha = alpha;
                eq.block = blk.step;
                eq.comp_in_block = static_cast<int>(c) + 1;
                law.v_equations.push_back(std::move(eq));
            }
        }
    }
    finish_synthesis(law, model, opts);
    return law;
}

FeedbackLaw synthesize_general(const Model& model, const MultiIndex& A,
                               const SampleOptions& opts) {
    ShiftEngine eng(model);
    FeedbackLaw law;
    law.A = A;
    law.R = model.spec.R;
    law.q1 = model.spec.q1;
    law.n = model.n();
    law.m = model.m();
    law.z_spec = select_phi_c(model, A, opts);  // also checks feasibility
    law.kind = law.z_spec.empty() ? LawKind::QuasiStatic : LawKind::Dynamic;

    for (int j = 1; j <= model.m(); ++j) {
        for (int alpha = 0; alpha <= model.spec.R[j - 1] - A[j - 1]; ++alpha) {
            VEquation eq;
            eq.lhs = eng.shifted_phi(j, A[j - 1] + alpha);
            eq.out_component = j;
            eq.alpha = alpha;
            eq.block = j;
            eq.comp_in_block = 1;
            law.v_equations.push_back(std::move(eq));
        }
    }
    for (std::size_t i = 0; i < law.z_spec.size(); ++i) {
        ZEquation ze;
        ze.out_component = law.z_spec[i].first;
        ze.alpha = law.z_spec[i].second;
        ze.lhs = eng.shifted_phi(ze.out_component, ze.alpha);
        ze.lhs_next = eng.shifted_phi(ze.out_component, ze.alpha + 1);
        ze.z_index = static_cast<int>(i);
        law.z_equations.push_back(std::move(ze));
    }
    finish_synthesis(law, model, opts);
    return law;
}

namespace {

/// One Newton solve of a subset of the law's v-equations for a subset of
/// its unknowns, everything else held at the values in `fixed`.
NewtonResult solve_equation_subset(const FeedbackLaw& law, const VWindow& v,
                                   const Eigen::VectorXd& z, const Assignment& fixed,
                                   const std::vector<int>& veq_idx,
                                   const std::vector<int>& zeq_idx,
                                   const std::vector<std::size_t>& unknown_pos,
                                   const Eigen::VectorXd& warm) {
    const auto nu = static_cast<Eigen::Index>(unknown_pos.size());
    auto fill = [&](const Eigen::VectorXd& xi) {
        Assignment p = fixed;
        for (Eigen::Index i = 0; i < nu; ++i)
            p[law.unknowns[unknown_pos[static_cast<std::size_t>(i)]]] = xi[i];
        return p;
    };
    auto newton_row = [&](int veq, int zeq) {
        // Position of the equation inside newton_grad (v rows first).
        if (veq >= 0) {
            const auto it = std::find(law.newton_v.begin(), law.newton_v.end(), veq);
            return static_cast<std::size_t>(it - law.newton_v.begin());
        }
        const auto it = std::find(law.newton_z.begin(), law.newton_z.end(), zeq);
        return law.newton_v.size() + static_cast<std::size_t>(it - law.newton_z.begin());
    };
    auto F = [&](const Eigen::VectorXd& xi) {
        Assignment p = fill(xi);
        Eigen::VectorXd r(static_cast<Eigen::Index>(veq_idx.size() + zeq_idx.size()));
        Eigen::Index row = 0;
        for (int i : veq_idx) {
            const auto& eq = law.v_equations[static_cast<std::size_t>(i)];
            r[row++] = eval(eq.lhs, p) - v.at(eq.out_component, eq.alpha);
        }
        for (int i : zeq_idx) {
            const auto& eq = law.z_equations[static_cast<std::size_t>(i)];
            r[row++] = eval(eq.lhs, p) - z[eq.z_index];
        }
        return r;
    };
    auto J = [&](const Eigen::VectorXd& xi) {
        Assignment p = fill(xi);
        Eigen::MatrixXd m_(static_cast<Eigen::Index>(veq_idx.size() + zeq_idx.size()), nu);
        Eigen::Index row = 0;
        for (int i : veq_idx) {
            const std::size_t gr = newton_row(i, -1);
            for (Eigen::Index c = 0; c < nu; ++c)
                m_(row, c) = eval(law.newton_grad[gr][unknown_pos[static_cast<std::size_t>(c)]], p);
            ++row;
        }
        for (int i : zeq_idx) {
            const std::size_t gr = newton_row(-1, i);
            for (Eigen::Index c = 0; c < nu; ++c)
                m_(row, c) = eval(law.newton_grad[gr][unknown_pos[static_cast<std::size_t>(c)]], p);
            ++row;
        }
        return m_;
    };
    return newton_solve(F, J, warm, {});
}

}  // namespace

FeedbackEval evaluate_feedback(const FeedbackLaw& law, const Model& model,
                               const std::vector<Eigen::VectorXd>& zeta_hist,
                               const Eigen::VectorXd& x, const VWindow& v,
                               const Eigen::VectorXd& z, const Assignment* warm_start) {
    if (static_cast<int>(zeta_hist.size()) < law.q1)
        throw std::logic_error("zeta history shorter than q1");
    if (law.z_dim() != z.size())
        throw std::logic_error("controller state has wrong dimension");

    Assignment base;
    for (int i = 0; i < model.n(); ++i) base.emplace(state_var(i + 1), x[i]);
    for (int b = 1; b <= law.q1; ++b)
        for (int c = 0; c < model.m(); ++c)
            base.emplace(zeta_var(c + 1, -b), zeta_hist[static_cast<std::size_t>(b - 1)][c]);
    auto warm_of = [&](const ShiftedVar& w) {
        if (warm_start) {
            auto it = warm_start->find(w);
            if (it != warm_start->end()) return it->second;
        }
        return model.sys.u_eq[w.component - 1];
    };
    for (const auto& w : law.passthrough) base.emplace(w, warm_of(w));

    FeedbackEval out;
    Eigen::VectorXd warm(static_cast<Eigen::Index>(law.unknowns.size()));
    for (std::size_t i = 0; i < law.unknowns.size(); ++i)
        warm[static_cast<Eigen::Index>(i)] = warm_of(law.unknowns[i]);
    int warmup_iters = 0;

    // Warm-up sweep along the triangular support structure: repeatedly pick
    // the input component whose shifts cover the unsolved support of some
    // pending equations, and solve that subset with everything else held
    // fixed. For laws built from the kappa procedure this reproduces the
    // block order; it keeps the subsequent joint Newton from wandering
    // across singular loci that lie between warm start and solution.
    {
        Assignment fixed = base;
        for (std::size_t i = 0; i < law.unknowns.size(); ++i)
            fixed[law.unknowns[i]] = warm[static_cast<Eigen::Index>(i)];
        std::vector<std::size_t> unsolved(law.unknowns.size());
        for (std::size_t i = 0; i < unsolved.size(); ++i) unsolved[i] = i;
        std::vector<int> pending_v = law.newton_v;
        std::vector<int> pending_z = law.newton_z;

        auto live_support = [&](const Expr& lhs) {
            std::vector<std::size_t> sup;
            for (const auto& w : variables_of(lhs)) {
                if (w.block != VarBlock::Input) continue;
                for (std::size_t p : unsolved)
                    if (law.unknowns[p] == w) sup.push_back(p);
            }
            return sup;
        };
        auto solve_group = [&](const std::vector<int>& veq, const std::vector<int>& zeq,
                               const std::vector<std::size_t>& pos) {
            Eigen::VectorXd sub_warm(static_cast<Eigen::Index>(pos.size()));
            for (std::size_t i = 0; i < pos.size(); ++i)
                sub_warm[static_cast<Eigen::Index>(i)] = fixed.at(law.unknowns[pos[i]]);
            try {
                NewtonResult nres =
                    solve_equation_subset(law, v, z, fixed, veq, zeq, pos, sub_warm);
                warmup_iters = std::max(warmup_iters, nres.iterations);
                for (std::size_t i = 0; i < pos.size(); ++i) {
                    fixed[law.unknowns[pos[i]]] = nres.x[static_cast<Eigen::Index>(i)];
                    warm[static_cast<Eigen::Index>(pos[i])] =
                        nres.x[static_cast<Eigen::Index>(i)];
                }
            } catch (const FlatlinError&) {
                // Keep the warm values; the joint solve decides.
            }
            auto gone = [&](std::size_t p) {
                return std::find(pos.begin(), pos.end(), p) != pos.end();
            };
            unsolved.erase(std::remove_if(unsolved.begin(), unsolved.end(), gone),
                           unsolved.end());
            for (int i : veq)
                pending_v.erase(std::remove(pending_v.begin(), pending_v.end(), i),
                                pending_v.end());
            for (int i : zeq)
                pending_z.erase(std::remove(pending_z.begin(), pending_z.end(), i),
                                pending_z.end());
        };

        bool progress = true;
        while (progress && (!pending_v.empty() || !pending_z.empty())) {
            progress = false;
            for (int c = 1; c <= model.m() && !progress; ++c) {
                std::vector<int> veq, zeq;
                std::set<std::size_t> pos_set;
                auto covered_by_c = [&](const Expr& lhs) {
                    auto sup = live_support(lhs);
                    if (sup.empty()) return false;
                    for (std::size_t p : sup)
                        if (law.unknowns[p].component != c) return false;
                    for (std::size_t p : sup) pos_set.insert(p);
                    return true;
                };
                for (int i : pending_v)
                    if (covered_by_c(law.v_equations[static_cast<std::size_t>(i)].lhs))
                        veq.push_back(i);
                for (int i : pending_z)
                    if (covered_by_c(law.z_equations[static_cast<std::size_t>(i)].lhs))
                        zeq.push_back(i);
                if (veq.empty() && zeq.empty()) continue;
                solve_group(veq, zeq, {pos_set.begin(), pos_set.end()});
                progress = true;
            }
        }
        // Leftover mixed-support equations: one grouped pre-solve.
        if (!pending_v.empty() || !pending_z.empty()) {
            std::set<std::size_t> pos_set;
            for (int i : pending_v)
                for (std::size_t p : live_support(law.v_equations[static_cast<std::size_t>(i)].lhs))
                    pos_set.insert(p);
            for (int i : pending_z)
                for (std::size_t p : live_support(law.z_equations[static_cast<std::size_t>(i)].lhs))
                    pos_set.insert(p);
            if (!pos_set.empty())
                solve_group(pending_v, pending_z, {pos_set.begin(), pos_set.end()});
        }
    }

    std::vector<std::size_t> all_pos(law.unknowns.size());
    for (std::size_t i = 0; i < all_pos.size(); ++i) all_pos[i] = i;
    NewtonResult nres =
        solve_equation_subset(law, v, z, base, law.newton_v, law.newton_z, all_pos, warm);
    out.iterations = warmup_iters + nres.iterations;
    out.residual = nres.residual;
    Assignment solved = base;
    for (std::size_t i = 0; i < law.unknowns.size(); ++i)
        solved[law.unknowns[i]] = nres.x[static_cast<Eigen::Index>(i)];
    out.solved = std::move(solved);
    out.u.resize(model.m());
    for (int j = 0; j < model.m(); ++j) out.u[j] = out.solved.at(input_var(j + 1, 0));

    out.z_next.resize(law.z_dim());
    for (std::size_t i = 0; i < law.z_equations.size(); ++i) {
        const auto& ze = law.z_equations[i];
        out.z_next[ze.z_index] = eval(ze.lhs_next, out.solved);
        const bool in_newton = std::find(law.newton_z.begin(), law.newton_z.end(),
                                         static_cast<int>(i)) != law.newton_z.end();
        if (!in_newton) {
            out.consistency_residual = std::max(
                out.consistency_residual, std::abs(eval(ze.lhs, out.solved) - z[ze.z_index]));
        }
    }
    return out;
}

namespace {

nlohmann::json var_json(const ShiftedVar& v) {
    return to_prefix(var(v));
}

ShiftedVar var_from_prefix(const std::string& s) {
    Expr e = parse_prefix(s);
    if (e->op() != Op::Var) throw ParseError("expected a variable: " + s);
    return e->var();
}

}  // namespace

std::string law_to_json(const FeedbackLaw& law) {
    nlohmann::json j;
    j["kind"] = law.kind == LawKind::Dynamic ? "dynamic" : "quasistatic";
    j["A"] = law.A.entries();
    j["R"] = law.R.entries();
    j["q1"] = law.q1;
    j["n"] = law.n;
    j["m"] = law.m;
    j["equations"] = nlohmann::json::array();
    for (const auto& e : law.v_equations)
        j["equations"].push_back({{"lhs", to_prefix(e.lhs)},
                                  {"component", e.out_component},
                                  {"alpha", e.alpha},
                                  {"block", e.block},
                                  {"comp_in_block", e.comp_in_block}});
    j["z_equations"] = nlohmann::json::array();
    for (const auto& e : law.z_equations)
        j["z_equations"].push_back({{"lhs", to_prefix(e.lhs)},
                                    {"lhs_next", to_prefix(e.lhs_next)},
                                    {"z_index", e.z_index},
                                    {"component", e.out_component},
                                    {"alpha", e.alpha}});
    j["z_spec"] = nlohmann::json::array();
    for (const auto& [c, a] : law.z_spec) j["z_spec"].push_back({{"component", c}, {"alpha", a}});
    j["unknowns"] = nlohmann::json::array();
    for (const auto& v : law.unknowns) j["unknowns"].push_back(var_json(v));
    j["passthrough"] = nlohmann::json::array();
    for (const auto& v : law.passthrough) j["passthrough"].push_back(var_json(v));
    j["max_u_shift"] = law.max_u_shift;
    if (law.kappa_blocks) {
        j["blocks"] = nlohmann::json::array();
        for (const auto& b : *law.kappa_blocks) {
            nlohmann::json jb;
            jb["step"] = b.step;
            jb["outputs"] = b.outputs;
            jb["inputs"] = b.inputs;
            jb["kappa"] = b.kappa;
            jb["m_i"] = b.m_i;
            jb["depends_on_blocks"] = b.depends_on_blocks;
            jb["v_defs"] = nlohmann::json::array();
            for (const auto& e : b.v_defs) jb["v_defs"].push_back(to_prefix(e));
            jb["lower_shifts"] = nlohmann::json::array();
            for (const auto& lows : b.lower_shifts) {
                nlohmann::json arr = nlohmann::json::array();
                for (const auto& e : lows) arr.push_back(to_prefix(e));
                jb["lower_shifts"].push_back(arr);
            }
            j["blocks"].push_back(jb);
        }
    }
    return j.dump(2);
}

FeedbackLaw law_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const std::exception& e) {
        throw ParseError(std::string("law JSON: ") + e.what());
    }
    FeedbackLaw law;
    law.kind = j.at("kind").get<std::string>() == "dynamic" ? LawKind::Dynamic
                                                            : LawKind::QuasiStatic;
    law.A = MultiIndex(j.at("A").get<std::vector<int>>());
    law.R = MultiIndex(j.at("R").get<std::vector<int>>());
    law.q1 = j.at("q1").get<int>();
    law.n = j.at("n").get<int>();
    law.m = j.at("m").get<int>();
    for (const auto& e : j.at("equations")) {
        VEquation eq;
        eq.lhs = parse_prefix(e.at("lhs").get<std::string>());
        eq.out_component = e.at("component").get<int>();
        eq.alpha = e.at("alpha").get<int>();
        eq.block = e.at("block").get<int>();
        eq.comp_in_block = e.at("comp_in_block").get<int>();
        law.v_equations.push_back(std::move(eq));
    }
    for (const auto& e : j.at("z_equations")) {
        ZEquation ze;
        ze.lhs = parse_prefix(e.at("lhs").get<std::string>());
        ze.lhs_next = parse_prefix(e.at("lhs_next").get<std::string>());
        ze.z_index = e.at("z_index").get<int>();
        ze.out_component = e.at("component").get<int>();
        ze.alpha = e.at("alpha").get<int>();
        law.z_equations.push_back(std::move(ze));
    }
    for (const auto& e : j.at("z_spec"))
        law.z_spec.emplace_back(e.at("component").get<int>(), e.at("alpha").get<int>());
    for (const auto& s : j.at("unknowns"))
        law.unknowns.push_back(var_from_prefix(s.get<std::string>()));
    for (const auto& s : j.at("passthrough"))
        law.passthrough.push_back(var_from_prefix(s.get<std::string>()));
    law.max_u_shift = j.at("max_u_shift").get<int>();
    if (j.contains("blocks")) {
        std::vector<KappaBlock> blocks;
        for (const auto& jb : j.at("blocks")) {
            KappaBlock b;
            b.step = jb.at("step").get<int>();
            b.outputs = jb.at("outputs").get<std::vector<int>>();
            b.inputs = jb.at("inputs").get<std::vector<int>>();
            b.kappa = jb.at("kappa").get<std::vector<int>>();
            b.m_i = jb.at("m_i").get<int>();
            b.depends_on_blocks = jb.at("depends_on_blocks").get<std::vector<int>>();
            for (const auto& s : jb.at("v_defs"))
                b.v_defs.push_back(parse_prefix(s.get<std::string>()));
            for (const auto& arr : jb.at("lower_shifts")) {
                std::vector<Expr> lows;
                for (const auto& s : arr) lows.push_back(parse_prefix(s.get<std::string>()));
                b.lower_shifts.push_back(std::move(lows));
            }
            blocks.push_back(std::move(b));
        }
        law.kappa_blocks = std::move(blocks);
    }

    // Rebuild the Newton wiring.
    auto has_unknown = [&](const Expr& e) {
        for (const auto& v : variables_of(e))
            if (std::find(law.unknowns.begin(), law.unknowns.end(), v) != law.unknowns.end())
                return true;
        return false;
    };
    for (std::size_t i = 0; i < law.v_equations.size(); ++i)
        if (has_unknown(law.v_equations[i].lhs)) law.newton_v.push_back(static_cast<int>(i));
    for (std::size_t i = 0; i < law.z_equations.size(); ++i)
        if (has_unknown(law.z_equations[i].lhs)) law.newton_z.push_back(static_cast<int>(i));
    auto push_grads = [&](const Expr& lhs) {
        std::vector<Expr> g;
        for (const auto& w : law.unknowns) g.push_back(diff(lhs, w));
        law.newton_grad.push_back(std::move(g));
    };
    for (int i : law.newton_v) push_grads(law.v_equations[static_cast<std::size_t>(i)].lhs);
    for (int i : law.newton_z) push_grads(law.z_equations[static_cast<std::size_t>(i)].lhs);
    return law;
}

}  // namespace flatlin
