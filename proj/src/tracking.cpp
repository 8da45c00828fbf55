#include "flatlin/tracking.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "flatlin/newton.hpp"

namespace flatlin {

std::vector<double> coeffs_from_eigenvalues(const std::vector<std::complex<double>>& eigs) {
    constexpr double kImagTol = 1e-9;
    for (const auto& l : eigs)
        if (std::abs(l) >= 1.0)
            throw UnstableEigenvalueError("eigenvalue outside the open unit disc: " +
                                          std::to_string(l.real()) + (l.imag() < 0 ? "-" : "+") +
                                          std::to_string(std::abs(l.imag())) + "i");
    // Conjugate closure.
    std::vector<std::complex<double>> pending;
    for (const auto& l : eigs) {
        if (std::abs(l.imag()) <= kImagTol) continue;
        auto match = std::find_if(pending.begin(), pending.end(), [&](const auto& p) {
            return std::abs(p - std::conj(l)) <= kImagTol;
        });
        if (match != pending.end())
            pending.erase(match);
        else
            pending.push_back(l);
    }
    if (!pending.empty())
        throw NonConjugatePairError("complex eigenvalues must appear in conjugate pairs");

    std::vector<std::complex<double>> poly{1.0};
    for (const auto& l : eigs) {
        std::vector<std::complex<double>> next(poly.size() + 1, 0.0);
        for (std::size_t i = 0; i < poly.size(); ++i) {
            next[i + 1] += poly[i];
            next[i] -= l * poly[i];
        }
        poly = std::move(next);
    }
    // poly[i] is the coefficient of z^i; poly.back() == 1 (monic).
    std::vector<double> a(eigs.size());
    for (std::size_t b = 0; b < eigs.size(); ++b) a[b] = poly[b].real();
    return a;
}

ReferenceTrajectory ReferenceTrajectory::from_csv_text(const std::string& text, int m) {
    std::istringstream in(text);
    std::string line;
    std::vector<Eigen::VectorXd> rows;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (first) {
            first = false;
            // Header row is optional.
            char* end = nullptr;
            std::strtod(cells.empty() ? "" : cells[0].c_str(), &end);
            if (cells.empty() || end == cells[0].c_str()) continue;
        }
        if (static_cast<int>(cells.size()) < m + 1)
            throw ParseError("reference CSV row needs k plus " + std::to_string(m) + " columns");
        Eigen::VectorXd row(m);
        for (int j = 0; j < m; ++j) row[j] = std::stod(cells[static_cast<std::size_t>(j + 1)]);
        rows.push_back(std::move(row));
    }
    return ReferenceTrajectory(m, std::move(rows));
}

ReferenceTrajectory ReferenceTrajectory::from_csv_file(const std::string& path, int m) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open reference file: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return from_csv_text(buf.str(), m);
}

ReferenceTrajectory ReferenceTrajectory::constant(const Eigen::VectorXd& y, int length) {
    std::vector<Eigen::VectorXd> rows(static_cast<std::size_t>(length), y);
    return ReferenceTrajectory(static_cast<int>(y.size()), std::move(rows));
}

double ReferenceTrajectory::at(int component, int k) const {
    if (k < 0 || k >= length())
        throw IoError("reference lookup beyond the supplied horizon (k = " + std::to_string(k) +
                      "); the reference must be known R steps ahead");
    return values_[static_cast<std::size_t>(k)][component - 1];
}

RefWindow reference_window(const ReferenceTrajectory& ref, const MultiIndex& R, int k) {
    RefWindow w;
    w.vals.resize(static_cast<std::size_t>(R.size()));
    for (int j = 1; j <= R.size(); ++j) {
        auto& col = w.vals[static_cast<std::size_t>(j - 1)];
        col.resize(static_cast<std::size_t>(R[j - 1] + 1));
        for (int s = 0; s <= R[j - 1]; ++s) col[static_cast<std::size_t>(s)] = ref.at(j, k + s);
    }
    return w;
}

TrackingLaw make_tracking_law(const FeedbackLaw& law,
                              const std::vector<std::vector<double>>& coeffs) {
    if (!law.kappa_blocks)
        throw std::logic_error("tracking needs a feedback law with kappa block structure");
    if (static_cast<int>(coeffs.size()) != law.A.size())
        throw std::logic_error("one coefficient set per output component required");
    for (int j = 0; j < law.A.size(); ++j)
        if (static_cast<int>(coeffs[static_cast<std::size_t>(j)].size()) != law.A[j])
            throw std::logic_error("component " + std::to_string(j + 1) + " needs kappa^j = " +
                                   std::to_string(law.A[j]) + " coefficients");
    return TrackingLaw{law, coeffs};
}

TrackingLaw make_tracking_law_deadbeat(const FeedbackLaw& law) {
    std::vector<std::vector<double>> coeffs;
    for (int j = 0; j < law.A.size(); ++j)
        coeffs.emplace_back(static_cast<std::size_t>(law.A[j]), 0.0);
    return make_tracking_law(law, coeffs);
}

TrackingLaw make_tracking_law_from_poles(
    const FeedbackLaw& law, const std::vector<std::vector<std::complex<double>>>& poles) {
    std::vector<std::vector<double>> coeffs;
    for (const auto& p : poles) coeffs.push_back(coeffs_from_eigenvalues(p));
    return make_tracking_law(law, coeffs);
}

namespace {

/// Newton solve of an accumulated set of v-equations for the live u-shifts
/// they contain; remaining input shifts stay at warm values. Rank-deficient
/// but consistent systems are fine (minimum-norm step), which is exactly the
/// situation on the singular locus of expressions whose input dependence
/// cancels.
Assignment solve_constraints(const Model& model, const FeedbackLaw& law,
                             const std::vector<std::pair<const VEquation*, double>>& eqs,
                             const Assignment& base, const Assignment* warm) {
    std::set<ShiftedVar> unknown_set;
    for (const auto& [eq, rhs] : eqs)
        for (const auto& v : variables_of(eq->lhs))
            if (v.block == VarBlock::Input &&
                std::find(law.unknowns.begin(), law.unknowns.end(), v) != law.unknowns.end())
                unknown_set.insert(v);
    std::vector<ShiftedVar> unknowns(unknown_set.begin(), unknown_set.end());

    auto warm_of = [&](const ShiftedVar& w) {
        if (warm) {
            auto it = warm->find(w);
            if (it != warm->end()) return it->second;
        }
        return model.sys.u_eq[w.component - 1];
    };

    Assignment full = base;
    for (const auto& [eq, rhs] : eqs)
        for (const auto& v : variables_of(eq->lhs))
            if (v.block == VarBlock::Input && !full.count(v)) full.emplace(v, warm_of(v));
    if (unknowns.empty()) return full;

    Eigen::VectorXd x0(static_cast<Eigen::Index>(unknowns.size()));
    for (std::size_t i = 0; i < unknowns.size(); ++i)
        x0[static_cast<Eigen::Index>(i)] = full.at(unknowns[i]);

    auto fill = [&](const Eigen::VectorXd& xi) {
        Assignment p = full;
        for (std::size_t i = 0; i < unknowns.size(); ++i)
            p[unknowns[i]] = xi[static_cast<Eigen::Index>(i)];
        return p;
    };
    auto F = [&](const Eigen::VectorXd& xi) {
        Assignment p = fill(xi);
        Eigen::VectorXd r(static_cast<Eigen::Index>(eqs.size()));
        for (std::size_t i = 0; i < eqs.size(); ++i)
            r[static_cast<Eigen::Index>(i)] = eval(eqs[i].first->lhs, p) - eqs[i].second;
        return r;
    };
    auto J = [&](const Eigen::VectorXd& xi) {
        Assignment p = fill(xi);
        Eigen::MatrixXd jm(static_cast<Eigen::Index>(eqs.size()),
                           static_cast<Eigen::Index>(unknowns.size()));
        for (std::size_t i = 0; i < eqs.size(); ++i)
            for (std::size_t c = 0; c < unknowns.size(); ++c)
                jm(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) =
                    eval(diff(eqs[i].first->lhs, unknowns[c]), p);
        return jm;
    };
    NewtonResult res = newton_solve(F, J, x0, {});
    return fill(res.x);
}

}  // namespace

VSolveResult solve_v_window(const TrackingLaw& tlaw, const Model& model,
                            const std::vector<Eigen::VectorXd>& zeta_hist,
                            const Eigen::VectorXd& x, const RefWindow& ref,
                            const Assignment* warm_start, TrackingTrace* trace) {
    const FeedbackLaw& law = tlaw.law;
    if (!law.kappa_blocks) throw std::logic_error("tracking needs kappa block structure");
    if (static_cast<int>(zeta_hist.size()) < law.q1)
        throw std::logic_error("zeta history shorter than q1");

    Assignment base;
    for (int i = 0; i < model.n(); ++i) base.emplace(state_var(i + 1), x[i]);
    for (int b = 1; b <= law.q1; ++b)
        for (int c = 0; c < model.m(); ++c)
            base.emplace(zeta_var(c + 1, -b), zeta_hist[static_cast<std::size_t>(b - 1)][c]);
    if (trace) {
        trace->sources.insert("state");
        if (law.q1 > 0) trace->sources.insert("zeta-history");
        trace->sources.insert("reference-window");
        trace->sources.insert("solved-input-shifts");
    }

    VSolveResult out;
    out.v = VWindow(law.A, law.R);
    out.predictions.assign(static_cast<std::size_t>(model.m()), {});

    // Accumulated earlier-block equations with their already-computed rhs.
    std::vector<std::pair<const VEquation*, double>> acc;

    for (const auto& blk : *law.kappa_blocks) {
        // Predictions for this block's lower shifts, on the constraint
        // manifold cut out by the earlier blocks.
        Assignment point = solve_constraints(model, law, acc, base, warm_start);
        for (std::size_t c = 0; c < blk.outputs.size(); ++c) {
            const int j = blk.outputs[c];
            auto& preds = out.predictions[static_cast<std::size_t>(j - 1)];
            preds.clear();
            for (const auto& low : blk.lower_shifts[c]) {
                Assignment p = point;
                for (const auto& v : variables_of(low))
                    if (v.block == VarBlock::Input && !p.count(v))
                        p.emplace(v, model.sys.u_eq[v.component - 1]);
                preds.push_back(eval(low, p));
            }
        }

        // Shifted control laws, top to bottom inside the block.
        for (std::size_t c = 0; c < blk.outputs.size(); ++c) {
            const int j = blk.outputs[c];
            const int kap = blk.kappa[c];
            const int r = law.R[j - 1];
            const auto& a = tlaw.coeffs[static_cast<std::size_t>(j - 1)];
            const auto& preds = out.predictions[static_cast<std::size_t>(j - 1)];
            for (int gamma = 0; gamma <= r - kap; ++gamma) {
                double v = ref.at(j, kap + gamma);
                for (int beta = 0; beta < kap; ++beta) {
                    const int cidx = beta + gamma;
                    const double ycur = (cidx < kap) ? preds[static_cast<std::size_t>(cidx)]
                                                     : out.v.at(j, cidx - kap);
                    v -= a[static_cast<std::size_t>(beta)] * (ycur - ref.at(j, cidx));
                }
                out.v.at(j, gamma) = v;
            }
        }

        for (const auto& eq : law.v_equations)
            if (eq.block == blk.step) acc.emplace_back(&eq, out.v.at(eq.out_component, eq.alpha));
    }
    return out;
}

TrackingStepResult tracking_step(const TrackingLaw& tlaw, const Model& model,
                                 const std::vector<Eigen::VectorXd>& zeta_hist,
                                 const Eigen::VectorXd& x, const RefWindow& ref,
                                 const Assignment* warm_start, TrackingTrace* trace) {
    VSolveResult vres = solve_v_window(tlaw, model, zeta_hist, x, ref, warm_start, trace);
    FeedbackEval fe = evaluate_feedback(tlaw.law, model, zeta_hist, x, vres.v,
                                        Eigen::VectorXd(), warm_start);
    TrackingStepResult out;
    out.u = fe.u;
    out.v = vres.v;
    out.predictions = std::move(vres.predictions);
    out.feedback = std::move(fe);
    return out;
}

}  // namespace flatlin
