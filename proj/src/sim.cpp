#include "flatlin/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace flatlin {

namespace {

std::vector<Eigen::VectorXd> default_history(const Model& model,
                                             std::vector<Eigen::VectorXd> given) {
    const int q1 = model.spec.q1;
    while (static_cast<int>(given.size()) < std::max(q1, 1))
        given.push_back(model.sys.zeta_eq);
    return given;
}

Eigen::VectorXd eval_vec(const std::vector<Expr>& es, const Assignment& p) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(es.size()));
    for (std::size_t i = 0; i < es.size(); ++i)
        out[static_cast<Eigen::Index>(i)] = eval(es[i], p);
    return out;
}

/// zeta history + state + current input as an assignment (phi may use all
/// three when q2 = 0).
Assignment measurement_assignment(const Model& model, const std::deque<Eigen::VectorXd>& hist,
                                  const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
    Assignment p;
    for (int i = 0; i < model.n(); ++i) p.emplace(state_var(i + 1), x[i]);
    for (int j = 0; j < model.m(); ++j) p.emplace(input_var(j + 1, 0), u[j]);
    for (std::size_t b = 0; b < hist.size(); ++b)
        for (int c = 0; c < model.m(); ++c)
            p.emplace(zeta_var(c + 1, -static_cast<int>(b) - 1), hist[b][c]);
    return p;
}

}  // namespace

Trajectory simulate_open_loop(const Model& model, const Eigen::VectorXd& x0,
                              const std::vector<Eigen::VectorXd>& u_seq,
                              std::vector<Eigen::VectorXd> zeta_hist0) {
    Trajectory traj;
    traj.model_id = model.sys.name;
    traj.law_id = "open-loop";
    traj.horizon = static_cast<int>(u_seq.size());
    traj.q1 = model.spec.q1;

    std::deque<Eigen::VectorXd> hist;
    for (const auto& z : default_history(model, std::move(zeta_hist0))) hist.push_back(z);

    Eigen::VectorXd x = x0;
    for (int k = 0; k < traj.horizon; ++k) {
        const Eigen::VectorXd& u = u_seq[static_cast<std::size_t>(k)];
        Assignment p = measurement_assignment(model, hist, x, u);
        StepRecord rec;
        rec.k = k;
        rec.x = x;
        rec.u = u;
        rec.zeta = eval_vec(model.sys.g, p);
        rec.y = eval_vec(model.spec.phi, p);
        traj.steps.push_back(rec);

        x = eval_vec(model.sys.f, p);
        hist.push_front(traj.steps.back().zeta);
        hist.pop_back();
    }
    return traj;
}

namespace {

/// Warm start for the next step: along a trajectory the solution's shift-a
/// value becomes the next step's shift-(a-1) value, so the previous solution
/// is re-indexed one shift down (the highest shift keeps its value as the
/// initial guess for the genuinely new unknown).
Assignment shift_warm(const Assignment& solved) {
    Assignment out;
    for (const auto& [v, val] : solved) {
        if (v.block != VarBlock::Input) continue;
        if (v.shift >= 1) out[input_var(v.component, v.shift - 1)] = val;
        if (!out.count(v)) out.emplace(v, val);
    }
    return out;
}

struct LoopCore {
    const Model& model;
    const FeedbackLaw& law;
    std::deque<Eigen::VectorXd> hist;
    Eigen::VectorXd x;
    Eigen::VectorXd z;
    Assignment warm;
    int max_iters = 0;
    double max_consistency = 0.0;

    LoopCore(const Model& model_, const FeedbackLaw& law_, const Eigen::VectorXd& x0,
             std::vector<Eigen::VectorXd> zeta_hist0)
        : model(model_), law(law_), x(x0) {
        for (const auto& zz : default_history(model_, std::move(zeta_hist0))) hist.push_back(zz);
        z.resize(law.z_dim());
        if (law.z_dim() > 0) {
            // z(0) = phi_c on the initial history/state, inputs warm-started
            // at the equilibrium.
            Assignment p = measurement_assignment(model, hist, x, model.sys.u_eq);
            std::vector<Expr> zes = collect_z_exprs();
            for (const auto& v : variables_of(std::span<const Expr>(zes)))
                if (v.block == VarBlock::Input && !p.count(v))
                    p.emplace(v, model.sys.u_eq[v.component - 1]);
            for (const auto& ze : law.z_equations) z[ze.z_index] = eval(ze.lhs, p);
        }
    }

    std::vector<Expr> collect_z_exprs() const {
        std::vector<Expr> es;
        for (const auto& ze : law.z_equations) es.push_back(ze.lhs);
        return es;
    }

    std::vector<Eigen::VectorXd> hist_vec() const {
        return {hist.begin(), hist.end()};
    }

    /// One plant step under the already-computed input.
    StepRecord advance(int k, const Eigen::VectorXd& u) {
        Assignment p = measurement_assignment(model, hist, x, u);
        StepRecord rec;
        rec.k = k;
        rec.x = x;
        rec.u = u;
        rec.zeta = eval_vec(model.sys.g, p);
        rec.y = eval_vec(model.spec.phi, p);
        x = eval_vec(model.sys.f, p);
        hist.push_front(rec.zeta);
        hist.pop_back();
        return rec;
    }
};

}  // namespace

namespace {

[[noreturn]] void abort_with_partial(const Trajectory& so_far, int k, Trajectory* partial,
                                     const FlatlinError& e) {
    if (partial) *partial = so_far;
    const std::string msg = "aborted at step " + std::to_string(k) + ": " + e.what();
    if (dynamic_cast<const SingularJacobianError*>(&e)) throw SingularJacobianError(msg);
    throw NewtonDivergenceError(msg);
}

}  // namespace

ClosedLoopResult simulate_closed_loop(const Model& model, const FeedbackLaw& law,
                                      const VSourceFn& v_source, const Eigen::VectorXd& x0,
                                      std::vector<Eigen::VectorXd> zeta_hist0, int horizon,
                                      double tol, Trajectory* partial) {
    ClosedLoopResult out;
    out.traj.model_id = model.sys.name;
    out.traj.law_id = law.kind == LawKind::Dynamic ? "dynamic" : "quasistatic";
    out.traj.horizon = horizon;
    out.traj.q1 = model.spec.q1;

    LoopCore core(model, law, x0, std::move(zeta_hist0));
    for (int k = 0; k < horizon; ++k) {
        VWindow v(law.A, law.R);
        for (int j = 1; j <= model.m(); ++j)
            for (int a = 0; a < v.width(j); ++a) v.at(j, a) = v_source(j, k + a);
        FeedbackEval fe;
        try {
            fe = evaluate_feedback(law, model, core.hist_vec(), core.x, v, core.z, &core.warm);
        } catch (const FlatlinError& e) {
            abort_with_partial(out.traj, k, partial, e);
        }
        core.warm = shift_warm(fe.solved);
        core.max_iters = std::max(core.max_iters, fe.iterations);
        core.max_consistency = std::max(core.max_consistency, fe.consistency_residual);
        core.z = fe.z_next;

        StepRecord rec = core.advance(k, fe.u);
        rec.has_v = true;
        rec.v.resize(model.m());
        for (int j = 1; j <= model.m(); ++j) rec.v[j - 1] = v.at(j, 0);
        out.traj.steps.push_back(std::move(rec));
    }

    out.report.tol = tol;
    out.report.io_residual_per_component = verify_io_behavior(out.traj, law.A);
    out.report.max_io_residual = 0.0;
    for (double r : out.report.io_residual_per_component)
        out.report.max_io_residual = std::max(out.report.max_io_residual, r);
    out.report.max_newton_iterations = core.max_iters;
    out.report.max_consistency_residual = core.max_consistency;
    out.report.pass = out.report.max_io_residual < tol;
    return out;
}

ClosedLoopResult simulate_closed_loop_tracking(const Model& model, const TrackingLaw& tlaw,
                                               const ReferenceTrajectory& ref,
                                               const Eigen::VectorXd& x0,
                                               std::vector<Eigen::VectorXd> zeta_hist0,
                                               int horizon, double tol, Trajectory* partial) {
    const FeedbackLaw& law = tlaw.law;
    ClosedLoopResult out;
    out.traj.model_id = model.sys.name;
    out.traj.law_id = "tracking";
    out.traj.horizon = horizon;
    out.traj.q1 = model.spec.q1;

    LoopCore core(model, law, x0, std::move(zeta_hist0));
    for (int k = 0; k < horizon; ++k) {
        RefWindow rw = reference_window(ref, law.R, k);
        TrackingStepResult st;
        try {
            st = tracking_step(tlaw, model, core.hist_vec(), core.x, rw, &core.warm);
        } catch (const FlatlinError& e) {
            abort_with_partial(out.traj, k, partial, e);
        }
        core.warm = shift_warm(st.feedback.solved);
        core.max_iters = std::max(core.max_iters, st.feedback.iterations);

        StepRecord rec = core.advance(k, st.u);
        rec.has_v = true;
        rec.v.resize(model.m());
        for (int j = 1; j <= model.m(); ++j) rec.v[j - 1] = st.v.at(j, 0);
        rec.has_e = true;
        rec.e.resize(model.m());
        for (int j = 1; j <= model.m(); ++j) rec.e[j - 1] = rec.y[j - 1] - ref.at(j, k);
        out.traj.steps.push_back(std::move(rec));
    }

    out.report.tol = tol;
    out.report.io_residual_per_component = verify_io_behavior(out.traj, law.A);
    for (double r : out.report.io_residual_per_component)
        out.report.max_io_residual = std::max(out.report.max_io_residual, r);
    out.report.max_newton_iterations = core.max_iters;

    // Error recursion e_[kappa^j](k) + sum_beta a^beta e_[beta](k) = 0.
    double worst = 0.0;
    for (int j = 1; j <= model.m(); ++j) {
        const int kap = law.A[j - 1];
        const auto& a = tlaw.coeffs[static_cast<std::size_t>(j - 1)];
        for (int k = 0; k + kap < horizon; ++k) {
            double r = out.traj.steps[static_cast<std::size_t>(k + kap)].e[j - 1];
            for (int beta = 0; beta < kap; ++beta)
                r += a[static_cast<std::size_t>(beta)] *
                     out.traj.steps[static_cast<std::size_t>(k + beta)].e[j - 1];
            worst = std::max(worst, std::abs(r));
        }
    }
    out.report.max_error_recursion_residual = worst;
    out.report.pass = out.report.max_io_residual < tol && worst < tol;
    return out;
}

std::vector<double> verify_io_behavior(const Trajectory& traj, const MultiIndex& A) {
    std::vector<double> out(static_cast<std::size_t>(A.size()), 0.0);
    for (int j = 1; j <= A.size(); ++j) {
        for (std::size_t k = 0; k + static_cast<std::size_t>(A[j - 1]) < traj.steps.size(); ++k) {
            const auto& rec = traj.steps[k];
            if (!rec.has_v) continue;
            const double yj = traj.steps[k + static_cast<std::size_t>(A[j - 1])].y[j - 1];
            out[static_cast<std::size_t>(j - 1)] =
                std::max(out[static_cast<std::size_t>(j - 1)], std::abs(yj - rec.v[j - 1]));
        }
    }
    return out;
}

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string fmt6(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

void write_svg(const std::string& path, const std::string& title,
               const std::vector<std::string>& names,
               const std::vector<std::vector<double>>& series) {
    static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                    "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f"};
    const int W = 640, H = 360, ml = 60, mr = 16, mt = 28, mb = 32;
    double lo = 0.0, hi = 1.0;
    bool first = true;
    std::size_t len = 0;
    for (const auto& s : series) {
        len = std::max(len, s.size());
        for (double v : s) {
            if (first) {
                lo = hi = v;
                first = false;
            }
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    if (first) lo = 0.0, hi = 1.0;
    if (hi - lo < 1e-12) {
        hi += 0.5;
        lo -= 0.5;
    }
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;

    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
        << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
    out << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
    out << "<text x=\"" << ml << "\" y=\"18\" font-family=\"monospace\" font-size=\"13\">"
        << title << "</text>\n";
    out << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << (W - ml - mr)
        << "\" height=\"" << (H - mt - mb)
        << "\" fill=\"none\" stroke=\"#888\" stroke-width=\"1\"/>\n";
    out << "<text x=\"4\" y=\"" << (mt + 10) << "\" font-family=\"monospace\" font-size=\"11\">"
        << fmt6(hi) << "</text>\n";
    out << "<text x=\"4\" y=\"" << (H - mb) << "\" font-family=\"monospace\" font-size=\"11\">"
        << fmt6(lo) << "</text>\n";
    out << "<text x=\"" << (W - mr - 40) << "\" y=\"" << (H - 8)
        << "\" font-family=\"monospace\" font-size=\"11\">k=" << (len ? len - 1 : 0)
        << "</text>\n";

    for (std::size_t s = 0; s < series.size(); ++s) {
        const auto& data = series[s];
        if (data.empty()) continue;
        out << "<polyline fill=\"none\" stroke=\"" << kColors[s % 8]
            << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double px =
                ml + (len > 1 ? static_cast<double>(i) / static_cast<double>(len - 1) : 0.5) *
                         (W - ml - mr);
            const double py = mt + (1.0 - (data[i] - lo) / (hi - lo)) * (H - mt - mb);
            out << fmt6(px) << "," << fmt6(py) << " ";
        }
        out << "\"/>\n";
        out << "<text x=\"" << (ml + 8 + 70 * static_cast<int>(s)) << "\" y=\"" << (mt + 14)
            << "\" font-family=\"monospace\" font-size=\"11\" fill=\"" << kColors[s % 8] << "\">"
            << names[s] << "</text>\n";
    }
    out << "</svg>\n";
}

}  // namespace

std::vector<std::string> emit(const Trajectory& traj, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::vector<std::string> files;

    const bool with_e = !traj.steps.empty() && traj.steps.front().has_e;
    const int n = traj.steps.empty() ? 0 : static_cast<int>(traj.steps.front().x.size());
    const int m = traj.steps.empty() ? 0 : static_cast<int>(traj.steps.front().u.size());

    const std::string csv_path = (fs::path(dir) / "trajectory.csv").string();
    {
        std::ofstream out(csv_path);
        if (!out) throw IoError("cannot write " + csv_path);
        out << "k";
        for (int i = 1; i <= n; ++i) out << ",x" << i;
        for (int j = 1; j <= m; ++j) out << ",u" << j;
        for (int j = 1; j <= m; ++j) out << ",y" << j;
        if (with_e)
            for (int j = 1; j <= m; ++j) out << ",e" << j;
        out << "\n";
        for (const auto& rec : traj.steps) {
            out << rec.k;
            for (int i = 0; i < n; ++i) out << "," << fmt(rec.x[i]);
            for (int j = 0; j < m; ++j) out << "," << fmt(rec.u[j]);
            for (int j = 0; j < m; ++j) out << "," << fmt(rec.y[j]);
            if (with_e)
                for (int j = 0; j < m; ++j) out << "," << fmt(rec.e[j]);
            out << "\n";
        }
    }
    files.push_back(csv_path);

    auto collect = [&](auto getter, int count) {
        std::vector<std::vector<double>> series(static_cast<std::size_t>(count));
        for (const auto& rec : traj.steps)
            for (int c = 0; c < count; ++c)
                series[static_cast<std::size_t>(c)].push_back(getter(rec, c));
        return series;
    };
    auto names_of = [](const std::string& base, int count) {
        std::vector<std::string> names;
        for (int c = 1; c <= count; ++c) names.push_back(base + std::to_string(c));
        return names;
    };

    struct Group {
        std::string file, title, base;
        std::vector<std::vector<double>> series;
    };
    std::vector<Group> groups;
    groups.push_back({"states.svg", traj.model_id + ": states",  "x",
                      collect([](const StepRecord& r, int c) { return r.x[c]; }, n)});
    groups.push_back({"inputs.svg", traj.model_id + ": inputs", "u",
                      collect([](const StepRecord& r, int c) { return r.u[c]; }, m)});
    groups.push_back({"outputs.svg", traj.model_id + ": flat outputs", "y",
                      collect([](const StepRecord& r, int c) { return r.y[c]; }, m)});
    if (with_e)
        groups.push_back({"errors.svg", traj.model_id + ": tracking errors", "e",
                          collect([](const StepRecord& r, int c) { return r.e[c]; }, m)});

    for (auto& g : groups) {
        const std::string path = (fs::path(dir) / g.file).string();
        write_svg(path, g.title, names_of(g.base, static_cast<int>(g.series.size())), g.series);
        files.push_back(path);
    }
    return files;
}

Trajectory load_trajectory_csv(const std::string& path, int n, int m, bool with_e) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    Trajectory traj;
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (header) {
            header = false;
            continue;
        }
        std::istringstream ls(line);
        std::string cell;
        std::vector<double> cells;
        bool first = true;
        StepRecord rec;
        while (std::getline(ls, cell, ',')) {
            if (first) {
                rec.k = std::stoi(cell);
                first = false;
            } else {
                cells.push_back(std::stod(cell));
            }
        }
        const std::size_t expect =
            static_cast<std::size_t>(n + 2 * m + (with_e ? m : 0));
        if (cells.size() != expect) throw ParseError("bad trajectory row in " + path);
        rec.x.resize(n);
        rec.u.resize(m);
        rec.y.resize(m);
        std::size_t at = 0;
        for (int i = 0; i < n; ++i) rec.x[i] = cells[at++];
        for (int j = 0; j < m; ++j) rec.u[j] = cells[at++];
        for (int j = 0; j < m; ++j) rec.y[j] = cells[at++];
        if (with_e) {
            rec.e.resize(m);
            rec.has_e = true;
            for (int j = 0; j < m; ++j) rec.e[j] = cells[at++];
        }
        traj.steps.push_back(std::move(rec));
    }
    traj.horizon = static_cast<int>(traj.steps.size());
    return traj;
}

}  // namespace flatlin
