#include "flatlin/model.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "flatlin/newton.hpp"
#include "flatlin/shift.hpp"

namespace flatlin {

Assignment equilibrium_assignment(const DiscreteSystem& sys, int lu, int lz) {
    Assignment p;
    for (int i = 0; i < sys.n; ++i) p.emplace(state_var(i + 1), sys.x_eq[i]);
    for (int j = 0; j < sys.m; ++j)
        for (int a = 0; a <= lu; ++a) p.emplace(input_var(j + 1, a), sys.u_eq[j]);
    for (int c = 0; c < sys.m; ++c)
        for (int b = 1; b <= lz; ++b) p.emplace(zeta_var(c + 1, -b), sys.zeta_eq[c]);
    return p;
}

Assignment sample_assignment(const DiscreteSystem& sys, std::mt19937_64& rng, double radius,
                             int lu, int lz) {
    std::uniform_real_distribution<double> d(-radius, radius);
    Assignment p = equilibrium_assignment(sys, lu, lz);
    for (auto& [v, val] : p) val += d(rng);
    return p;
}

Eigen::VectorXd equilibrium_flat_output(const Model& model) {
    Assignment p = equilibrium_assignment(model.sys, std::max(model.spec.q2, 1),
                                          std::max(model.spec.q1, 1));
    Eigen::VectorXd y0(model.m());
    for (int j = 0; j < model.m(); ++j)
        y0[j] = eval(model.spec.phi[static_cast<std::size_t>(j)], p);
    return y0;
}

int numeric_rank(const Eigen::MatrixXd& J) {
    if (J.rows() == 0 || J.cols() == 0) return 0;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(J);
    const auto& s = svd.singularValues();
    if (s.size() == 0 || s[0] == 0.0) return 0;
    const double tau = static_cast<double>(std::max(J.rows(), J.cols())) *
                       std::numeric_limits<double>::epsilon() * s[0];
    int r = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i)
        if (s[i] > tau) ++r;
    return r;
}

namespace {

std::vector<ShiftedVar> xu_vars(const DiscreteSystem& sys) {
    std::vector<ShiftedVar> ws;
    for (int i = 0; i < sys.n; ++i) ws.push_back(state_var(i + 1));
    for (int j = 0; j < sys.m; ++j) ws.push_back(input_var(j + 1, 0));
    return ws;
}

std::string point_note(int index) {
    return index < 0 ? "equilibrium" : ("sample " + std::to_string(index));
}

}  // namespace

RankCheck check_submersivity(const Model& model, const SampleOptions& opts) {
    const auto& sys = model.sys;
    RankCheck rc;
    rc.required = sys.n;
    std::vector<ShiftedVar> ws = xu_vars(sys);
    std::mt19937_64 rng(opts.seed);
    rc.pass = true;
    for (int s = -1; s < opts.count; ++s) {
        Assignment p = (s < 0) ? equilibrium_assignment(sys, 0, 1)
                               : sample_assignment(sys, rng, opts.radius, 0, 1);
        Eigen::MatrixXd J = jacobian(std::span<const Expr>(sys.f), std::span<const ShiftedVar>(ws), p);
        const int r = numeric_rank(J);
        rc.ranks.push_back(r);
        if (r != sys.n) {
            rc.pass = false;
            if (rc.note.empty())
                rc.note = "rank " + std::to_string(r) + " < " + std::to_string(sys.n) + " at " +
                          point_note(s);
        }
    }
    return rc;
}

RankCheck check_extension_regularity(const Model& model, const SampleOptions& opts) {
    const auto& sys = model.sys;
    RankCheck rc;
    rc.required = sys.n + sys.m;
    std::vector<Expr> fg = sys.f;
    fg.insert(fg.end(), sys.g.begin(), sys.g.end());
    std::vector<ShiftedVar> ws = xu_vars(sys);
    std::mt19937_64 rng(opts.seed + 1);
    rc.pass = true;
    for (int s = -1; s < opts.count; ++s) {
        Assignment p = (s < 0) ? equilibrium_assignment(sys, 0, 1)
                               : sample_assignment(sys, rng, opts.radius, 0, 1);
        Eigen::MatrixXd J = jacobian(std::span<const Expr>(fg), std::span<const ShiftedVar>(ws), p);
        const int r = numeric_rank(J);
        rc.ranks.push_back(r);
        if (s < 0) {
            Eigen::JacobiSVD<Eigen::MatrixXd> svd(J);
            const auto& sv = svd.singularValues();
            const double cond = (sv.size() && sv[sv.size() - 1] > 0.0)
                                    ? sv[0] / sv[sv.size() - 1]
                                    : std::numeric_limits<double>::infinity();
            std::ostringstream os;
            os << "equilibrium condition number " << cond;
            rc.note = os.str();
        }
        if (r != rc.required) {
            rc.pass = false;
            rc.note += (rc.note.empty() ? "" : "; ") + std::string("rank ") + std::to_string(r) +
                       " < " + std::to_string(rc.required) + " at " + point_note(s);
        }
    }
    return rc;
}

ResidualCheck check_equilibrium(const Model& model, double tol) {
    const auto& sys = model.sys;
    ResidualCheck rc;
    rc.tol = tol;
    Assignment p = equilibrium_assignment(sys, 0, 1);
    double worst = 0.0;
    for (int i = 0; i < sys.n; ++i)
        worst = std::max(worst,
                         std::abs(eval(sys.f[static_cast<std::size_t>(i)], p) - sys.x_eq[i]));
    for (int c = 0; c < sys.m; ++c)
        worst = std::max(worst,
                         std::abs(eval(sys.g[static_cast<std::size_t>(c)], p) - sys.zeta_eq[c]));
    rc.max_residual = worst;
    rc.pass = worst < tol;
    return rc;
}

namespace {

/// y-window values delta^alpha(phi^j), alpha = 0..R[j], at a manifold point.
Assignment flat_window_at(const Model& model, ShiftEngine& eng, const Assignment& p) {
    Assignment y;
    for (int j = 1; j <= model.m(); ++j)
        for (int a = 0; a <= model.spec.R[j - 1]; ++a)
            y.emplace(flat_var(j, a), eval(eng.shifted_phi(j, a), p));
    return y;
}

}  // namespace

ResidualCheck check_flat_identity(const Model& model, const SampleOptions& opts, double tol) {
    ResidualCheck rc;
    rc.tol = tol;
    ShiftEngine eng(model);
    const int lu = model.spec.R.max_entry() + model.spec.q2 + 1;
    const int lz = std::max(model.spec.q1, 1);
    std::mt19937_64 rng(opts.seed + 2);
    double worst = 0.0;
    for (int s = 0; s < opts.count; ++s) {
        Assignment p = sample_assignment(model.sys, rng, opts.radius, lu, lz);
        Assignment y = flat_window_at(model, eng, p);
        for (int i = 0; i < model.n(); ++i) {
            const double xi = eval(model.spec.Fx[static_cast<std::size_t>(i)], y);
            worst = std::max(worst, std::abs(xi - p.at(state_var(i + 1))));
        }
        for (int j = 0; j < model.m(); ++j) {
            const double uj = eval(model.spec.Fu[static_cast<std::size_t>(j)], y);
            worst = std::max(worst, std::abs(uj - p.at(input_var(j + 1, 0))));
        }
    }
    rc.max_residual = worst;
    rc.pass = worst < tol;
    if (!rc.pass) rc.note = "max residual " + std::to_string(worst);
    return rc;
}

RankCheck check_parameterization_submersion(const Model& model, const SampleOptions& opts) {
    RankCheck rc;
    rc.required = model.n() + model.m();
    ShiftEngine eng(model);
    const int lu = model.spec.R.max_entry() + model.spec.q2 + 1;
    const int lz = std::max(model.spec.q1, 1);
    std::vector<ShiftedVar> ws;
    for (int j = 1; j <= model.m(); ++j)
        for (int a = 0; a <= model.spec.R[j - 1]; ++a) ws.push_back(flat_var(j, a));
    std::vector<Expr> fxu = model.spec.Fx;
    fxu.insert(fxu.end(), model.spec.Fu.begin(), model.spec.Fu.end());
    std::mt19937_64 rng(opts.seed + 3);
    rc.pass = true;
    for (int s = 0; s < opts.count; ++s) {
        Assignment p = sample_assignment(model.sys, rng, opts.radius, lu, lz);
        Assignment y = flat_window_at(model, eng, p);
        Eigen::MatrixXd J =
            jacobian(std::span<const Expr>(fxu), std::span<const ShiftedVar>(ws), y);
        const int r = numeric_rank(J);
        rc.ranks.push_back(r);
        if (r != rc.required) {
            rc.pass = false;
            if (rc.note.empty())
                rc.note = "rank " + std::to_string(r) + " < " + std::to_string(rc.required) +
                          " at " + point_note(s);
        }
    }
    return rc;
}

ResidualCheck check_psi(const Model& model, const SampleOptions& opts) {
    ResidualCheck rc;
    rc.tol = 1e-8;
    const auto& sys = model.sys;
    ShiftEngine eng(model);
    std::mt19937_64 rng(opts.seed + 4);
    double worst = 0.0;
    const int n = sys.n, m = sys.m;
    for (int s = 0; s < opts.count; ++s) {
        Assignment prev = sample_assignment(sys, rng, opts.radius, 0, 1);
        // Forward image of the sampled point.
        Assignment cur;
        for (int i = 0; i < n; ++i)
            cur.emplace(state_var(i + 1), eval(sys.f[static_cast<std::size_t>(i)], prev));
        for (int c = 0; c < m; ++c)
            cur.emplace(zeta_var(c + 1, -1), eval(sys.g[static_cast<std::size_t>(c)], prev));
        for (int j = 0; j < m; ++j) cur.emplace(input_var(j + 1, 0), sys.u_eq[j]);

        if (sys.has_closed_form_psi()) {
            for (int i = 0; i < n; ++i)
                worst = std::max(worst, std::abs(eval(sys.psi_x[static_cast<std::size_t>(i)], cur) -
                                                 prev.at(state_var(i + 1))));
            for (int j = 0; j < m; ++j)
                worst = std::max(worst, std::abs(eval(sys.psi_u[static_cast<std::size_t>(j)], cur) -
                                                 prev.at(input_var(j + 1, 0))));
        }
        // Newton inverse must recover the same point (cross-check, and the
        // only check when no closed form is given).
        Assignment back = eng.backward_point(cur);
        for (int i = 0; i < n; ++i)
            worst = std::max(worst,
                             std::abs(back.at(state_var(i + 1)) - prev.at(state_var(i + 1))));
        for (int j = 0; j < m; ++j)
            worst = std::max(worst,
                             std::abs(back.at(input_var(j + 1, 0)) - prev.at(input_var(j + 1, 0))));
    }
    rc.max_residual = worst;
    rc.pass = worst < rc.tol;
    return rc;
}

namespace {

void structural_check(const Model& model) {
    const auto& sys = model.sys;
    const auto& spec = model.spec;
    if (static_cast<int>(sys.f.size()) != sys.n)
        throw InvariantViolation("f-count", "expected n entries");
    if (static_cast<int>(sys.g.size()) != sys.m)
        throw InvariantViolation("g-count", "expected m entries");
    if (static_cast<int>(spec.phi.size()) != sys.m)
        throw InvariantViolation("phi-count", "expected m entries");
    if (static_cast<int>(spec.Fx.size()) != sys.n)
        throw InvariantViolation("Fx-count", "expected n entries");
    if (static_cast<int>(spec.Fu.size()) != sys.m)
        throw InvariantViolation("Fu-count", "expected m entries");
    if (spec.R.size() != sys.m) throw InvariantViolation("R-size", "expected m entries");
    if (!spec.R.nonnegative()) throw InvariantViolation("R-range", "negative entry");
    if (sys.x_eq.size() != sys.n || sys.u_eq.size() != sys.m)
        throw InvariantViolation("equilibrium-size", "dimension mismatch");

    auto check_xu_only = [](const std::vector<Expr>& es, const std::string& who) {
        for (const auto& e : es)
            for (const auto& v : variables_of(e)) {
                const bool okx = v.block == VarBlock::State;
                const bool oku = v.block == VarBlock::Input && v.shift == 0;
                if (!okx && !oku)
                    throw InvariantViolation(who + "-domain", "unexpected variable " + to_string(v));
            }
    };
    check_xu_only(sys.f, "f");
    check_xu_only(sys.g, "g");

    for (const auto& e : sys.psi_x)
        for (const auto& v : variables_of(e))
            if (!(v.block == VarBlock::State || (v.block == VarBlock::Zeta && v.shift == -1)))
                throw InvariantViolation("psi-domain", "unexpected variable " + to_string(v));
    for (const auto& e : sys.psi_u)
        for (const auto& v : variables_of(e))
            if (!(v.block == VarBlock::State || (v.block == VarBlock::Zeta && v.shift == -1)))
                throw InvariantViolation("psi-domain", "unexpected variable " + to_string(v));

    // phi uses no zeta-shift older than -q1 and no u-shift beyond q2.
    for (const auto& e : spec.phi)
        for (const auto& v : variables_of(e)) {
            if (v.block == VarBlock::State) continue;
            if (v.block == VarBlock::Zeta && -v.shift <= spec.q1) continue;
            if (v.block == VarBlock::Input && v.shift <= spec.q2) continue;
            throw InvariantViolation("phi-domain", "unexpected variable " + to_string(v));
        }

    // Fx in y_[0,R-1], Fu in y_[0,R]; R matches the highest shifts actually used.
    std::vector<int> max_shift(static_cast<std::size_t>(sys.m), -1);
    for (const auto& e : spec.Fx)
        for (const auto& v : variables_of(e)) {
            if (v.block != VarBlock::FlatOutput)
                throw InvariantViolation("Fx-domain", "unexpected variable " + to_string(v));
            if (v.shift > spec.R[v.component - 1] - 1)
                throw InvariantViolation("Fx-domain", to_string(v) + " beyond R-1");
            auto& ms = max_shift[static_cast<std::size_t>(v.component - 1)];
            ms = std::max(ms, v.shift);
        }
    for (const auto& e : spec.Fu)
        for (const auto& v : variables_of(e)) {
            if (v.block != VarBlock::FlatOutput)
                throw InvariantViolation("Fu-domain", "unexpected variable " + to_string(v));
            if (v.shift > spec.R[v.component - 1])
                throw InvariantViolation("Fu-domain", to_string(v) + " beyond R");
            auto& ms = max_shift[static_cast<std::size_t>(v.component - 1)];
            ms = std::max(ms, v.shift);
        }
    for (int j = 0; j < sys.m; ++j)
        if (max_shift[static_cast<std::size_t>(j)] != spec.R[j])
            throw InvariantViolation(
                "R-crosscheck", "component " + std::to_string(j + 1) + ": declared R " +
                                    std::to_string(spec.R[j]) + ", highest used shift " +
                                    std::to_string(max_shift[static_cast<std::size_t>(j)]));
}

}  // namespace

bool ValidationReport::all_pass() const {
    return std::all_of(items.begin(), items.end(), [](const Item& i) { return i.pass; });
}

std::string ValidationReport::str() const {
    std::ostringstream os;
    for (const auto& i : items) {
        os << (i.pass ? "  [ok]   " : "  [FAIL] ") << i.name;
        if (!i.detail.empty()) os << "  (" << i.detail << ")";
        os << "\n";
    }
    return os.str();
}

ValidationReport validate_model(const Model& model, const SampleOptions& opts) {
    structural_check(model);
    ValidationReport rep;
    auto add_rank = [&rep](const std::string& name, const RankCheck& rc) {
        std::string detail = "required " + std::to_string(rc.required);
        if (!rc.note.empty()) detail += "; " + rc.note;
        rep.items.push_back({name, rc.pass, detail});
    };
    auto add_res = [&rep](const std::string& name, const ResidualCheck& rc) {
        std::ostringstream os;
        os << "max residual " << rc.max_residual << " (tol " << rc.tol << ")";
        rep.items.push_back({name, rc.pass, os.str()});
    };

    add_res("equilibrium-fixed-point", check_equilibrium(model));
    add_rank("submersivity", check_submersivity(model, opts));
    add_rank("extension-regularity", check_extension_regularity(model, opts));
    add_res("psi-inverse", check_psi(model, opts));
    add_rank("parameterization-submersion", check_parameterization_submersion(model, opts));
    add_res("flat-identity", check_flat_identity(model, opts));
    return rep;
}

namespace {

std::vector<Expr> parse_expr_list(const nlohmann::json& arr,
                                  const std::map<std::string, double>& params,
                                  const std::string& who) {
    if (!arr.is_array()) throw ParseError(who + " must be an array of expressions");
    std::vector<Expr> out;
    for (const auto& s : arr) {
        if (!s.is_string()) throw ParseError(who + " entries must be strings");
        out.push_back(parse_prefix(s.get<std::string>(), &params));
    }
    return out;
}

Eigen::VectorXd parse_vector(const nlohmann::json& arr, const std::string& who) {
    if (!arr.is_array()) throw ParseError(who + " must be an array");
    Eigen::VectorXd v(arr.size());
    for (std::size_t i = 0; i < arr.size(); ++i) v[static_cast<Eigen::Index>(i)] = arr[i].get<double>();
    return v;
}

}  // namespace

Model parse_model_json(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text, nullptr, true, true);  // allow comments
    } catch (const std::exception& e) {
        throw ParseError(std::string("model JSON: ") + e.what());
    }

    Model model;
    auto& sys = model.sys;
    auto& spec = model.spec;
    try {
        sys.name = j.value("name", "model");
        sys.n = j.at("n").get<int>();
        sys.m = j.at("m").get<int>();
        if (j.contains("params"))
            for (const auto& [k, v] : j.at("params").items())
                sys.params.emplace(k, v.get<double>());
        sys.f = parse_expr_list(j.at("f"), sys.params, "f");
        sys.g = parse_expr_list(j.at("g"), sys.params, "g");
        if (j.contains("psi_x")) sys.psi_x = parse_expr_list(j.at("psi_x"), sys.params, "psi_x");
        if (j.contains("psi_u")) sys.psi_u = parse_expr_list(j.at("psi_u"), sys.params, "psi_u");
        spec.phi = parse_expr_list(j.at("phi"), sys.params, "phi");
        spec.q1 = j.at("q1").get<int>();
        spec.q2 = j.at("q2").get<int>();
        spec.Fx = parse_expr_list(j.at("Fx"), sys.params, "Fx");
        spec.Fu = parse_expr_list(j.at("Fu"), sys.params, "Fu");
        spec.R = MultiIndex(j.at("R").get<std::vector<int>>());
        sys.x_eq = parse_vector(j.at("equilibrium").at("x"), "equilibrium.x");
        sys.u_eq = parse_vector(j.at("equilibrium").at("u"), "equilibrium.u");
        if (j.contains("aux")) {
            AuxRealization aux;
            const auto& a = j.at("aux");
            aux.raw_f = parse_expr_list(a.at("raw_f"), sys.params, "aux.raw_f");
            aux.to_bar = parse_expr_list(a.at("input_transform"), sys.params, "aux.input_transform");
            aux.from_bar = parse_expr_list(a.at("input_transform_inverse"), sys.params,
                                           "aux.input_transform_inverse");
            model.aux = std::move(aux);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("model JSON: ") + e.what());
    }

    Assignment eq;
    for (int i = 0; i < sys.n; ++i) eq.emplace(state_var(i + 1), sys.x_eq[i]);
    for (int jj = 0; jj < sys.m; ++jj) eq.emplace(input_var(jj + 1, 0), sys.u_eq[jj]);
    sys.zeta_eq.resize(sys.m);
    for (int c = 0; c < sys.m; ++c) sys.zeta_eq[c] = eval(sys.g[static_cast<std::size_t>(c)], eq);
    return model;
}

Model load_model(const std::string& path, bool validate, const SampleOptions& opts) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open model file: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    Model model = parse_model_json(buf.str());
    if (validate) {
        ValidationReport rep = validate_model(model, opts);
        if (!rep.all_pass()) {
            for (const auto& item : rep.items)
                if (!item.pass) throw InvariantViolation(item.name, item.detail);
        }
    }
    return model;
}

}  // namespace flatlin
