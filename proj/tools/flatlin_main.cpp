#include <CLI11.hpp>

#include <complex>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "flatlin/feasibility.hpp"
#include "flatlin/feedback.hpp"
#include "flatlin/kappa.hpp"
#include "flatlin/model.hpp"
#include "flatlin/sim.hpp"
#include "flatlin/tracking.hpp"

namespace {

using namespace flatlin;

double env_tol(double fallback) {
    if (const char* s = std::getenv("FLATLIN_TOL")) {
        char* end = nullptr;
        const double v = std::strtod(s, &end);
        if (end != s && v > 0.0) return v;
    }
    return fallback;
}

std::vector<int> parse_int_list(const std::string& s) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stoi(item));
    return out;
}

std::vector<double> parse_double_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
    return out;
}

nlohmann::json feasibility_json(const FeasibilityReport& rep) {
    nlohmann::json j;
    j["A"] = rep.A.entries();
    j["feasible"] = rep.feasible;
    j["generically_feasible"] = rep.generically_feasible;
    j["rank_found"] = rep.rank_found;
    j["rank_required"] = rep.rank_required;
    j["witness_ranks"] = rep.witness_ranks;
    j["failing_points"] = rep.failing_points;
    j["functions"] = rep.function_names;
    return j;
}

VSourceFn csv_v_source(const std::string& path, int m) {
    ReferenceTrajectory table = ReferenceTrajectory::from_csv_file(path, m);
    return [table](int j, int k) { return table.at(j, k); };
}

std::vector<std::vector<std::complex<double>>> parse_poles(const std::string& spec,
                                                           const MultiIndex& kappa) {
    std::vector<std::vector<std::complex<double>>> out;
    std::vector<std::string> groups;
    std::stringstream ss(spec);
    std::string g;
    while (std::getline(ss, g, ';')) groups.push_back(g);
    if (static_cast<int>(groups.size()) == 1 && kappa.size() > 1) {
        // Convenience: one global set, reused when lengths match.
        auto vals = parse_double_list(groups[0]);
        for (int j = 0; j < kappa.size(); ++j) {
            if (static_cast<int>(vals.size()) != kappa[j])
                throw std::runtime_error(
                    "global pole set has " + std::to_string(vals.size()) +
                    " entries but component " + std::to_string(j + 1) + " needs " +
                    std::to_string(kappa[j]) + "; give per-component sets separated by ';'");
            out.emplace_back(vals.begin(), vals.end());
        }
        return out;
    }
    if (static_cast<int>(groups.size()) != kappa.size())
        throw std::runtime_error("expected " + std::to_string(kappa.size()) +
                                 " ';'-separated pole groups");
    for (int j = 0; j < kappa.size(); ++j) {
        auto vals = parse_double_list(groups[static_cast<std::size_t>(j)]);
        if (static_cast<int>(vals.size()) != kappa[j])
            throw std::runtime_error("component " + std::to_string(j + 1) + " needs " +
                                     std::to_string(kappa[j]) + " poles");
        out.emplace_back(vals.begin(), vals.end());
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"flatlin - exact linearization and tracking for flat discrete-time systems"};
    app.require_subcommand(1);

    SampleOptions sopts;
    app.add_option("--sample-radius", sopts.radius, "sampling half-width around the equilibrium");
    app.add_option("--samples", sopts.count, "number of random sample points");
    app.add_option("--seed", sopts.seed, "sampling seed");

    std::string model_path;

    auto* validate = app.add_subcommand("validate", "load a model and run every invariant check");
    validate->add_option("model", model_path)->required();

    auto* feas = app.add_subcommand("feasibility", "new-input feasibility test for v = shifted flat outputs");
    feas->add_option("model", model_path)->required();
    std::string a_spec;
    bool all_a = false;
    feas->add_option("--A", a_spec, "candidate multi-index, e.g. 1,2");
    feas->add_flag("--all", all_a, "scan every A <= R and print a table");

    auto* kap = app.add_subcommand("kappa", "construct the minimal multi-index kappa");
    kap->add_option("model", model_path)->required();
    std::string tiebreak;
    kap->add_option("--tiebreak", tiebreak, "output component preference, e.g. 2,1");
    bool verify_min = false;
    kap->add_flag("--verify-minimal", verify_min, "exhaustively confirm minimality");

    auto* synth = app.add_subcommand("synthesize", "synthesize an exact-linearizing feedback");
    synth->add_option("model", model_path)->required();
    std::string synth_a, out_file;
    bool use_kappa = false, force_dynamic = false, force_quasistatic = false;
    synth->add_option("--A", synth_a, "multi-index of the new input");
    synth->add_flag("--kappa", use_kappa, "use the minimal kappa from the procedure");
    synth->add_flag("--dynamic", force_dynamic, "dynamic law with controller state z");
    synth->add_flag("--quasistatic", force_quasistatic, "quasi-static law (A must equal kappa or have #A = n)");
    synth->add_option("--out", out_file, "write the law descriptor JSON here");

    auto* sim = app.add_subcommand("simulate", "closed-loop simulation and verification");
    sim->add_option("model", model_path)->required();
    std::string law_file, v_csv, ref_csv, poles_spec, x0_spec, out_dir;
    int horizon = 50;
    bool deadbeat = false;
    std::uint64_t sim_seed = 0;
    sim->add_option("--law", law_file, "law descriptor from 'synthesize'")->required();
    sim->add_option("--v", v_csv, "exogenous v sequence CSV (k,v1..vm)");
    sim->add_option("--ref", ref_csv, "reference trajectory CSV (k,y1d..ymd)");
    sim->add_option("--poles", poles_spec, "tracking poles, ';' separated per component");
    sim->add_flag("--deadbeat", deadbeat, "all error coefficients zero");
    sim->add_option("--x0", x0_spec, "initial state, comma separated")->required();
    sim->add_option("--horizon", horizon, "number of steps");
    sim->add_option("--out", out_dir, "output directory for CSV and plots");
    sim->add_option("--sim-seed", sim_seed, "seed recorded in the trajectory metadata");

    CLI11_PARSE(app, argc, argv);

    try {
        if (validate->parsed()) {
            Model model = load_model(model_path, false);
            ValidationReport rep = validate_model(model, sopts);
            std::cout << "model " << model.sys.name << ": n=" << model.n() << " m=" << model.m()
                      << " R=" << model.spec.R.str() << " q1=" << model.spec.q1 << "\n"
                      << rep.str();
            std::cout << (rep.all_pass() ? "all checks passed\n" : "validation FAILED\n");
            return rep.all_pass() ? 0 : 1;
        }

        if (feas->parsed()) {
            Model model = load_model(model_path, false);
            if (all_a) {
                auto table = feasibility_table(model, sopts);
                int min_feasible = -1;
                std::cout << "A        #A  feasible  rank/required\n";
                for (const auto& rep : table) {
                    // "gen" marks candidates with full rank at generic points
                    // but a singular locus through a sampled point.
                    const char* verdict =
                        rep.feasible ? "yes" : (rep.generically_feasible ? "gen" : "no ");
                    std::cout << rep.A.str() << "    " << rep.A.total() << "   " << verdict
                              << "       " << rep.rank_found << "/" << rep.rank_required << "\n";
                    if (rep.feasible && (min_feasible < 0 || rep.A.total() < min_feasible))
                        min_feasible = rep.A.total();
                }
                std::cout << "minimal feasible #A = " << min_feasible << "\n";
                return 0;
            }
            if (a_spec.empty()) throw std::runtime_error("need --A or --all");
            FeasibilityReport rep =
                check_feasibility(model, MultiIndex(parse_int_list(a_spec)), sopts);
            std::cout << feasibility_json(rep).dump(2) << "\n";
            return rep.feasible ? 0 : 1;
        }

        if (kap->parsed()) {
            Model model = load_model(model_path, false);
            TiebreakPolicy policy;
            if (!tiebreak.empty()) policy.output_preference = parse_int_list(tiebreak);
            KappaResult res = compute_kappa(model, policy, sopts);
            std::cout << res.table();
            std::cout << "defining equations (v_i = shifted outputs, original coordinates):\n";
            for (const auto& blk : res.blocks)
                for (std::size_t c = 0; c < blk.outputs.size(); ++c)
                    std::cout << "  v" << blk.step << "." << (c + 1) << " = delta^"
                              << blk.kappa[c] << "(phi" << blk.outputs[c]
                              << ") = " << to_prefix(blk.v_defs[c]) << "\n";
            if (verify_min) {
                verify_kappa_minimal(model, res, sopts);
                std::cout << "minimality verified: no feasible A <= R with #A < "
                          << res.kappa.total() << "\n";
            }
            return 0;
        }

        if (synth->parsed()) {
            Model model = load_model(model_path, false);
            FeedbackLaw law;
            if (use_kappa) {
                KappaResult kres = compute_kappa(model, {}, sopts);
                law = force_dynamic ? synthesize_general(model, kres.kappa, sopts)
                                    : synthesize_from_kappa(model, kres, sopts);
            } else {
                if (synth_a.empty()) throw std::runtime_error("need --A or --kappa");
                MultiIndex A(parse_int_list(synth_a));
                law = synthesize_general(model, A, sopts);
                if (force_quasistatic && law.kind != LawKind::QuasiStatic)
                    throw std::runtime_error(
                        "#A > n: this A needs a dynamic law (controller state of dimension " +
                        std::to_string(A.total() - model.n()) + ")");
            }
            const std::string text = law_to_json(law);
            if (out_file.empty()) {
                std::cout << text << "\n";
            } else {
                std::ofstream out(out_file);
                if (!out) throw IoError("cannot write " + out_file);
                out << text << "\n";
                std::cout << "law written to " << out_file << "\n";
            }
            return 0;
        }

        if (sim->parsed()) {
            Model model = load_model(model_path, false);
            std::ifstream in(law_file);
            if (!in) throw IoError("cannot open law file: " + law_file);
            std::stringstream buf;
            buf << in.rdbuf();
            FeedbackLaw law = law_from_json(buf.str());

            auto x0v = parse_double_list(x0_spec);
            if (static_cast<int>(x0v.size()) != model.n())
                throw std::runtime_error("--x0 needs n = " + std::to_string(model.n()) +
                                         " values");
            Eigen::VectorXd x0(model.n());
            for (int i = 0; i < model.n(); ++i) x0[i] = x0v[static_cast<std::size_t>(i)];

            const double tol = env_tol(1e-8);
            ClosedLoopResult result;
            if (!v_csv.empty()) {
                result = simulate_closed_loop(model, law, csv_v_source(v_csv, model.m()), x0, {},
                                              horizon, tol);
            } else if (!ref_csv.empty()) {
                ReferenceTrajectory ref = ReferenceTrajectory::from_csv_file(ref_csv, model.m());
                TrackingLaw tlaw =
                    deadbeat ? make_tracking_law_deadbeat(law)
                             : make_tracking_law_from_poles(law, parse_poles(poles_spec, law.A));
                result = simulate_closed_loop_tracking(model, tlaw, ref, x0, {}, horizon, tol);
            } else {
                throw std::runtime_error("need --v or --ref");
            }
            result.traj.seed = sim_seed;

            std::cout << "horizon " << horizon << ", max IO residual "
                      << result.report.max_io_residual;
            if (!ref_csv.empty())
                std::cout << ", max error-recursion residual "
                          << result.report.max_error_recursion_residual;
            std::cout << ", Newton iterations <= " << result.report.max_newton_iterations
                      << ", tol " << tol << "\n";
            if (!out_dir.empty()) {
                auto files = emit(result.traj, out_dir);
                for (const auto& f : files) std::cout << "wrote " << f << "\n";
            }
            std::cout << (result.report.pass ? "PASS\n" : "FAIL\n");
            return result.report.pass ? 0 : 1;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
