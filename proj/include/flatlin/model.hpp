#pragma once

#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "flatlin/expr.hpp"
#include "flatlin/multi_index.hpp"

namespace flatlin {

/// Auxiliary model data: an alternative "raw" realization of the same state
/// trajectory plus the static input transformation connecting the two.
/// Used by the robot model (exact discretization vs. simplified form).
struct AuxRealization {
    std::vector<Expr> raw_f;     // raw dynamics in (x, u_raw)
    std::vector<Expr> to_bar;    // u_bar = tau(x, u_raw); Input vars mean u_raw
    std::vector<Expr> from_bar;  // u_raw = tau^{-1}(x, u_bar); Input vars mean u_bar
};

struct DiscreteSystem {
    std::string name;
    int n = 0;
    int m = 0;
    std::map<std::string, double> params;
    std::vector<Expr> f;  // n expressions in (x, u)
    std::vector<Expr> g;  // m expressions in (x, u), extension output
    // Closed-form inverse of the extension map, expressions in (x, zeta[-1]).
    // Empty when the model relies on the Newton fallback only.
    std::vector<Expr> psi_x;
    std::vector<Expr> psi_u;
    Eigen::VectorXd x_eq, u_eq, zeta_eq;

    bool has_closed_form_psi() const { return !psi_x.empty() && !psi_u.empty(); }
};

struct FlatSpec {
    int q1 = 0;  // deepest zeta backward shift used by phi
    int q2 = 0;  // highest input forward shift used by phi
    std::vector<Expr> phi;  // m expressions in (zeta[-q1..-1], x, u[0..q2])
    std::vector<Expr> Fx;   // n expressions in y[0..R-1]
    std::vector<Expr> Fu;   // m expressions in y[0..R]
    MultiIndex R;
};

struct Model {
    DiscreteSystem sys;
    FlatSpec spec;
    std::optional<AuxRealization> aux;

    int n() const { return sys.n; }
    int m() const { return sys.m; }
};

struct SampleOptions {
    double radius = 0.1;     // per-coordinate half-width around the equilibrium
    int count = 25;          // random samples (the equilibrium is extra)
    std::uint64_t seed = 20240901ull;
};

/// Assignment with every manifold coordinate at its equilibrium value:
/// x = x0, u_[0..lu] = u0, zeta_[-1..-lz] = zeta0.
Assignment equilibrium_assignment(const DiscreteSystem& sys, int lu, int lz);

/// Uniform per-coordinate perturbation of the equilibrium assignment.
Assignment sample_assignment(const DiscreteSystem& sys, std::mt19937_64& rng, double radius,
                             int lu, int lz);

/// Equilibrium value of the flat output, phi evaluated at the equilibrium.
Eigen::VectorXd equilibrium_flat_output(const Model& model);

/// SVD rank with threshold max(rows,cols) * machine epsilon * sigma_max.
int numeric_rank(const Eigen::MatrixXd& J);

struct RankCheck {
    bool pass = false;
    int required = 0;
    std::vector<int> ranks;  // equilibrium first, then samples
    std::string note;
};

struct ResidualCheck {
    bool pass = false;
    double max_residual = 0.0;
    double tol = 0.0;
    std::string note;
};

/// rank d_(x,u) f == n at the equilibrium and sampled neighbors.
RankCheck check_submersivity(const Model& model, const SampleOptions& opts = {});

/// The stacked (f,g) Jacobian is regular; note carries the equilibrium
/// condition number.
RankCheck check_extension_regularity(const Model& model, const SampleOptions& opts = {});

ResidualCheck check_equilibrium(const Model& model, double tol = 1e-10);

/// Substitutes y_[alpha] = delta^alpha(phi) values into (Fx, Fu) at sampled
/// manifold points and compares with (x, u).
ResidualCheck check_flat_identity(const Model& model, const SampleOptions& opts = {},
                                  double tol = 1e-10);

/// Jacobian of (Fx, Fu) w.r.t. y_[0,R] has full row rank n+m at sampled
/// points (y-windows are manifold images, so they stay in the valid region).
RankCheck check_parameterization_submersion(const Model& model, const SampleOptions& opts = {});

/// Closed-form psi against the Newton inverse of (f,g), plus the round trip
/// psi(f(x,u), g(x,u)) = (x,u).
ResidualCheck check_psi(const Model& model, const SampleOptions& opts = {});

struct ValidationReport {
    struct Item {
        std::string name;
        bool pass = false;
        std::string detail;
    };
    std::vector<Item> items;
    bool all_pass() const;
    std::string str() const;
};

/// Runs every load-time invariant. Structural violations throw
/// InvariantViolation immediately; numeric checks are collected.
ValidationReport validate_model(const Model& model, const SampleOptions& opts = {});

/// Loads a model JSON file and (by default) validates it; a failed
/// validation throws InvariantViolation naming the failing invariant.
Model load_model(const std::string& path, bool validate = true, const SampleOptions& opts = {});

/// Parse a model from JSON text (used by load_model and tests).
Model parse_model_json(const std::string& json_text);

}  // namespace flatlin
