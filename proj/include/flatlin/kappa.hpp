#pragma once

#include <string>
#include <vector>

#include "flatlin/feasibility.hpp"
#include "flatlin/model.hpp"
#include "flatlin/shift.hpp"

namespace flatlin {

/// Preference order over flat-output components used when several component
/// subsets achieve the step rank. Empty means natural order 1..m.
struct TiebreakPolicy {
    std::vector<int> output_preference;
};

struct KappaBlock {
    int step = 0;                  // 1-based step index i
    std::vector<int> outputs;      // selected flat-output components y_i
    std::vector<int> inputs;       // selected input components u_i
    std::vector<int> kappa;        // kappa_i, aligned with `outputs`
    int m_i = 0;
    // delta^{kappa^j}(phi^j) per selected output, original coordinates.
    std::vector<Expr> v_defs;
    // phi^j_[0..kappa^j-1] per selected output, original coordinates.
    std::vector<std::vector<Expr>> lower_shifts;
    // Earlier blocks whose v-equations constrain the lower shifts.
    std::vector<int> depends_on_blocks;
};

struct KappaResult {
    MultiIndex kappa;               // indexed by output component j
    std::vector<int> kappa_blockwise;  // (kappa_1, ..., kappa_s) flattened
    std::vector<KappaBlock> blocks;
    MultiIndex R;
    int n = 0;
    bool zeta_independent = false;
    std::vector<std::string> warnings;

    std::string table() const;
};

/// The step-by-step construction of the minimal multi-index kappa for flat
/// outputs that do not depend on future input values. Dependence on the
/// remaining inputs is decided in the step's transformed coordinates
/// (earlier inputs replaced by shifted outputs), via the chart Jacobian,
/// with |partial| > 1e-9 at at least one sample point as the cutoff.
KappaResult compute_kappa(const Model& model, const TiebreakPolicy& policy = {},
                          const SampleOptions& opts = {});

/// Exhaustively confirms no A <= R with #A < #kappa is feasible and that
/// A = kappa itself is. Throws MinimalityViolated on a counterexample,
/// which would signal an implementation bug.
bool verify_kappa_minimal(const Model& model, const KappaResult& result,
                          const SampleOptions& opts = {});

}  // namespace flatlin
