#pragma once

#include <string>
#include <vector>

#include "flatlin/model.hpp"
#include "flatlin/multi_index.hpp"
#include "flatlin/shift.hpp"

namespace flatlin {

/// Result of the new-input feasibility test for v = delta^A(phi): the listed
/// differentials (past zeta values still visible at order A, the state, and
/// the shifted outputs up to order R-1) must be linearly independent.
struct FeasibilityReport {
    MultiIndex A;
    bool feasible = false;            // full rank at the equilibrium and every sample
    bool generically_feasible = false;  // full rank at at least one point
    int rank_found = 0;               // generic (maximum observed) rank
    int rank_required = 0;
    std::vector<int> witness_ranks;   // equilibrium first, then samples
    std::vector<int> failing_points;  // indices into the witness list
    // Left-kernel basis rows at the first deficient point: coefficient vectors
    // of vanishing combinations of the listed differentials.
    Eigen::MatrixXd deficient_directions;
    std::vector<std::string> function_names;
};

/// Names and builds the function list behind the differential condition.
std::vector<Expr> feasibility_functions(const Model& model, ShiftEngine& eng,
                                        const MultiIndex& A,
                                        std::vector<std::string>* names = nullptr);

FeasibilityReport check_feasibility(const Model& model, ShiftEngine& eng, const MultiIndex& A,
                                    const SampleOptions& opts = {});

/// Convenience overload with a fresh engine.
FeasibilityReport check_feasibility(const Model& model, const MultiIndex& A,
                                    const SampleOptions& opts = {});

/// Functional-dependence oracle: true iff dh lies in span{dg} at every
/// sampled point, i.e. h is locally a function of the gs.
bool check_functional_dependence(const Expr& h, const std::vector<Expr>& gs, const Model& model,
                                 const SampleOptions& opts = {});

/// Feasibility of every A <= R, in lexicographic order.
std::vector<FeasibilityReport> feasibility_table(const Model& model,
                                                 const SampleOptions& opts = {});

}  // namespace flatlin
