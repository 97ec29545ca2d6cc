#pragma once

#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "dispatch/common.hpp"

namespace dispatch {

/// One sparse row of a stochastic matrix: (column, probability) pairs,
/// columns strictly increasing.
using SparseRow = std::vector<std::pair<int, double>>;

struct AnchoredSolution {
    Eigen::VectorXd values;  ///< differential values, values[anchor] == 0
    double avg_cost = 0.0;   ///< the mu in  v = c - mu/2 e + P v
    double residual = 0.0;   ///< max-abs violation of the fixed-point equation
};

/// Solves the average-cost evaluation system  v = c - (mu/2) e + P v  with
/// the extra constraint v[anchor] = 0, by dense LU on the bordered square
/// system. If the chain is not unichain the square system is singular; the
/// solve then restricts to the closed communicating class containing the
/// anchor and propagates values to transient states by one-step lookahead.
AnchoredSolution solve_anchored_average_cost(const std::vector<SparseRow>& rows,
                                             const Eigen::VectorXd& cost,
                                             int anchor);

/// Max-abs residual of  v - (c - mu/2 e + P v).
double bellman_residual(const std::vector<SparseRow>& rows, const Eigen::VectorXd& cost,
                        const Eigen::VectorXd& values, double avg_cost);

/// Stationary distribution of an irreducible row-stochastic matrix
/// (left eigenvector, normalized). Dense solve; test/oracle helper and
/// backing for cross-checks, not a hot path.
Eigen::VectorXd jump_chain_stationary(const std::vector<SparseRow>& rows);

/// Strongly connected components by iterative Tarjan. Returns component id
/// per node; ids are in reverse topological order (edges go from higher to
/// lower ids or stay within a component).
std::vector<int> strongly_connected_components(const std::vector<SparseRow>& rows,
                                               int& num_components);

/// True iff the whole transition graph is one strongly connected component.
bool is_irreducible(const std::vector<SparseRow>& rows);

} // namespace dispatch
