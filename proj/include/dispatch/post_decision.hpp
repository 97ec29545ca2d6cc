#pragma once

#include <vector>

#include <Eigen/Dense>

#include "dispatch/bellman.hpp"
#include "dispatch/common.hpp"
#include "dispatch/exact_mdp.hpp"
#include "dispatch/instance.hpp"

namespace dispatch {

/// Differential values over the 2^N busy masks plus the average cost.
/// Anchored: values[empty mask] == 0.
struct PdValueTable {
    Eigen::VectorXd values;
    double avg_cost = 0.0;
    double residual = 0.0;
};

/// regions[l] = nodes whose calls the policy sends to unit l when the busy
/// mask is s_x. The non-empty regions partition the node set for non-full
/// masks; all regions are empty for the full mask.
std::vector<std::vector<int>> dispatch_regions(const Instance& inst, const Policy& policy,
                                               Mask s_x);

/// One row of the post-decision transition matrix. Arrivals move to
/// s_x + I_l with the aggregated rate of unit l's dispatch region;
/// completions move to s_x - I_l. Arrivals at the full mask are lost and
/// self-loop. Row sums to 1.
SparseRow pd_transition_probs(const Instance& inst, const Policy& policy, Mask s_x);

/// Expected next-transition response time from post-decision state s_x.
double pd_cost(const Instance& inst, const Policy& policy, Mask s_x);

struct PdModel {
    Eigen::VectorXd cost;
    std::vector<SparseRow> rows;
};

PdModel build_pd_model(const Instance& inst, const Policy& policy,
                       Exec exec = Exec::Parallel);

struct PdSolveBudget {
    int max_units = 25;
    std::uint64_t max_masks = 4096;

    void check(const Instance& inst) const;
};

/// Policy evaluation on the 2^N-state post-decision chain.
PdValueTable evaluate_policy_pd(const Instance& inst, const Policy& policy,
                                const PdSolveBudget& budget = {});

/// Greedy policy from any value vector over masks (exact J, or a TD
/// parameter vector): argmin over free a of t[a][j] + values[mask + I_a],
/// lowest unit index on ties.
Policy greedy_policy_from_mask_values(const Instance& inst, const Eigen::VectorXd& values,
                                      Exec exec = Exec::Parallel);

inline Policy pd_improve_policy(const Instance& inst, const PdValueTable& table,
                                Exec exec = Exec::Parallel) {
    return greedy_policy_from_mask_values(inst, table.values, exec);
}

/// Policy iteration with post-decision evaluation; same trace contract as
/// the full-formulation policy_iteration.
struct PdPolicyIterationResult {
    Policy policy;
    PdValueTable values;
    std::vector<IterationTraceRow> trace;
    bool converged = false;
};

PdPolicyIterationResult pd_policy_iteration(const Instance& inst, const Policy& initial,
                                            int max_iters = 100,
                                            const PdSolveBudget& budget = {},
                                            Exec exec = Exec::Parallel);

/// Both formulations evaluated on the same policy and reconciled.
struct EquivalenceReport {
    double mu_exact = 0.0;
    double mu_pd = 0.0;
    double mu_abs_diff = 0.0;
    /// Max over masks of the violation of the value-identity mapping the
    /// full-formulation values onto post-decision values, after removing
    /// the additive constant by matching at the anchor mask.
    double max_value_violation = 0.0;
};

/// The value identity alone, for externally supplied tables (lets tests run
/// perturbed negative controls).
double equivalence_violation(const Instance& inst, const ValueTable& exact,
                             const PdValueTable& pd);

EquivalenceReport check_equivalence(const Instance& inst, const Policy& policy,
                                    const ExactSolveBudget& exact_budget = {},
                                    const PdSolveBudget& pd_budget = {});

} // namespace dispatch
