#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "dispatch/bellman.hpp"
#include "dispatch/common.hpp"
#include "dispatch/instance.hpp"

namespace dispatch {

/// State of the augmented chain: the node of the call just arrived
/// (kNoCall when the transition was a service completion) plus the busy
/// mask at that instant.
struct AugmentedState {
    static constexpr int kNoCall = -1;
    int call = kNoCall; ///< 0-based node, or kNoCall
    Mask mask = 0;

    bool has_call() const { return call != kNoCall; }
    bool operator==(const AugmentedState&) const = default;
};

/// Fixed enumeration: index = (call slot) * 2^N + mask, where slot 0 is the
/// no-call marker and slot j+1 is node j. Total (J+1) * 2^N states.
inline std::size_t state_index(const Instance& inst, AugmentedState s) {
    return static_cast<std::size_t>(s.call + 1) * inst.num_masks() + s.mask;
}

inline AugmentedState state_at(const Instance& inst, std::size_t index) {
    const auto masks = inst.num_masks();
    return AugmentedState{static_cast<int>(index / masks) - 1,
                          static_cast<Mask>(index % masks)};
}

inline std::size_t num_augmented_states(const Instance& inst) {
    return static_cast<std::size_t>(inst.num_nodes + 1) * inst.num_masks();
}

/// Differential values over augmented states plus the average cost mu.
/// Anchored: values[(no-call, empty mask)] == 0.
struct ValueTable {
    Eigen::VectorXd values;
    double avg_cost = 0.0;
    double residual = 0.0;
};

/// One-transition cost: the response time of the dispatched unit, zero for
/// no-call states and for calls arriving when every unit is busy.
/// The action must be a free unit exactly when the state has a call and a
/// free unit exists; infeasible combinations throw ValidationError.
double state_cost(const Instance& inst, AugmentedState s, std::optional<int> action);

/// One row of the augmented transition matrix for (state, action), columns
/// ascending, probabilities summing to 1. Action feasibility as state_cost.
SparseRow transition_probs(const Instance& inst, AugmentedState s,
                           std::optional<int> action);

/// Cost vector and transition matrix of the chain induced by a policy.
struct ExactModel {
    Eigen::VectorXd cost;
    std::vector<SparseRow> rows;
};

ExactModel build_exact_model(const Instance& inst, const Policy& policy,
                             Exec exec = Exec::Parallel);

/// Guard for the dense evaluation solve: hard cap on N plus a state-count
/// budget sized for a direct factorization.
struct ExactSolveBudget {
    int max_units = 20;
    std::size_t max_states = 4096;

    void check(const Instance& inst) const;
};

/// Policy evaluation by direct solve of the anchored Bellman system.
ValueTable evaluate_policy_exact(const Instance& inst, const Policy& policy,
                                 const ExactSolveBudget& budget = {});

/// Greedy one-step-lookahead policy: argmin over free units of
/// t[a][j] + sum_s' p(s,s'|a) V(s'), lowest unit index on ties.
Policy improve_policy(const Instance& inst, const ValueTable& table,
                      Exec exec = Exec::Parallel);

struct IterationTraceRow {
    int iter = 0;             ///< 1-based
    double avg_cost = 0.0;    ///< mu of the policy evaluated this iteration
    int policy_changes = 0;   ///< actions changed by the improvement step
};

struct PolicyIterationResult {
    Policy policy;
    ValueTable values;
    std::vector<IterationTraceRow> trace;
    bool converged = false;
};

/// Exact policy iteration: evaluate/improve until the policy repeats or
/// max_iters is hit. The avg_cost trace is non-increasing.
PolicyIterationResult policy_iteration(const Instance& inst, const Policy& initial,
                                       int max_iters = 100,
                                       const ExactSolveBudget& budget = {},
                                       Exec exec = Exec::Parallel);

} // namespace dispatch
