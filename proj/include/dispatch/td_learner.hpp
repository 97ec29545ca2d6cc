#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "dispatch/common.hpp"
#include "dispatch/instance.hpp"
#include "dispatch/post_decision.hpp"
#include "dispatch/rng.hpp"

namespace dispatch {

/// Indicator basis over post-decision states: one feature per busy mask,
/// phi_p(s_x) = [p == s_x]. Exactly one nonzero per state, so the feature
/// matrix is the identity and features are trivially independent.
struct TabularBasis {
    std::uint64_t num_features = 0;

    explicit TabularBasis(const Instance& inst) : num_features(inst.num_masks()) {}

    int feature_index(Mask s_x) const { return static_cast<int>(s_x); }
};

/// Approximate value J~(s_x, r); reduces to r[s_x] for the tabular basis.
double approx_value(const TabularBasis& basis, const Eigen::VectorXd& r, Mask s_x);

/// TD parameters: weight vector r, running average-cost estimate, step
/// counter, and the step-size hyperparameter a (gamma_t = a / (a + t)).
struct LearnerState {
    Eigen::VectorXd r;
    double mu_estimate = 0.0;
    long step = 0;
    double stepsize_a = 1000.0;

    double gamma() const { return stepsize_a / (stepsize_a + static_cast<double>(step)); }
};

LearnerState make_learner(const TabularBasis& basis, double stepsize_a);

/// One temporal-difference update:
///   d = c - mu/2 + J~(next) - J~(cur)
///   r += gamma d phi(cur)
///   mu = (1 - gamma) mu + 2 gamma c
/// then the step counter advances.
void td_step(LearnerState& state, const TabularBasis& basis, double cost, Mask cur,
             Mask next);

/// What actually happened on one post-decision transition.
struct PdEvent {
    enum class Kind { Dispatch, Completion, LostCall };
    Kind kind = Kind::Completion;
    Mask next = 0;
    int unit = -1; ///< dispatched or completed unit
    int node = -1; ///< call node for Dispatch/LostCall
};

/// Samples the next post-decision state by racing the underlying events
/// (arrival to some node vs. a busy unit completing); the marginal over
/// next masks is exactly the pd_transition_probs row.
PdEvent sample_pd_event(const Instance& inst, const Policy& policy, Mask s_x,
                        RandomStream& rng);

Mask sample_next(const Instance& inst, const Policy& policy, Mask s_x, RandomStream& rng);

struct TdEvalResult {
    Eigen::VectorXd r;
    double mu_estimate = 0.0;
    /// Sample mean of the dispatched response times seen during the rollout.
    double sample_mean_response = 0.0;
    long served_calls = 0;
};

/// One rollout of T transitions under a fixed policy, applying td_step at
/// each transition with the exact expected cost of the visited state.
/// x_0 is drawn uniformly over all masks. Deterministic given seed.
TdEvalResult td_evaluate(const Instance& inst, const Policy& policy, long num_steps,
                         double stepsize_a, std::uint64_t seed);

struct TdTraceRow {
    int iter = 0;                     ///< 1-based outer iteration
    double sample_mean_response = 0;  ///< served dispatches only
    double mu_estimate = 0.0;
    int policy_changes = 0;
};

struct TdOptions {
    double stepsize_a = 1000.0;
    /// Keep r and mu across outer iterations instead of resetting to zero.
    bool warm_start = false;
    /// Start from a seeded random policy instead of the myopic one.
    bool random_init = false;
};

struct TdResult {
    Policy policy;
    Eigen::VectorXd r; ///< learned values of the final iteration
    std::vector<TdTraceRow> trace;
};

/// Approximate policy iteration: per outer iteration, roll out num_steps
/// transitions under the current policy, then switch to the greedy policy
/// of the learned values. Deterministic given seed.
TdResult td_policy_iteration(const Instance& inst, int num_iterations, long num_steps,
                             std::uint64_t seed, const TdOptions& options = {},
                             Exec exec = Exec::Parallel);

} // namespace dispatch
