#include "dispatch/td_learner.hpp"

#include <cmath>
#include <string>

namespace dispatch {

double approx_value(const TabularBasis& basis, const Eigen::VectorXd& r, Mask s_x) {
    return r[basis.feature_index(s_x)];
}

LearnerState make_learner(const TabularBasis& basis, double stepsize_a) {
    if (stepsize_a < 1.0)
        throw ValidationError("step-size parameter a must be >= 1");
    LearnerState state;
    state.r = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(basis.num_features));
    state.mu_estimate = 0.0;
    state.step = 0;
    state.stepsize_a = stepsize_a;
    return state;
}

void td_step(LearnerState& state, const TabularBasis& basis, double cost, Mask cur,
             Mask next) {
    const double gamma = state.gamma();
    const double d = cost - 0.5 * state.mu_estimate + approx_value(basis, state.r, next) -
                     approx_value(basis, state.r, cur);
    state.r[basis.feature_index(cur)] += gamma * d;
    state.mu_estimate = (1.0 - gamma) * state.mu_estimate + 2.0 * gamma * cost;
    ++state.step;
}

PdEvent sample_pd_event(const Instance& inst, const Policy& policy, Mask s_x,
                        RandomStream& rng) {
    double busy_total = 0.0;
    for (int i = 0; i < inst.num_units; ++i)
        if (is_busy(s_x, i)) busy_total += inst.service_rates[i];
    const double lambda = inst.total_arrival_rate();
    double u = rng.uniform01() * (lambda + busy_total);

    PdEvent ev;
    if (u < lambda) {
        // Arrival; reveal the node, then dispatch (or lose the call).
        int node = inst.num_nodes - 1;
        for (int j = 0; j < inst.num_nodes; ++j) {
            if (u < inst.arrival_rates[j]) {
                node = j;
                break;
            }
            u -= inst.arrival_rates[j];
        }
        ev.node = node;
        if (is_full(s_x, inst.num_units)) {
            ev.kind = PdEvent::Kind::LostCall;
            ev.next = s_x;
        } else {
            ev.kind = PdEvent::Kind::Dispatch;
            ev.unit = policy.action(node, s_x);
            ev.next = set_busy(s_x, ev.unit);
        }
        return ev;
    }
    u -= lambda;
    int unit = -1;
    for (int i = 0; i < inst.num_units; ++i) {
        if (!is_busy(s_x, i)) continue;
        unit = i;
        if (u < inst.service_rates[i]) break;
        u -= inst.service_rates[i];
    }
    ev.kind = PdEvent::Kind::Completion;
    ev.unit = unit;
    ev.next = set_free(s_x, unit);
    return ev;
}

Mask sample_next(const Instance& inst, const Policy& policy, Mask s_x, RandomStream& rng) {
    return sample_pd_event(inst, policy, s_x, rng).next;
}

namespace {

std::vector<double> pd_cost_vector(const Instance& inst, const Policy& policy, Exec exec) {
    const std::uint64_t masks = inst.num_masks();
    std::vector<double> cost(masks);
    if (exec == Exec::Parallel) {
#pragma omp parallel for schedule(static)
        for (std::int64_t m = 0; m < static_cast<std::int64_t>(masks); ++m)
            cost[static_cast<std::size_t>(m)] = pd_cost(inst, policy, static_cast<Mask>(m));
    } else {
        for (std::uint64_t m = 0; m < masks; ++m)
            cost[m] = pd_cost(inst, policy, static_cast<Mask>(m));
    }
    return cost;
}

struct RolloutStats {
    double sample_mean_response = 0.0;
    long served_calls = 0;
};

RolloutStats run_rollout(const Instance& inst, const Policy& policy, long num_steps,
                         LearnerState& learner, const TabularBasis& basis,
                         RandomStream& rng, Exec exec) {
    const std::vector<double> cost = pd_cost_vector(inst, policy, exec);
    Mask x = static_cast<Mask>(rng.below(inst.num_masks()));
    double response_sum = 0.0;
    long served = 0;
    for (long t = 0; t < num_steps; ++t) {
        const PdEvent ev = sample_pd_event(inst, policy, x, rng);
        td_step(learner, basis, cost[x], x, ev.next);
        if (ev.kind == PdEvent::Kind::Dispatch) {
            response_sum += inst.response_times[ev.unit][ev.node];
            ++served;
        }
        x = ev.next;
    }
    RolloutStats stats;
    stats.served_calls = served;
    stats.sample_mean_response = served > 0 ? response_sum / static_cast<double>(served) : 0.0;
    return stats;
}

} // namespace

TdEvalResult td_evaluate(const Instance& inst, const Policy& policy, long num_steps,
                         double stepsize_a, std::uint64_t seed) {
    if (num_steps < 0) throw ValidationError("rollout length must be >= 0");
    policy.validate(inst);
    const TabularBasis basis(inst);
    LearnerState learner = make_learner(basis, stepsize_a);
    RandomStream rng(seed);
    const RolloutStats stats =
        run_rollout(inst, policy, num_steps, learner, basis, rng, Exec::Serial);
    return TdEvalResult{std::move(learner.r), learner.mu_estimate,
                        stats.sample_mean_response, stats.served_calls};
}

TdResult td_policy_iteration(const Instance& inst, int num_iterations, long num_steps,
                             std::uint64_t seed, const TdOptions& options, Exec exec) {
    if (num_iterations < 1) throw ValidationError("need at least one outer iteration");
    if (num_steps < 1) throw ValidationError("need at least one transition per rollout");
    inst.validate();

    const TabularBasis basis(inst);
    RandomStream rng(seed);
    TdResult result;
    result.policy =
        options.random_init ? random_policy(inst, rng.engine()()) : myopic_policy(inst);
    LearnerState learner = make_learner(basis, options.stepsize_a);

    for (int k = 1; k <= num_iterations; ++k) {
        if (!options.warm_start) learner = make_learner(basis, options.stepsize_a);
        const RolloutStats stats =
            run_rollout(inst, result.policy, num_steps, learner, basis, rng, exec);
        Policy improved = greedy_policy_from_mask_values(inst, learner.r, exec);
        const int changes = improved.count_differences(result.policy);
        result.trace.push_back(
            {k, stats.sample_mean_response, learner.mu_estimate, changes});
        result.policy = std::move(improved);
    }
    result.r = std::move(learner.r);
    return result;
}

} // namespace dispatch
