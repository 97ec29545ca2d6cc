#include "dispatch/exact_mdp.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace dispatch {

namespace {

void check_action(const Instance& inst, AugmentedState s, std::optional<int> action) {
    if (!s.has_call() || is_full(s.mask, inst.num_units)) {
        if (action)
            throw ValidationError("no action is allowed in a state without a dispatch");
        return;
    }
    if (!action) throw ValidationError("a dispatch state requires an action");
    if (*action < 0 || *action >= inst.num_units)
        throw ValidationError("unit " + std::to_string(*action + 1) + " out of range");
    if (is_busy(s.mask, *action))
        throw ValidationError("unit " + std::to_string(*action + 1) + " is busy");
}

double busy_rate(const Instance& inst, Mask mask) {
    double total = 0.0;
    for (int i = 0; i < inst.num_units; ++i)
        if (is_busy(mask, i)) total += inst.service_rates[i];
    return total;
}

} // namespace

double state_cost(const Instance& inst, AugmentedState s, std::optional<int> action) {
    check_action(inst, s, action);
    if (!action) return 0.0; // completion states and lost calls
    return inst.response_times[*action][s.call];
}

SparseRow transition_probs(const Instance& inst, AugmentedState s,
                           std::optional<int> action) {
    check_action(inst, s, action);
    // Busy set after the (possibly empty) decision; every subsequent event
    // is a race between the arrival stream and the busy units.
    const Mask after = action ? set_busy(s.mask, *action) : s.mask;
    const double denom = inst.total_arrival_rate() + busy_rate(inst, after);

    SparseRow row;
    row.reserve(inst.num_nodes + popcount(after));
    for (int l = 0; l < inst.num_units; ++l)
        if (is_busy(after, l))
            row.emplace_back(
                state_index(inst, {AugmentedState::kNoCall, set_free(after, l)}),
                inst.service_rates[l] / denom);
    for (int j = 0; j < inst.num_nodes; ++j)
        row.emplace_back(state_index(inst, {j, after}), inst.arrival_rates[j] / denom);
    std::sort(row.begin(), row.end());
    return row;
}

ExactModel build_exact_model(const Instance& inst, const Policy& policy, Exec exec) {
    policy.validate(inst);
    const std::size_t n = num_augmented_states(inst);
    ExactModel model;
    model.cost.resize(static_cast<Eigen::Index>(n));
    model.rows.resize(n);

    const auto fill = [&](std::size_t idx) {
        const AugmentedState s = state_at(inst, idx);
        std::optional<int> a;
        if (s.has_call() && !is_full(s.mask, inst.num_units))
            a = policy.action(s.call, s.mask);
        model.cost[static_cast<Eigen::Index>(idx)] = state_cost(inst, s, a);
        model.rows[idx] = transition_probs(inst, s, a);
    };

    if (exec == Exec::Parallel) {
#pragma omp parallel for schedule(static)
        for (std::int64_t idx = 0; idx < static_cast<std::int64_t>(n); ++idx)
            fill(static_cast<std::size_t>(idx));
    } else {
        for (std::size_t idx = 0; idx < n; ++idx) fill(idx);
    }
    return model;
}

void ExactSolveBudget::check(const Instance& inst) const {
    if (inst.num_units > max_units)
        throw GuardError("exact formulation refused: N=" + std::to_string(inst.num_units) +
                         " exceeds the hard cap of " + std::to_string(max_units));
    const std::size_t states = num_augmented_states(inst);
    if (states > max_states)
        throw GuardError("exact formulation refused: (J+1)*2^N = " + std::to_string(states) +
                         " states exceed the direct-solve budget of " +
                         std::to_string(max_states) + "; use the TD learner instead");
}

ValueTable evaluate_policy_exact(const Instance& inst, const Policy& policy,
                                 const ExactSolveBudget& budget) {
    budget.check(inst);
    const ExactModel model = build_exact_model(inst, policy, Exec::Serial);
    const int anchor = static_cast<int>(state_index(inst, {AugmentedState::kNoCall, 0}));
    AnchoredSolution sol = solve_anchored_average_cost(model.rows, model.cost, anchor);
    if (!(sol.residual <= 1e-9))
        throw NumericalError("policy evaluation residual " + std::to_string(sol.residual) +
                             " exceeds 1e-9");
    return ValueTable{std::move(sol.values), sol.avg_cost, sol.residual};
}

namespace {

struct LookaheadTables {
    // For each post-decision mask m:
    //   arrivals[m] = sum_j lambda_j V(j, m)
    //   completions[m] = sum_{l busy in m} mu_l V(no-call, m - I_l)
    //   denom[m] = lambda + sum_{l busy in m} mu_l
    std::vector<double> arrivals, completions, denom;
};

LookaheadTables build_lookahead(const Instance& inst, const Eigen::VectorXd& values,
                                Exec exec) {
    const std::uint64_t masks = inst.num_masks();
    LookaheadTables t;
    t.arrivals.resize(masks);
    t.completions.resize(masks);
    t.denom.resize(masks);
    const double lambda = inst.total_arrival_rate();

    const auto fill = [&](Mask m) {
        double arr = 0.0;
        for (int j = 0; j < inst.num_nodes; ++j)
            arr += inst.arrival_rates[j] * values[state_index(inst, {j, m})];
        double comp = 0.0, rate = 0.0;
        for (int l = 0; l < inst.num_units; ++l)
            if (is_busy(m, l)) {
                comp += inst.service_rates[l] *
                        values[state_index(inst, {AugmentedState::kNoCall, set_free(m, l)})];
                rate += inst.service_rates[l];
            }
        t.arrivals[m] = arr;
        t.completions[m] = comp;
        t.denom[m] = lambda + rate;
    };

    if (exec == Exec::Parallel) {
#pragma omp parallel for schedule(static)
        for (std::int64_t m = 0; m < static_cast<std::int64_t>(masks); ++m)
            fill(static_cast<Mask>(m));
    } else {
        for (std::uint64_t m = 0; m < masks; ++m) fill(static_cast<Mask>(m));
    }
    return t;
}

} // namespace

Policy improve_policy(const Instance& inst, const ValueTable& table, Exec exec) {
    const LookaheadTables look = build_lookahead(inst, table.values, exec);
    Policy policy(inst.num_nodes, inst.num_units);
    const Mask full = inst.all_busy();
    const std::uint64_t masks = inst.num_masks();

    const auto improve_state = [&](int j, Mask m) {
        int best = -1;
        double best_q = 0.0;
        for (int a = 0; a < inst.num_units; ++a) {
            if (is_busy(m, a)) continue;
            const Mask after = set_busy(m, a);
            const double q = inst.response_times[a][j] +
                             (look.arrivals[after] + look.completions[after]) /
                                 look.denom[after];
            if (best < 0 || q < best_q) {
                best = a;
                best_q = q;
            }
        }
        policy.set_action(j, m, best);
    };

    if (exec == Exec::Parallel) {
        const std::int64_t total = static_cast<std::int64_t>(inst.num_nodes) *
                                   static_cast<std::int64_t>(masks);
#pragma omp parallel for schedule(static)
        for (std::int64_t k = 0; k < total; ++k) {
            const int j = static_cast<int>(k / static_cast<std::int64_t>(masks));
            const Mask m = static_cast<Mask>(k % static_cast<std::int64_t>(masks));
            if (m != full) improve_state(j, m);
        }
    } else {
        for (int j = 0; j < inst.num_nodes; ++j)
            for (std::uint64_t m = 0; m < masks; ++m)
                if (static_cast<Mask>(m) != full) improve_state(j, static_cast<Mask>(m));
    }
    return policy;
}

PolicyIterationResult policy_iteration(const Instance& inst, const Policy& initial,
                                       int max_iters, const ExactSolveBudget& budget,
                                       Exec exec) {
    budget.check(inst);
    initial.validate(inst);
    PolicyIterationResult result;
    result.policy = initial;
    for (int iter = 1; iter <= max_iters; ++iter) {
        result.values = evaluate_policy_exact(inst, result.policy, budget);
        Policy improved = improve_policy(inst, result.values, exec);
        const int changes = improved.count_differences(result.policy);
        result.trace.push_back({iter, result.values.avg_cost, changes});
        if (changes == 0) {
            result.converged = true;
            break;
        }
        result.policy = std::move(improved);
    }
    if (!result.converged)
        result.values = evaluate_policy_exact(inst, result.policy, budget);
    return result;
}

} // namespace dispatch
