#include "dispatch/post_decision.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace dispatch {

namespace {

double busy_rate(const Instance& inst, Mask mask) {
    double total = 0.0;
    for (int i = 0; i < inst.num_units; ++i)
        if (is_busy(mask, i)) total += inst.service_rates[i];
    return total;
}

} // namespace

std::vector<std::vector<int>> dispatch_regions(const Instance& inst, const Policy& policy,
                                               Mask s_x) {
    std::vector<std::vector<int>> regions(inst.num_units);
    if (is_full(s_x, inst.num_units)) return regions;
    for (int j = 0; j < inst.num_nodes; ++j)
        regions[policy.action(j, s_x)].push_back(j);
    return regions;
}

SparseRow pd_transition_probs(const Instance& inst, const Policy& policy, Mask s_x) {
    const double denom = inst.total_arrival_rate() + busy_rate(inst, s_x);
    SparseRow row;
    row.reserve(inst.num_units + 1);

    if (is_full(s_x, inst.num_units)) {
        // Arrivals are lost while every unit is busy; they spend an event
        // without moving the mask.
        row.emplace_back(static_cast<int>(s_x), inst.total_arrival_rate() / denom);
    } else {
        const auto regions = dispatch_regions(inst, policy, s_x);
        for (int l = 0; l < inst.num_units; ++l) {
            if (regions[l].empty()) continue;
            double rate = 0.0;
            for (int j : regions[l]) rate += inst.arrival_rates[j];
            row.emplace_back(static_cast<int>(set_busy(s_x, l)), rate / denom);
        }
    }
    for (int l = 0; l < inst.num_units; ++l)
        if (is_busy(s_x, l))
            row.emplace_back(static_cast<int>(set_free(s_x, l)),
                             inst.service_rates[l] / denom);
    std::sort(row.begin(), row.end());
    return row;
}

double pd_cost(const Instance& inst, const Policy& policy, Mask s_x) {
    if (is_full(s_x, inst.num_units)) return 0.0;
    const auto regions = dispatch_regions(inst, policy, s_x);
    double weighted = 0.0;
    for (int l = 0; l < inst.num_units; ++l)
        for (int j : regions[l]) weighted += inst.arrival_rates[j] * inst.response_times[l][j];
    return weighted / (inst.total_arrival_rate() + busy_rate(inst, s_x));
}

PdModel build_pd_model(const Instance& inst, const Policy& policy, Exec exec) {
    policy.validate(inst);
    const std::uint64_t masks = inst.num_masks();
    PdModel model;
    model.cost.resize(static_cast<Eigen::Index>(masks));
    model.rows.resize(masks);

    const auto fill = [&](Mask m) {
        model.cost[static_cast<Eigen::Index>(m)] = pd_cost(inst, policy, m);
        model.rows[m] = pd_transition_probs(inst, policy, m);
    };

    if (exec == Exec::Parallel) {
#pragma omp parallel for schedule(static)
        for (std::int64_t m = 0; m < static_cast<std::int64_t>(masks); ++m)
            fill(static_cast<Mask>(m));
    } else {
        for (std::uint64_t m = 0; m < masks; ++m) fill(static_cast<Mask>(m));
    }
    return model;
}

void PdSolveBudget::check(const Instance& inst) const {
    if (inst.num_units > max_units)
        throw GuardError("post-decision solve refused: N=" + std::to_string(inst.num_units) +
                         " exceeds the hard cap of " + std::to_string(max_units));
    if (inst.num_masks() > max_masks)
        throw GuardError("post-decision solve refused: 2^N = " +
                         std::to_string(inst.num_masks()) +
                         " masks exceed the direct-solve budget of " +
                         std::to_string(max_masks) + "; use the TD learner instead");
}

PdValueTable evaluate_policy_pd(const Instance& inst, const Policy& policy,
                                const PdSolveBudget& budget) {
    budget.check(inst);
    const PdModel model = build_pd_model(inst, policy, Exec::Serial);
    AnchoredSolution sol = solve_anchored_average_cost(model.rows, model.cost, 0);
    if (!(sol.residual <= 1e-9))
        throw NumericalError("post-decision evaluation residual " +
                             std::to_string(sol.residual) + " exceeds 1e-9");
    return PdValueTable{std::move(sol.values), sol.avg_cost, sol.residual};
}

Policy greedy_policy_from_mask_values(const Instance& inst, const Eigen::VectorXd& values,
                                      Exec exec) {
    if (values.size() != static_cast<Eigen::Index>(inst.num_masks()))
        throw ValidationError("value vector length does not match 2^N");
    Policy policy(inst.num_nodes, inst.num_units);
    const Mask full = inst.all_busy();
    const std::uint64_t masks = inst.num_masks();

    const auto improve_state = [&](int j, Mask m) {
        int best = -1;
        double best_q = 0.0;
        for (int a = 0; a < inst.num_units; ++a) {
            if (is_busy(m, a)) continue;
            const double q = inst.response_times[a][j] + values[set_busy(m, a)];
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

PdPolicyIterationResult pd_policy_iteration(const Instance& inst, const Policy& initial,
                                            int max_iters, const PdSolveBudget& budget,
                                            Exec exec) {
    budget.check(inst);
    initial.validate(inst);
    PdPolicyIterationResult result;
    result.policy = initial;
    for (int iter = 1; iter <= max_iters; ++iter) {
        result.values = evaluate_policy_pd(inst, result.policy, budget);
        Policy improved = pd_improve_policy(inst, result.values, exec);
        const int changes = improved.count_differences(result.policy);
        result.trace.push_back({iter, result.values.avg_cost, changes});
        if (changes == 0) {
            result.converged = true;
            break;
        }
        result.policy = std::move(improved);
    }
    if (!result.converged)
        result.values = evaluate_policy_pd(inst, result.policy, budget);
    return result;
}

double equivalence_violation(const Instance& inst, const ValueTable& exact,
                             const PdValueTable& pd) {
    const double lambda = inst.total_arrival_rate();
    // Map the full-formulation values onto each mask: the value of sitting in
    // post-decision state B is the event-rate-weighted mix of the states the
    // next transition can reveal.
    const auto mapped = [&](Mask m) {
        const double gamma = lambda + busy_rate(inst, m);
        double value = 0.0;
        for (int j = 0; j < inst.num_nodes; ++j)
            value += inst.arrival_rates[j] * exact.values[state_index(inst, {j, m})];
        for (int k = 0; k < inst.num_units; ++k)
            if (is_busy(m, k))
                value += inst.service_rates[k] *
                         exact.values[state_index(
                             inst, {AugmentedState::kNoCall, set_free(m, k)})];
        return value / gamma;
    };

    const double exact_at_anchor = mapped(0);
    const double pd_at_anchor = pd.values[0];
    double worst = 0.0;
    for (std::uint64_t m = 0; m < inst.num_masks(); ++m) {
        const double lhs = pd.values[static_cast<Eigen::Index>(m)] - pd_at_anchor;
        const double rhs = mapped(static_cast<Mask>(m)) - exact_at_anchor;
        worst = std::max(worst, std::abs(lhs - rhs));
    }
    return worst;
}

EquivalenceReport check_equivalence(const Instance& inst, const Policy& policy,
                                    const ExactSolveBudget& exact_budget,
                                    const PdSolveBudget& pd_budget) {
    const ValueTable exact = evaluate_policy_exact(inst, policy, exact_budget);
    const PdValueTable pd = evaluate_policy_pd(inst, policy, pd_budget);
    EquivalenceReport report;
    report.mu_exact = exact.avg_cost;
    report.mu_pd = pd.avg_cost;
    report.mu_abs_diff = std::abs(exact.avg_cost - pd.avg_cost);
    report.max_value_violation = equivalence_violation(inst, exact, pd);
    return report;
}

} // namespace dispatch
