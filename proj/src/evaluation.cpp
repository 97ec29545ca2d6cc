#include "dispatch/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <string>

#include "dispatch/format.hpp"
#include "dispatch/post_decision.hpp"
#include "dispatch/rng.hpp"

namespace dispatch {

void HypercubeBudget::check(const Instance& inst) const {
    if (inst.num_units > max_units)
        throw GuardError("hypercube evaluation refused: N=" +
                         std::to_string(inst.num_units) + " exceeds the cap of " +
                         std::to_string(max_units) + "; evaluate by simulation instead");
}

namespace {

// arr[m * N + l] = total arrival rate the policy routes to unit l in mask m.
std::vector<double> arrival_rate_table(const Instance& inst, const Policy& policy) {
    const std::uint64_t masks = inst.num_masks();
    std::vector<double> arr(masks * inst.num_units, 0.0);
#pragma omp parallel for schedule(static)
    for (std::int64_t m = 0; m < static_cast<std::int64_t>(masks); ++m) {
        if (is_full(static_cast<Mask>(m), inst.num_units)) continue;
        double* row = &arr[static_cast<std::uint64_t>(m) * inst.num_units];
        for (int j = 0; j < inst.num_nodes; ++j)
            row[policy.action(j, static_cast<Mask>(m))] += inst.arrival_rates[j];
    }
    return arr;
}

Eigen::VectorXd hypercube_dense(const Instance& inst, const std::vector<double>& arr) {
    const int n = static_cast<int>(inst.num_masks());
    // Column b of A holds the balance equation of mask b: inflow - outflow.
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
    for (int m = 0; m < n; ++m) {
        double out = 0.0;
        for (int l = 0; l < inst.num_units; ++l) {
            if (is_busy(static_cast<Mask>(m), l)) {
                const int to = static_cast<int>(set_free(static_cast<Mask>(m), l));
                A(to, m) += inst.service_rates[l];
                out += inst.service_rates[l];
            } else {
                const double rate = arr[static_cast<std::uint64_t>(m) * inst.num_units + l];
                if (rate > 0.0) {
                    const int to = static_cast<int>(set_busy(static_cast<Mask>(m), l));
                    A(to, m) += rate;
                    out += rate;
                }
            }
        }
        A(m, m) -= out;
    }
    A.row(n - 1).setOnes();
    Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
    b(n - 1) = 1.0;
    return A.partialPivLu().solve(b);
}

Eigen::VectorXd hypercube_gauss_seidel(const Instance& inst,
                                       const std::vector<double>& arr) {
    const std::uint64_t n = inst.num_masks();
    Eigen::VectorXd pi = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n),
                                                   1.0 / static_cast<double>(n));
    std::vector<double> out_rate(n, 0.0);
    for (std::uint64_t m = 0; m < n; ++m)
        for (int l = 0; l < inst.num_units; ++l)
            out_rate[m] += is_busy(static_cast<Mask>(m), l)
                               ? inst.service_rates[l]
                               : arr[m * inst.num_units + l];

    // pi(m) <- inflow(m) / out_rate(m), sweeping in place; inflows come from
    // completions of a unit we lack (mask + I_l) and from arrivals that made
    // unit l busy (mask - I_l, provided the predecessor routes l here).
    for (int sweep = 0; sweep < 20000; ++sweep) {
        for (std::uint64_t m = 0; m < n; ++m) {
            double in = 0.0;
            for (int l = 0; l < inst.num_units; ++l) {
                if (is_busy(static_cast<Mask>(m), l)) {
                    const std::uint64_t from = set_free(static_cast<Mask>(m), l);
                    in += pi[static_cast<Eigen::Index>(from)] *
                          arr[from * inst.num_units + l];
                } else {
                    const std::uint64_t from = set_busy(static_cast<Mask>(m), l);
                    in += pi[static_cast<Eigen::Index>(from)] * inst.service_rates[l];
                }
            }
            pi[static_cast<Eigen::Index>(m)] = in / out_rate[m];
        }
        pi /= pi.sum();

        double residual = 0.0;
        for (std::uint64_t m = 0; m < n; ++m) {
            double in = 0.0;
            for (int l = 0; l < inst.num_units; ++l) {
                if (is_busy(static_cast<Mask>(m), l)) {
                    const std::uint64_t from = set_free(static_cast<Mask>(m), l);
                    in += pi[static_cast<Eigen::Index>(from)] *
                          arr[from * inst.num_units + l];
                } else {
                    const std::uint64_t from = set_busy(static_cast<Mask>(m), l);
                    in += pi[static_cast<Eigen::Index>(from)] * inst.service_rates[l];
                }
            }
            residual = std::max(residual,
                                std::abs(in - pi[static_cast<Eigen::Index>(m)] * out_rate[m]));
        }
        if (residual <= 1e-10) return pi;
    }
    throw NumericalError("hypercube Gauss-Seidel did not reach residual 1e-10");
}

} // namespace

Eigen::VectorXd hypercube_stationary(const Instance& inst, const Policy& policy,
                                     const HypercubeBudget& budget) {
    budget.check(inst);
    policy.validate(inst);
    const std::vector<double> arr = arrival_rate_table(inst, policy);

    Eigen::VectorXd pi = inst.num_masks() <= budget.dense_limit
                             ? hypercube_dense(inst, arr)
                             : hypercube_gauss_seidel(inst, arr);

    // Balance residual, all probabilities in range.
    double residual = 0.0;
    for (std::uint64_t m = 0; m < inst.num_masks(); ++m) {
        double net = 0.0;
        for (int l = 0; l < inst.num_units; ++l) {
            if (is_busy(static_cast<Mask>(m), l)) {
                const std::uint64_t from = set_free(static_cast<Mask>(m), l);
                net += pi[static_cast<Eigen::Index>(from)] * arr[from * inst.num_units + l];
                net -= pi[static_cast<Eigen::Index>(m)] * inst.service_rates[l];
            } else {
                const std::uint64_t from = set_busy(static_cast<Mask>(m), l);
                net += pi[static_cast<Eigen::Index>(from)] * inst.service_rates[l];
                net -= pi[static_cast<Eigen::Index>(m)] * arr[m * inst.num_units + l];
            }
        }
        residual = std::max(residual, std::abs(net));
    }
    if (!(residual <= 1e-10))
        throw NumericalError("hypercube balance residual " + std::to_string(residual) +
                             " exceeds 1e-10");
    for (Eigen::Index i = 0; i < pi.size(); ++i)
        if (pi[i] < -1e-12)
            throw NumericalError("hypercube produced a negative probability");
    pi = pi.cwiseMax(0.0);
    pi /= pi.sum();
    return pi;
}

EvalReport mean_response_time_exact(const Instance& inst, const Policy& policy,
                                    const HypercubeBudget& budget) {
    const Eigen::VectorXd pi = hypercube_stationary(inst, policy, budget);
    const double lambda = inst.total_arrival_rate();
    const Mask full = inst.all_busy();

    double weighted_response = 0.0;
    for (std::uint64_t m = 0; m < inst.num_masks(); ++m) {
        if (static_cast<Mask>(m) == full) continue;
        double per_call = 0.0;
        for (int j = 0; j < inst.num_nodes; ++j)
            per_call += inst.arrival_rates[j] *
                        inst.response_times[policy.action(j, static_cast<Mask>(m))][j];
        weighted_response += pi[static_cast<Eigen::Index>(m)] * per_call;
    }
    const double loss = pi[static_cast<Eigen::Index>(full)];

    EvalReport report;
    report.method = "exact";
    report.loss_fraction = loss;
    report.mean_response_time = weighted_response / (lambda * (1.0 - loss));
    report.utilization.assign(inst.num_units, 0.0);
    for (std::uint64_t m = 0; m < inst.num_masks(); ++m)
        for (int i = 0; i < inst.num_units; ++i)
            if (is_busy(static_cast<Mask>(m), i))
                report.utilization[i] += pi[static_cast<Eigen::Index>(m)];
    return report;
}

namespace {

struct ReplicationResult {
    double mean_response = 0.0;
    double loss_fraction = 0.0;
    std::vector<double> utilization;
};

ReplicationResult simulate_one(const Instance& inst, const Policy& policy,
                               long served_target, long warmup_calls,
                               std::uint64_t seed) {
    RandomStream rng(seed);
    const double lambda = inst.total_arrival_rate();
    const std::vector<double> node_cdf = cumulative(inst.arrival_rates);

    Mask mask = 0;
    long served = 0, measured = 0, lost = 0;
    double response_sum = 0.0;
    double window_time = 0.0;
    std::vector<double> busy_time(inst.num_units, 0.0);

    while (measured < served_target - warmup_calls) {
        double rate = lambda;
        for (int i = 0; i < inst.num_units; ++i)
            if (is_busy(mask, i)) rate += inst.service_rates[i];
        const double dt = rng.exponential(rate);
        const bool measuring = served >= warmup_calls;
        if (measuring) {
            window_time += dt;
            for (int i = 0; i < inst.num_units; ++i)
                if (is_busy(mask, i)) busy_time[i] += dt;
        }

        double u = rng.uniform01() * rate;
        if (u < lambda) {
            const int node = rng.pick_cdf(node_cdf);
            if (is_full(mask, inst.num_units)) {
                if (measuring) ++lost;
            } else {
                const int unit = policy.action(node, mask);
                if (measuring) {
                    response_sum += inst.response_times[unit][node];
                    ++measured;
                }
                ++served;
                mask = set_busy(mask, unit);
            }
        } else {
            u -= lambda;
            for (int i = 0; i < inst.num_units; ++i) {
                if (!is_busy(mask, i)) continue;
                if (u < inst.service_rates[i]) {
                    mask = set_free(mask, i);
                    break;
                }
                u -= inst.service_rates[i];
            }
        }
    }

    ReplicationResult result;
    result.mean_response = response_sum / static_cast<double>(measured);
    result.loss_fraction =
        static_cast<double>(lost) / static_cast<double>(lost + measured);
    result.utilization.resize(inst.num_units);
    for (int i = 0; i < inst.num_units; ++i)
        result.utilization[i] = window_time > 0.0 ? busy_time[i] / window_time : 0.0;
    return result;
}

} // namespace

EvalReport simulate(const Instance& inst, const Policy& policy, const SimSettings& settings,
                    Exec exec) {
    if (settings.served_calls < 1) throw ValidationError("horizon must be >= 1 served call");
    if (settings.replications < 1) throw ValidationError("need >= 1 replication");
    if (settings.warmup_fraction < 0.0 || settings.warmup_fraction >= 1.0)
        throw ValidationError("warm-up fraction must lie in [0, 1)");
    policy.validate(inst);

    const long warmup =
        static_cast<long>(settings.warmup_fraction * static_cast<double>(settings.served_calls));
    std::vector<std::uint64_t> rep_seeds(settings.replications);
    RandomStream master(settings.seed);
    for (auto& s : rep_seeds) s = master.engine()();

    std::vector<ReplicationResult> reps(settings.replications);
    if (exec == Exec::Parallel) {
#pragma omp parallel for schedule(dynamic)
        for (int r = 0; r < settings.replications; ++r)
            reps[r] = simulate_one(inst, policy, settings.served_calls, warmup, rep_seeds[r]);
    } else {
        for (int r = 0; r < settings.replications; ++r)
            reps[r] = simulate_one(inst, policy, settings.served_calls, warmup, rep_seeds[r]);
    }

    EvalReport report;
    report.method = "simulated";
    report.horizon = settings.served_calls;
    report.replications = settings.replications;
    report.utilization.assign(inst.num_units, 0.0);
    double mean = 0.0, loss = 0.0;
    for (const auto& rep : reps) {
        mean += rep.mean_response;
        loss += rep.loss_fraction;
        for (int i = 0; i < inst.num_units; ++i) report.utilization[i] += rep.utilization[i];
    }
    const double n = static_cast<double>(settings.replications);
    mean /= n;
    loss /= n;
    for (auto& u : report.utilization) u /= n;
    report.mean_response_time = mean;
    report.loss_fraction = loss;

    if (settings.replications >= 2) {
        double ss = 0.0;
        for (const auto& rep : reps) ss += (rep.mean_response - mean) * (rep.mean_response - mean);
        const double sd = std::sqrt(ss / (n - 1.0));
        report.ci_halfwidth = 1.96 * sd / std::sqrt(n);
    } else {
        report.ci_halfwidth = 0.0;
    }
    return report;
}

std::vector<ComparisonRow> compare_policies(const Instance& inst,
                                            const std::vector<NamedPolicy>& policies,
                                            const CompareSettings& settings) {
    if (policies.size() < 2)
        throw ValidationError("comparison needs at least two policies");
    std::vector<ComparisonRow> rows;
    rows.reserve(policies.size());
    for (const auto& named : policies) {
        ComparisonRow row;
        row.policy_name = named.name;
        row.report = inst.num_units <= settings.exact_limit
                         ? mean_response_time_exact(inst, *named.policy)
                         : simulate(inst, *named.policy, settings.sim);
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string comparison_csv(const std::vector<ComparisonRow>& rows) {
    std::ostringstream out;
    out << "policy_name,method,mean_response,loss_fraction,ci_halfwidth\n";
    for (const auto& row : rows) {
        out << row.policy_name << ',' << row.report.method << ','
            << num(row.report.mean_response_time) << ',' << num(row.report.loss_fraction)
            << ',';
        if (row.report.method == "simulated" && row.report.ci_halfwidth)
            out << num(*row.report.ci_halfwidth);
        out << '\n';
    }
    return out.str();
}

} // namespace dispatch
