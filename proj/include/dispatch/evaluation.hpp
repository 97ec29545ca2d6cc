#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dispatch/common.hpp"
#include "dispatch/instance.hpp"

namespace dispatch {

/// Policy-quality measurement for one policy.
struct EvalReport {
    double mean_response_time = 0.0;      ///< per served call
    double loss_fraction = 0.0;           ///< P(call arrives to a full system)
    std::vector<double> utilization;      ///< per-unit busy probability
    std::string method;                   ///< "exact" or "simulated"
    std::optional<double> ci_halfwidth;   ///< 95% CI, simulated only
    long horizon = 0;                     ///< served calls per replication
    int replications = 0;
};

struct HypercubeBudget {
    int max_units = 20;
    /// Masks beyond this use Gauss-Seidel sweeps instead of a dense solve;
    /// both paths meet the same residual bound.
    std::uint64_t dense_limit = 4096;

    void check(const Instance& inst) const;
};

/// Stationary distribution of the continuous-time busy-mask process under a
/// policy (the hypercube loss model): arrivals at node j push the dispatched
/// unit busy at rate lambda_j, busy units free up at their service rates,
/// full-system arrivals are lost. Global balance residual <= 1e-10.
Eigen::VectorXd hypercube_stationary(const Instance& inst, const Policy& policy,
                                     const HypercubeBudget& budget = {});

/// Exact mean response time per served call, loss fraction, and per-unit
/// utilizations from the hypercube stationary distribution.
EvalReport mean_response_time_exact(const Instance& inst, const Policy& policy,
                                    const HypercubeBudget& budget = {});

struct SimSettings {
    long served_calls = 100000; ///< per replication, including warm-up
    int replications = 5;
    std::uint64_t seed = 1;
    /// Leading fraction of served calls discarded per replication.
    double warmup_fraction = 0.05;
};

/// Event-driven simulation of the dispatch loss system. Replications run on
/// independent seeded streams (parallel across replications); the report is
/// identical for a given seed regardless of Exec or thread count.
EvalReport simulate(const Instance& inst, const Policy& policy, const SimSettings& settings,
                    Exec exec = Exec::Parallel);

struct NamedPolicy {
    std::string name;
    const Policy* policy = nullptr;
};

struct CompareSettings {
    /// Exact evaluation when num_units <= exact_limit, simulation otherwise.
    int exact_limit = 12;
    SimSettings sim;
};

struct ComparisonRow {
    std::string policy_name;
    EvalReport report;
};

/// Evaluates each named policy with the auto-selected method.
std::vector<ComparisonRow> compare_policies(const Instance& inst,
                                            const std::vector<NamedPolicy>& policies,
                                            const CompareSettings& settings = {});

/// CSV rendering of a comparison table; header
/// policy_name,method,mean_response,loss_fraction,ci_halfwidth.
std::string comparison_csv(const std::vector<ComparisonRow>& rows);

} // namespace dispatch
