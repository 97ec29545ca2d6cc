#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "dispatch/common.hpp"

namespace dispatch {

/// Problem data: demand nodes, response units, Poisson arrival rates per
/// node, exponential service rates per unit, and the unit-to-node mean
/// response time matrix. Immutable after construction in practice; all
/// solver code takes it by const reference.
struct Instance {
    int num_nodes = 0; ///< J
    int num_units = 0; ///< N
    std::vector<double> arrival_rates;                ///< lambda_j, length J
    std::vector<double> service_rates;                ///< mu_i, length N
    std::vector<std::vector<double>> response_times;  ///< t[i][j], N rows x J cols
    nlohmann::json meta;                              ///< free-form (generator settings etc.)

    /// Sum of per-node arrival rates exactly as stored.
    double total_arrival_rate() const;

    double total_service_rate() const;

    Mask all_busy() const { return full_mask(num_units); }
    std::uint64_t num_masks() const { return std::uint64_t{1} << num_units; }

    /// Throws ValidationError on any structural or sign violation.
    void validate() const;
};

struct GeneratorConfig {
    double lambda_min = 0.5;
    double lambda_max = 1.5;
    double mu_min = 0.8;
    double mu_max = 1.2;
    /// If > 0, arrival rates are rescaled so total lambda = target * total mu.
    double target_utilization = 0.5;
    /// Minutes of travel per unit of Euclidean distance in the unit square.
    double time_scale = 60.0;
    /// Fixed turnout minutes added to every response time.
    double turnout = 1.0;

    void validate() const;
};

/// Random instance on the unit square: nodes and unit bases placed uniformly,
/// response time = time_scale * distance + turnout. Pure function of
/// (seed, num_nodes, num_units, config).
Instance generate_instance(std::uint64_t seed, int num_nodes, int num_units,
                           const GeneratorConfig& config = {});

void save_instance(const Instance& inst, const std::string& path);
Instance load_instance(const std::string& path);

Instance instance_from_json(const nlohmann::json& j);
nlohmann::json instance_to_json(const Instance& inst);

/// Dispatch policy: a total map from (node, non-full busy mask) to the unit
/// to send. Full masks carry no action (arriving calls there are lost).
class Policy {
public:
    static constexpr std::int16_t kNoAction = -1;

    Policy() = default;
    Policy(int num_nodes, int num_units);

    int num_nodes() const { return num_nodes_; }
    int num_units() const { return num_units_; }
    std::uint64_t num_masks() const { return std::uint64_t{1} << num_units_; }

    /// Unit for (node, mask); kNoAction for the full mask.
    int action(int node, Mask mask) const {
        return actions_[static_cast<std::size_t>(node) * num_masks() + mask];
    }

    void set_action(int node, Mask mask, int unit) {
        actions_[static_cast<std::size_t>(node) * num_masks() + mask] =
            static_cast<std::int16_t>(unit);
    }

    /// Number of (node, mask) entries where the two policies disagree.
    int count_differences(const Policy& other) const;

    bool operator==(const Policy& other) const = default;

    /// Totality and feasibility against an instance; throws ValidationError.
    void validate(const Instance& inst) const;

private:
    int num_nodes_ = 0;
    int num_units_ = 0;
    std::vector<std::int16_t> actions_;
};

/// Closest-available-unit policy: argmin over free units of t[i][j],
/// ties broken by lowest unit index.
Policy myopic_policy(const Instance& inst);

/// Uniformly random feasible action per decision state; used for
/// initial policies and equivalence sweeps.
Policy random_policy(const Instance& inst, std::uint64_t seed);

void save_policy(const Policy& policy, const std::string& path);
Policy load_policy(const std::string& path, const Instance& inst);

nlohmann::json policy_to_json(const Policy& policy);
Policy policy_from_json(const nlohmann::json& j, const Instance& inst);

} // namespace dispatch
