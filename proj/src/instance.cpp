#include "dispatch/instance.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "dispatch/rng.hpp"

namespace dispatch {

using nlohmann::json;

double Instance::total_arrival_rate() const {
    return std::accumulate(arrival_rates.begin(), arrival_rates.end(), 0.0);
}

double Instance::total_service_rate() const {
    return std::accumulate(service_rates.begin(), service_rates.end(), 0.0);
}

void Instance::validate() const {
    if (num_nodes < 1) throw ValidationError("J must be >= 1");
    if (num_units < 1) throw ValidationError("N must be >= 1");
    if (num_units > 30) throw ValidationError("N too large for a 32-bit busy mask");
    if (static_cast<int>(arrival_rates.size()) != num_nodes)
        throw ValidationError("lambda: expected " + std::to_string(num_nodes) + " entries");
    if (static_cast<int>(service_rates.size()) != num_units)
        throw ValidationError("mu: expected " + std::to_string(num_units) + " entries");
    if (static_cast<int>(response_times.size()) != num_units)
        throw ValidationError("t: expected " + std::to_string(num_units) + " rows");
    for (int j = 0; j < num_nodes; ++j)
        if (!(arrival_rates[j] > 0.0) || !std::isfinite(arrival_rates[j]))
            throw ValidationError("lambda[" + std::to_string(j + 1) + "] must be > 0");
    for (int i = 0; i < num_units; ++i) {
        if (!(service_rates[i] > 0.0) || !std::isfinite(service_rates[i]))
            throw ValidationError("mu[" + std::to_string(i + 1) + "] must be > 0");
        if (static_cast<int>(response_times[i].size()) != num_nodes)
            throw ValidationError("t[" + std::to_string(i + 1) + "]: expected " +
                                  std::to_string(num_nodes) + " columns");
        for (int j = 0; j < num_nodes; ++j)
            if (!(response_times[i][j] >= 0.0) || !std::isfinite(response_times[i][j]))
                throw ValidationError("t[" + std::to_string(i + 1) + "][" +
                                      std::to_string(j + 1) + "] must be >= 0");
    }
}

void GeneratorConfig::validate() const {
    if (!(lambda_min > 0.0) || !(lambda_max >= lambda_min))
        throw ValidationError("generator: lambda range must be positive and ordered");
    if (!(mu_min > 0.0) || !(mu_max >= mu_min))
        throw ValidationError("generator: mu range must be positive and ordered");
    if (!(time_scale > 0.0)) throw ValidationError("generator: time_scale must be > 0");
    if (turnout < 0.0) throw ValidationError("generator: turnout must be >= 0");
    if (target_utilization < 0.0)
        throw ValidationError("generator: target utilization must be >= 0");
}

Instance generate_instance(std::uint64_t seed, int num_nodes, int num_units,
                           const GeneratorConfig& config) {
    if (num_nodes < 1) throw ValidationError("J must be >= 1");
    if (num_units < 1) throw ValidationError("N must be >= 1");
    config.validate();

    RandomStream rng(seed);
    std::vector<std::pair<double, double>> nodes(num_nodes), bases(num_units);
    for (auto& p : nodes) p = {rng.uniform01(), rng.uniform01()};
    for (auto& p : bases) p = {rng.uniform01(), rng.uniform01()};

    Instance inst;
    inst.num_nodes = num_nodes;
    inst.num_units = num_units;
    inst.service_rates.resize(num_units);
    for (auto& m : inst.service_rates) m = rng.uniform(config.mu_min, config.mu_max);
    inst.arrival_rates.resize(num_nodes);
    for (auto& l : inst.arrival_rates) l = rng.uniform(config.lambda_min, config.lambda_max);
    if (config.target_utilization > 0.0) {
        const double raw = std::accumulate(inst.arrival_rates.begin(),
                                           inst.arrival_rates.end(), 0.0);
        const double target = config.target_utilization *
                              std::accumulate(inst.service_rates.begin(),
                                              inst.service_rates.end(), 0.0);
        for (auto& l : inst.arrival_rates) l *= target / raw;
    }
    inst.response_times.assign(num_units, std::vector<double>(num_nodes));
    for (int i = 0; i < num_units; ++i)
        for (int j = 0; j < num_nodes; ++j) {
            const double dx = bases[i].first - nodes[j].first;
            const double dy = bases[i].second - nodes[j].second;
            inst.response_times[i][j] =
                config.time_scale * std::sqrt(dx * dx + dy * dy) + config.turnout;
        }

    inst.meta = json{{"generator", {{"seed", seed},
                                    {"lambda_min", config.lambda_min},
                                    {"lambda_max", config.lambda_max},
                                    {"mu_min", config.mu_min},
                                    {"mu_max", config.mu_max},
                                    {"target_utilization", config.target_utilization},
                                    {"time_scale", config.time_scale},
                                    {"turnout", config.turnout}}}};
    inst.validate();
    return inst;
}

namespace {

const json& require_field(const json& j, const char* name) {
    auto it = j.find(name);
    if (it == j.end())
        throw ValidationError(std::string("missing field '") + name + "'");
    return *it;
}

} // namespace

Instance instance_from_json(const json& j) {
    Instance inst;
    try {
        inst.num_nodes = require_field(j, "J").get<int>();
    } catch (const json::exception&) {
        throw ValidationError("field 'J' is not an integer");
    }
    try {
        inst.num_units = require_field(j, "N").get<int>();
    } catch (const json::exception&) {
        throw ValidationError("field 'N' is not an integer");
    }
    try {
        inst.arrival_rates = require_field(j, "lambda").get<std::vector<double>>();
    } catch (const json::exception&) {
        throw ValidationError("field 'lambda' is not an array of numbers");
    }
    try {
        inst.service_rates = require_field(j, "mu").get<std::vector<double>>();
    } catch (const json::exception&) {
        throw ValidationError("field 'mu' is not an array of numbers");
    }
    try {
        inst.response_times =
            require_field(j, "t").get<std::vector<std::vector<double>>>();
    } catch (const json::exception&) {
        throw ValidationError("field 't' is not a matrix of numbers");
    }
    if (j.contains("meta")) inst.meta = j.at("meta");
    inst.validate();
    return inst;
}

json instance_to_json(const Instance& inst) {
    return json{{"J", inst.num_nodes},
                {"N", inst.num_units},
                {"lambda", inst.arrival_rates},
                {"mu", inst.service_rates},
                {"t", inst.response_times},
                {"meta", inst.meta.is_null() ? json::object() : inst.meta}};
}

void save_instance(const Instance& inst, const std::string& path) {
    inst.validate();
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot open '" + path + "' for writing");
    out << instance_to_json(inst).dump(2) << "\n";
    if (!out) throw ValidationError("write to '" + path + "' failed");
}

Instance load_instance(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open instance file '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ValidationError("instance file '" + path + "': " + e.what());
    }
    return instance_from_json(j);
}

Policy::Policy(int num_nodes, int num_units)
    : num_nodes_(num_nodes), num_units_(num_units),
      actions_(static_cast<std::size_t>(num_nodes) * (std::uint64_t{1} << num_units),
               kNoAction) {}

int Policy::count_differences(const Policy& other) const {
    if (num_nodes_ != other.num_nodes_ || num_units_ != other.num_units_)
        throw ValidationError("policy dimension mismatch in comparison");
    int count = 0;
    for (std::size_t i = 0; i < actions_.size(); ++i)
        if (actions_[i] != other.actions_[i]) ++count;
    return count;
}

void Policy::validate(const Instance& inst) const {
    if (num_nodes_ != inst.num_nodes || num_units_ != inst.num_units)
        throw ValidationError("policy dimensions (J=" + std::to_string(num_nodes_) +
                              ", N=" + std::to_string(num_units_) +
                              ") do not match instance (J=" + std::to_string(inst.num_nodes) +
                              ", N=" + std::to_string(inst.num_units) + ")");
    const Mask full = inst.all_busy();
    for (int j = 0; j < num_nodes_; ++j)
        for (Mask m = 0; m < inst.num_masks(); ++m) {
            const int a = action(j, m);
            if (m == full) {
                if (a != kNoAction)
                    throw ValidationError("policy assigns an action to the full mask");
                continue;
            }
            if (a < 0 || a >= num_units_)
                throw ValidationError("policy missing action for node " +
                                      std::to_string(j + 1) + ", mask " + std::to_string(m));
            if (is_busy(m, a))
                throw ValidationError("policy dispatches busy unit " + std::to_string(a + 1) +
                                      " at node " + std::to_string(j + 1) + ", mask " +
                                      std::to_string(m));
        }
}

Policy myopic_policy(const Instance& inst) {
    inst.validate();
    Policy policy(inst.num_nodes, inst.num_units);
    const Mask full = inst.all_busy();
    for (int j = 0; j < inst.num_nodes; ++j)
        for (Mask m = 0; m < inst.num_masks(); ++m) {
            if (m == full) continue;
            int best = -1;
            double best_t = 0.0;
            for (int i = 0; i < inst.num_units; ++i) {
                if (is_busy(m, i)) continue;
                const double t = inst.response_times[i][j];
                if (best < 0 || t < best_t) {
                    best = i;
                    best_t = t;
                }
            }
            policy.set_action(j, m, best);
        }
    return policy;
}

Policy random_policy(const Instance& inst, std::uint64_t seed) {
    inst.validate();
    RandomStream rng(seed);
    Policy policy(inst.num_nodes, inst.num_units);
    const Mask full = inst.all_busy();
    for (int j = 0; j < inst.num_nodes; ++j)
        for (Mask m = 0; m < inst.num_masks(); ++m) {
            if (m == full) continue;
            const auto free = free_units(m, inst.num_units);
            policy.set_action(j, m, free[rng.below(free.size())]);
        }
    return policy;
}

json policy_to_json(const Policy& policy) {
    json actions = json::object();
    const Mask full = full_mask(policy.num_units());
    for (int j = 0; j < policy.num_nodes(); ++j)
        for (Mask m = 0; m < policy.num_masks(); ++m) {
            if (m == full) continue;
            // 1-based node and unit in files; mask bits stay positional.
            actions[std::to_string(j + 1) + "," + std::to_string(m)] =
                policy.action(j, m) + 1;
        }
    return json{{"actions", actions}};
}

Policy policy_from_json(const json& j, const Instance& inst) {
    const json& actions = require_field(j, "actions");
    if (!actions.is_object()) throw ValidationError("field 'actions' is not an object");
    Policy policy(inst.num_nodes, inst.num_units);
    const std::uint64_t expected =
        static_cast<std::uint64_t>(inst.num_nodes) * (inst.num_masks() - 1);
    if (actions.size() != expected)
        throw ValidationError("policy has " + std::to_string(actions.size()) +
                              " actions, expected " + std::to_string(expected));
    for (const auto& [key, value] : actions.items()) {
        std::size_t comma = key.find(',');
        if (comma == std::string::npos)
            throw ValidationError("action key '" + key + "' is not 'node,mask'");
        int node;
        unsigned long mask_value;
        try {
            node = std::stoi(key.substr(0, comma));
            mask_value = std::stoul(key.substr(comma + 1));
        } catch (const std::exception&) {
            throw ValidationError("action key '" + key + "' is not 'node,mask'");
        }
        if (node < 1 || node > inst.num_nodes)
            throw ValidationError("action key '" + key + "': node out of range");
        if (mask_value >= inst.num_masks() || mask_value == inst.all_busy())
            throw ValidationError("action key '" + key + "': bad mask");
        int unit;
        try {
            unit = value.get<int>();
        } catch (const json::exception&) {
            throw ValidationError("action for '" + key + "' is not an integer");
        }
        if (unit < 1 || unit > inst.num_units)
            throw ValidationError("action for '" + key + "': unit out of range");
        policy.set_action(node - 1, static_cast<Mask>(mask_value), unit - 1);
    }
    policy.validate(inst);
    return policy;
}

void save_policy(const Policy& policy, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot open '" + path + "' for writing");
    out << policy_to_json(policy).dump() << "\n";
    if (!out) throw ValidationError("write to '" + path + "' failed");
}

Policy load_policy(const std::string& path, const Instance& inst) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open policy file '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ValidationError("policy file '" + path + "': " + e.what());
    }
    return policy_from_json(j, inst);
}

} // namespace dispatch
