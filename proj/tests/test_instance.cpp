#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "dispatch/instance.hpp"
#include "oracles.hpp"

using namespace dispatch;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

} // namespace

TEST_CASE("generated instance at benchmark scale satisfies all invariants") {
    const Instance inst = generate_instance(1, 30, 15);
    CHECK(inst.num_nodes == 30);
    CHECK(inst.num_units == 15);
    CHECK(inst.arrival_rates.size() == 30);
    CHECK(inst.service_rates.size() == 15);
    CHECK(inst.response_times.size() == 15);
    inst.validate();
    // total arrival rate is the sum exactly as stored
    double sum = 0.0;
    for (double l : inst.arrival_rates) sum += l;
    CHECK(inst.total_arrival_rate() == sum);
    // default generator targets utilization 0.5
    CHECK(inst.total_arrival_rate() / inst.total_service_rate() == doctest::Approx(0.5));
}

TEST_CASE("minimal single-node single-unit instance") {
    const Instance inst = generate_instance(1, 1, 1);
    CHECK(inst.num_nodes == 1);
    CHECK(inst.num_units == 1);
    CHECK(inst.response_times.size() == 1);
    CHECK(inst.response_times[0].size() == 1);
    inst.validate();
}

TEST_CASE("generation is a pure function of seed and shape") {
    const Instance a = generate_instance(7, 5, 3);
    const Instance b = generate_instance(7, 5, 3);
    CHECK(a.arrival_rates == b.arrival_rates);
    CHECK(a.service_rates == b.service_rates);
    CHECK(a.response_times == b.response_times);
    const Instance c = generate_instance(8, 5, 3);
    CHECK(a.response_times != c.response_times);
}

TEST_CASE("generator rejects invalid configuration ranges") {
    GeneratorConfig config;
    config.lambda_min = -1.0;
    CHECK_THROWS_AS(generate_instance(1, 2, 2, config), ValidationError);
    config = GeneratorConfig{};
    config.mu_max = config.mu_min - 0.5;
    CHECK_THROWS_AS(generate_instance(1, 2, 2, config), ValidationError);
    config = GeneratorConfig{};
    config.time_scale = 0.0;
    CHECK_THROWS_AS(generate_instance(1, 2, 2, config), ValidationError);
    CHECK_THROWS_AS(generate_instance(1, 0, 2), ValidationError);
    CHECK_THROWS_AS(generate_instance(1, 2, 0), ValidationError);
}

TEST_CASE("instance file round-trip is identity") {
    const Instance inst = generate_instance(3, 6, 4);
    const std::string path = temp_path("roundtrip_instance.json");
    save_instance(inst, path);
    const Instance back = load_instance(path);
    CHECK(back.num_nodes == inst.num_nodes);
    CHECK(back.num_units == inst.num_units);
    CHECK(back.arrival_rates == inst.arrival_rates);
    CHECK(back.service_rates == inst.service_rates);
    CHECK(back.response_times == inst.response_times);
    std::remove(path.c_str());
}

TEST_CASE("loading rejects invariant violations and shape errors") {
    const Instance inst = generate_instance(3, 3, 2);

    SUBCASE("zero arrival rate") {
        nlohmann::json j = instance_to_json(inst);
        j["lambda"][1] = 0.0;
        CHECK_THROWS_WITH_AS(static_cast<void>(instance_from_json(j)),
                             doctest::Contains("lambda[2]"), ValidationError);
    }
    SUBCASE("negative service rate") {
        nlohmann::json j = instance_to_json(inst);
        j["mu"][0] = -2.0;
        CHECK_THROWS_WITH_AS(static_cast<void>(instance_from_json(j)),
                             doctest::Contains("mu[1]"), ValidationError);
    }
    SUBCASE("response matrix with wrong row count") {
        nlohmann::json j = instance_to_json(inst);
        j["t"].erase(1);
        CHECK_THROWS_WITH_AS(static_cast<void>(instance_from_json(j)),
                             doctest::Contains("t"), ValidationError);
    }
    SUBCASE("response matrix with ragged columns") {
        nlohmann::json j = instance_to_json(inst);
        j["t"][0].erase(2);
        CHECK_THROWS_AS(static_cast<void>(instance_from_json(j)), ValidationError);
    }
    SUBCASE("missing field") {
        nlohmann::json j = instance_to_json(inst);
        j.erase("mu");
        CHECK_THROWS_WITH_AS(static_cast<void>(instance_from_json(j)),
                             doctest::Contains("mu"), ValidationError);
    }
    SUBCASE("non-numeric field") {
        nlohmann::json j = instance_to_json(inst);
        j["J"] = "thirty";
        CHECK_THROWS_WITH_AS(static_cast<void>(instance_from_json(j)),
                             doctest::Contains("J"), ValidationError);
    }
}

TEST_CASE("myopic policy picks the strict closest free unit") {
    // two units, one node: t = (3, 5)
    const Instance inst = oracle::manual_instance(1, 2, {1.0}, {1.0, 1.0}, {{3.0}, {5.0}});
    const Policy pol = myopic_policy(inst);
    CHECK(pol.action(0, 0b00) == 0);
    CHECK(pol.action(0, 0b01) == 1); // unit 1 busy, only unit 2 free
    CHECK(pol.action(0, 0b10) == 0);
}

TEST_CASE("myopic tie-break goes to the lowest unit index") {
    const Instance inst = oracle::manual_instance(1, 2, {1.0}, {1.0, 1.0}, {{4.0}, {4.0}});
    const Policy pol = myopic_policy(inst);
    CHECK(pol.action(0, 0b00) == 0);
}

TEST_CASE("myopic policy always lands in the free argmin set") {
    // exhaustive check at full benchmark scale
    const Instance inst = generate_instance(11, 30, 15);
    const Policy pol = myopic_policy(inst);
    const Mask full = inst.all_busy();
    for (Mask m = 0; m < inst.num_masks(); ++m) {
        if (m == full) continue;
        for (int j = 0; j < inst.num_nodes; ++j) {
            const int a = pol.action(j, m);
            REQUIRE(!is_busy(m, a));
            double min_t = std::numeric_limits<double>::infinity();
            for (int i = 0; i < inst.num_units; ++i)
                if (!is_busy(m, i)) min_t = std::min(min_t, inst.response_times[i][j]);
            REQUIRE(inst.response_times[a][j] == min_t);
        }
    }
}

TEST_CASE("random policies are feasible and seed-stable") {
    const Instance inst = generate_instance(5, 4, 3);
    const Policy a = random_policy(inst, 42);
    const Policy b = random_policy(inst, 42);
    CHECK(a == b);
    a.validate(inst);
    CHECK(random_policy(inst, 43).count_differences(a) > 0);
}

TEST_CASE("policy file round-trip and validation") {
    const Instance inst = generate_instance(2, 4, 3);
    const Policy pol = random_policy(inst, 9);
    const std::string path = temp_path("roundtrip_policy.json");
    save_policy(pol, path);
    CHECK(load_policy(path, inst) == pol);

    SUBCASE("dimension mismatch is rejected") {
        const Instance other = generate_instance(2, 4, 2);
        CHECK_THROWS_AS(static_cast<void>(load_policy(path, other)), ValidationError);
    }
    SUBCASE("busy-unit dispatch is rejected") {
        nlohmann::json j = policy_to_json(pol);
        j["actions"]["1,1"] = 1; // unit 1 is busy in mask 1
        CHECK_THROWS_AS(static_cast<void>(policy_from_json(j, inst)), ValidationError);
    }
    SUBCASE("full-mask entry is rejected") {
        nlohmann::json j = policy_to_json(pol);
        j["actions"]["1,7"] = 1;
        CHECK_THROWS_AS(static_cast<void>(policy_from_json(j, inst)), ValidationError);
    }
    SUBCASE("missing entries are rejected") {
        nlohmann::json j = policy_to_json(pol);
        j["actions"].erase("1,0");
        CHECK_THROWS_AS(static_cast<void>(policy_from_json(j, inst)), ValidationError);
    }
    std::remove(path.c_str());
}

TEST_CASE("units and nodes are 1-based in policy files") {
    const Instance inst = oracle::manual_instance(1, 2, {1.0}, {1.0, 1.0}, {{3.0}, {5.0}});
    const nlohmann::json j = policy_to_json(myopic_policy(inst));
    CHECK(j["actions"]["1,0"] == 1); // internal unit 0
    CHECK(j["actions"]["1,1"] == 2); // internal unit 1
}
