#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include "dispatch/instance.hpp"

using namespace dispatch;
namespace fs = std::filesystem;

namespace {

const std::string kBin = DISPATCH_CLI_BIN;

int run(const std::string& args) {
    const std::string cmd = kBin + " " + args + " >/dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

double final_trace_mu(const fs::path& trace_csv) {
    std::ifstream in(trace_csv);
    REQUIRE(in.good());
    std::string line, last;
    std::getline(in, line); // header
    while (std::getline(in, line))
        if (!line.empty()) last = line;
    const auto first_comma = last.find(',');
    const auto second_comma = last.find(',', first_comma + 1);
    return std::stod(last.substr(first_comma + 1, second_comma - first_comma - 1));
}

} // namespace

TEST_CASE("gen writes a valid instance and is deterministic") {
    TempDir dir("dispatch_cli_gen");
    const std::string out = dir.file("inst.json");
    REQUIRE(run("gen --seed 1 --nodes 6 --units 3 -o " + out) == 0);
    const Instance inst = load_instance(out);
    CHECK(inst.num_nodes == 6);
    CHECK(inst.num_units == 3);

    const std::string first = slurp(out);
    REQUIRE(run("gen --seed 1 --nodes 6 --units 3 -o " + out) == 0);
    CHECK(slurp(out) == first);

    REQUIRE(run("gen --seed 2 --nodes 6 --units 3 -o " + out) == 0);
    CHECK(slurp(out) != first);
}

TEST_CASE("gen rejects bad arguments with exit 2") {
    TempDir dir("dispatch_cli_gen_bad");
    CHECK(run("gen --units 0 -o " + dir.file("x.json")) == 2);
    CHECK(run("gen --nodes 0 -o " + dir.file("x.json")) == 2);
    CHECK(run("gen --lambda-min -3 -o " + dir.file("x.json")) == 2);
    CHECK(run("nonsense") == 2);
}

TEST_CASE("solve produces matching results for both formulations") {
    TempDir dir("dispatch_cli_solve");
    const std::string inst = dir.file("inst.json");
    REQUIRE(run("gen --seed 3 --nodes 4 --units 3 -o " + inst) == 0);

    REQUIRE(run("solve --method exact -i " + inst + " -o " + dir.path.string()) == 0);
    REQUIRE(run("solve --method pd -i " + inst + " -o " + dir.path.string()) == 0);
    CHECK(fs::exists(dir.file("exact_policy.json")));
    CHECK(fs::exists(dir.file("pd_policy.json")));
    CHECK(fs::exists(dir.file("exact_values.csv")));
    CHECK(fs::exists(dir.file("pd_values.csv")));

    const double mu_exact = final_trace_mu(dir.file("exact_trace.csv"));
    const double mu_pd = final_trace_mu(dir.file("pd_trace.csv"));
    CHECK(std::abs(mu_exact - mu_pd) <= 1e-9);

    // default start is myopic; an explicit flag gives identical output
    const std::string policy_bytes = slurp(dir.file("pd_policy.json"));
    REQUIRE(run("solve --method pd -p myopic -i " + inst + " -o " + dir.path.string()) == 0);
    CHECK(slurp(dir.file("pd_policy.json")) == policy_bytes);

    // the solved policy file loads and validates against the instance
    const Instance loaded = load_instance(inst);
    load_policy(dir.file("exact_policy.json"), loaded).validate(loaded);
}

TEST_CASE("solve refuses an oversized exact system with exit 3") {
    TempDir dir("dispatch_cli_guard");
    const std::string inst = dir.file("inst.json");
    REQUIRE(run("gen --seed 1 --nodes 3 --units 15 -o " + inst) == 0);
    CHECK(run("solve --method exact -i " + inst + " -o " + dir.path.string()) == 3);
}

TEST_CASE("train writes policy, trace, and value dump deterministically") {
    TempDir dir("dispatch_cli_train");
    const std::string inst = dir.file("inst.json");
    REQUIRE(run("gen --seed 4 --nodes 5 --units 3 -o " + inst) == 0);

    const std::string args = "train -i " + inst + " -K 3 -T 4000 -a 100 --seed 7 -o " +
                             dir.path.string();
    REQUIRE(run(args) == 0);
    const std::string policy = slurp(dir.file("td_policy.json"));
    const std::string trace = slurp(dir.file("td_trace.csv"));
    const std::string values = slurp(dir.file("td_values.csv"));

    // 3 iterations -> header + 3 rows
    CHECK(std::count(trace.begin(), trace.end(), '\n') == 4);
    CHECK(trace.rfind("iter,sample_mean_response,mu_estimate,policy_changes\n", 0) == 0);
    CHECK(values.rfind("mask,r_value\n", 0) == 0);

    REQUIRE(run(args) == 0);
    CHECK(slurp(dir.file("td_policy.json")) == policy);
    CHECK(slurp(dir.file("td_trace.csv")) == trace);
    CHECK(slurp(dir.file("td_values.csv")) == values);

    // a degenerate budget still runs end to end
    CHECK(run("train -i " + inst + " -K 1 -T 1 -o " + dir.path.string()) == 0);
}

TEST_CASE("eval and compare") {
    TempDir dir("dispatch_cli_eval");
    const std::string inst = dir.file("inst.json");
    REQUIRE(run("gen --seed 5 --nodes 4 --units 2 -o " + inst) == 0);

    SUBCASE("eval report matches the documented schema") {
        const std::string out = dir.file("report.csv");
        REQUIRE(run("eval -i " + inst + " -p myopic -o " + out) == 0);
        const std::string csv = slurp(out);
        CHECK(csv.rfind("policy_name,method,mean_response,loss_fraction,ci_halfwidth\n", 0) ==
              0);
        CHECK(csv.find("myopic,exact,") != std::string::npos);
    }
    SUBCASE("simulated eval carries a CI and honors the seed") {
        const std::string out = dir.file("sim_report.csv");
        REQUIRE(run("eval -i " + inst +
                    " -p myopic --method sim --calls 3000 --reps 3 --seed 2 -o " + out) == 0);
        const std::string first = slurp(out);
        CHECK(first.find("myopic,simulated,") != std::string::npos);
        REQUIRE(run("eval -i " + inst +
                    " -p myopic --method sim --calls 3000 --reps 3 --seed 2 -o " + out) == 0);
        CHECK(slurp(out) == first);
    }
    SUBCASE("policy with mismatched dimensions exits 2") {
        const std::string other = dir.file("other.json");
        REQUIRE(run("gen --seed 5 --nodes 4 --units 3 -o " + other) == 0);
        REQUIRE(run("solve --method pd -i " + other + " -o " + dir.path.string()) == 0);
        CHECK(run("eval -i " + inst + " -p " + dir.file("pd_policy.json")) == 2);
    }
    SUBCASE("compare emits one row per policy") {
        const std::string out = dir.file("comparison.csv");
        REQUIRE(run("compare -i " + inst + " -p myopic -p myopic -o " + out) == 0);
        const std::string csv = slurp(out);
        CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
        // identical policies, identical rows apart from the name column
        std::istringstream lines(csv);
        std::string header, row1, row2;
        std::getline(lines, header);
        std::getline(lines, row1);
        std::getline(lines, row2);
        CHECK(row1.substr(row1.find(',')) == row2.substr(row2.find(',')));
    }
    SUBCASE("compare requires at least two policies") {
        CHECK(run("compare -i " + inst + " -p myopic") == 2);
    }
}
