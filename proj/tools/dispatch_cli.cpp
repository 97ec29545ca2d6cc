// Command-line front end: generate instances, solve small systems exactly,
// train the TD learner, and evaluate or compare dispatch policies.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "dispatch/evaluation.hpp"
#include "dispatch/exact_mdp.hpp"
#include "dispatch/format.hpp"
#include "dispatch/instance.hpp"
#include "dispatch/post_decision.hpp"
#include "dispatch/td_learner.hpp"

namespace fs = std::filesystem;
using namespace dispatch;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitGuard = 3;
constexpr int kExitNumerical = 4;

std::string default_out_dir() {
    const char* env = std::getenv("DISPATCH_OUT_DIR");
    return env && *env ? env : ".";
}

std::string join(const std::string& dir, const std::string& name) {
    return (fs::path(dir) / name).string();
}

// Every file write is read back and compared before the command may exit 0.
void write_verified(const std::string& path, const std::string& content) {
    {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw ValidationError("cannot open '" + path + "' for writing");
        out << content;
    }
    std::ifstream in(path, std::ios::binary);
    std::stringstream buf;
    buf << in.rdbuf();
    if (buf.str() != content)
        throw NumericalError("read-back verification failed for '" + path + "'");
}

void write_instance_verified(const Instance& inst, const std::string& path) {
    save_instance(inst, path);
    const Instance back = load_instance(path);
    if (back.arrival_rates != inst.arrival_rates || back.service_rates != inst.service_rates ||
        back.response_times != inst.response_times)
        throw NumericalError("read-back verification failed for '" + path + "'");
}

void write_policy_verified(const Policy& policy, const Instance& inst,
                           const std::string& path) {
    save_policy(policy, path);
    if (!(load_policy(path, inst) == policy))
        throw NumericalError("read-back verification failed for '" + path + "'");
}

Policy resolve_policy(const std::string& arg, const Instance& inst) {
    if (arg == "myopic") return myopic_policy(inst);
    return load_policy(arg, inst);
}

std::string policy_display_name(const std::string& arg) {
    if (arg == "myopic") return "myopic";
    return fs::path(arg).stem().string();
}

std::string solve_trace_csv(const std::vector<IterationTraceRow>& trace) {
    std::ostringstream out;
    out << "iter,mu,policy_changes\n";
    for (const auto& row : trace)
        out << row.iter << ',' << num(row.avg_cost) << ',' << row.policy_changes << '\n';
    return out.str();
}

std::string train_trace_csv(const std::vector<TdTraceRow>& trace) {
    std::ostringstream out;
    out << "iter,sample_mean_response,mu_estimate,policy_changes\n";
    for (const auto& row : trace)
        out << row.iter << ',' << num(row.sample_mean_response) << ','
            << num(row.mu_estimate) << ',' << row.policy_changes << '\n';
    return out.str();
}

std::string exact_values_csv(const Instance& inst, const Eigen::VectorXd& values) {
    std::ostringstream out;
    out << "call,mask,value\n"; // call 0 marks the no-call slot, else 1..J
    for (std::size_t idx = 0; idx < num_augmented_states(inst); ++idx) {
        const AugmentedState s = state_at(inst, idx);
        out << (s.call + 1) << ',' << s.mask << ','
            << num(values[static_cast<Eigen::Index>(idx)]) << '\n';
    }
    return out.str();
}

std::string mask_values_csv(const Eigen::VectorXd& values, const char* value_header) {
    std::ostringstream out;
    out << "mask," << value_header << '\n';
    for (Eigen::Index m = 0; m < values.size(); ++m)
        out << m << ',' << num(values[m]) << '\n';
    return out.str();
}

struct EvalArgs {
    std::string method = "auto"; // auto | exact | sim
    long calls = 100000;
    int reps = 5;
    std::uint64_t seed = 1;
    int exact_limit = 12;
};

void add_eval_options(CLI::App* cmd, EvalArgs& args) {
    cmd->add_option("--method", args.method, "Evaluation method: auto, exact, or sim")
        ->check(CLI::IsMember({"auto", "exact", "sim"}))
        ->capture_default_str();
    cmd->add_option("--calls", args.calls,
                    "Simulated served calls per replication (including 5% warm-up)")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd->add_option("--reps", args.reps, "Simulation replications")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd->add_option("--seed", args.seed, "Simulation seed")->capture_default_str();
    cmd->add_option("--exact-limit", args.exact_limit,
                    "Largest N evaluated exactly when --method auto")
        ->capture_default_str();
}

EvalReport run_eval(const Instance& inst, const Policy& policy, const EvalArgs& args) {
    const bool exact =
        args.method == "exact" || (args.method == "auto" && inst.num_units <= args.exact_limit);
    if (exact) return mean_response_time_exact(inst, policy);
    SimSettings settings;
    settings.served_calls = args.calls;
    settings.replications = args.reps;
    settings.seed = args.seed;
    return simulate(inst, policy, settings);
}

void print_report(const std::string& name, const EvalReport& report) {
    std::printf("%s: mean_response=%s loss_fraction=%s method=%s", name.c_str(),
                num(report.mean_response_time).c_str(), num(report.loss_fraction).c_str(),
                report.method.c_str());
    if (report.ci_halfwidth) std::printf(" ci_halfwidth=%s", num(*report.ci_halfwidth).c_str());
    std::printf("\n  utilization:");
    for (double u : report.utilization) std::printf(" %s", num(u).c_str());
    std::printf("\n");
}

int dispatch_main(int argc, char** argv) {
    CLI::App app{"Average-cost dispatch MDP toolkit: exact and post-decision policy "
                 "iteration, TD learning, and policy evaluation"};
    app.require_subcommand(1);
    app.footer("Environment:\n"
               "  DISPATCH_OUT_DIR   default directory for output files (default: .)\n"
               "Exit codes:\n"
               "  0 success, 2 validation error, 3 solver budget refused, "
               "4 numerical failure");

    // ---- gen ----
    auto* gen = app.add_subcommand("gen", "Generate a random instance on the unit square");
    std::uint64_t gen_seed = 1;
    int gen_nodes = 30, gen_units = 15;
    std::string gen_out = join(default_out_dir(), "instance.json");
    GeneratorConfig config;
    gen->add_option("--seed", gen_seed, "Generator seed")->capture_default_str();
    gen->add_option("--nodes", gen_nodes, "Demand nodes J")->check(CLI::PositiveNumber)
        ->capture_default_str();
    gen->add_option("--units", gen_units, "Response units N")->check(CLI::PositiveNumber)
        ->capture_default_str();
    gen->add_option("-o,--output", gen_out, "Instance file path")->capture_default_str();
    gen->add_option("--lambda-min", config.lambda_min, "Arrival-rate draw lower bound")
        ->capture_default_str();
    gen->add_option("--lambda-max", config.lambda_max, "Arrival-rate draw upper bound")
        ->capture_default_str();
    gen->add_option("--mu-min", config.mu_min, "Service-rate draw lower bound")
        ->capture_default_str();
    gen->add_option("--mu-max", config.mu_max, "Service-rate draw upper bound")
        ->capture_default_str();
    gen->add_option("--util", config.target_utilization,
                    "Rescale arrivals to this offered load over total service rate "
                    "(0 disables)")
        ->capture_default_str();
    gen->add_option("--time-scale", config.time_scale, "Minutes per unit of distance")
        ->capture_default_str();
    gen->add_option("--turnout", config.turnout, "Fixed turnout minutes per response")
        ->capture_default_str();
    gen->footer("Writes the instance JSON: {\"J\", \"N\", \"lambda\", \"mu\", \"t\", "
                "\"meta\"} with t[i][j] in minutes, unit i row-major over nodes j.");

    // ---- solve ----
    auto* solve = app.add_subcommand(
        "solve", "Exact policy iteration on the full or post-decision formulation");
    std::string solve_instance, solve_method = "pd", solve_init = "myopic";
    std::string solve_dir = default_out_dir();
    int solve_max_iters = 100;
    std::size_t solve_max_states = ExactSolveBudget{}.max_states;
    std::uint64_t solve_max_masks = PdSolveBudget{}.max_masks;
    solve->add_option("-i,--instance", solve_instance, "Instance file")->required();
    solve->add_option("--method", solve_method, "Formulation: exact or pd")
        ->check(CLI::IsMember({"exact", "pd"}))
        ->capture_default_str();
    solve->add_option("-p,--policy", solve_init, "Initial policy file or 'myopic'")
        ->capture_default_str();
    solve->add_option("--max-iters", solve_max_iters, "Policy-iteration cap")
        ->capture_default_str();
    solve->add_option("-o,--out-dir", solve_dir, "Output directory")->capture_default_str();
    solve->add_option("--max-states", solve_max_states,
                      "Override the exact-formulation state budget")
        ->capture_default_str();
    solve->add_option("--max-masks", solve_max_masks,
                      "Override the post-decision mask budget")
        ->capture_default_str();
    solve->footer(
        "Writes <method>_policy.json {\"actions\": {\"node,mask\": unit}} with 1-based\n"
        "nodes and units, <method>_trace.csv (iter,mu,policy_changes), and\n"
        "<method>_values.csv (exact: call,mask,value with call 0 = no-call slot;\n"
        "pd: mask,value).");

    // ---- train ----
    auto* train = app.add_subcommand("train", "Policy iteration with TD learning");
    std::string train_instance, train_dir = default_out_dir(), train_init = "myopic";
    int train_iters = 25;
    long train_steps = 200000;
    TdOptions td_options;
    std::uint64_t train_seed = 1;
    train->add_option("-i,--instance", train_instance, "Instance file")->required();
    train->add_option("-K,--iterations", train_iters, "Outer policy iterations")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    train->add_option("-T,--transitions", train_steps, "Transitions per rollout")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    train->add_option("-a,--stepsize", td_options.stepsize_a,
                      "Step-size parameter a in gamma_t = a/(a+t)")
        ->capture_default_str();
    train->add_option("--seed", train_seed, "Rollout seed")->capture_default_str();
    train->add_option("--init", train_init, "Initial policy: myopic or random")
        ->check(CLI::IsMember({"myopic", "random"}))
        ->capture_default_str();
    train->add_flag("--warm-start", td_options.warm_start,
                    "Carry r and mu across outer iterations instead of resetting");
    train->add_option("-o,--out-dir", train_dir, "Output directory")->capture_default_str();
    train->footer(
        "Writes td_policy.json, td_trace.csv\n"
        "(iter,sample_mean_response,mu_estimate,policy_changes; the sample mean\n"
        "covers served dispatches of that rollout), and td_values.csv (mask,r_value).");

    // ---- eval ----
    auto* eval = app.add_subcommand("eval", "Evaluate one policy");
    std::string eval_instance, eval_policy = "myopic";
    std::string eval_out;
    EvalArgs eval_args;
    eval->add_option("-i,--instance", eval_instance, "Instance file")->required();
    eval->add_option("-p,--policy", eval_policy, "Policy file or 'myopic'")
        ->capture_default_str();
    eval->add_option("-o,--output", eval_out,
                     "Report CSV path (default <out-dir>/eval_report.csv)");
    add_eval_options(eval, eval_args);
    eval->footer("Report CSV columns: policy_name,method,mean_response,loss_fraction,"
                 "ci_halfwidth\n(ci_halfwidth is empty for exact evaluations).");

    // ---- compare ----
    auto* compare = app.add_subcommand("compare", "Evaluate several policies side by side");
    std::string compare_instance, compare_out;
    std::vector<std::string> compare_policies_args, compare_names;
    EvalArgs compare_args;
    compare->add_option("-i,--instance", compare_instance, "Instance file")->required();
    compare->add_option("-p,--policy", compare_policies_args,
                        "Policy file or 'myopic' (repeatable)")
        ->required()
        ->expected(-2);
    compare->add_option("--names", compare_names, "Row names (one per policy)");
    compare->add_option("-o,--output", compare_out,
                        "Comparison CSV path (default <out-dir>/comparison.csv)");
    add_eval_options(compare, compare_args);
    compare->footer("CSV columns: policy_name,method,mean_response,loss_fraction,"
                    "ci_halfwidth\n(ci_halfwidth is empty for exact evaluations).");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e); // prints the message and usage hint
        return kExitValidation;
    }

    if (gen->parsed()) {
        const Instance inst = generate_instance(gen_seed, gen_nodes, gen_units, config);
        write_instance_verified(inst, gen_out);
        std::printf("instance written to %s\n", gen_out.c_str());
        std::printf("J=%d N=%d lambda=%s mu_total=%s utilization=%s\n", inst.num_nodes,
                    inst.num_units, num(inst.total_arrival_rate()).c_str(),
                    num(inst.total_service_rate()).c_str(),
                    num(inst.total_arrival_rate() / inst.total_service_rate()).c_str());
        return kExitOk;
    }

    if (solve->parsed()) {
        const Instance inst = load_instance(solve_instance);
        const Policy init = resolve_policy(solve_init, inst);
        const std::string prefix = solve_method;
        std::string values_csv;
        std::string trace_csv;
        Policy final_policy;
        double final_mu = 0.0;
        bool converged = false;
        std::size_t iterations = 0;

        if (solve_method == "exact") {
            ExactSolveBudget budget;
            budget.max_states = solve_max_states;
            const auto result = policy_iteration(inst, init, solve_max_iters, budget);
            values_csv = exact_values_csv(inst, result.values.values);
            trace_csv = solve_trace_csv(result.trace);
            final_policy = result.policy;
            final_mu = result.values.avg_cost;
            converged = result.converged;
            iterations = result.trace.size();
        } else {
            PdSolveBudget budget;
            budget.max_masks = solve_max_masks;
            const auto result = pd_policy_iteration(inst, init, solve_max_iters, budget);
            values_csv = mask_values_csv(result.values.values, "value");
            trace_csv = solve_trace_csv(result.trace);
            final_policy = result.policy;
            final_mu = result.values.avg_cost;
            converged = result.converged;
            iterations = result.trace.size();
        }

        write_policy_verified(final_policy, inst, join(solve_dir, prefix + "_policy.json"));
        write_verified(join(solve_dir, prefix + "_values.csv"), values_csv);
        write_verified(join(solve_dir, prefix + "_trace.csv"), trace_csv);
        std::printf("%s policy iteration %s after %zu iterations\n", prefix.c_str(),
                    converged ? "converged" : "stopped", iterations);
        std::printf("final mu = %s\n", num(final_mu).c_str());
        return kExitOk;
    }

    if (train->parsed()) {
        const Instance inst = load_instance(train_instance);
        td_options.random_init = train_init == "random";
        const TdResult result =
            td_policy_iteration(inst, train_iters, train_steps, train_seed, td_options);
        write_policy_verified(result.policy, inst, join(train_dir, "td_policy.json"));
        write_verified(join(train_dir, "td_trace.csv"), train_trace_csv(result.trace));
        write_verified(join(train_dir, "td_values.csv"),
                       mask_values_csv(result.r, "r_value"));
        const auto& last = result.trace.back();
        std::printf("trained %d iterations x %ld transitions\n", train_iters, train_steps);
        std::printf("final sample mean response = %s, mu estimate = %s\n",
                    num(last.sample_mean_response).c_str(), num(last.mu_estimate).c_str());
        return kExitOk;
    }

    if (eval->parsed()) {
        const Instance inst = load_instance(eval_instance);
        const Policy policy = resolve_policy(eval_policy, inst);
        const EvalReport report = run_eval(inst, policy, eval_args);
        std::vector<ComparisonRow> rows{{policy_display_name(eval_policy), report}};
        const std::string out_path =
            eval_out.empty() ? join(default_out_dir(), "eval_report.csv") : eval_out;
        write_verified(out_path, comparison_csv(rows));
        print_report(policy_display_name(eval_policy), report);
        std::printf("report written to %s\n", out_path.c_str());
        return kExitOk;
    }

    if (compare->parsed()) {
        const Instance inst = load_instance(compare_instance);
        if (!compare_names.empty() && compare_names.size() != compare_policies_args.size())
            throw ValidationError("--names must match the number of policies");
        std::vector<Policy> policies;
        policies.reserve(compare_policies_args.size());
        for (const auto& arg : compare_policies_args)
            policies.push_back(resolve_policy(arg, inst));
        std::vector<ComparisonRow> rows;
        for (std::size_t k = 0; k < policies.size(); ++k) {
            const std::string name = compare_names.empty()
                                         ? policy_display_name(compare_policies_args[k])
                                         : compare_names[k];
            rows.push_back({name, run_eval(inst, policies[k], compare_args)});
        }
        const std::string out_path =
            compare_out.empty() ? join(default_out_dir(), "comparison.csv") : compare_out;
        const std::string csv = comparison_csv(rows);
        write_verified(out_path, csv);
        std::fputs(csv.c_str(), stdout);
        std::printf("comparison written to %s\n", out_path.c_str());
        return kExitOk;
    }

    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return dispatch_main(argc, argv);
    } catch (const GuardError& e) {
        std::fprintf(stderr, "guard: %s\n", e.what());
        return kExitGuard;
    } catch (const ValidationError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitValidation;
    } catch (const NumericalError& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitValidation;
    }
}
