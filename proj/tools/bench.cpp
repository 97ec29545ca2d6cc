// Serial-vs-OpenMP benchmark for the data-parallel kernels. Each kernel's
// parallel result is checked against its serial reference before timing is
// reported.

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "dispatch/evaluation.hpp"
#include "dispatch/exact_mdp.hpp"
#include "dispatch/instance.hpp"
#include "dispatch/post_decision.hpp"
#include "dispatch/rng.hpp"

using namespace dispatch;

namespace {

double time_ms(const std::function<void()>& fn) {
    const auto start = std::chrono::steady_clock::now();
    fn();
    const auto stop = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(stop - start).count();
}

void report(const char* kernel, double serial_ms, double parallel_ms, bool match) {
    std::printf("%-28s %10.1f %10.1f %8.2fx   %s\n", kernel, serial_ms, parallel_ms,
                serial_ms / parallel_ms, match ? "results equal" : "MISMATCH");
}

} // namespace

int main() {
#ifdef _OPENMP
    std::printf("OpenMP threads: %d\n", omp_get_max_threads());
#else
    std::printf("built without OpenMP; parallel timings run serially\n");
#endif
    std::printf("%-28s %10s %10s %9s\n", "kernel", "serial ms", "openmp ms", "speedup");

    {
        const Instance inst = generate_instance(1, 30, 10);
        const Policy pol = myopic_policy(inst);
        ExactModel serial, parallel;
        const double t_s = time_ms([&] { serial = build_exact_model(inst, pol, Exec::Serial); });
        const double t_p =
            time_ms([&] { parallel = build_exact_model(inst, pol, Exec::Parallel); });
        report("exact model build", t_s, t_p,
               serial.cost == parallel.cost && serial.rows == parallel.rows);
    }

    {
        const Instance inst = generate_instance(2, 30, 12);
        ValueTable table;
        table.values =
            Eigen::VectorXd::Random(static_cast<Eigen::Index>(num_augmented_states(inst)));
        Policy serial, parallel;
        const double t_s = time_ms([&] { serial = improve_policy(inst, table, Exec::Serial); });
        const double t_p =
            time_ms([&] { parallel = improve_policy(inst, table, Exec::Parallel); });
        report("policy improvement sweep", t_s, t_p, serial == parallel);
    }

    {
        const Instance inst = generate_instance(3, 30, 16);
        const Policy pol = myopic_policy(inst);
        PdModel serial, parallel;
        const double t_s = time_ms([&] { serial = build_pd_model(inst, pol, Exec::Serial); });
        const double t_p =
            time_ms([&] { parallel = build_pd_model(inst, pol, Exec::Parallel); });
        report("post-decision model build", t_s, t_p,
               serial.cost == parallel.cost && serial.rows == parallel.rows);
    }

    {
        const Instance inst = generate_instance(4, 30, 16);
        const Eigen::VectorXd values =
            Eigen::VectorXd::Random(static_cast<Eigen::Index>(inst.num_masks()));
        Policy serial, parallel;
        const double t_s = time_ms(
            [&] { serial = greedy_policy_from_mask_values(inst, values, Exec::Serial); });
        const double t_p = time_ms(
            [&] { parallel = greedy_policy_from_mask_values(inst, values, Exec::Parallel); });
        report("greedy policy from values", t_s, t_p, serial == parallel);
    }

    {
        const Instance inst = generate_instance(5, 30, 10);
        const Policy pol = myopic_policy(inst);
        SimSettings settings;
        settings.served_calls = 20000;
        settings.replications = 8;
        settings.seed = 9;
        EvalReport serial, parallel;
        const double t_s =
            time_ms([&] { serial = simulate(inst, pol, settings, Exec::Serial); });
        const double t_p =
            time_ms([&] { parallel = simulate(inst, pol, settings, Exec::Parallel); });
        report("simulation replications", t_s, t_p,
               serial.mean_response_time == parallel.mean_response_time &&
                   serial.loss_fraction == parallel.loss_fraction &&
                   serial.utilization == parallel.utilization);
    }

    return 0;
}
