#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace dispatch {

/// Busy-unit set encoded bitwise: bit i set <=> unit i (0-based) is busy.
using Mask = std::uint32_t;

/// Execution mode for data-parallel kernels. Every parallel kernel has a
/// serial twin that produces bit-identical results; tests compare the two.
enum class Exec { Serial, Parallel };

/// Bad input data: invalid instance fields, malformed files, infeasible
/// actions, mismatched dimensions. CLI exit code 2.
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

/// Problem size exceeds a solver budget. CLI exit code 3.
struct GuardError : std::runtime_error {
    explicit GuardError(const std::string& what) : std::runtime_error(what) {}
};

/// A solve finished but failed its residual/convergence contract. CLI exit code 4.
struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

inline int popcount(Mask m) { return __builtin_popcount(m); }

inline bool is_busy(Mask m, int unit) { return (m >> unit) & 1u; }

inline Mask set_busy(Mask m, int unit) { return m | (Mask{1} << unit); }

inline Mask set_free(Mask m, int unit) { return m & ~(Mask{1} << unit); }

inline Mask full_mask(int num_units) { return (Mask{1} << num_units) - 1u; }

inline bool is_full(Mask m, int num_units) { return m == full_mask(num_units); }

inline std::vector<int> free_units(Mask m, int num_units) {
    std::vector<int> out;
    out.reserve(num_units);
    for (int i = 0; i < num_units; ++i)
        if (!is_busy(m, i)) out.push_back(i);
    return out;
}

inline std::vector<int> busy_units(Mask m, int num_units) {
    std::vector<int> out;
    out.reserve(num_units);
    for (int i = 0; i < num_units; ++i)
        if (is_busy(m, i)) out.push_back(i);
    return out;
}

} // namespace dispatch
