#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace dispatch {

/// Seeded random stream with portable sampling on top of mt19937_64.
/// The standard library's distribution objects are implementation-defined,
/// so all draws here are derived from raw engine output; values frozen in
/// tests stay valid across standard libraries.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

    /// Uniform in [0, 1) with 53 random bits.
    double uniform01() { return (engine_() >> 11) * 0x1.0p-53; }

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Exponential with the given rate.
    double exponential(double rate) { return -std::log1p(-uniform01()) / rate; }

    /// Index drawn from a cumulative weight table (cdf.back() = total mass).
    /// Linear scan; tables here have at most a few dozen entries.
    int pick_cdf(const std::vector<double>& cdf) {
        const double u = uniform01() * cdf.back();
        for (std::size_t i = 0; i + 1 < cdf.size(); ++i)
            if (u < cdf[i]) return static_cast<int>(i);
        return static_cast<int>(cdf.size() - 1);
    }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        // Rejection-free modulo is fine here: n is tiny relative to 2^64.
        return engine_() % n;
    }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

/// Running cumulative sums of a weight vector, for pick_cdf.
inline std::vector<double> cumulative(const std::vector<double>& w) {
    std::vector<double> cdf(w.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        acc += w[i];
        cdf[i] = acc;
    }
    return cdf;
}

} // namespace dispatch
