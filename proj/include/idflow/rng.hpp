#ifndef IDFLOW_RNG_HPP
#define IDFLOW_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>

#include "tensor.hpp"

namespace idflow {

// Deterministic RNG. std::mt19937_64 output is fully specified by the
// standard; the uniform/normal transforms are implemented here instead of
// using std::*_distribution, whose bit streams vary across stdlibs.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform on [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // Uniform on (0, 1].
    double uniform_pos() { return static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller, always consuming exactly two draws per sample.
    double normal() {
        const double u1 = uniform_pos();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    std::size_t index(std::size_t n) {
        // Rejection-free modulo is fine here; n is tiny relative to 2^64.
        return static_cast<std::size_t>(engine_() % n);
    }

    Tensor normal_tensor(std::vector<std::size_t> shape, double stddev = 1.0) {
        Tensor t(std::move(shape));
        for (double& v : t.data) v = stddev * normal();
        return t;
    }

    // Derives an independent stream; mixing is splitmix64-style so nearby
    // (seed, salt) pairs do not collide.
    static std::uint64_t derive(std::uint64_t seed, std::uint64_t salt) {
        std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace idflow

#endif
