#pragma once

#include <cstdint>
#include <random>

#include "mala/matrix.hpp"

namespace mala {

// Fixed stride for deriving per-instance seeds from one master seed, so every
// sampled instance is reproducible independently of evaluation order.
inline constexpr std::uint64_t kSeedStride = 0x9E3779B97F4A7C15ULL;

inline std::uint64_t derived_seed(std::uint64_t master, std::uint64_t index) {
    return master + kSeedStride * (index + 1);
}

inline Matrix random_normal(std::size_t rows, std::size_t cols, std::mt19937_64& rng,
                            double mean = 0.0, double stddev = 1.0) {
    std::normal_distribution<double> dist(mean, stddev);
    Matrix out(rows, cols);
    for (double& v : out.data()) v = dist(rng);
    return out;
}

inline Matrix random_uniform(std::size_t rows, std::size_t cols, std::mt19937_64& rng,
                             double lo, double hi) {
    std::uniform_real_distribution<double> dist(lo, hi);
    Matrix out(rows, cols);
    for (double& v : out.data()) v = dist(rng);
    return out;
}

}  // namespace mala
