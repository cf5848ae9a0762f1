#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "mala/attention.hpp"
#include "mala/rng.hpp"

namespace mala {

enum class Form { Quadratic, Streamed };

inline const char* form_name(Form f) {
    return f == Form::Quadratic ? "quadratic" : "streamed";
}

struct BenchRecord {
    Mechanism mechanism = Mechanism::Softmax;
    Form form = Form::Quadratic;
    std::size_t n = 0;
    std::size_t d = 0;
    double wall_time = 0.0;  // seconds, median of repeats
    std::size_t repeats = 0;
};

class MemoryCapError : public std::runtime_error {
public:
    MemoryCapError(std::size_t need, std::size_t cap)
        : std::runtime_error("quadratic form needs " + std::to_string(need) +
                             " bytes for the NxN matrix, cap is " +
                             std::to_string(cap)) {}
};

inline constexpr std::size_t kDefaultMemCapBytes = 4ull << 30;

// Timing contract: single-threaded, sequential, one warm-up run excluded,
// median over repeats. Inputs are fixed by seed.
inline BenchRecord time_forward(Mechanism mechanism, Form form, std::size_t n,
                                std::size_t d, std::size_t d_v, std::size_t repeats,
                                std::uint64_t seed,
                                std::size_t mem_cap_bytes = kDefaultMemCapBytes) {
    if (n < 1) throw std::invalid_argument("time_forward: n must be >= 1");
    if (repeats < 3) throw std::invalid_argument("time_forward: repeats must be >= 3");
    if (form == Form::Streamed && mechanism == Mechanism::Softmax) {
        throw std::invalid_argument("time_forward: softmax has no streamed form");
    }
    if (form == Form::Quadratic && n * n * sizeof(double) > mem_cap_bytes) {
        throw MemoryCapError(n * n * sizeof(double), mem_cap_bytes);
    }

    std::mt19937_64 rng(seed);
    const Matrix q = random_normal(n, d, rng);
    const Matrix k = random_normal(n, d, rng);
    const Matrix v = random_normal(n, d_v, rng);

    volatile double sink = 0.0;
    auto run = [&]() {
        Matrix y;
        switch (mechanism) {
            case Mechanism::Softmax:
                y = softmax_attention(q, k, v).output;
                break;
            case Mechanism::Linear:
                y = form == Form::Quadratic
                        ? linear_attention_quadratic(q, k, v, KernelKind::EluPlusOne,
                                                     false).output
                        : linear_attention_streamed(q, k, v, KernelKind::EluPlusOne)
                              .output;
                break;
            case Mechanism::Mala:
                y = form == Form::Quadratic
                        ? mala_quadratic(q, k, v, KernelKind::EluPlusOne, false).output
                        : mala_streamed(q, k, v, KernelKind::EluPlusOne).output;
                break;
        }
        sink = sink + y(0, 0);
    };

    run();  // warm-up, not timed

    std::vector<double> times(repeats);
    for (std::size_t r = 0; r < repeats; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        run();
        const auto t1 = std::chrono::steady_clock::now();
        times[r] = std::chrono::duration<double>(t1 - t0).count();
    }
    std::sort(times.begin(), times.end());
    const double median = repeats % 2 == 1
                              ? times[repeats / 2]
                              : 0.5 * (times[repeats / 2 - 1] + times[repeats / 2]);

    return {mechanism, form, n, d, std::max(median, 1e-9), repeats};
}

// Least-squares slope of log(wall_time) against log(n).
inline double slope_fit(const std::vector<BenchRecord>& records) {
    if (records.size() < 4) {
        throw std::invalid_argument("slope_fit: need at least 4 records");
    }
    std::size_t n_min = records[0].n, n_max = records[0].n;
    for (const auto& r : records) {
        n_min = std::min(n_min, r.n);
        n_max = std::max(n_max, r.n);
    }
    if (n_max < 8 * n_min) {
        throw std::invalid_argument("slope_fit: records must span at least an 8x range in n");
    }
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    const double m = static_cast<double>(records.size());
    for (const auto& r : records) {
        const double x = std::log(static_cast<double>(r.n));
        const double y = std::log(r.wall_time);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    return (m * sxy - sx * sy) / (m * sxx - sx * sx);
}

}  // namespace mala
