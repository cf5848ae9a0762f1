#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mala/attention.hpp"
#include "mala/matrix.hpp"

namespace mala {

// phi(Q_i) = ||phi(Q_i)|| * direction, with unit direction.
struct MagnitudeDirection {
    double magnitude = 0.0;
    std::vector<double> direction;
};

inline MagnitudeDirection decompose_magnitude(std::span<const double> phi_q_row) {
    double sq = 0.0;
    for (double v : phi_q_row) sq += v * v;
    const double mag = std::sqrt(sq);
    if (mag == 0.0) {
        throw std::invalid_argument("decompose_magnitude: zero vector");
    }
    MagnitudeDirection out;
    out.magnitude = mag;
    out.direction.resize(phi_q_row.size());
    for (std::size_t i = 0; i < phi_q_row.size(); ++i) {
        out.direction[i] = phi_q_row[i] / mag;
    }
    return out;
}

// Softmax score ratio for one query against two keys, before and after the
// query is scaled by a. p_s is computed from the scaled query directly, not
// as p^a; the power law p_s = p^a is what tests check.
struct SoftmaxRatio {
    double p = 0.0;
    double p_s = 0.0;
};

inline SoftmaxRatio softmax_ratio(std::span<const double> q_row,
                                  std::span<const double> k_m,
                                  std::span<const double> k_n, std::size_t d,
                                  double a) {
    if (a < 1.0) throw std::invalid_argument("softmax_ratio: a must be >= 1");
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    const double diff = (dot(q_row, k_m) - dot(q_row, k_n)) * inv_sqrt_d;
    if (std::abs(diff) > kExpOverflowLimit || std::abs(a * diff) > kExpOverflowLimit) {
        throw std::overflow_error("softmax_ratio: exponent " + std::to_string(a * diff) +
                                  " would overflow");
    }
    return {std::exp(diff), std::exp(a * diff)};
}

// One query, two keys, one scale factor: everything ratio analysis needs.
struct ScalingReport {
    double a = 1.0;
    double beta = 0.0;
    double gamma = 0.0;
    double beta_new = 0.0;
    double gamma_new = 0.0;
    std::optional<double> p;    // baseline MALA ratio
    std::optional<double> p_m;  // ratio after scaling phi(Q) by a
    std::optional<double> p_s;  // softmax counterpart, when a raw query exists
    bool all_scores_positive = false;
};

inline ScalingReport mala_scaling_report(std::span<const double> phi_q_row,
                                         const Matrix& phi_k, std::size_t m,
                                         std::size_t n, double a) {
    if (a <= 1.0) throw std::invalid_argument("mala_scaling_report: a must be > 1");
    if (m == n || m >= phi_k.rows() || n >= phi_k.rows()) {
        throw std::invalid_argument("mala_scaling_report: bad key indices");
    }

    ScalingReport rep;
    rep.a = a;

    double beta = 0.0, gamma = 0.0;
    const auto base = mala_score_row(phi_q_row, phi_k, &beta, &gamma);
    rep.beta = beta;
    rep.gamma = gamma;

    std::vector<double> scaled_q(phi_q_row.begin(), phi_q_row.end());
    for (double& v : scaled_q) v *= a;
    double beta_new = 0.0, gamma_new = 0.0;
    const auto scaled = mala_score_row(scaled_q, phi_k, &beta_new, &gamma_new);
    rep.beta_new = beta_new;
    rep.gamma_new = gamma_new;

    bool positive = true;
    for (double s : base) positive = positive && s > 0.0;
    for (double s : scaled) positive = positive && s > 0.0;
    rep.all_scores_positive = positive;

    if (base[n] > 0.0 && base[m] > 0.0) rep.p = base[m] / base[n];
    if (scaled[n] > 0.0 && scaled[m] > 0.0) rep.p_m = scaled[m] / scaled[n];
    return rep;
}

// a -> infinity limit of p_m: (A_m - beta*gamma)/(A_n - beta*gamma) with
// A_j = beta * phi_q . phi_k_j.
inline double mala_ratio_limit(std::span<const double> phi_q_row, const Matrix& phi_k,
                               std::size_t m, std::size_t n) {
    if (m >= phi_k.rows() || n >= phi_k.rows()) {
        throw std::invalid_argument("mala_ratio_limit: bad key indices");
    }
    const auto [beta, gamma] = mala_beta_gamma(phi_q_row, phi_k);
    const double a_m = beta * dot(phi_q_row, phi_k.row(m));
    const double a_n = beta * dot(phi_q_row, phi_k.row(n));
    const double denom = a_n - beta * gamma;
    if (denom <= 0.0) {
        throw std::domain_error("mala_ratio_limit: limit denominator " +
                                std::to_string(denom) + " <= 0");
    }
    return (a_m - beta * gamma) / denom;
}

// c = a*beta/(a + beta - 1); strictly > 1 whenever a > 1 and beta > 1.
inline double lemma_c_gt_one(double a, double beta) {
    if (a <= 1.0 || beta <= 1.0) {
        throw std::invalid_argument("lemma_c_gt_one: requires a > 1 and beta > 1");
    }
    return a * beta / (a + beta - 1.0);
}

// Grid check that f(x) = (A_m - gamma*x)/(A_n - gamma*x) is strictly
// increasing on [x_lo, x_hi]. Denominator must stay positive on the interval.
inline bool monotone_f_check(double a_m, double a_n, double gamma, double x_lo,
                             double x_hi, std::size_t grid = 64) {
    if (!(x_lo < x_hi) || grid < 2) {
        throw std::invalid_argument("monotone_f_check: bad interval or grid");
    }
    if (a_m <= 0.0 || a_n <= 0.0 || gamma < 0.0) {
        throw std::invalid_argument("monotone_f_check: requires A_m, A_n > 0, gamma >= 0");
    }
    const double worst_denom = a_n - gamma * x_hi;
    if (worst_denom <= 0.0) {
        throw std::invalid_argument("monotone_f_check: denominator nonpositive on interval");
    }
    double prev = 0.0;
    bool increasing = true;
    for (std::size_t g = 0; g < grid; ++g) {
        const double x = x_lo + (x_hi - x_lo) * static_cast<double>(g) /
                                    static_cast<double>(grid - 1);
        const double f = (a_m - gamma * x) / (a_n - gamma * x);
        if (g > 0 && f <= prev) increasing = false;
        prev = f;
    }
    return increasing;
}

// Q -> Q/||Q|| per row (the magnitude-discard ablation input transform).
inline Matrix normalize_query_mode(const Matrix& q) {
    Matrix out(q.rows(), q.cols());
    for (std::size_t i = 0; i < q.rows(); ++i) {
        double sq = 0.0;
        for (double v : q.row(i)) sq += v * v;
        const double norm = std::sqrt(sq);
        if (norm == 0.0) {
            throw std::invalid_argument("normalize_query_mode: zero row " +
                                        std::to_string(i));
        }
        for (std::size_t c = 0; c < q.cols(); ++c) out(i, c) = q(i, c) / norm;
    }
    return out;
}

struct SpikinessSummary {
    std::string mechanism;
    std::optional<double> entropy;  // nats, mean over rows with no negative entry
    double max_score = 0.0;
    double score_variance = 0.0;
    std::size_t negative_count = 0;  // entries < 0
};

inline SpikinessSummary spikiness(const AttentionOutput& out,
                                  const std::string& mechanism) {
    if (!out.scores) {
        throw std::invalid_argument("spikiness: scores absent (use a quadratic form)");
    }
    const Matrix& s = *out.scores;
    SpikinessSummary sum;
    sum.mechanism = mechanism;

    double max_score = s(0, 0);
    double mean = 0.0;
    for (double v : s.data()) {
        max_score = std::max(max_score, v);
        mean += v;
        if (v < 0.0) ++sum.negative_count;
    }
    mean /= static_cast<double>(s.data().size());
    double var = 0.0;
    for (double v : s.data()) var += (v - mean) * (v - mean);
    sum.max_score = max_score;
    sum.score_variance = var / static_cast<double>(s.data().size());

    double h_total = 0.0;
    std::size_t h_rows = 0;
    for (std::size_t i = 0; i < s.rows(); ++i) {
        bool nonneg = true;
        for (double v : s.row(i)) nonneg = nonneg && v >= 0.0;
        if (!nonneg) continue;
        double h = 0.0;
        for (double v : s.row(i)) {
            if (v > 0.0) h -= v * std::log(v);
        }
        h_total += h;
        ++h_rows;
    }
    if (sum.negative_count == 0 && h_rows > 0) {
        sum.entropy = h_total / static_cast<double>(h_rows);
    }
    return sum;
}

}  // namespace mala
