#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <vector>

#include "mala/kernels.hpp"
#include "mala/matrix.hpp"

namespace mala {

enum class Mechanism { Softmax, Linear, Mala };

inline const char* mechanism_name(Mechanism m) {
    switch (m) {
        case Mechanism::Softmax: return "softmax";
        case Mechanism::Linear: return "linear";
        case Mechanism::Mala: return "mala";
    }
    return "?";
}

inline Mechanism mechanism_from_name(const std::string& name) {
    if (name == "softmax") return Mechanism::Softmax;
    if (name == "linear") return Mechanism::Linear;
    if (name == "mala") return Mechanism::Mala;
    throw std::invalid_argument("unknown mechanism '" + name +
                                "', valid options: softmax linear mala");
}

struct AttentionOutput {
    Matrix output;                                  // N x d_v
    std::optional<Matrix> scores;                   // N x N when requested
    std::vector<double> row_sums;                   // per query row
    std::size_t negative_count = 0;                 // score entries <= 0
    std::optional<std::vector<double>> beta;        // MALA only
    std::optional<std::vector<double>> gamma;       // MALA only
};

namespace detail {

inline void check_qkv(const Matrix& q, const Matrix& k, const Matrix& v,
                      const char* op) {
    if (q.rows() == 0 || q.cols() == 0) {
        throw std::invalid_argument(std::string(op) + ": empty query " + q.shape_str());
    }
    if (k.rows() != q.rows() || v.rows() != q.rows()) {
        throw std::invalid_argument(std::string(op) + ": token-count mismatch q=" +
                                    q.shape_str() + " k=" + k.shape_str() +
                                    " v=" + v.shape_str());
    }
    if (k.cols() != q.cols()) {
        throw std::invalid_argument(std::string(op) + ": feature-dim mismatch q=" +
                                    q.shape_str() + " k=" + k.shape_str());
    }
}

// Column sums of phi_k: s_k[c] = sum_j phi_k(j, c).
inline std::vector<double> key_feature_sum(const Matrix& phi_k) {
    std::vector<double> s(phi_k.cols(), 0.0);
    for (std::size_t j = 0; j < phi_k.rows(); ++j) {
        auto r = phi_k.row(j);
        for (std::size_t c = 0; c < r.size(); ++c) s[c] += r[c];
    }
    return s;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Feature-level score rows. These take phi-features directly so callers
// (analysis, ablations) can scale ||phi(Q)|| exactly.
// ---------------------------------------------------------------------------

// Vanilla linear-attention score row: s_j = phi_q . phi_k_j / (phi_q . sum_m phi_k_m).
inline std::vector<double> linear_score_row(std::span<const double> phi_q_row,
                                            const Matrix& phi_k,
                                            std::size_t row_index = 0) {
    const auto s_k = detail::key_feature_sum(phi_k);
    const double denom = dot(phi_q_row, s_k);
    if (denom <= 0.0) throw DegenerateRowError(row_index, denom);
    std::vector<double> out(phi_k.rows());
    for (std::size_t j = 0; j < phi_k.rows(); ++j) {
        out[j] = dot(phi_q_row, phi_k.row(j)) / denom;
    }
    return out;
}

// beta = 1 + 1/S, gamma = S/N with S = phi_q . sum_m phi_k_m.
inline std::pair<double, double> mala_beta_gamma(std::span<const double> phi_q_row,
                                                 const Matrix& phi_k,
                                                 std::size_t row_index = 0) {
    const auto s_k = detail::key_feature_sum(phi_k);
    const double s = dot(phi_q_row, s_k);
    if (s <= 0.0) throw DegenerateRowError(row_index, s);
    return {1.0 + 1.0 / s, s / static_cast<double>(phi_k.rows())};
}

// MALA score row: beta * phi_q . phi_k_j - gamma. Sums to 1 by construction.
inline std::vector<double> mala_score_row(std::span<const double> phi_q_row,
                                          const Matrix& phi_k,
                                          double* beta_out = nullptr,
                                          double* gamma_out = nullptr,
                                          std::size_t row_index = 0) {
    const auto [beta, gamma] = mala_beta_gamma(phi_q_row, phi_k, row_index);
    if (beta_out) *beta_out = beta;
    if (gamma_out) *gamma_out = gamma;
    std::vector<double> out(phi_k.rows());
    for (std::size_t j = 0; j < phi_k.rows(); ++j) {
        out[j] = beta * dot(phi_q_row, phi_k.row(j)) - gamma;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Softmax attention (quadratic).
// ---------------------------------------------------------------------------

inline AttentionOutput softmax_attention(const Matrix& q, const Matrix& k,
                                         const Matrix& v, bool want_scores = false) {
    detail::check_qkv(q, k, v, "softmax_attention");
    Matrix logits = matmul_transb(q, k);
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(q.cols()));
    for (double& x : logits.data()) x *= inv_sqrt_d;
    Matrix scores = row_softmax(logits);

    AttentionOutput out;
    out.output = matmul(scores, v);
    out.row_sums.resize(q.rows());
    for (std::size_t i = 0; i < q.rows(); ++i) {
        double s = 0.0;
        for (double x : scores.row(i)) {
            s += x;
            if (x <= 0.0) ++out.negative_count;
        }
        out.row_sums[i] = s;
    }
    if (want_scores) out.scores = std::move(scores);
    return out;
}

// ---------------------------------------------------------------------------
// Vanilla linear attention.
// ---------------------------------------------------------------------------

inline AttentionOutput linear_attention_quadratic(const Matrix& q, const Matrix& k,
                                                  const Matrix& v, KernelKind kernel,
                                                  bool want_scores = true) {
    detail::check_qkv(q, k, v, "linear_attention_quadratic");
    const Matrix phi_q = kernel_apply(kernel, q);
    const Matrix phi_k = kernel_apply(kernel, k);
    const std::size_t n = q.rows();

    Matrix scores(n, n);
    AttentionOutput out;
    out.row_sums.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto row = linear_score_row(phi_q.row(i), phi_k, i);
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            scores(i, j) = row[j];
            s += row[j];
            if (row[j] <= 0.0) ++out.negative_count;
        }
        out.row_sums[i] = s;
    }
    out.output = matmul(scores, v);
    if (want_scores) out.scores = std::move(scores);
    return out;
}

// O(N) form: accumulators S_kv = sum_j phi(K_j)^T V_j and s_k = sum_m phi(K_m).
// Never materializes an N x N matrix.
inline AttentionOutput linear_attention_streamed(const Matrix& q, const Matrix& k,
                                                 const Matrix& v, KernelKind kernel) {
    detail::check_qkv(q, k, v, "linear_attention_streamed");
    const Matrix phi_q = kernel_apply(kernel, q);
    const Matrix phi_k = kernel_apply(kernel, k);
    const std::size_t n = q.rows();
    const std::size_t d = q.cols();
    const std::size_t dv = v.cols();

    Matrix s_kv(d, dv);
    std::vector<double> s_k(d, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        auto fk = phi_k.row(j);
        auto vj = v.row(j);
        for (std::size_t p = 0; p < d; ++p) {
            s_k[p] += fk[p];
            auto sp = s_kv.row(p);
            const double f = fk[p];
            for (std::size_t c = 0; c < dv; ++c) sp[c] += f * vj[c];
        }
    }

    AttentionOutput out;
    out.output = Matrix(n, dv);
    out.row_sums.assign(n, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        auto fq = phi_q.row(i);
        const double denom = dot(fq, s_k);
        if (denom <= 0.0) throw DegenerateRowError(i, denom);
        auto y = out.output.row(i);
        for (std::size_t p = 0; p < d; ++p) {
            const double w = fq[p] / denom;
            if (w == 0.0) continue;
            auto sp = s_kv.row(p);
            for (std::size_t c = 0; c < dv; ++c) y[c] += w * sp[c];
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// MALA.
// ---------------------------------------------------------------------------

inline AttentionOutput mala_quadratic(const Matrix& q, const Matrix& k,
                                      const Matrix& v, KernelKind kernel,
                                      bool want_scores = true) {
    detail::check_qkv(q, k, v, "mala_quadratic");
    const Matrix phi_q = kernel_apply(kernel, q);
    const Matrix phi_k = kernel_apply(kernel, k);
    const std::size_t n = q.rows();

    Matrix scores(n, n);
    AttentionOutput out;
    out.row_sums.resize(n);
    out.beta.emplace(n);
    out.gamma.emplace(n);
    for (std::size_t i = 0; i < n; ++i) {
        double beta = 0.0, gamma = 0.0;
        auto row = mala_score_row(phi_q.row(i), phi_k, &beta, &gamma, i);
        (*out.beta)[i] = beta;
        (*out.gamma)[i] = gamma;
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            scores(i, j) = row[j];
            s += row[j];
            if (row[j] <= 0.0) ++out.negative_count;
        }
        out.row_sums[i] = s;
    }
    out.output = matmul(scores, v);
    if (want_scores) out.scores = std::move(scores);
    return out;
}

// O(N) MALA: Y_i = beta_i * phi(Q_i) S_kv - gamma_i * v_sum, with beta_i and
// gamma_i recomputed per row from the s_k accumulator.
inline AttentionOutput mala_streamed(const Matrix& q, const Matrix& k,
                                     const Matrix& v, KernelKind kernel) {
    detail::check_qkv(q, k, v, "mala_streamed");
    const Matrix phi_q = kernel_apply(kernel, q);
    const Matrix phi_k = kernel_apply(kernel, k);
    const std::size_t n = q.rows();
    const std::size_t d = q.cols();
    const std::size_t dv = v.cols();

    Matrix s_kv(d, dv);
    std::vector<double> s_k(d, 0.0);
    std::vector<double> v_sum(dv, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        auto fk = phi_k.row(j);
        auto vj = v.row(j);
        for (std::size_t c = 0; c < dv; ++c) v_sum[c] += vj[c];
        for (std::size_t p = 0; p < d; ++p) {
            s_k[p] += fk[p];
            auto sp = s_kv.row(p);
            const double f = fk[p];
            for (std::size_t c = 0; c < dv; ++c) sp[c] += f * vj[c];
        }
    }

    AttentionOutput out;
    out.output = Matrix(n, dv);
    out.row_sums.resize(n);
    out.beta.emplace(n);
    out.gamma.emplace(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto fq = phi_q.row(i);
        const double s = dot(fq, s_k);
        if (s <= 0.0) throw DegenerateRowError(i, s);
        const double beta = 1.0 + 1.0 / s;
        const double gamma = s / static_cast<double>(n);
        (*out.beta)[i] = beta;
        (*out.gamma)[i] = gamma;
        out.row_sums[i] = beta * s - static_cast<double>(n) * gamma;
        auto y = out.output.row(i);
        for (std::size_t p = 0; p < d; ++p) {
            const double w = beta * fq[p];
            if (w == 0.0) continue;
            auto sp = s_kv.row(p);
            for (std::size_t c = 0; c < dv; ++c) y[c] += w * sp[c];
        }
        for (std::size_t c = 0; c < dv; ++c) y[c] -= gamma * v_sum[c];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Ablations of the MALA normalizer (Full keeps the exact beta/gamma).
// ---------------------------------------------------------------------------

enum class AblationMode { Full, NoBeta, NoGamma, Fixed };

// Score matrix with beta/gamma replaced per the mode. NoBeta pins beta = 1,
// NoGamma pins gamma = 0, Fixed substitutes user constants for both.
inline Matrix mala_scores_ablated(const Matrix& phi_q, const Matrix& phi_k,
                                  AblationMode mode, double fixed_beta = 1.0,
                                  double fixed_gamma = 0.0) {
    const std::size_t n = phi_q.rows();
    Matrix scores(n, phi_k.rows());
    for (std::size_t i = 0; i < n; ++i) {
        auto [beta, gamma] = mala_beta_gamma(phi_q.row(i), phi_k, i);
        switch (mode) {
            case AblationMode::Full: break;
            case AblationMode::NoBeta: beta = 1.0; break;
            case AblationMode::NoGamma: gamma = 0.0; break;
            case AblationMode::Fixed:
                beta = fixed_beta;
                gamma = fixed_gamma;
                break;
        }
        for (std::size_t j = 0; j < phi_k.rows(); ++j) {
            scores(i, j) = beta * dot(phi_q.row(i), phi_k.row(j)) - gamma;
        }
    }
    return scores;
}

// ---------------------------------------------------------------------------
// Multi-head wrapper.
// ---------------------------------------------------------------------------

struct MultiHeadConfig {
    std::size_t num_heads = 1;
    std::size_t d_model = 0;
    Matrix w_q, w_k, w_v;  // each d_model x d_model
    KernelKind kernel = KernelKind::EluPlusOne;
    Mechanism mechanism = Mechanism::Mala;
};

namespace detail {

inline Matrix slice_cols(const Matrix& m, std::size_t c0, std::size_t width) {
    Matrix out(m.rows(), width);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t c = 0; c < width; ++c) out(i, c) = m(i, c0 + c);
    }
    return out;
}

}  // namespace detail

inline Matrix multihead_forward(const MultiHeadConfig& cfg, const Matrix& x) {
    if (cfg.d_model == 0 || cfg.num_heads == 0 || cfg.d_model % cfg.num_heads != 0) {
        throw std::invalid_argument("multihead_forward: d_model " +
                                    std::to_string(cfg.d_model) +
                                    " not divisible by num_heads " +
                                    std::to_string(cfg.num_heads));
    }
    if (x.cols() != cfg.d_model) {
        throw std::invalid_argument("multihead_forward: input " + x.shape_str() +
                                    " vs d_model " + std::to_string(cfg.d_model));
    }
    auto check_proj = [&](const Matrix& w, const char* name) {
        if (w.rows() != cfg.d_model || w.cols() != cfg.d_model) {
            throw std::invalid_argument(std::string("multihead_forward: ") + name +
                                        " must be square d_model, got " + w.shape_str());
        }
    };
    check_proj(cfg.w_q, "w_q");
    check_proj(cfg.w_k, "w_k");
    check_proj(cfg.w_v, "w_v");

    const Matrix q = matmul(x, cfg.w_q);
    const Matrix k = matmul(x, cfg.w_k);
    const Matrix v = matmul(x, cfg.w_v);
    const std::size_t head_dim = cfg.d_model / cfg.num_heads;

    Matrix out(x.rows(), cfg.d_model);
    for (std::size_t h = 0; h < cfg.num_heads; ++h) {
        const std::size_t c0 = h * head_dim;
        const Matrix qh = detail::slice_cols(q, c0, head_dim);
        const Matrix kh = detail::slice_cols(k, c0, head_dim);
        const Matrix vh = detail::slice_cols(v, c0, head_dim);
        Matrix yh;
        switch (cfg.mechanism) {
            case Mechanism::Softmax:
                yh = softmax_attention(qh, kh, vh).output;
                break;
            case Mechanism::Linear:
                yh = linear_attention_streamed(qh, kh, vh, cfg.kernel).output;
                break;
            case Mechanism::Mala:
                yh = mala_streamed(qh, kh, vh, cfg.kernel).output;
                break;
        }
        for (std::size_t i = 0; i < x.rows(); ++i) {
            for (std::size_t c = 0; c < head_dim; ++c) out(i, c0 + c) = yh(i, c);
        }
    }
    return out;
}

}  // namespace mala
