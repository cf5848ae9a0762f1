#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "mala/attention.hpp"
#include "mala/kernels.hpp"
#include "mala/matrix.hpp"
#include "mala/rng.hpp"

namespace mala {

struct GradBundle {
    Matrix d_q;  // N x d
    Matrix d_k;  // N x d
    Matrix d_v;  // N x d_v
};

// Analytic gradients of L = sum_ij upstream_ij * Y_ij through the streamed
// MALA forward. beta and gamma are functions of phi(Q) and phi(K); the
// gradient flows through the normalizer, not around it.
inline GradBundle mala_backward(const Matrix& q, const Matrix& k, const Matrix& v,
                                KernelKind kernel, const Matrix& upstream) {
    detail::check_qkv(q, k, v, "mala_backward");
    if (upstream.rows() != q.rows() || upstream.cols() != v.cols()) {
        throw std::invalid_argument("mala_backward: upstream " + upstream.shape_str() +
                                    " vs output " + std::to_string(q.rows()) + "x" +
                                    std::to_string(v.cols()));
    }

    const Matrix phi_q = kernel_apply(kernel, q);
    const Matrix phi_k = kernel_apply(kernel, k);
    const std::size_t n = q.rows();
    const std::size_t d = q.cols();
    const std::size_t dv = v.cols();
    const double n_real = static_cast<double>(n);

    // Forward accumulators.
    Matrix s_kv(d, dv);
    std::vector<double> s_k(d, 0.0);
    std::vector<double> v_sum(dv, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        auto fk = phi_k.row(j);
        auto vj = v.row(j);
        for (std::size_t c = 0; c < dv; ++c) v_sum[c] += vj[c];
        for (std::size_t p = 0; p < d; ++p) {
            s_k[p] += fk[p];
            const double f = fk[p];
            auto sp = s_kv.row(p);
            for (std::size_t c = 0; c < dv; ++c) sp[c] += f * vj[c];
        }
    }

    // Adjoints of the accumulators, filled per query row.
    Matrix d_s_kv(d, dv);
    std::vector<double> d_s_k(d, 0.0);
    std::vector<double> d_v_sum(dv, 0.0);
    Matrix d_phi_q(n, d);

    for (std::size_t i = 0; i < n; ++i) {
        auto fq = phi_q.row(i);
        auto g = upstream.row(i);
        const double s = dot(fq, s_k);
        if (s <= 0.0) throw DegenerateRowError(i, s);
        const double beta = 1.0 + 1.0 / s;
        const double gamma = s / n_real;

        // u_i = phi(Q_i) * S_kv
        std::vector<double> u(dv, 0.0);
        for (std::size_t p = 0; p < d; ++p) {
            const double f = fq[p];
            if (f == 0.0) continue;
            auto sp = s_kv.row(p);
            for (std::size_t c = 0; c < dv; ++c) u[c] += f * sp[c];
        }

        double d_beta = 0.0;   // dL/dbeta_i = g . u
        double d_gamma = 0.0;  // dL/dgamma_i = -g . v_sum
        for (std::size_t c = 0; c < dv; ++c) {
            d_beta += g[c] * u[c];
            d_gamma -= g[c] * v_sum[c];
            d_v_sum[c] -= gamma * g[c];
        }
        const double d_s = d_beta * (-1.0 / (s * s)) + d_gamma / n_real;

        auto dq_row = d_phi_q.row(i);
        for (std::size_t p = 0; p < d; ++p) {
            auto sp = s_kv.row(p);
            double acc = 0.0;
            for (std::size_t c = 0; c < dv; ++c) acc += sp[c] * g[c];
            dq_row[p] = beta * acc + d_s * s_k[p];
            d_s_k[p] += d_s * fq[p];
            auto dsp = d_s_kv.row(p);
            const double bf = beta * fq[p];
            for (std::size_t c = 0; c < dv; ++c) dsp[c] += bf * g[c];
        }
    }

    GradBundle out{Matrix(n, d), Matrix(n, d), Matrix(n, dv)};
    const Matrix dphi_dq = kernel_derivative(kernel, q);
    const Matrix dphi_dk = kernel_derivative(kernel, k);

    for (std::size_t j = 0; j < n; ++j) {
        auto fk = phi_k.row(j);
        auto vj = v.row(j);
        auto dkj = out.d_k.row(j);
        auto dvj = out.d_v.row(j);
        for (std::size_t c = 0; c < dv; ++c) dvj[c] = d_v_sum[c];
        for (std::size_t p = 0; p < d; ++p) {
            auto dsp = d_s_kv.row(p);
            double acc = 0.0;
            for (std::size_t c = 0; c < dv; ++c) {
                acc += dsp[c] * vj[c];
                dvj[c] += fk[p] * dsp[c];
            }
            dkj[p] = (acc + d_s_k[p]) * dphi_dk(j, p);
        }
        for (std::size_t p = 0; p < d; ++p) {
            out.d_q(j, p) = d_phi_q(j, p) * dphi_dq(j, p);
        }
    }
    return out;
}

// Central finite differences of a scalar function of a matrix.
inline Matrix finite_diff_grad(const std::function<double(const Matrix&)>& f,
                               const Matrix& x, double h) {
    if (h <= 0.0) throw std::invalid_argument("finite_diff_grad: h must be > 0");
    Matrix grad(x.rows(), x.cols());
    Matrix probe = x;
    for (std::size_t i = 0; i < x.data().size(); ++i) {
        const double orig = probe.data()[i];
        probe.data()[i] = orig + h;
        const double fp = f(probe);
        probe.data()[i] = orig - h;
        const double fm = f(probe);
        probe.data()[i] = orig;
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
            throw std::runtime_error("finite_diff_grad: non-finite evaluation");
        }
        grad.data()[i] = (fp - fm) / (2.0 * h);
    }
    return grad;
}

inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

struct GradcheckReport {
    std::size_t trials = 0;
    double max_err_q = 0.0;
    double max_err_k = 0.0;
    double max_err_v = 0.0;
    double tolerance = 1e-5;
    bool pass = false;
};

// Compares mala_backward against central differences (h = 1e-6) over random
// instances with N in [2,8], d in [2,6]. For Relu, inputs near the kink are
// resampled; for Exp, inputs are clamped to [-3, 3] to keep accumulators tame.
inline GradcheckReport gradcheck(std::uint64_t seed, std::size_t trials,
                                 KernelKind kernel = KernelKind::EluPlusOne,
                                 double h = 1e-6, double tol = 1e-5) {
    if (trials < 1) throw std::invalid_argument("gradcheck: trials must be >= 1");

    GradcheckReport rep;
    rep.trials = trials;
    rep.tolerance = tol;

    auto sample = [&](std::mt19937_64& rng, std::size_t rows, std::size_t cols) {
        Matrix m = random_normal(rows, cols, rng);
        for (double& x : m.data()) {
            if (kernel == KernelKind::Exp) x = std::clamp(x, -3.0, 3.0);
            if (kernel == KernelKind::Relu) {
                while (std::abs(x) < 1e-4 + 10.0 * h) {
                    x = std::normal_distribution<double>(0.0, 1.0)(rng);
                }
            }
        }
        return m;
    };

    for (std::size_t t = 0; t < trials; ++t) {
        std::mt19937_64 rng(derived_seed(seed, t));
        std::uniform_int_distribution<std::size_t> n_dist(2, 8);
        std::uniform_int_distribution<std::size_t> d_dist(2, 6);
        const std::size_t n = n_dist(rng);
        const std::size_t d = d_dist(rng);
        const std::size_t dv = d_dist(rng);

        Matrix q, k, v, upstream;
        GradBundle analytic;
        bool ok = false;
        for (int attempt = 0; attempt < 32 && !ok; ++attempt) {
            q = sample(rng, n, d);
            k = sample(rng, n, d);
            v = random_normal(n, dv, rng);
            upstream = random_normal(n, dv, rng);
            try {
                analytic = mala_backward(q, k, v, kernel, upstream);
                ok = true;
            } catch (const DegenerateRowError&) {
                // Relu can zero out a whole feature row; draw again.
            }
        }
        if (!ok) continue;

        auto loss_with = [&](const Matrix& qq, const Matrix& kk, const Matrix& vv) {
            const Matrix y = mala_streamed(qq, kk, vv, kernel).output;
            double l = 0.0;
            for (std::size_t i = 0; i < y.data().size(); ++i) {
                l += upstream.data()[i] * y.data()[i];
            }
            return l;
        };

        const Matrix fd_q = finite_diff_grad(
            [&](const Matrix& m) { return loss_with(m, k, v); }, q, h);
        const Matrix fd_k = finite_diff_grad(
            [&](const Matrix& m) { return loss_with(q, m, v); }, k, h);
        const Matrix fd_v = finite_diff_grad(
            [&](const Matrix& m) { return loss_with(q, k, m); }, v, h);

        for (std::size_t i = 0; i < fd_q.data().size(); ++i) {
            rep.max_err_q = std::max(rep.max_err_q,
                                     rel_err(analytic.d_q.data()[i], fd_q.data()[i]));
            rep.max_err_k = std::max(rep.max_err_k,
                                     rel_err(analytic.d_k.data()[i], fd_k.data()[i]));
        }
        for (std::size_t i = 0; i < fd_v.data().size(); ++i) {
            rep.max_err_v = std::max(rep.max_err_v,
                                     rel_err(analytic.d_v.data()[i], fd_v.data()[i]));
        }
    }

    rep.pass = rep.max_err_q < tol && rep.max_err_k < tol && rep.max_err_v < tol;
    return rep;
}

}  // namespace mala
