#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mala {

// Dense row-major double matrix. The only data carrier in this library;
// Q, K, V, score matrices and outputs are all Matrix instances.
class Matrix {
public:
    Matrix() = default;

    Matrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_) {
            throw std::invalid_argument(
                "Matrix: data length " + std::to_string(data_.size()) +
                " does not match " + std::to_string(rows_) + "x" +
                std::to_string(cols_));
        }
        for (double v : data_) {
            if (!std::isfinite(v)) {
                throw std::invalid_argument("Matrix: non-finite entry on construction");
            }
        }
    }

    Matrix(std::initializer_list<std::initializer_list<double>> init) {
        rows_ = init.size();
        cols_ = rows_ ? init.begin()->size() : 0;
        data_.reserve(rows_ * cols_);
        for (const auto& row : init) {
            if (row.size() != cols_) {
                throw std::invalid_argument("Matrix: ragged initializer");
            }
            for (double v : row) {
                if (!std::isfinite(v)) {
                    throw std::invalid_argument("Matrix: non-finite entry on construction");
                }
                data_.push_back(v);
            }
        }
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const {
        return {data_.data() + r * cols_, cols_};
    }

    const std::vector<double>& data() const { return data_; }
    std::vector<double>& data() { return data_; }

    std::string shape_str() const {
        return std::to_string(rows_) + "x" + std::to_string(cols_);
    }

    bool all_finite() const {
        for (double v : data_) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// Thrown when a query row's feature/key-sum inner product is <= 0 and the
// linear or MALA normalizer is undefined.
class DegenerateRowError : public std::runtime_error {
public:
    DegenerateRowError(std::size_t row, double denom)
        : std::runtime_error("degenerate query row " + std::to_string(row) +
                             ": normalizer " + std::to_string(denom) + " <= 0"),
          row_(row) {}
    std::size_t row() const { return row_; }

private:
    std::size_t row_;
};

inline void check_same_inner(const Matrix& a, const Matrix& b, const char* op) {
    if (a.cols() != b.rows()) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                    a.shape_str() + " * " + b.shape_str());
    }
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    check_same_inner(a, b, "matmul");
    Matrix out(a.rows(), b.cols());
    // ikj order keeps the inner loop contiguous in both b and out.
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) {
                out(i, j) += aik * b(k, j);
            }
        }
    }
    return out;
}

// a * b^T without materializing the transpose; rows of both operands are
// contiguous so the dot products vectorize.
inline Matrix matmul_transb(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) {
        throw std::invalid_argument(std::string("matmul_transb: shape mismatch ") +
                                    a.shape_str() + " * " + b.shape_str() + "^T");
    }
    Matrix out(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto ai = a.row(i);
        for (std::size_t j = 0; j < b.rows(); ++j) {
            auto bj = b.row(j);
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) s += ai[k] * bj[k];
            out(i, j) = s;
        }
    }
    return out;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
    return s;
}

// Row-wise softmax with per-row max subtraction; finite input cannot overflow.
inline Matrix row_softmax(const Matrix& scores) {
    Matrix out(scores.rows(), scores.cols());
    for (std::size_t i = 0; i < scores.rows(); ++i) {
        auto in = scores.row(i);
        auto o = out.row(i);
        double m = in[0];
        for (double v : in) m = std::max(m, v);
        double sum = 0.0;
        for (std::size_t j = 0; j < in.size(); ++j) {
            o[j] = std::exp(in[j] - m);
            sum += o[j];
        }
        const double inv = 1.0 / sum;
        for (std::size_t j = 0; j < in.size(); ++j) o[j] *= inv;
    }
    return out;
}

// Shannon entropy in nats of each row; rows must be probability distributions.
inline std::vector<double> row_entropy(const Matrix& dist) {
    std::vector<double> out(dist.rows());
    for (std::size_t i = 0; i < dist.rows(); ++i) {
        auto r = dist.row(i);
        double sum = 0.0;
        double h = 0.0;
        for (double v : r) {
            if (v < 0.0) {
                throw std::invalid_argument("row_entropy: negative entry in row " +
                                            std::to_string(i));
            }
            sum += v;
            if (v > 0.0) h -= v * std::log(v);
        }
        if (std::abs(sum - 1.0) > 1e-9) {
            throw std::invalid_argument("row_entropy: row " + std::to_string(i) +
                                        " sums to " + std::to_string(sum));
        }
        out[i] = h;
    }
    return out;
}

}  // namespace mala
