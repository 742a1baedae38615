#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "ckgr/errors.hpp"

namespace ckgr {

using Vector = std::vector<double>;

// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }

    void fill(double v);

    static Matrix identity(std::size_t n);

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// Counter-based generator: the i-th draw is a pure function of (seed, stream, i),
// so sequences are identical on every platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) noexcept;

    std::uint64_t next_u64() noexcept;
    // Uniform in [0, 1) with 53 random bits.
    double uniform() noexcept;
    // Uniform integer in [0, n); n must be positive.
    std::uint64_t below(std::uint64_t n) noexcept;
    // Standard normal via Box-Muller.
    double normal() noexcept;

    // Independent generator derived from this one's seed.
    Rng fork(std::uint64_t stream) const noexcept { return Rng(seed_, stream_ * 0x9E3779B97F4A7C15ULL + stream + 1); }

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t counter() const noexcept { return counter_; }

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

// Fisher-Yates with the portable generator (std::shuffle is not reproducible across libraries).
template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.below(i));
        std::swap(v[i - 1], v[j]);
    }
}

Matrix gaussian_init(std::size_t rows, std::size_t cols, double stddev, Rng& rng);

// ---- kernels -------------------------------------------------------------

double dot(std::span<const double> a, std::span<const double> b);
double squared_norm(std::span<const double> a);
// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);
// y = A x
void matvec(const Matrix& a, std::span<const double> x, std::span<double> y);
Vector matvec(const Matrix& a, std::span<const double> x);
// y += A^T x
void matvec_t_accumulate(const Matrix& a, std::span<const double> x, std::span<double> y);
// A += alpha * u v^T
void add_outer(Matrix& a, double alpha, std::span<const double> u, std::span<const double> v);

inline double leaky_relu(double x, double slope) noexcept { return x >= 0.0 ? x : slope * x; }
inline double leaky_relu_grad(double x, double slope) noexcept { return x >= 0.0 ? 1.0 : slope; }

double sigmoid(double x) noexcept;
// -ln sigma(x), evaluated without overflow.
double neg_log_sigmoid(double x) noexcept;

Vector softmax(std::span<const double> logits);

// Throws NumericFault naming `what` if any value is NaN or infinite.
void check_finite(std::span<const double> values, std::string_view what);

// ---- gradient checking ---------------------------------------------------

struct GradCheckOptions {
    double epsilon = 1e-5;
    double tolerance = 1e-4;
    // Denominator floor for the relative error so near-zero components compare absolutely.
    double scale_floor = 1e-6;
};

struct GradCheckReport {
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    std::size_t worst_index = 0;
    std::size_t checked = 0;
    bool passed = true;
};

using LossFn = std::function<double(std::span<const double>)>;

// Central differences (f(x+e) - f(x-e)) / 2e against `analytic` for every coordinate.
GradCheckReport finite_diff_check(const LossFn& loss, std::span<const double> params,
                                  std::span<const double> analytic, const GradCheckOptions& opts = {});

}  // namespace ckgr
