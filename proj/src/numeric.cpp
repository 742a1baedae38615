#include "ckgr/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numbers>
#include <string>

namespace ckgr {

namespace {

constexpr std::uint64_t splitmix64(std::uint64_t z) noexcept {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

void require_shape(bool ok, const char* op, std::size_t a, std::size_t b) {
    if (!ok) {
        throw ShapeError(std::string(op) + ": shape mismatch (" + std::to_string(a) + " vs " +
                         std::to_string(b) + ")");
    }
}

}  // namespace

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Rng::Rng(std::uint64_t seed, std::uint64_t stream) noexcept
    : seed_(seed), stream_(stream), key_(splitmix64(seed) ^ splitmix64(stream ^ 0xD1B54A32D192ED03ULL)) {}

std::uint64_t Rng::next_u64() noexcept { return splitmix64(key_ + splitmix64(counter_++)); }

double Rng::uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::uint64_t Rng::below(std::uint64_t n) noexcept {
    // Rejection on the biased tail keeps the result exactly uniform.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - (std::numeric_limits<std::uint64_t>::max() % n);
    std::uint64_t x;
    do {
        x = next_u64();
    } while (x >= limit);
    return x % n;
}

double Rng::normal() noexcept {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Matrix gaussian_init(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
    if (!(stddev > 0.0) || !std::isfinite(stddev)) {
        throw ConfigError("gaussian_init: standard deviation must be positive, got " + std::to_string(stddev));
    }
    Matrix m(rows, cols);
    for (double& v : m.values()) v = stddev * rng.normal();
    return m;
}

double dot(std::span<const double> a, std::span<const double> b) {
    require_shape(a.size() == b.size(), "dot", a.size(), b.size());
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double squared_norm(std::span<const double> a) {
    double s = 0.0;
    for (double v : a) s += v * v;
    return s;
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    require_shape(x.size() == y.size(), "axpy", x.size(), y.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

void matvec(const Matrix& a, std::span<const double> x, std::span<double> y) {
    require_shape(a.cols() == x.size(), "matvec", a.cols(), x.size());
    require_shape(a.rows() == y.size(), "matvec", a.rows(), y.size());
    const std::size_t n = a.cols();
    const double* p = a.values().data();
    for (std::size_t r = 0; r < a.rows(); ++r, p += n) {
        double s = 0.0;
        for (std::size_t c = 0; c < n; ++c) s += p[c] * x[c];
        y[r] = s;
    }
}

Vector matvec(const Matrix& a, std::span<const double> x) {
    Vector y(a.rows());
    matvec(a, x, y);
    return y;
}

void matvec_t_accumulate(const Matrix& a, std::span<const double> x, std::span<double> y) {
    require_shape(a.rows() == x.size(), "matvec_t", a.rows(), x.size());
    require_shape(a.cols() == y.size(), "matvec_t", a.cols(), y.size());
    const std::size_t n = a.cols();
    const double* p = a.values().data();
    for (std::size_t r = 0; r < a.rows(); ++r, p += n) {
        const double xr = x[r];
        if (xr == 0.0) continue;
        for (std::size_t c = 0; c < n; ++c) y[c] += p[c] * xr;
    }
}

void add_outer(Matrix& a, double alpha, std::span<const double> u, std::span<const double> v) {
    require_shape(a.rows() == u.size(), "add_outer", a.rows(), u.size());
    require_shape(a.cols() == v.size(), "add_outer", a.cols(), v.size());
    const std::size_t n = a.cols();
    double* p = a.values().data();
    for (std::size_t r = 0; r < a.rows(); ++r, p += n) {
        const double s = alpha * u[r];
        if (s == 0.0) continue;
        for (std::size_t c = 0; c < n; ++c) p[c] += s * v[c];
    }
}

double sigmoid(double x) noexcept {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double neg_log_sigmoid(double x) noexcept {
    // -ln sigma(x) = softplus(-x)
    if (x >= 0.0) return std::log1p(std::exp(-x));
    return -x + std::log1p(std::exp(x));
}

Vector softmax(std::span<const double> logits) {
    if (logits.empty()) throw ShapeError("softmax: empty input");
    const double mx = *std::max_element(logits.begin(), logits.end());
    Vector out(logits.size());
    double z = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - mx);
        z += out[i];
    }
    for (double& v : out) v /= z;
    return out;
}

void check_finite(std::span<const double> values, std::string_view what) {
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i])) {
            throw NumericFault(std::string(what) + ": non-finite value at element " + std::to_string(i), i);
        }
    }
}

GradCheckReport finite_diff_check(const LossFn& loss, std::span<const double> params,
                                  std::span<const double> analytic, const GradCheckOptions& opts) {
    require_shape(params.size() == analytic.size(), "finite_diff_check", params.size(), analytic.size());
    std::vector<double> theta(params.begin(), params.end());

    const double f0 = loss(theta);
    const double f1 = loss(theta);
    if (std::memcmp(&f0, &f1, sizeof f0) != 0) {
        throw OracleError("finite_diff_check: loss function is not deterministic");
    }

    GradCheckReport report;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double saved = theta[i];
        theta[i] = saved + opts.epsilon;
        const double fp = loss(theta);
        theta[i] = saved - opts.epsilon;
        const double fm = loss(theta);
        theta[i] = saved;

        const double numeric = (fp - fm) / (2.0 * opts.epsilon);
        const double abs_err = std::abs(numeric - analytic[i]);
        const double scale = std::max({std::abs(numeric), std::abs(analytic[i]), opts.scale_floor});
        const double rel_err = abs_err / scale;
        report.max_abs_error = std::max(report.max_abs_error, abs_err);
        if (rel_err > report.max_rel_error) {
            report.max_rel_error = rel_err;
            report.worst_index = i;
        }
        ++report.checked;
    }
    report.passed = report.max_rel_error <= opts.tolerance;
    return report;
}

}  // namespace ckgr
