#pragma once

// Dense linear algebra, distance, quantile, and randomness primitives
// shared by every other module. Everything is 64-bit float and
// deterministic: same seed, same sequence, on every platform.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace colafier {

using Vec = std::vector<double>;

inline bool all_finite(const Vec& v) {
    for (double x : v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

// Row-major dense matrix of doubles.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    Vec data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    Vec row(std::size_t i) const {
        return Vec(data.begin() + static_cast<std::ptrdiff_t>(i * cols),
                   data.begin() + static_cast<std::ptrdiff_t>((i + 1) * cols));
    }

    void set_row(std::size_t i, const Vec& v) {
        if (v.size() != cols) throw std::invalid_argument("set_row: width mismatch");
        std::copy(v.begin(), v.end(), data.begin() + static_cast<std::ptrdiff_t>(i * cols));
    }

    static Matrix from_rows(const std::vector<Vec>& rs) {
        if (rs.empty()) return Matrix();
        Matrix m(rs.size(), rs[0].size());
        for (std::size_t i = 0; i < rs.size(); ++i) m.set_row(i, rs[i]);
        return m;
    }

    bool empty() const { return rows == 0 || cols == 0; }
};

inline bool all_finite(const Matrix& m) { return all_finite(m.data); }

// Seeded pseudorandom generator. The engine is std::mt19937_64 (fully
// specified by the standard, so the raw stream is platform-stable); all
// value transforms are coded here explicitly because the std
// distributions are allowed to differ between library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // [0, 1), 53-bit resolution
    double uniform01() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double a, double b) { return a + (b - a) * uniform01(); }

    // unbiased draw from {0, ..., n-1}
    std::size_t uniform_index(std::size_t n) {
        if (n == 0) throw std::invalid_argument("uniform_index: n must be positive");
        const std::uint64_t un = n;
        const std::uint64_t threshold = (-un) % un;  // 2^64 mod n
        std::uint64_t x;
        do {
            x = engine_();
        } while (x < threshold);
        return static_cast<std::size_t>(x % un);
    }

    // Box-Muller, cosine branch only
    double normal(double mean = 0.0, double stddev = 1.0) {
        double u1 = uniform01();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        constexpr double two_pi = 6.283185307179586476925286766559;
        return mean + stddev * r * std::cos(two_pi * u2);
    }

    // Marsaglia-Tsang, unit scale
    double gamma(double shape) {
        if (!(shape > 0.0)) throw std::invalid_argument("gamma: shape must be positive");
        if (shape < 1.0) {
            const double u = uniform01();
            return gamma(shape + 1.0) * std::pow(u > 0.0 ? u : 0x1.0p-53, 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x, v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform01();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
            if (u > 0.0 && std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
        }
    }

    double beta(double a, double b) {
        const double g1 = gamma(a);
        const double g2 = gamma(b);
        return g1 / (g1 + g2);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[uniform_index(i)]);
        }
    }

private:
    std::mt19937_64 engine_;
};

// Symmetric n x n matrix of Euclidean distances, zero diagonal.
inline Matrix pairwise_distances(const Matrix& points) {
    if (points.rows < 2) throw std::invalid_argument("pairwise_distances: batch too small");
    const std::size_t n = points.rows;
    const std::size_t d = points.cols;
    Matrix dist(n, n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double* pi = points.data.data() + i * d;
        for (std::size_t j = i + 1; j < n; ++j) {
            const double* pj = points.data.data() + j * d;
            double s = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                const double diff = pi[k] - pj[k];
                s += diff * diff;
            }
            const double r = std::sqrt(s);
            dist(i, j) = r;
            dist(j, i) = r;
        }
    }
    return dist;
}

// Linear-interpolation quantile over sorted order statistics
// (index h = p*(n-1), interpolate between floor(h) and ceil(h)).
inline double quantile(Vec values, double p) {
    if (values.empty()) throw std::invalid_argument("quantile: empty input");
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("quantile: p outside [0,1]");
    std::sort(values.begin(), values.end());
    const double h = p * static_cast<double>(values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = static_cast<std::size_t>(std::ceil(h));
    if (lo == hi) return values[lo];
    return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

inline constexpr double kLayerNormEps = 1e-5;

// (v - mean) / sqrt(var + eps) with population variance. Pre-affine:
// the owning layer applies its scale/shift on top when it carries them.
inline Vec layer_norm(const Vec& v) {
    if (v.size() < 2) throw std::invalid_argument("layer_norm: need at least 2 entries");
    const double n = static_cast<double>(v.size());
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= n;
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= n;
    const double inv_std = 1.0 / std::sqrt(var + kLayerNormEps);
    Vec out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - mean) * inv_std;
    return out;
}

}  // namespace colafier
