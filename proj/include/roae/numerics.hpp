#pragma once

// Dense numeric kernels used by the rank-ordered autoencoder. All scans are
// scalar, left to right.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "roae/error.hpp"

namespace roae {

using Vector = std::vector<double>;

/// Row-major dense matrix.
template <typename T>
class DenseMatrix {
public:
    using value_type = T;

    DenseMatrix() = default;
    DenseMatrix(std::size_t rows, std::size_t cols, T fill = T{})
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    DenseMatrix(std::size_t rows, std::size_t cols, std::vector<T> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_) {
            throw DimensionError("DenseMatrix: data length " + std::to_string(data_.size()) +
                                 " != " + std::to_string(rows_) + "x" + std::to_string(cols_));
        }
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }

    T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    const T& operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<T> data() noexcept { return data_; }
    std::span<const T> data() const noexcept { return data_; }

    std::span<T> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const T> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

    std::vector<T> column(std::size_t c) const {
        std::vector<T> out(rows_);
        for (std::size_t r = 0; r < rows_; ++r) {
            out[r] = (*this)(r, c);
        }
        return out;
    }

    void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

    /// Changes the shape, keeping the allocation when possible. Contents are unspecified.
    void reshape(std::size_t rows, std::size_t cols) {
        rows_ = rows;
        cols_ = cols;
        data_.resize(rows * cols);
    }

    bool all_finite() const noexcept {
        return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
    }

    friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<T> data_;
};

using Matrix = DenseMatrix<double>;

/// A bijection on [0, size).
class Permutation {
public:
    Permutation() = default;

    /// Validates that `indices` is a bijection.
    explicit Permutation(std::vector<std::size_t> indices) : indices_(std::move(indices)) {
        std::vector<bool> seen(indices_.size(), false);
        for (auto i : indices_) {
            if (i >= indices_.size() || seen[i]) {
                throw DimensionError("Permutation: indices are not a bijection");
            }
            seen[i] = true;
        }
    }

    static Permutation identity(std::size_t n) {
        Permutation p;
        p.indices_.resize(n);
        std::iota(p.indices_.begin(), p.indices_.end(), std::size_t{0});
        return p;
    }

    std::size_t size() const noexcept { return indices_.size(); }
    std::size_t operator[](std::size_t k) const noexcept { return indices_[k]; }
    std::span<const std::size_t> indices() const noexcept { return indices_; }

    Permutation inverse() const {
        Permutation inv;
        inv.indices_.resize(indices_.size());
        for (std::size_t k = 0; k < indices_.size(); ++k) {
            inv.indices_[indices_[k]] = k;
        }
        return inv;
    }

    friend bool operator==(const Permutation&, const Permutation&) = default;

private:
    std::vector<std::size_t> indices_;
};

inline void require_finite(std::span<const double> v, const char* what) {
    for (double x : v) {
        if (!std::isfinite(x)) {
            throw NumericError(std::string(what) + ": non-finite value");
        }
    }
}

/// Indices that sort `v` from high to low; equal values keep ascending index order.
template <typename T>
Permutation argsort_desc(std::span<const T> v) {
    for (const T& x : v) {
        if (std::isnan(x)) {
            throw NumericError("argsort_desc: NaN has no ordering");
        }
    }
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] > v[b]; });
    return Permutation(std::move(idx));
}

inline Permutation argsort_desc(const Vector& v) { return argsort_desc(std::span<const double>(v)); }

/// In-place form of `prefix_sum_cols`.
template <typename T>
void prefix_sum_cols_inplace(DenseMatrix<T>& m, const Permutation& perm) {
    if (perm.size() != m.cols()) {
        throw DimensionError("prefix_sum_cols: permutation length " + std::to_string(perm.size()) +
                             " != cols " + std::to_string(m.cols()));
    }
    for (std::size_t r = 0; r < m.rows(); ++r) {
        auto row = m.row(r);
        T running{};
        for (std::size_t k = 0; k < perm.size(); ++k) {
            running += row[perm[k]];
            row[perm[k]] = running;
        }
    }
}

/// Column-wise cumulative sum taken in `perm` order: output column perm[k]
/// holds the sum of input columns perm[0..k]. Each row is scanned left to
/// right in rank order.
template <typename T>
DenseMatrix<T> prefix_sum_cols(const DenseMatrix<T>& m, const Permutation& perm) {
    DenseMatrix<T> out = m;
    prefix_sum_cols_inplace(out, perm);
    return out;
}

template <typename T>
T l2_norm(std::span<const T> v) {
    T sum{};
    for (const T& x : v) {
        if (!std::isfinite(x)) {
            throw NumericError("l2_norm: non-finite value");
        }
        sum += x * x;
    }
    return std::sqrt(sum);
}

inline double l2_norm(const Vector& v) { return l2_norm(std::span<const double>(v)); }

/// xoroshiro128** seeded by splitmix64. State is two 64-bit words.
class Rng {
public:
    using State = std::array<std::uint64_t, 2>;

    explicit Rng(std::uint64_t seed = 0) {
        std::uint64_t s = seed;
        state_[0] = splitmix64(s);
        state_[1] = splitmix64(s);
    }

    static Rng from_state(State state) {
        Rng r;
        r.state_ = state;
        if (r.state_[0] == 0 && r.state_[1] == 0) {
            throw FormatError("Rng: all-zero state is invalid");
        }
        return r;
    }

    State state() const noexcept { return state_; }

    std::uint64_t next_u64() noexcept {
        const std::uint64_t s0 = state_[0];
        std::uint64_t s1 = state_[1];
        const std::uint64_t result = rotl(s0 * 5, 7) * 9;
        s1 ^= s0;
        state_[0] = rotl(s0, 24) ^ s1 ^ (s1 << 16);
        state_[1] = rotl(s1, 37);
        return result;
    }

    /// Uniform in [0, 1).
    double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [lo, hi] (inclusive), unbiased.
    std::uint64_t uniform_int(std::uint64_t lo, std::uint64_t hi) noexcept {
        const std::uint64_t span = hi - lo;
        if (span == ~std::uint64_t{0}) {
            return next_u64();
        }
        const std::uint64_t range = span + 1;
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % range);
        std::uint64_t x = next_u64();
        while (x >= limit) {
            x = next_u64();
        }
        return lo + x % range;
    }

    friend bool operator==(const Rng&, const Rng&) = default;

private:
    static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept { return (x << k) | (x >> (64 - k)); }

    static std::uint64_t splitmix64(std::uint64_t& s) noexcept {
        std::uint64_t z = (s += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    State state_{};
};

} // namespace roae
