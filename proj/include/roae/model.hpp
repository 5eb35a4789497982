#pragma once

// Rank-ordered autoencoder.
//
// A single tied weight matrix W (n inputs x m hidden units) serves as encoder
// and decoder. Hidden outputs are sorted from high to low and the input is
// rebuilt as a clamped running sum of the per-unit reconstructions W[:,j]*y_j
// taken in that order, so every unit is scored on the error that remains once
// all higher-ranked units have contributed.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>

#include "roae/error.hpp"
#include "roae/numerics.hpp"

namespace roae {

/// Execution mode for the progressive reconstruction. `sparse` only visits the
/// active units; the result is identical to `dense`.
enum class ReconstructionMode { dense, sparse };

/// Bounds used for random weight initialisation.
inline constexpr double kInitWeightBound = 0.1;

class RoaeModel {
public:
    RoaeModel(std::size_t inputs, std::size_t hidden) : RoaeModel(Matrix(inputs, hidden)) {}

    explicit RoaeModel(Matrix weights) : weights_(std::move(weights)) {
        if (weights_.rows() == 0 || weights_.cols() == 0) {
            throw DimensionError("RoaeModel: input and hidden sizes must be positive");
        }
    }

    /// Weights drawn uniformly from [-kInitWeightBound, kInitWeightBound].
    static RoaeModel random(std::size_t inputs, std::size_t hidden, Rng& rng) {
        RoaeModel model(inputs, hidden);
        for (double& w : model.weights_.data()) {
            w = rng.uniform(-kInitWeightBound, kInitWeightBound);
        }
        return model;
    }

    std::size_t inputs() const noexcept { return weights_.rows(); }
    std::size_t hidden() const noexcept { return weights_.cols(); }

    const Matrix& weights() const noexcept { return weights_; }
    Matrix& weights() noexcept { return weights_; }

private:
    Matrix weights_;
};

/// Result of the encoder pass for one sample.
struct ForwardState {
    Vector x;          ///< input patch, entries in [0,1]
    Vector z;          ///< raw pre-activations (x.W)/n
    Vector y;          ///< thresholded outputs trelu(z)
    Permutation perm;  ///< ranks, highest output first

    /// Number of units with y > 0. These always occupy the first ranks.
    std::size_t active() const noexcept {
        return static_cast<std::size_t>(std::count_if(y.begin(), y.end(), [](double v) { return v > 0.0; }));
    }
};

/// Progressive reconstruction for one sample. Columns are indexed by unit, not
/// by rank: column j holds the reconstruction once unit j and every unit
/// ranked above it have contributed.
struct ProgressiveState {
    Matrix recon;        ///< n x m clamped cumulative reconstructions
    Matrix error;        ///< recon - x, columnwise
    Vector rank_errors;  ///< rank_errors[t-1] = L2 error after the top-t units
};

struct GradientPair {
    Matrix input_grad;   ///< error[:,j] * y_j
    Matrix output_grad;  ///< outer(x, hidden_error)
    Vector hidden_error; ///< masked back-propagated error per hidden unit
};

/// Thresholded rectifier: min(1, max(0, z)).
constexpr double trelu(double z) noexcept { return std::min(1.0, std::max(0.0, z)); }

constexpr int sign_of(double v) noexcept { return (v > 0.0) - (v < 0.0); }

/// Custom activation derivative. `error` is oriented as the change the unit's
/// output should make (positive: the output should grow). Returns 1 when the
/// error pushes the raw output towards zero, i.e. when the signs differ and
/// the error is nonzero.
constexpr int derivative_mask(double error, double raw_output) noexcept {
    return (error != 0.0 && sign_of(error) != sign_of(raw_output)) ? 1 : 0;
}

inline void check_patch(const RoaeModel& model, std::span<const double> x) {
    if (x.size() != model.inputs()) {
        throw DimensionError("patch length " + std::to_string(x.size()) + " != model inputs " +
                             std::to_string(model.inputs()));
    }
    for (double v : x) {
        if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
            throw UsageError("patch entries must lie in [0,1]");
        }
    }
}

/// Encoder pass into a reusable state.
inline void forward_into(const RoaeModel& model, std::span<const double> x, ForwardState& fs) {
    check_patch(model, x);
    const std::size_t n = model.inputs();
    const std::size_t m = model.hidden();
    const Matrix& w = model.weights();

    fs.x.assign(x.begin(), x.end());
    fs.z.assign(m, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double xi = x[i];
        if (xi == 0.0) {
            continue;
        }
        auto wrow = w.row(i);
        for (std::size_t j = 0; j < m; ++j) {
            fs.z[j] += xi * wrow[j];
        }
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    fs.y.resize(m);
    for (std::size_t j = 0; j < m; ++j) {
        fs.z[j] *= inv_n;
        fs.y[j] = trelu(fs.z[j]);
    }
    fs.perm = argsort_desc(std::span<const double>(fs.y));
}

inline ForwardState forward(const RoaeModel& model, std::span<const double> x) {
    ForwardState fs;
    forward_into(model, x, fs);
    return fs;
}

inline ForwardState forward(const RoaeModel& model, const Vector& x) {
    return forward(model, std::span<const double>(x));
}

namespace detail {

inline void finish_progressive(const ForwardState& fs, ProgressiveState& ps) {
    const std::size_t n = ps.recon.rows();
    const std::size_t m = ps.recon.cols();
    ps.error.reshape(n, m);
    Vector& sq = ps.rank_errors;  // per-unit squared norms first, then per-rank norms
    sq.assign(m, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        auto r = ps.recon.row(i);
        auto e = ps.error.row(i);
        const double xi = fs.x[i];
        for (std::size_t j = 0; j < m; ++j) {
            e[j] = r[j] - xi;
            sq[j] += e[j] * e[j];
        }
    }
    Vector by_unit = sq;
    for (std::size_t t = 0; t < m; ++t) {
        sq[t] = std::sqrt(by_unit[fs.perm[t]]);
    }
}

} // namespace detail

/// Progressive reconstruction into a reusable state.
inline void progressive_reconstruct_into(const RoaeModel& model, const ForwardState& fs, ReconstructionMode mode,
                                         ProgressiveState& ps) {
    const std::size_t n = model.inputs();
    const std::size_t m = model.hidden();
    if (fs.x.size() != n || fs.y.size() != m || fs.perm.size() != m) {
        throw DimensionError("progressive_reconstruct: forward state does not match model");
    }
    const Matrix& w = model.weights();
    ps.recon.reshape(n, m);

    if (mode == ReconstructionMode::dense) {
        for (std::size_t i = 0; i < n; ++i) {
            auto src = w.row(i);
            auto dst = ps.recon.row(i);
            for (std::size_t j = 0; j < m; ++j) {
                dst[j] = src[j] * fs.y[j];
            }
        }
        prefix_sum_cols_inplace(ps.recon, fs.perm);
        for (double& v : ps.recon.data()) {
            v = trelu(v);
        }
    } else {
        // Ranks at or beyond `active` add exact zeros, so they repeat the last
        // active column (or the empty reconstruction when nothing fired).
        const std::size_t active = fs.active();
        for (std::size_t i = 0; i < n; ++i) {
            auto src = w.row(i);
            auto dst = ps.recon.row(i);
            double running = 0.0;
            for (std::size_t t = 0; t < active; ++t) {
                const std::size_t j = fs.perm[t];
                running += src[j] * fs.y[j];
                dst[j] = trelu(running);
            }
            const double tail = trelu(running);
            for (std::size_t t = active; t < m; ++t) {
                dst[fs.perm[t]] = tail;
            }
        }
    }
    detail::finish_progressive(fs, ps);
}

inline ProgressiveState progressive_reconstruct(const RoaeModel& model, const ForwardState& fs,
                                                ReconstructionMode mode = ReconstructionMode::dense) {
    ProgressiveState ps;
    progressive_reconstruct_into(model, fs, mode, ps);
    return ps;
}

/// Backward pass into a reusable gradient pair.
inline void backward_into(const RoaeModel& model, const ForwardState& fs, const ProgressiveState& ps,
                          GradientPair& g) {
    const std::size_t n = model.inputs();
    const std::size_t m = model.hidden();
    if (ps.error.rows() != n || ps.error.cols() != m || fs.z.size() != m) {
        throw DimensionError("backward: states do not match model");
    }
    const Matrix& w = model.weights();

    g.hidden_error.assign(m, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        auto wrow = w.row(i);
        auto erow = ps.error.row(i);
        for (std::size_t j = 0; j < m; ++j) {
            g.hidden_error[j] += wrow[j] * erow[j];
        }
    }
    // mask takes the desired output movement, -hidden_error
    for (std::size_t j = 0; j < m; ++j) {
        g.hidden_error[j] *= derivative_mask(-g.hidden_error[j], fs.z[j]);
    }

    g.input_grad.reshape(n, m);
    g.output_grad.reshape(n, m);
    for (std::size_t i = 0; i < n; ++i) {
        auto erow = ps.error.row(i);
        auto gx = g.input_grad.row(i);
        auto gy = g.output_grad.row(i);
        const double xi = fs.x[i];
        for (std::size_t j = 0; j < m; ++j) {
            gx[j] = erow[j] * fs.y[j];
            gy[j] = xi * g.hidden_error[j];
        }
    }
}

inline GradientPair backward(const RoaeModel& model, const ForwardState& fs, const ProgressiveState& ps) {
    GradientPair g;
    backward_into(model, fs, ps, g);
    return g;
}

/// Rank-weighted progressive error: sum over t of t * rank_errors[t-1].
inline double objective(std::span<const double> rank_errors) {
    double total = 0.0;
    for (std::size_t t = 0; t < rank_errors.size(); ++t) {
        total += static_cast<double>(t + 1) * rank_errors[t];
    }
    return total;
}

inline double objective(const ProgressiveState& ps) { return objective(std::span<const double>(ps.rank_errors)); }

/// Same weighting as `objective`, applied to the outputs sorted by `perm`.
inline double ordered_output_sum(std::span<const double> y, const Permutation& perm) {
    if (y.size() != perm.size()) {
        throw DimensionError("ordered_output_sum: permutation length mismatch");
    }
    double total = 0.0;
    for (std::size_t t = 0; t < perm.size(); ++t) {
        total += static_cast<double>(t + 1) * y[perm[t]];
    }
    return total;
}

inline double ordered_output_sum(const ForwardState& fs) {
    return ordered_output_sum(std::span<const double>(fs.y), fs.perm);
}

inline std::size_t l0_norm(std::span<const double> y) noexcept {
    return static_cast<std::size_t>(std::count_if(y.begin(), y.end(), [](double v) { return v != 0.0; }));
}

inline std::size_t l0_output(const ForwardState& fs) noexcept { return l0_norm(fs.y); }

/// Reconstruction error as a function of how many inputs and outputs are
/// kept. Entry (i, j) uses only the i largest input values (others zeroed)
/// and the j outputs of largest |z|, with |z| as reconstruction coefficient.
/// Errors are clamped at 1.
inline Matrix error_surface(const RoaeModel& model, std::span<const double> x) {
    if (!model.weights().all_finite()) {
        throw NumericError("error_surface: model weights are not finite");
    }
    check_patch(model, x);
    const std::size_t n = model.inputs();
    const std::size_t m = model.hidden();
    const Matrix& w = model.weights();
    const Permutation input_rank = argsort_desc(x);

    Matrix surface(n + 1, m + 1);
    Vector masked(n, 0.0);
    Vector running(n);
    for (std::size_t i = 0; i <= n; ++i) {
        if (i > 0) {
            masked[input_rank[i - 1]] = x[input_rank[i - 1]];
        }
        const ForwardState fs = forward(model, masked);
        Vector magnitude(m);
        std::transform(fs.z.begin(), fs.z.end(), magnitude.begin(), [](double v) { return std::abs(v); });
        const Permutation out_rank = argsort_desc(std::span<const double>(magnitude));

        std::fill(running.begin(), running.end(), 0.0);
        for (std::size_t j = 0; j <= m; ++j) {
            if (j > 0) {
                const std::size_t unit = out_rank[j - 1];
                for (std::size_t r = 0; r < n; ++r) {
                    running[r] += w(r, unit) * magnitude[unit];
                }
            }
            double sum = 0.0;
            for (std::size_t r = 0; r < n; ++r) {
                const double e = x[r] - trelu(running[r]);
                sum += e * e;
            }
            surface(i, j) = std::min(1.0, std::sqrt(sum));
        }
    }
    return surface;
}

} // namespace roae
