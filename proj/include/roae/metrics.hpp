#pragma once

// Evaluation of a weight snapshot over a fixed patch set.
//
// Per-patch work may run on several threads, but every reduction is a
// sequential pass over per-patch results in patch order, so reported numbers
// do not depend on the thread count.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <exception>
#include <filesystem>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "roae/error.hpp"
#include "roae/io.hpp"
#include "roae/model.hpp"
#include "roae/numerics.hpp"

namespace roae {

inline constexpr std::size_t kHistogramBins = 64;

struct MetricsRecord {
    std::size_t epoch = 0;
    double train_recon_l2 = 0.0;
    double test_recon_l2 = 0.0;
    double train_objective = 0.0;
    double test_objective = 0.0;
    double learning_rate = 0.0;
    double mean_active_units = 0.0;
    double median_active_fraction = 0.0;

    friend bool operator==(const MetricsRecord&, const MetricsRecord&) = default;
};

struct RankErrorCurve {
    std::size_t epoch = 0;
    Vector mean_eps;  ///< mean_eps[t-1] = mean error after the top-t units
};

/// Aggregates of `evaluate` over one patch set.
struct Evaluation {
    double recon_l2 = 0.0;  ///< mean final-rank error
    double objective = 0.0;
    double mean_active_units = 0.0;
    double median_active_fraction = 0.0;
};

struct PatchScore {
    double final_error = 0.0;
    double objective = 0.0;
    std::size_t active = 0;
};

/// Runs `fn(i)` for i in [0, count) over contiguous blocks on `threads` threads.
template <typename Fn>
void parallel_for(std::size_t count, std::size_t threads, Fn&& fn) {
    threads = std::max<std::size_t>(1, std::min(threads, count));
    if (threads == 1) {
        for (std::size_t i = 0; i < count; ++i) {
            fn(i);
        }
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    const std::size_t block = (count + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            try {
                const std::size_t end = std::min(count, (t + 1) * block);
                for (std::size_t i = t * block; i < end; ++i) {
                    fn(i);
                }
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) {
        th.join();
    }
    for (auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
}

inline PatchScore score_patch(const RoaeModel& model, const Vector& x, ReconstructionMode mode) {
    thread_local ForwardState fs;
    thread_local ProgressiveState ps;
    forward_into(model, x, fs);
    progressive_reconstruct_into(model, fs, mode, ps);
    return {ps.rank_errors.back(), objective(ps), fs.active()};
}

inline std::vector<PatchScore> score_patches(const RoaeModel& model, const std::vector<Vector>& patches,
                                             ReconstructionMode mode = ReconstructionMode::sparse,
                                             std::size_t threads = 1) {
    std::vector<PatchScore> scores(patches.size());
    parallel_for(patches.size(), threads, [&](std::size_t i) { scores[i] = score_patch(model, patches[i], mode); });
    return scores;
}

inline double median(std::vector<double> values) {
    if (values.empty()) {
        throw UsageError("median of an empty set");
    }
    const std::size_t mid = values.size() / 2;
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
    const double upper = values[mid];
    if (values.size() % 2 == 1) {
        return upper;
    }
    const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lower + upper);
}

inline Evaluation summarize(const std::vector<PatchScore>& scores, std::size_t hidden) {
    if (scores.empty()) {
        throw UsageError("evaluate: empty patch set");
    }
    Evaluation ev;
    std::vector<double> fractions;
    fractions.reserve(scores.size());
    for (const auto& s : scores) {
        ev.recon_l2 += s.final_error;
        ev.objective += s.objective;
        ev.mean_active_units += static_cast<double>(s.active);
        fractions.push_back(static_cast<double>(s.active) / static_cast<double>(hidden));
    }
    const auto count = static_cast<double>(scores.size());
    ev.recon_l2 /= count;
    ev.objective /= count;
    ev.mean_active_units /= count;
    ev.median_active_fraction = median(std::move(fractions));
    return ev;
}

inline Evaluation evaluate(const RoaeModel& model, const std::vector<Vector>& patches,
                           ReconstructionMode mode = ReconstructionMode::sparse, std::size_t threads = 1) {
    if (patches.empty()) {
        throw UsageError("evaluate: empty patch set");
    }
    return summarize(score_patches(model, patches, mode, threads), model.hidden());
}

inline RankErrorCurve rank_error_curve(const RoaeModel& model, const std::vector<Vector>& patches,
                                       std::size_t epoch = 0, ReconstructionMode mode = ReconstructionMode::sparse,
                                       std::size_t threads = 1) {
    if (patches.empty()) {
        throw UsageError("rank_error_curve: empty patch set");
    }
    std::vector<Vector> per_patch(patches.size());
    parallel_for(patches.size(), threads, [&](std::size_t i) {
        thread_local ForwardState fs;
        thread_local ProgressiveState ps;
        forward_into(model, patches[i], fs);
        progressive_reconstruct_into(model, fs, mode, ps);
        per_patch[i] = ps.rank_errors;
    });
    RankErrorCurve curve{epoch, Vector(model.hidden(), 0.0)};
    for (const auto& eps : per_patch) {
        for (std::size_t t = 0; t < eps.size(); ++t) {
            curve.mean_eps[t] += eps[t];
        }
    }
    for (double& v : curve.mean_eps) {
        v /= static_cast<double>(patches.size());
    }
    return curve;
}

/// Distribution of thresholded outputs (64 bins over [0,1]) and raw outputs
/// (64 bins over [min z, max z]) for one patch.
struct SparsityHistogram {
    std::vector<std::size_t> y_counts;
    std::vector<std::size_t> z_counts;
    double z_min = 0.0;
    double z_max = 0.0;

    double y_lower(std::size_t bin) const noexcept {
        return static_cast<double>(bin) / static_cast<double>(y_counts.size());
    }
    double z_lower(std::size_t bin) const noexcept {
        return z_min + (z_max - z_min) * static_cast<double>(bin) / static_cast<double>(z_counts.size());
    }
};

inline std::size_t bin_index(double v, double lo, double hi, std::size_t bins) noexcept {
    if (!(hi > lo)) {
        return 0;
    }
    const double pos = (v - lo) / (hi - lo) * static_cast<double>(bins);
    if (pos <= 0.0) {
        return 0;
    }
    return std::min(bins - 1, static_cast<std::size_t>(pos));
}

inline SparsityHistogram sparsity_histogram(const ForwardState& fs, std::size_t bins = kHistogramBins) {
    SparsityHistogram h;
    h.y_counts.assign(bins, 0);
    h.z_counts.assign(bins, 0);
    if (fs.z.empty()) {
        return h;
    }
    const auto [lo, hi] = std::minmax_element(fs.z.begin(), fs.z.end());
    h.z_min = *lo;
    h.z_max = *hi;
    for (double y : fs.y) {
        ++h.y_counts[bin_index(y, 0.0, 1.0, bins)];
    }
    for (double z : fs.z) {
        ++h.z_counts[bin_index(z, h.z_min, h.z_max, bins)];
    }
    return h;
}

inline SparsityHistogram sparsity_histogram(const RoaeModel& model, const Vector& x) {
    return sparsity_histogram(forward(model, x));
}

namespace detail {

inline std::ostringstream csv_stream() {
    std::ostringstream out;
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    return out;
}

} // namespace detail

inline constexpr const char* kMetricsHeader =
    "epoch,train_recon_l2,test_recon_l2,train_objective,test_objective,learning_rate,mean_active_units,"
    "median_active_fraction";

inline std::string metrics_csv(const std::vector<MetricsRecord>& records) {
    auto out = detail::csv_stream();
    out << kMetricsHeader << '\n';
    for (const auto& r : records) {
        out << r.epoch << ',' << r.train_recon_l2 << ',' << r.test_recon_l2 << ',' << r.train_objective << ','
            << r.test_objective << ',' << r.learning_rate << ',' << r.mean_active_units << ','
            << r.median_active_fraction << '\n';
    }
    return out.str();
}

inline void write_metrics_csv(const std::vector<MetricsRecord>& records, const std::filesystem::path& path) {
    atomic_write(path, metrics_csv(records));
}

inline std::vector<MetricsRecord> read_metrics_csv(const std::filesystem::path& path) {
    std::istringstream in(read_file(path));
    std::string line;
    if (!std::getline(in, line) || line != kMetricsHeader) {
        throw FormatError(path.string() + ": unexpected metrics header");
    }
    std::vector<MetricsRecord> records;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        std::istringstream row(line);
        MetricsRecord r;
        char comma = 0;
        row >> r.epoch >> comma >> r.train_recon_l2 >> comma >> r.test_recon_l2 >> comma >> r.train_objective >>
            comma >> r.test_objective >> comma >> r.learning_rate >> comma >> r.mean_active_units >> comma >>
            r.median_active_fraction;
        if (!row) {
            throw FormatError(path.string() + ": malformed row '" + line + "'");
        }
        records.push_back(r);
    }
    return records;
}

inline std::string rank_errors_csv(const std::vector<RankErrorCurve>& curves, std::size_t hidden) {
    auto out = detail::csv_stream();
    out << "epoch";
    for (std::size_t t = 1; t <= hidden; ++t) {
        out << ",rank_" << t;
    }
    out << '\n';
    for (const auto& c : curves) {
        out << c.epoch;
        for (double v : c.mean_eps) {
            out << ',' << v;
        }
        out << '\n';
    }
    return out.str();
}

inline void write_rank_errors_csv(const std::vector<RankErrorCurve>& curves, std::size_t hidden,
                                  const std::filesystem::path& path) {
    atomic_write(path, rank_errors_csv(curves, hidden));
}

/// Columns: bin_lower (y bins), count_y, count_z, bin_lower_z.
inline void write_histogram_csv(const SparsityHistogram& h, const std::filesystem::path& path) {
    auto out = detail::csv_stream();
    out << "bin_lower,count_y,count_z,bin_lower_z\n";
    for (std::size_t b = 0; b < h.y_counts.size(); ++b) {
        out << h.y_lower(b) << ',' << h.y_counts[b] << ',' << h.z_counts[b] << ',' << h.z_lower(b) << '\n';
    }
    atomic_write(path, out.str());
}

} // namespace roae
