#pragma once

// Per-sample SGD with gradient norm clipping, the plateau learning-rate
// schedule, epoch orchestration and the binary checkpoint format.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <numeric>
#include <string_view>
#include <type_traits>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "roae/data.hpp"
#include "roae/error.hpp"
#include "roae/io.hpp"
#include "roae/metrics.hpp"
#include "roae/model.hpp"
#include "roae/numerics.hpp"

namespace roae {

struct TrainConfig {
    std::size_t hidden = 169;
    std::size_t patch_side = 7;
    std::size_t epochs = 60;
    double learning_rate = 1.0;
    double norm_clip = 0.1;
    double lr_decay = 0.10;
    double improvement_threshold = 0.01;
    std::uint64_t seed = 0;
    std::filesystem::path data_path;
    std::filesystem::path out_path;
    std::size_t max_images = std::numeric_limits<std::size_t>::max();
    std::size_t threads = 1;
    ReconstructionMode mode = ReconstructionMode::sparse;

    std::size_t inputs() const noexcept { return patch_length(patch_side); }

    void validate() const {
        if (hidden == 0 || patch_side == 0 || patch_side > kImageSide || max_images == 0 || threads == 0) {
            throw UsageError("hidden units, patch side, image count and threads must be positive");
        }
        if (!(learning_rate > 0.0) || !(norm_clip > 0.0) || !(lr_decay > 0.0 && lr_decay < 1.0) ||
            !(improvement_threshold >= 0.0)) {
            throw UsageError("learning rate and norm clip must be positive, decay in (0,1)");
        }
    }
};

struct Checkpoint {
    TrainConfig config;
    std::uint32_t epoch = 0;  ///< completed epochs
    double learning_rate = 1.0;
    double best_error = std::numeric_limits<double>::infinity();
    Rng::State rng_state{};
    Matrix weights;

    RoaeModel model() const { return RoaeModel(weights); }
};

// ---------------------------------------------------------------------------
// Optimisation step

inline double frobenius_norm(const Matrix& g) { return l2_norm(g.data()); }

/// Rescales `g` in place so that its Frobenius norm is at most `threshold`.
inline void norm_clip_inplace(Matrix& g, double threshold) {
    if (!(threshold > 0.0)) {
        throw UsageError("norm_clip: threshold must be positive");
    }
    const double norm = frobenius_norm(g);  // throws on non-finite entries
    if (norm > threshold) {
        const double scale = threshold / norm;
        for (double& v : g.data()) {
            v *= scale;
        }
    }
}

inline Matrix norm_clip(Matrix g, double threshold) {
    norm_clip_inplace(g, threshold);
    return g;
}

struct StepReport {
    double objective = 0.0;    ///< objective of the sample before the update
    double final_error = 0.0;  ///< error after all ranks, before the update
    std::size_t active = 0;
};

/// Buffers reused across training steps.
struct StepWorkspace {
    ForwardState forward;
    ProgressiveState progressive;
    GradientPair gradients;
};

/// One update: W <- W - lr * clip(Gx + Gy).
inline StepReport train_step(RoaeModel& model, std::span<const double> x, double learning_rate, double clip,
                             ReconstructionMode mode, StepWorkspace& ws) {
    const ForwardState& fs = ws.forward;
    const ProgressiveState& ps = ws.progressive;
    GradientPair& g = ws.gradients;
    forward_into(model, x, ws.forward);
    progressive_reconstruct_into(model, fs, mode, ws.progressive);
    backward_into(model, fs, ps, g);

    Matrix& step = g.input_grad;
    auto out = g.output_grad.data();
    auto acc = step.data();
    for (std::size_t k = 0; k < acc.size(); ++k) {
        acc[k] += out[k];
    }
    try {
        norm_clip_inplace(step, clip);
    } catch (const NumericError&) {
        throw NumericError("train_step: non-finite gradient");
    }
    auto w = model.weights().data();
    for (std::size_t k = 0; k < w.size(); ++k) {
        w[k] -= learning_rate * acc[k];
    }
    return {objective(ps), ps.rank_errors.back(), fs.active()};
}

inline StepReport train_step(RoaeModel& model, std::span<const double> x, double learning_rate, double clip,
                             ReconstructionMode mode = ReconstructionMode::sparse) {
    StepWorkspace ws;
    return train_step(model, x, learning_rate, clip, mode, ws);
}

inline StepReport train_step(RoaeModel& model, std::span<const double> x, const TrainConfig& cfg) {
    return train_step(model, x, cfg.learning_rate, cfg.norm_clip, cfg.mode);
}

/// Plateau schedule: decay the learning rate when the relative improvement
/// over `reference_error` is at most the configured threshold. No reference
/// (first epoch) leaves the rate unchanged.
inline double lr_schedule_step(std::optional<double> reference_error, double new_error, double lr,
                               const TrainConfig& cfg) {
    if (!reference_error) {
        return lr;
    }
    const double prev = *reference_error;
    if (prev < 0.0 || new_error < 0.0) {
        throw UsageError("lr_schedule_step: errors must be non-negative");
    }
    if (prev == 0.0) {
        return lr * (1.0 - cfg.lr_decay);
    }
    const double improvement = (prev - new_error) / prev;
    return improvement <= cfg.improvement_threshold ? lr * (1.0 - cfg.lr_decay) : lr;
}

// ---------------------------------------------------------------------------
// Checkpoint file
//
//   "ROAE" | u32 version | u32 n | u32 m | u32 epoch | f64 lr | f64 best_error
//   | u64 rng[0] | u64 rng[1] | f64 W[n*m] (row-major)
//
// All integers and floats little-endian.

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[4] = {'R', 'O', 'A', 'E'};
inline constexpr std::size_t kCheckpointHeaderBytes = 4 + 4 * 4 + 8 * 2 + 8 * 2;

namespace detail {

template <typename T>
void put_le(std::string& out, T value) {
    std::uint64_t bits = 0;
    if constexpr (std::is_floating_point_v<T>) {
        static_assert(sizeof(T) == 8);
        bits = std::bit_cast<std::uint64_t>(value);
    } else {
        bits = static_cast<std::uint64_t>(value);
    }
    for (std::size_t b = 0; b < sizeof(T); ++b) {
        out.push_back(static_cast<char>((bits >> (8 * b)) & 0xFF));
    }
}

template <typename T>
T get_le(std::string_view in, std::size_t& pos) {
    std::uint64_t bits = 0;
    for (std::size_t b = 0; b < sizeof(T); ++b) {
        bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + b])) << (8 * b);
    }
    pos += sizeof(T);
    if constexpr (std::is_floating_point_v<T>) {
        return std::bit_cast<T>(bits);
    } else {
        return static_cast<T>(bits);
    }
}

} // namespace detail

inline std::string encode_checkpoint(const Checkpoint& ckpt) {
    const std::size_t n = ckpt.weights.rows();
    const std::size_t m = ckpt.weights.cols();
    if (n > std::numeric_limits<std::uint32_t>::max() || m > std::numeric_limits<std::uint32_t>::max()) {
        throw DimensionError("checkpoint: weight matrix too large");
    }
    std::string out(kCheckpointMagic, 4);
    out.reserve(kCheckpointHeaderBytes + 8 * n * m);
    detail::put_le<std::uint32_t>(out, kCheckpointVersion);
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(n));
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(m));
    detail::put_le<std::uint32_t>(out, ckpt.epoch);
    detail::put_le<double>(out, ckpt.learning_rate);
    detail::put_le<double>(out, ckpt.best_error);
    detail::put_le<std::uint64_t>(out, ckpt.rng_state[0]);
    detail::put_le<std::uint64_t>(out, ckpt.rng_state[1]);
    for (double w : ckpt.weights.data()) {
        detail::put_le<double>(out, w);
    }
    return out;
}

inline Checkpoint decode_checkpoint(std::string_view bytes) {
    if (bytes.size() < kCheckpointHeaderBytes) {
        throw FormatError("checkpoint: truncated header");
    }
    if (bytes.substr(0, 4) != std::string_view(kCheckpointMagic, 4)) {
        throw FormatError("checkpoint: bad magic");
    }
    std::size_t pos = 4;
    const auto version = detail::get_le<std::uint32_t>(bytes, pos);
    if (version != kCheckpointVersion) {
        throw VersionError("checkpoint: format version " + std::to_string(version) + ", expected " +
                           std::to_string(kCheckpointVersion));
    }
    const auto n = detail::get_le<std::uint32_t>(bytes, pos);
    const auto m = detail::get_le<std::uint32_t>(bytes, pos);
    Checkpoint ckpt;
    ckpt.epoch = detail::get_le<std::uint32_t>(bytes, pos);
    ckpt.learning_rate = detail::get_le<double>(bytes, pos);
    ckpt.best_error = detail::get_le<double>(bytes, pos);
    ckpt.rng_state[0] = detail::get_le<std::uint64_t>(bytes, pos);
    ckpt.rng_state[1] = detail::get_le<std::uint64_t>(bytes, pos);
    if (n == 0 || m == 0) {
        throw FormatError("checkpoint: zero-sized weight matrix");
    }
    const std::uint64_t expected = kCheckpointHeaderBytes + std::uint64_t{8} * n * m;
    if (bytes.size() != expected) {
        throw FormatError("checkpoint: size " + std::to_string(bytes.size()) + ", expected " +
                          std::to_string(expected));
    }
    std::vector<double> w(static_cast<std::size_t>(n) * m);
    for (double& v : w) {
        v = detail::get_le<double>(bytes, pos);
    }
    ckpt.weights = Matrix(n, m, std::move(w));

    ckpt.config.hidden = m;
    ckpt.config.learning_rate = ckpt.learning_rate;
    const auto side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(n) / kChannels)));
    ckpt.config.patch_side = patch_length(side) == n ? side : 0;
    return ckpt;
}

inline void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    atomic_write(path, encode_checkpoint(ckpt));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    try {
        return decode_checkpoint(read_file(path));
    } catch (const FormatError& e) {
        if (dynamic_cast<const VersionError*>(&e)) {
            throw VersionError(path.string() + ": " + e.what());
        }
        throw FormatError(path.string() + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Training run

inline constexpr std::size_t kEvalSampleSize = 10000;

/// Seeds for the frozen evaluation sets, derived from the run seed.
inline std::uint64_t test_patch_seed(std::uint64_t seed) noexcept { return seed ^ 0x5445535450415443ULL; }
inline std::uint64_t eval_sample_seed(std::uint64_t seed) noexcept { return seed ^ 0x4556414C53414D50ULL; }

/// Frozen test patches: `kTestPatchesPerImage` per test image.
inline std::vector<Vector> frozen_test_patches(const std::vector<CifarImage>& test_images, const TrainConfig& cfg) {
    Rng rng(test_patch_seed(cfg.seed));
    return build_test_patches(test_images, rng, cfg.patch_side);
}

/// Seeded subsample of at most `kEvalSampleSize` patches, kept in original order.
inline std::vector<Vector> eval_subsample(const std::vector<Vector>& patches, std::uint64_t seed,
                                          std::size_t size = kEvalSampleSize) {
    if (patches.size() <= size) {
        return patches;
    }
    std::vector<std::size_t> idx(patches.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng(eval_sample_seed(seed));
    for (std::size_t k = 0; k < size; ++k) {
        const auto pick = static_cast<std::size_t>(rng.uniform_int(k, idx.size() - 1));
        std::swap(idx[k], idx[pick]);
    }
    idx.resize(size);
    std::sort(idx.begin(), idx.end());
    std::vector<Vector> out;
    out.reserve(size);
    for (auto i : idx) {
        out.push_back(patches[i]);
    }
    return out;
}

struct TrainingResult {
    Checkpoint checkpoint;
    std::vector<MetricsRecord> history;
    std::vector<RankErrorCurve> rank_curves;
};

inline std::filesystem::path epoch_checkpoint_path(const std::filesystem::path& out_dir, std::size_t epoch) {
    return out_dir / ("epoch" + std::to_string(epoch) + ".roae");
}

inline Checkpoint initial_checkpoint(const TrainConfig& cfg) {
    Rng rng(cfg.seed);
    const RoaeModel model = RoaeModel::random(cfg.inputs(), cfg.hidden, rng);
    Checkpoint ckpt;
    ckpt.config = cfg;
    ckpt.learning_rate = cfg.learning_rate;
    ckpt.rng_state = rng.state();
    ckpt.weights = model.weights();
    return ckpt;
}

using EpochCallback = std::function<void(const MetricsRecord&)>;

/// Trains on in-memory images. When `cfg.out_path` is set, a checkpoint is
/// written after every epoch along with metrics.csv and rank_errors.csv.
/// Passing `resume` continues from a saved state; the result then holds only
/// the epochs run here.
inline TrainingResult run_training(const TrainConfig& cfg, const std::vector<CifarImage>& train_images,
                                   const std::vector<CifarImage>& test_images,
                                   const std::optional<Checkpoint>& resume = std::nullopt,
                                   const EpochCallback& on_epoch = {}) {
    cfg.validate();
    TrainingResult result;
    result.checkpoint = resume ? *resume : initial_checkpoint(cfg);
    Checkpoint& ckpt = result.checkpoint;
    if (ckpt.weights.rows() != cfg.inputs() || ckpt.weights.cols() != cfg.hidden) {
        throw DimensionError("run_training: checkpoint shape does not match configuration");
    }
    ckpt.config = cfg;
    if (ckpt.epoch >= cfg.epochs) {
        return result;
    }
    if (train_images.empty() || test_images.empty()) {
        throw UsageError("run_training: need at least one training and one test image");
    }

    RoaeModel model = ckpt.model();
    Rng rng = Rng::from_state(ckpt.rng_state);
    const std::vector<Vector> test_patches = frozen_test_patches(test_images, cfg);
    const std::vector<Vector> curve_patches = eval_subsample(test_patches, cfg.seed);
    if (!cfg.out_path.empty()) {
        std::filesystem::create_directories(cfg.out_path);
    }

    for (std::size_t epoch = ckpt.epoch + 1; epoch <= cfg.epochs; ++epoch) {
        const std::vector<Vector> stream = build_epoch_stream(train_images, rng, cfg.patch_side);
        double error_sum = 0.0;
        double objective_sum = 0.0;
        StepWorkspace ws;
        for (std::size_t k = 0; k < stream.size(); ++k) {
            StepReport report;
            try {
                report = train_step(model, stream[k], ckpt.learning_rate, cfg.norm_clip, cfg.mode, ws);
            } catch (const NumericError& e) {
                throw NumericError("epoch " + std::to_string(epoch) + ", sample " + std::to_string(k) + ": " +
                                   e.what());
            }
            error_sum += report.final_error;
            objective_sum += report.objective;
        }
        if (!model.weights().all_finite()) {
            throw NumericError("epoch " + std::to_string(epoch) + ": weights became non-finite");
        }

        MetricsRecord rec;
        rec.epoch = epoch;
        rec.train_recon_l2 = error_sum / static_cast<double>(stream.size());
        rec.train_objective = objective_sum / static_cast<double>(stream.size());
        rec.learning_rate = ckpt.learning_rate;
        const Evaluation test = evaluate(model, test_patches, cfg.mode, cfg.threads);
        rec.test_recon_l2 = test.recon_l2;
        rec.test_objective = test.objective;
        rec.mean_active_units = test.mean_active_units;
        rec.median_active_fraction = test.median_active_fraction;
        result.history.push_back(rec);
        result.rank_curves.push_back(rank_error_curve(model, curve_patches, epoch, cfg.mode, cfg.threads));

        const std::optional<double> reference =
            std::isfinite(ckpt.best_error) ? std::optional<double>(ckpt.best_error) : std::nullopt;
        ckpt.learning_rate = lr_schedule_step(reference, rec.train_recon_l2, ckpt.learning_rate, cfg);
        ckpt.best_error = std::min(ckpt.best_error, rec.train_recon_l2);
        ckpt.epoch = static_cast<std::uint32_t>(epoch);
        ckpt.rng_state = rng.state();
        ckpt.weights = model.weights();

        if (!cfg.out_path.empty()) {
            save_checkpoint(ckpt, epoch_checkpoint_path(cfg.out_path, epoch));
            write_metrics_csv(result.history, cfg.out_path / "metrics.csv");
            write_rank_errors_csv(result.rank_curves, cfg.hidden, cfg.out_path / "rank_errors.csv");
        }
        if (on_epoch) {
            on_epoch(rec);
        }
    }
    return result;
}

/// Loads CIFAR-10 from `cfg.data_path` (capped at `cfg.max_images` per split) and trains.
inline TrainingResult run_training(const TrainConfig& cfg, const std::optional<Checkpoint>& resume = std::nullopt,
                                   const EpochCallback& on_epoch = {}) {
    cfg.validate();
    const auto train = load_images(train_batch_paths(cfg.data_path), cfg.max_images);
    const auto test = load_batch_file(test_batch_path(cfg.data_path), cfg.max_images);
    return run_training(cfg, train, test, resume, on_epoch);
}

} // namespace roae
