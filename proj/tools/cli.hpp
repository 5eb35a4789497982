#pragma once

// Command-line front end: argument parsing and subcommand dispatch.

#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "roae/roae.hpp"

namespace roae::cli {

enum class Subcommand { train, eval, export_filters, reconstruct, error_surface, histogram };

struct Command {
    Subcommand sub = Subcommand::train;
    TrainConfig config;
    std::filesystem::path checkpoint;
    std::size_t index = 0;
};

/// Raised for --help; carries the rendered help text.
class HelpRequested : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum ExitCode : int {
    kOk = 0,
    kFailure = 1,
    kUsage = 2,
    kIo = 3,
    kFormat = 4,
    kVersion = 5,
    kNumeric = 6,
    kDimension = 7,
};

namespace detail {

struct Flags {
    std::string data;
    std::string out;
    std::string checkpoint;
    std::int64_t hidden = 169;
    std::int64_t patch = 7;
    std::int64_t epochs = 60;
    double lr = 1.0;
    double norm_clip = 0.1;
    std::uint64_t seed = 0;
    std::int64_t max_images = 0;
    std::int64_t threads = 1;
    std::string sparse_path = "on";
    std::int64_t index = -1;
};

inline void add_data(CLI::App* app, Flags& f) {
    app->add_option("--data", f.data, "CIFAR-10 binary directory")->required();
}
inline void add_out(CLI::App* app, Flags& f) {
    app->add_option("--out", f.out, "Output directory")->required();
}
inline void add_checkpoint(CLI::App* app, Flags& f, bool required) {
    auto* opt = app->add_option("--checkpoint", f.checkpoint, "Checkpoint file");
    if (required) {
        opt->required();
    }
}
inline void add_eval_common(CLI::App* app, Flags& f) {
    app->add_option("--seed", f.seed, "Seed of the training run (selects the frozen test patches)");
    app->add_option("--max-images", f.max_images, "Cap on images read per split")->check(CLI::PositiveNumber);
}
inline void add_threads(CLI::App* app, Flags& f) {
    app->add_option("--threads", f.threads, "Evaluation threads")->check(CLI::PositiveNumber);
}
inline void add_sparse(CLI::App* app, Flags& f) {
    app->add_option("--sparse-path", f.sparse_path, "Reconstruct from active units only")
        ->check(CLI::IsMember({"on", "off"}));
}
inline void add_index(CLI::App* app, Flags& f) {
    app->add_option("--index", f.index, "Test patch index")->required()->check(CLI::NonNegativeNumber);
}

} // namespace detail

/// Parses argv (argv[0] is the program name). Throws UsageError on invalid
/// input and HelpRequested for --help.
inline Command parse_args(int argc, const char* const* argv) {
    detail::Flags f;
    CLI::App app{"Rank-ordered autoencoder on CIFAR-10 patches", "roae"};
    app.require_subcommand(1, 1);

    auto* train = app.add_subcommand("train", "Train a model; writes checkpoints, metrics.csv, rank_errors.csv");
    detail::add_data(train, f);
    detail::add_out(train, f);
    detail::add_checkpoint(train, f, false);
    train->add_option("--hidden", f.hidden, "Hidden units")->check(CLI::PositiveNumber);
    train->add_option("--patch", f.patch, "Patch side length")->check(CLI::Range(1, 32));
    train->add_option("--epochs", f.epochs, "Epochs")->check(CLI::NonNegativeNumber);
    train->add_option("--lr", f.lr, "Initial learning rate")->check(CLI::PositiveNumber);
    train->add_option("--norm-clip", f.norm_clip, "Gradient L2 norm clip")->check(CLI::PositiveNumber);
    train->add_option("--seed", f.seed, "Seed for every random draw");
    train->add_option("--max-images", f.max_images, "Cap on images read per split")->check(CLI::PositiveNumber);
    detail::add_threads(train, f);
    detail::add_sparse(train, f);

    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the frozen test patches");
    detail::add_checkpoint(eval, f, true);
    detail::add_data(eval, f);
    detail::add_eval_common(eval, f);
    detail::add_threads(eval, f);
    detail::add_sparse(eval, f);

    auto* filters = app.add_subcommand("export-filters", "Write filters.ppm");
    detail::add_checkpoint(filters, f, true);
    detail::add_data(filters, f);
    detail::add_out(filters, f);
    detail::add_eval_common(filters, f);

    auto* recon = app.add_subcommand("reconstruct", "Write the progressive reconstruction of one test patch");
    detail::add_checkpoint(recon, f, true);
    detail::add_data(recon, f);
    detail::add_out(recon, f);
    detail::add_index(recon, f);
    detail::add_eval_common(recon, f);
    detail::add_sparse(recon, f);

    auto* surface = app.add_subcommand("error-surface", "Write the error surface of one test patch (PGM + CSV)");
    detail::add_checkpoint(surface, f, true);
    detail::add_data(surface, f);
    detail::add_out(surface, f);
    detail::add_index(surface, f);
    detail::add_eval_common(surface, f);

    auto* hist = app.add_subcommand("histogram", "Write histogram.csv of outputs for one test patch");
    detail::add_checkpoint(hist, f, true);
    detail::add_data(hist, f);
    detail::add_out(hist, f);
    detail::add_index(hist, f);
    detail::add_eval_common(hist, f);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        throw HelpRequested(app.help());
    } catch (const CLI::CallForAllHelp&) {
        throw HelpRequested(app.help("", CLI::AppFormatMode::All));
    } catch (const CLI::ParseError& e) {
        throw UsageError(e.what());
    }

    Command cmd;
    if (train->parsed()) {
        cmd.sub = Subcommand::train;
    } else if (eval->parsed()) {
        cmd.sub = Subcommand::eval;
    } else if (filters->parsed()) {
        cmd.sub = Subcommand::export_filters;
    } else if (recon->parsed()) {
        cmd.sub = Subcommand::reconstruct;
    } else if (surface->parsed()) {
        cmd.sub = Subcommand::error_surface;
    } else {
        cmd.sub = Subcommand::histogram;
    }

    TrainConfig& cfg = cmd.config;
    cfg.hidden = static_cast<std::size_t>(f.hidden);
    cfg.patch_side = static_cast<std::size_t>(f.patch);
    cfg.epochs = static_cast<std::size_t>(f.epochs);
    cfg.learning_rate = f.lr;
    cfg.norm_clip = f.norm_clip;
    cfg.seed = f.seed;
    cfg.data_path = f.data;
    cfg.out_path = f.out;
    if (f.max_images > 0) {
        cfg.max_images = static_cast<std::size_t>(f.max_images);
    }
    cfg.threads = static_cast<std::size_t>(f.threads);
    cfg.mode = f.sparse_path == "on" ? ReconstructionMode::sparse : ReconstructionMode::dense;
    cmd.checkpoint = f.checkpoint;
    if (f.index >= 0) {
        cmd.index = static_cast<std::size_t>(f.index);
    }
    cfg.validate();
    return cmd;
}

inline Command parse_args(const std::vector<std::string>& args) {
    std::vector<const char*> argv{"roae"};
    for (const auto& a : args) {
        argv.push_back(a.c_str());
    }
    return parse_args(static_cast<int>(argv.size()), argv.data());
}

namespace detail {

/// Frozen test patches for a loaded checkpoint (patch side from its shape).
inline std::vector<Vector> test_patches_for(const Command& cmd, const Checkpoint& ckpt) {
    if (ckpt.config.patch_side == 0) {
        throw DimensionError("checkpoint input size is not an RGB square patch");
    }
    TrainConfig cfg = cmd.config;
    cfg.patch_side = ckpt.config.patch_side;
    const auto images = load_batch_file(test_batch_path(cfg.data_path), cfg.max_images);
    if (images.empty()) {
        throw UsageError("no test images found");
    }
    return frozen_test_patches(images, cfg);
}

inline const Vector& select_patch(const std::vector<Vector>& patches, std::size_t index) {
    if (index >= patches.size()) {
        throw UsageError("--index " + std::to_string(index) + " out of range (" + std::to_string(patches.size()) +
                         " test patches)");
    }
    return patches[index];
}

inline std::filesystem::path prepare_out(const Command& cmd) {
    std::filesystem::create_directories(cmd.config.out_path);
    return cmd.config.out_path;
}

} // namespace detail

/// Runs a parsed command. Library errors propagate to the caller.
inline void execute(const Command& cmd, std::ostream& out) {
    if (cmd.sub == Subcommand::train) {
        std::optional<Checkpoint> resume;
        if (!cmd.checkpoint.empty()) {
            resume = load_checkpoint(cmd.checkpoint);
        }
        run_training(cmd.config, resume, [&](const MetricsRecord& r) {
            out << "epoch " << r.epoch << " train_l2 " << r.train_recon_l2 << " test_l2 " << r.test_recon_l2
                << " objective " << r.train_objective << " lr " << r.learning_rate << " active "
                << r.mean_active_units << '\n'
                << std::flush;
        });
        return;
    }

    const Checkpoint ckpt = load_checkpoint(cmd.checkpoint);
    const RoaeModel model = ckpt.model();
    const std::vector<Vector> patches = detail::test_patches_for(cmd, ckpt);

    switch (cmd.sub) {
    case Subcommand::eval: {
        const Evaluation ev = evaluate(model, patches, cmd.config.mode, cmd.config.threads);
        out << std::setprecision(12) << "test_recon_l2 " << ev.recon_l2 << '\n'
            << "test_objective " << ev.objective << '\n'
            << "mean_active_units " << ev.mean_active_units << '\n';
        break;
    }
    case Subcommand::export_filters: {
        const auto dir = detail::prepare_out(cmd);
        write_ppm(filter_mosaic(model, eval_subsample(patches, cmd.config.seed)), dir / "filters.ppm");
        break;
    }
    case Subcommand::reconstruct: {
        const auto dir = detail::prepare_out(cmd);
        const Vector& x = detail::select_patch(patches, cmd.index);
        write_ppm(reconstruction_mosaic(model, x, cmd.config.mode),
                  dir / ("reconstruction_" + std::to_string(cmd.index) + ".ppm"));
        break;
    }
    case Subcommand::error_surface: {
        const auto dir = detail::prepare_out(cmd);
        const Matrix surface = error_surface(model, detail::select_patch(patches, cmd.index));
        const std::string stem = "error_surface_" + std::to_string(cmd.index);
        write_pgm(surface, dir / (stem + ".pgm"));
        write_matrix_csv(surface, dir / (stem + ".csv"));
        break;
    }
    case Subcommand::histogram: {
        const auto dir = detail::prepare_out(cmd);
        write_histogram_csv(sparsity_histogram(model, detail::select_patch(patches, cmd.index)),
                            dir / "histogram.csv");
        break;
    }
    case Subcommand::train:
        break;
    }
}

/// Maps a library error to its process exit code.
inline int exit_code_for(const std::exception& e) noexcept {
    if (dynamic_cast<const UsageError*>(&e)) {
        return kUsage;
    }
    if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const std::filesystem::filesystem_error*>(&e)) {
        return kIo;
    }
    if (dynamic_cast<const VersionError*>(&e)) {
        return kVersion;
    }
    if (dynamic_cast<const FormatError*>(&e)) {
        return kFormat;
    }
    if (dynamic_cast<const NumericError*>(&e)) {
        return kNumeric;
    }
    if (dynamic_cast<const DimensionError*>(&e)) {
        return kDimension;
    }
    return kFailure;
}

/// Parse + execute with errors reported on `err`. Returns the exit code.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    try {
        execute(parse_args(argc, argv), out);
        return kOk;
    } catch (const HelpRequested& help) {
        out << help.what();
        return kOk;
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\nRun with --help for usage.\n";
        return kUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_code_for(e);
    }
}

} // namespace roae::cli
