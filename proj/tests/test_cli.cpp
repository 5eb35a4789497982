#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "cli.hpp"
#include "support/synthetic_cifar.hpp"

using namespace roae;
using roae::cli::Command;
using roae::cli::parse_args;
using roae::cli::Subcommand;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("roae_test_cli_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

int run(const std::vector<std::string>& args, std::string* out = nullptr, std::string* err = nullptr) {
    std::vector<const char*> argv{"roae"};
    for (const auto& a : args) {
        argv.push_back(a.c_str());
    }
    std::ostringstream o;
    std::ostringstream e;
    const int code = roae::cli::run(static_cast<int>(argv.size()), argv.data(), o, e);
    if (out) {
        *out = o.str();
    }
    if (err) {
        *err = e.str();
    }
    return code;
}

} // namespace

TEST(ParseArgs, TrainDefaults) {
    const Command c = parse_args({"train", "--data", "./cifar", "--out", "./run1", "--seed", "42"});
    EXPECT_EQ(c.sub, Subcommand::train);
    EXPECT_EQ(c.config.hidden, 169u);
    EXPECT_EQ(c.config.patch_side, 7u);
    EXPECT_EQ(c.config.epochs, 60u);
    EXPECT_EQ(c.config.learning_rate, 1.0);
    EXPECT_EQ(c.config.norm_clip, 0.1);
    EXPECT_EQ(c.config.seed, 42u);
    EXPECT_EQ(c.config.data_path, "./cifar");
    EXPECT_EQ(c.config.out_path, "./run1");
    EXPECT_TRUE(c.checkpoint.empty());
}

TEST(ParseArgs, Eval) {
    const Command c = parse_args({"eval", "--checkpoint", "run1/epoch60.roae", "--data", "./cifar"});
    EXPECT_EQ(c.sub, Subcommand::eval);
    EXPECT_EQ(c.checkpoint, "run1/epoch60.roae");
    EXPECT_EQ(c.config.seed, 0u);
}

TEST(ParseArgs, AllFlags) {
    const Command c = parse_args({"train", "--data", "d", "--out", "o", "--checkpoint", "c.roae", "--hidden", "10",
                                  "--patch", "5", "--epochs", "3", "--lr", "0.5", "--norm-clip", "0.2", "--seed",
                                  "9", "--max-images", "100", "--threads", "4", "--sparse-path", "off"});
    EXPECT_EQ(c.config.hidden, 10u);
    EXPECT_EQ(c.config.patch_side, 5u);
    EXPECT_EQ(c.config.epochs, 3u);
    EXPECT_EQ(c.config.learning_rate, 0.5);
    EXPECT_EQ(c.config.norm_clip, 0.2);
    EXPECT_EQ(c.config.max_images, 100u);
    EXPECT_EQ(c.config.threads, 4u);
    EXPECT_EQ(c.config.mode, ReconstructionMode::dense);
    EXPECT_EQ(c.checkpoint, "c.roae");

    const Command r = parse_args({"reconstruct", "--checkpoint", "c", "--data", "d", "--out", "o", "--index", "12"});
    EXPECT_EQ(r.sub, Subcommand::reconstruct);
    EXPECT_EQ(r.index, 12u);
}

TEST(ParseArgs, UsageErrors) {
    EXPECT_THROW(parse_args({"train", "--hidden", "-5"}), UsageError);
    EXPECT_THROW(parse_args({"train", "--data", "d", "--out", "o", "--hidden", "-5"}), UsageError);
    EXPECT_THROW(parse_args({"train", "--data", "d", "--out", "o", "--lr", "0"}), UsageError);
    EXPECT_THROW(parse_args({"train", "--data", "d", "--out", "o", "--bogus", "1"}), UsageError);
    EXPECT_THROW(parse_args({"train", "--out", "o"}), UsageError);
    EXPECT_THROW(parse_args({"eval", "--data", "d"}), UsageError);
    EXPECT_THROW(parse_args({"eval", "--checkpoint", "c"}), UsageError);
    EXPECT_THROW(parse_args({"frobnicate"}), UsageError);
    EXPECT_THROW(parse_args(std::vector<std::string>{}), UsageError);
    EXPECT_THROW(parse_args({"train", "--data", "d", "--out", "o", "--sparse-path", "maybe"}), UsageError);
    EXPECT_THROW(parse_args({"histogram", "--checkpoint", "c", "--data", "d", "--out", "o"}), UsageError);
    EXPECT_THROW(parse_args({"eval", "--checkpoint", "c", "--data", "d", "--lr", "0.1"}), UsageError);
}

TEST(Run, ExitCodes) {
    EXPECT_EQ(run({"train", "--hidden", "-5"}), roae::cli::kUsage);
    const auto dir = temp_dir("codes");
    EXPECT_EQ(run({"eval", "--checkpoint", (dir / "missing.roae").string(), "--data", dir.string()}),
              roae::cli::kIo);
    std::ofstream(dir / "bad.roae") << "XXXXnot a checkpoint at all, just some bytes padding padding";
    EXPECT_EQ(run({"eval", "--checkpoint", (dir / "bad.roae").string(), "--data", dir.string()}),
              roae::cli::kFormat);
    Checkpoint ckpt = initial_checkpoint(TrainConfig{});
    std::string bytes = encode_checkpoint(ckpt);
    bytes[4] = 9;
    atomic_write(dir / "v9.roae", bytes);
    EXPECT_EQ(run({"eval", "--checkpoint", (dir / "v9.roae").string(), "--data", dir.string()}),
              roae::cli::kVersion);
    std::string help;
    EXPECT_EQ(run({"--help"}, &help), 0);
    EXPECT_NE(help.find("train"), std::string::npos);
}

TEST(Run, SmokePipeline) {
    const auto data = temp_dir("smoke_data");
    roae::testing::write_synthetic_cifar(data, 20, 20, 5);
    const auto out = temp_dir("smoke_out");
    const std::string ck = (out / "epoch2.roae").string();
    std::string text;
    ASSERT_EQ(run({"train", "--data", data.string(), "--out", out.string(), "--hidden", "16", "--patch", "3",
                   "--epochs", "2", "--seed", "3", "--max-images", "100"},
                  &text),
              0);
    EXPECT_NE(text.find("epoch 2"), std::string::npos);
    for (const char* f : {"epoch1.roae", "epoch2.roae", "metrics.csv", "rank_errors.csv"}) {
        EXPECT_TRUE(std::filesystem::exists(out / f)) << f;
    }
    EXPECT_EQ(read_metrics_csv(out / "metrics.csv").size(), 2u);

    ASSERT_EQ(run({"eval", "--checkpoint", ck, "--data", data.string(), "--seed", "3"}, &text), 0);
    EXPECT_NE(text.find("test_recon_l2 "), std::string::npos);
    EXPECT_NE(text.find("test_objective "), std::string::npos);
    EXPECT_NE(text.find("mean_active_units "), std::string::npos);

    const std::string o = out.string();
    EXPECT_EQ(run({"export-filters", "--checkpoint", ck, "--data", data.string(), "--out", o}), 0);
    EXPECT_EQ(run({"reconstruct", "--checkpoint", ck, "--data", data.string(), "--out", o, "--index", "4"}), 0);
    EXPECT_EQ(run({"error-surface", "--checkpoint", ck, "--data", data.string(), "--out", o, "--index", "4"}), 0);
    EXPECT_EQ(run({"histogram", "--checkpoint", ck, "--data", data.string(), "--out", o, "--index", "4"}), 0);
    for (const char* f : {"filters.ppm", "reconstruction_4.ppm", "error_surface_4.pgm", "error_surface_4.csv",
                          "histogram.csv"}) {
        EXPECT_TRUE(std::filesystem::exists(out / f)) << f;
    }
    EXPECT_EQ(read_pnm(out / "filters.ppm").width, 4u * 4 + 1);
    EXPECT_EQ(read_pnm(out / "error_surface_4.pgm").width, 17u);
    EXPECT_EQ(read_pnm(out / "error_surface_4.pgm").height, 28u);
    EXPECT_EQ(run({"histogram", "--checkpoint", ck, "--data", data.string(), "--out", o, "--index", "100"}),
              roae::cli::kUsage);

    // resume to epoch 3 matches a straight 3-epoch run
    const auto straight = temp_dir("smoke_straight");
    ASSERT_EQ(run({"train", "--data", data.string(), "--out", straight.string(), "--hidden", "16", "--patch", "3",
                   "--epochs", "3", "--seed", "3"}),
              0);
    ASSERT_EQ(run({"train", "--data", data.string(), "--out", o, "--checkpoint", ck, "--hidden", "16", "--patch",
                   "3", "--epochs", "3", "--seed", "3"}),
              0);
    EXPECT_EQ(read_file(out / "epoch3.roae"), read_file(straight / "epoch3.roae"));
}

TEST(Run, UntrainedEvalIsInputNormLevel) {
    const auto data = temp_dir("untrained_data");
    roae::testing::write_synthetic_cifar(data, 4, 10, 6);
    TrainConfig cfg;
    cfg.seed = 1;
    save_checkpoint(initial_checkpoint(cfg), data / "init.roae");
    std::string text;
    ASSERT_EQ(run({"eval", "--checkpoint", (data / "init.roae").string(), "--data", data.string(), "--seed", "1"},
                  &text),
              0);
    const auto patches = frozen_test_patches(load_batch_file(test_batch_path(data)), cfg);
    double mean = 0.0;
    for (const auto& x : patches) {
        mean += l2_norm(x);
    }
    mean /= static_cast<double>(patches.size());
    const double reported = std::stod(text.substr(text.find(' ') + 1));
    EXPECT_GT(reported, 0.8 * mean);
    EXPECT_LE(reported, 1.2 * mean);
}

TEST(Binary, TwoRunsGiveIdenticalMetrics) {
    const auto data = temp_dir("bin_data");
    roae::testing::write_synthetic_cifar(data, 20, 20, 8);
    std::string files[2];
    for (int k = 0; k < 2; ++k) {
        const auto out = temp_dir("bin_out" + std::to_string(k));
        const std::string cmd = std::string(ROAE_CLI_PATH) + " train --data " + data.string() + " --out " +
                                out.string() + " --hidden 16 --patch 3 --epochs 2 --seed 11 --threads " +
                                std::to_string(k + 1) + " > /dev/null";
        ASSERT_EQ(std::system(cmd.c_str()), 0);
        files[k] = read_file(out / "metrics.csv");
    }
    EXPECT_EQ(files[0], files[1]);
    const std::string bad = std::string(ROAE_CLI_PATH) + " train --hidden -5 2> /dev/null";
    const int status = std::system(bad.c_str());
    EXPECT_TRUE(WIFEXITED(status));
    EXPECT_EQ(WEXITSTATUS(status), roae::cli::kUsage);
}
