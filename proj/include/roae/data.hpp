#pragma once

// CIFAR-10 binary ingestion and random patch sampling.
//
// Each record of a CIFAR-10 binary batch is one label byte followed by 3072
// pixel bytes: the 1024 red values, then green, then blue, each plane stored
// row-major for a 32x32 image. Patches keep the same channel-planar layout.

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "roae/error.hpp"
#include "roae/numerics.hpp"

namespace roae {

inline constexpr std::size_t kImageSide = 32;
inline constexpr std::size_t kChannels = 3;
inline constexpr std::size_t kPixelBytes = kImageSide * kImageSide * kChannels;
inline constexpr std::size_t kRecordBytes = kPixelBytes + 1;
inline constexpr std::size_t kTestPatchesPerImage = 5;

struct CifarImage {
    std::uint8_t label = 0;
    std::array<std::uint8_t, kPixelBytes> pixels{};

    std::uint8_t at(std::size_t channel, std::size_t row, std::size_t col) const noexcept {
        return pixels[channel * kImageSide * kImageSide + row * kImageSide + col];
    }

    friend bool operator==(const CifarImage&, const CifarImage&) = default;
};

struct PatchSpec {
    std::size_t side = 7;
    std::size_t top = 0;
    std::size_t left = 0;
};

constexpr std::size_t patch_length(std::size_t side) noexcept { return side * side * kChannels; }

/// Reads at most `limit` records from a CIFAR-10 binary batch file.
inline std::vector<CifarImage> load_batch_file(const std::filesystem::path& path,
                                               std::size_t limit = static_cast<std::size_t>(-1)) {
    std::error_code ec;
    const auto size = std::filesystem::file_size(path, ec);
    if (ec) {
        throw IoError("cannot stat " + path.string() + ": " + ec.message());
    }
    if (size % kRecordBytes != 0) {
        throw FormatError(path.string() + ": size " + std::to_string(size) + " is not a multiple of " +
                          std::to_string(kRecordBytes) + " bytes");
    }
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    const std::size_t records = std::min<std::size_t>(size / kRecordBytes, limit);
    std::vector<CifarImage> images(records);
    for (auto& img : images) {
        char label = 0;
        in.read(&label, 1);
        in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(kPixelBytes));
        if (!in) {
            throw IoError("short read from " + path.string());
        }
        img.label = static_cast<std::uint8_t>(label);
    }
    return images;
}

inline void write_batch_file(const std::vector<CifarImage>& images, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot create " + path.string());
    }
    for (const auto& img : images) {
        out.put(static_cast<char>(img.label));
        out.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(kPixelBytes));
    }
    if (!out) {
        throw IoError("write failed for " + path.string());
    }
}

inline std::vector<std::filesystem::path> train_batch_paths(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> paths;
    for (int i = 1; i <= 5; ++i) {
        paths.push_back(dir / ("data_batch_" + std::to_string(i) + ".bin"));
    }
    return paths;
}

inline std::filesystem::path test_batch_path(const std::filesystem::path& dir) { return dir / "test_batch.bin"; }

/// Loads images from `paths` in order until `limit` images have been read.
inline std::vector<CifarImage> load_images(const std::vector<std::filesystem::path>& paths,
                                           std::size_t limit = static_cast<std::size_t>(-1)) {
    std::vector<CifarImage> images;
    for (const auto& p : paths) {
        if (images.size() >= limit) {
            break;
        }
        auto batch = load_batch_file(p, limit - images.size());
        images.insert(images.end(), std::make_move_iterator(batch.begin()), std::make_move_iterator(batch.end()));
    }
    return images;
}

/// Copies the patch at `spec` into a [0,1] vector (channel, row, col order).
/// No other preprocessing is applied.
inline Vector extract_patch(const CifarImage& img, const PatchSpec& spec) {
    if (spec.side == 0 || spec.side > kImageSide || spec.top + spec.side > kImageSide ||
        spec.left + spec.side > kImageSide) {
        throw UsageError("patch does not fit inside a 32x32 image");
    }
    Vector out;
    out.reserve(patch_length(spec.side));
    for (std::size_t c = 0; c < kChannels; ++c) {
        for (std::size_t r = 0; r < spec.side; ++r) {
            for (std::size_t col = 0; col < spec.side; ++col) {
                out.push_back(static_cast<double>(img.at(c, spec.top + r, spec.left + col)) / 255.0);
            }
        }
    }
    return out;
}

inline PatchSpec random_patch_spec(Rng& rng, std::size_t side) {
    if (side == 0 || side > kImageSide) {
        throw UsageError("patch side must be in [1, 32]");
    }
    PatchSpec spec{side, 0, 0};
    spec.top = static_cast<std::size_t>(rng.uniform_int(0, kImageSide - side));
    spec.left = static_cast<std::size_t>(rng.uniform_int(0, kImageSide - side));
    return spec;
}

inline Vector sample_patch(const CifarImage& img, Rng& rng, std::size_t side) {
    return extract_patch(img, random_patch_spec(rng, side));
}

/// One fresh random patch per image, images in their stored order.
inline std::vector<Vector> build_epoch_stream(const std::vector<CifarImage>& images, Rng& rng, std::size_t side) {
    std::vector<Vector> patches;
    patches.reserve(images.size());
    for (const auto& img : images) {
        patches.push_back(sample_patch(img, rng, side));
    }
    return patches;
}

/// `per_image` patches from every image; used once to freeze the test set.
inline std::vector<Vector> build_test_patches(const std::vector<CifarImage>& images, Rng& rng, std::size_t side,
                                              std::size_t per_image = kTestPatchesPerImage) {
    std::vector<Vector> patches;
    patches.reserve(images.size() * per_image);
    for (const auto& img : images) {
        for (std::size_t k = 0; k < per_image; ++k) {
            patches.push_back(sample_patch(img, rng, side));
        }
    }
    return patches;
}

} // namespace roae
