#pragma once

// Filter, reconstruction and error-surface images as binary PPM/PGM.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "roae/data.hpp"
#include "roae/error.hpp"
#include "roae/io.hpp"
#include "roae/model.hpp"

namespace roae {

inline constexpr std::uint8_t kSeparatorLevel = 255;

/// Tiles of side `tile_side` laid out row by row with 1-pixel separators.
struct ImageGrid {
    std::size_t tile_side = 0;
    std::size_t grid_rows = 0;
    std::size_t grid_cols = 0;
    std::vector<std::uint8_t> rgb;  ///< width*height*3, row-major

    ImageGrid() = default;
    ImageGrid(std::size_t tile, std::size_t rows, std::size_t cols)
        : tile_side(tile), grid_rows(rows), grid_cols(cols), rgb(width() * height() * 3, kSeparatorLevel) {}

    /// Roughly square grid large enough for `count` tiles.
    static ImageGrid for_count(std::size_t count, std::size_t tile) {
        const auto cols = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(count))));
        const std::size_t rows = cols == 0 ? 0 : (count + cols - 1) / cols;
        return ImageGrid(tile, rows, cols);
    }

    std::size_t width() const noexcept { return grid_cols * (tile_side + 1) + 1; }
    std::size_t height() const noexcept { return grid_rows * (tile_side + 1) + 1; }

    std::uint8_t& at(std::size_t row, std::size_t col, std::size_t channel) noexcept {
        return rgb[(row * width() + col) * 3 + channel];
    }
    std::uint8_t at(std::size_t row, std::size_t col, std::size_t channel) const noexcept {
        return rgb[(row * width() + col) * 3 + channel];
    }

    /// Paints tile `index` from a channel-planar patch with values in [0,1].
    void set_tile(std::size_t index, std::span<const double> patch) {
        if (index >= grid_rows * grid_cols || patch.size() != patch_length(tile_side)) {
            throw DimensionError("ImageGrid::set_tile: tile index or patch size out of range");
        }
        const std::size_t top = (index / grid_cols) * (tile_side + 1) + 1;
        const std::size_t left = (index % grid_cols) * (tile_side + 1) + 1;
        const std::size_t plane = tile_side * tile_side;
        for (std::size_t c = 0; c < kChannels; ++c) {
            for (std::size_t r = 0; r < tile_side; ++r) {
                for (std::size_t col = 0; col < tile_side; ++col) {
                    at(top + r, left + col, c) = to_level(patch[c * plane + r * tile_side + col]);
                }
            }
        }
    }

    static std::uint8_t to_level(double v) noexcept {
        return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
    }
};

inline std::size_t patch_side_for(std::size_t inputs) {
    const auto side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(inputs) / kChannels)));
    if (side == 0 || patch_length(side) != inputs) {
        throw DimensionError("model input size " + std::to_string(inputs) + " is not an RGB square patch");
    }
    return side;
}

/// Min-max normalises a filter to [0,1]; a constant filter maps to 0.5.
inline Vector normalize_filter(std::span<const double> filter) {
    Vector out(filter.begin(), filter.end());
    if (out.empty()) {
        return out;
    }
    const auto [lo, hi] = std::minmax_element(out.begin(), out.end());
    const double min = *lo;
    const double range = *hi - min;
    for (double& v : out) {
        v = range > 0.0 ? (v - min) / range : 0.5;
    }
    return out;
}

/// Mean thresholded output of every unit over `sample`.
inline Vector mean_activation(const RoaeModel& model, const std::vector<Vector>& sample) {
    if (sample.empty()) {
        throw UsageError("mean_activation: empty activation sample");
    }
    Vector mean(model.hidden(), 0.0);
    for (const auto& x : sample) {
        const ForwardState fs = forward(model, x);
        for (std::size_t j = 0; j < mean.size(); ++j) {
            mean[j] += fs.y[j];
        }
    }
    for (double& v : mean) {
        v /= static_cast<double>(sample.size());
    }
    return mean;
}

/// One normalised tile per filter, ordered by descending mean activation.
inline ImageGrid filter_mosaic(const RoaeModel& model, const std::vector<Vector>& activation_sample) {
    const std::size_t side = patch_side_for(model.inputs());
    const Vector mean = mean_activation(model, activation_sample);
    const Permutation order = argsort_desc(mean);
    ImageGrid grid = ImageGrid::for_count(model.hidden(), side);
    for (std::size_t t = 0; t < order.size(); ++t) {
        grid.set_tile(t, normalize_filter(model.weights().column(order[t])));
    }
    return grid;
}

/// Tile t shows the reconstruction after the top t+1 units; the last tile is
/// replaced by the input itself.
inline ImageGrid reconstruction_mosaic(const RoaeModel& model, std::span<const double> x,
                                       ReconstructionMode mode = ReconstructionMode::sparse) {
    const std::size_t side = patch_side_for(model.inputs());
    const ForwardState fs = forward(model, x);
    const ProgressiveState ps = progressive_reconstruct(model, fs, mode);
    ImageGrid grid = ImageGrid::for_count(model.hidden(), side);
    for (std::size_t t = 0; t + 1 < model.hidden(); ++t) {
        grid.set_tile(t, ps.recon.column(fs.perm[t]));
    }
    grid.set_tile(model.hidden() - 1, x);
    return grid;
}

inline std::string encode_ppm(const ImageGrid& grid) {
    std::ostringstream out;
    out << "P6\n" << grid.width() << ' ' << grid.height() << "\n255\n";
    out.write(reinterpret_cast<const char*>(grid.rgb.data()), static_cast<std::streamsize>(grid.rgb.size()));
    return out.str();
}

inline void write_ppm(const ImageGrid& grid, const std::filesystem::path& path) {
    atomic_write(path, encode_ppm(grid));
}

/// Grayscale rendering of an error surface: 0 -> white, 1 -> black.
inline std::string encode_pgm(const Matrix& surface) {
    std::ostringstream out;
    out << "P5\n" << surface.cols() << ' ' << surface.rows() << "\n255\n";
    for (double v : surface.data()) {
        out.put(static_cast<char>(255 - ImageGrid::to_level(v)));
    }
    return out.str();
}

inline void write_pgm(const Matrix& surface, const std::filesystem::path& path) {
    atomic_write(path, encode_pgm(surface));
}

inline void write_matrix_csv(const Matrix& m, const std::filesystem::path& path) {
    std::ostringstream out;
    out.precision(17);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < m.cols(); ++c) {
            out << (c ? "," : "") << m(r, c);
        }
        out << '\n';
    }
    atomic_write(path, out.str());
}

/// Decoded binary PPM/PGM.
struct PnmImage {
    std::string magic;
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels;
};

inline PnmImage read_pnm(const std::filesystem::path& path) {
    const std::string bytes = read_file(path);
    std::istringstream in(bytes);
    PnmImage img;
    int maxval = 0;
    in >> img.magic >> img.width >> img.height >> maxval;
    if (!in || (img.magic != "P5" && img.magic != "P6") || maxval != 255) {
        throw FormatError(path.string() + ": not an 8-bit binary PGM/PPM");
    }
    in.get();  // single whitespace before the raster
    const std::size_t channels = img.magic == "P6" ? 3 : 1;
    const std::size_t count = img.width * img.height * channels;
    const auto offset = static_cast<std::size_t>(in.tellg());
    if (bytes.size() != offset + count) {
        throw FormatError(path.string() + ": raster size mismatch");
    }
    img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(offset), bytes.end());
    return img;
}

} // namespace roae
