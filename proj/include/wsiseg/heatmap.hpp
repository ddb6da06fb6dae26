#pragma once

#include "wsiseg/bridge.hpp"
#include "wsiseg/image.hpp"
#include "wsiseg/tissue_grid.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace wsiseg {

/// Patch probabilities laid out on the patch lattice. Cells without a
/// classification (including all glass-excluded patches) hold 0.
struct Heatmap {
    std::string slide_id;
    int cols = 0;
    int rows = 0;
    std::vector<double> values;  // row-major, in [0, 1]

    double at(int grid_x, int grid_y) const { return values[static_cast<std::size_t>(grid_y) * cols + grid_x]; }
    friend bool operator==(const Heatmap&, const Heatmap&) = default;
};

/// Throws ConsistencyError for indices outside the grid, duplicates, or a
/// probability given for a glass-excluded patch; NumericError for values
/// outside [0, 1].
Heatmap stitch_heatmap(const PatchGrid& grid, std::span<const PatchProbability> probs);

/// Bilinear resize with align-corners mapping: output index d reads source
/// coordinate d * (in - 1) / (out - 1), or (in - 1) / 2 when out == 1.
ScalarRaster resize_align_corners(std::span<const double> values, int in_width, int in_height, int out_width,
                                  int out_height);
ScalarRaster resize_heatmap(const Heatmap& heatmap, int target);

/// Bilinear resize that keeps the heatmap registered with the slide: each
/// output pixel is mapped to its position on the grid level and interpolated
/// between the centres of the surrounding patches (clamped at the outermost
/// centres).
ScalarRaster resize_heatmap_registered(const Heatmap& heatmap, const PatchGrid& grid, int out_width, int out_height);

/// Four-channel refinement input, stored planar: R, G, B (scaled to [0, 1])
/// followed by the heatmap plane.
struct RefinementInput {
    int width = 0;
    int height = 0;
    std::vector<float> planes;  // 4 * width * height

    static constexpr int kChannels = 4;
    float at(int channel, int x, int y) const {
        return planes[(static_cast<std::size_t>(channel) * height + y) * width + x];
    }
    ScalarRaster channel(int c) const;
    friend bool operator==(const RefinementInput&, const RefinementInput&) = default;
};

RefinementInput fuse_inputs(const RgbImage& rgb, const ScalarRaster& heatmap);

// Heatmaps persist as a 16-bit PNG (value = round(p * 65535)) plus a JSON sidecar.
void write_heatmap(const std::filesystem::path& png_path, const std::filesystem::path& json_path,
                   const Heatmap& heatmap);
Heatmap read_heatmap(const std::filesystem::path& png_path, const std::filesystem::path& json_path);

// Raw little-endian float32 planes plus a JSON header {width, height, channels, ...}.
void write_planar_f32(const std::filesystem::path& raw_path, const std::filesystem::path& json_path, int width,
                      int height, int channels, std::span<const float> planes);
std::vector<float> read_planar_f32(const std::filesystem::path& raw_path, int width, int height, int channels);

void write_refinement_input(const std::filesystem::path& raw_path, const std::filesystem::path& json_path,
                            const RefinementInput& input);
RefinementInput read_refinement_input(const std::filesystem::path& raw_path, const std::filesystem::path& json_path);

void write_scalar_raster(const std::filesystem::path& raw_path, const std::filesystem::path& json_path,
                         const ScalarRaster& raster);
ScalarRaster read_scalar_raster(const std::filesystem::path& raw_path, const std::filesystem::path& json_path);

}  // namespace wsiseg
