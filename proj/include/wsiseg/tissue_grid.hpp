#pragma once

#include "wsiseg/image.hpp"
#include "wsiseg/slide.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace wsiseg {

/// Binary raster tied to one pyramid level of a slide.
struct LevelMask {
    int level = 0;
    BinaryMask mask;
};

/// 1 = tissue, 0 = glass.
using TissueMask = LevelMask;

struct TissueParams {
    double gradient_threshold = 0.02;
    double brightness_ceiling = 0.95;
};

/// Tissue/glass separation on one level. A pixel is tissue when the 3x3 mean of
/// its normalised Sobel luminance gradient exceeds `gradient_threshold`, or when
/// its luminance is below `brightness_ceiling * 255`. Gradient magnitudes are
/// divided by the largest value an 8-bit image can produce (4 * 255 * sqrt 2).
TissueMask compute_tissue_mask(const TiledSlide& slide, int mask_level, const TissueParams& params = {});
BinaryMask tissue_mask_from_image(const RgbImage& image, const TissueParams& params = {});

/// Level closest to 1/32 of level-0 resolution, clamped to the deepest level available.
int default_mask_level(const TiledSlide& slide);

enum class PatchLabel {
    GlassExcluded,      // tissue fraction <= 0.25
    Eligible,           // enough tissue, no ground truth supplied
    NonTumor,           // enough tissue, tumor fraction exactly 0
    Tumor,              // enough tissue, tumor fraction >= 0.05
    AmbiguousExcluded,  // enough tissue, 0 < tumor fraction < 0.05
};

std::string_view to_string(PatchLabel label);
PatchLabel parse_patch_label(std::string_view text);

inline constexpr double kMinTissueFraction = 0.25;  // strictly more is required
inline constexpr double kMinTumorFraction = 0.05;   // inclusive

/// Labelling rule for a single patch.
PatchLabel label_patch(double tissue_fraction, std::optional<double> tumor_fraction);

struct PatchRecord {
    int grid_x = 0;
    int grid_y = 0;
    int level = 0;
    int origin_x = 0;
    int origin_y = 0;
    int patch_size = 0;
    int width = 0;   // true footprint; smaller than patch_size on the right edge
    int height = 0;  // likewise on the bottom edge
    double tissue_fraction = 0.0;
    std::optional<double> tumor_fraction;
    PatchLabel label = PatchLabel::GlassExcluded;

    bool tissue_eligible() const { return label != PatchLabel::GlassExcluded; }
    friend bool operator==(const PatchRecord&, const PatchRecord&) = default;
};

struct PatchGrid {
    std::string slide_id;
    int level = 0;
    int patch_size = 0;
    int level_width = 0;
    int level_height = 0;
    int cols = 0;
    int rows = 0;
    std::vector<PatchRecord> records;  // row-major

    const PatchRecord& at(int grid_x, int grid_y) const {
        return records[static_cast<std::size_t>(grid_y) * cols + grid_x];
    }
    std::vector<std::size_t> eligible_indices() const;

    friend bool operator==(const PatchGrid&, const PatchGrid&) = default;
};

/// Non-overlapping lattice with stride `patch_size` over `level`. Tissue and
/// tumor fractions are exact area ratios of the masks over each footprint,
/// with masks from any pyramid level mapped by their downsample factors.
PatchGrid build_patch_grid(const TiledSlide& slide, int level, int patch_size, const TissueMask& tissue,
                           const LevelMask* truth = nullptr);

/// Area fraction of `mask` covering the level-`level` rectangle [x, x+w) x [y, y+h).
double mask_area_fraction(const TiledSlide& slide, const LevelMask& mask, int level, int x, int y, int w, int h);

/// Patch pixels at the grid level, zero-padded on the right/bottom up to
/// `out_size`; footprints larger than `out_size` are cropped to the top-left.
RgbImage extract_patch(const TiledSlide& slide, const PatchRecord& record, int out_size = 224);

/// Throws ConsistencyError unless `grid` was built over `slide`.
void check_grid_matches(const TiledSlide& slide, const PatchGrid& grid);

// CSV body (one row per record) plus a JSON header carrying grid metadata.
void write_patch_grid(const std::filesystem::path& csv_path, const std::filesystem::path& json_path,
                      const PatchGrid& grid);
PatchGrid read_patch_grid(const std::filesystem::path& csv_path, const std::filesystem::path& json_path);

}  // namespace wsiseg
