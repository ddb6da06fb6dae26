#pragma once

#include "wsiseg/image.hpp"

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace wsiseg {

struct LevelDesc {
    int level = 0;
    int width = 0;
    int height = 0;
    double downsample_factor = 1.0;  // 2^level
};

struct Region {
    int level = 0;
    int x = 0;
    int y = 0;
    int width = 0;
    int height = 0;
};

/// Pyramidal tiled RGB raster.
///
/// Level 0 is full resolution and every further level halves both dimensions
/// (rounding up) with a 2x2 box average. The pyramid stops at the first level
/// whose larger side fits in one tile. Tiles are square, `tile_size` a power
/// of two, and edge tiles keep their true (partial) size.
///
/// Instances are immutable; copies share the underlying tile storage, and
/// concurrent reads are safe.
///
/// On disk a slide is a directory holding `manifest.json` and one PNG per tile
/// named `L{level}_x{tx}_y{ty}.png`.
class TiledSlide {
public:
    TiledSlide() = default;

    /// Builds the pyramid from a level-0 image.
    static TiledSlide from_image(std::string slide_id, const RgbImage& level0, int tile_size,
                                 std::filesystem::path source_path = {});
    /// Loads a slide directory written by save().
    static TiledSlide open(const std::filesystem::path& dir);
    void save(const std::filesystem::path& dir) const;

    const std::string& slide_id() const;
    int tile_size() const;
    static constexpr int channels() { return 3; }
    const std::filesystem::path& source_path() const;

    const std::vector<LevelDesc>& levels() const;
    const LevelDesc& level(int index) const;  // throws BoundsError
    int level_count() const { return static_cast<int>(levels().size()); }

    int tiles_x(int level) const;
    int tiles_y(int level) const;
    const RgbImage& tile(int level, int tx, int ty) const;

    /// Exact copy of a rectangle; throws BoundsError if any part lies outside the level.
    RgbImage read_region(const Region& region) const;
    RgbImage read_level(int level) const;

    bool valid() const { return static_cast<bool>(storage_); }

    struct Storage;  // opaque

private:
    std::shared_ptr<const Storage> storage_;
};

/// Reads an 8-bit RGB PNG or TIFF and builds a slide. The slide id defaults to the file stem.
TiledSlide import_raster(const std::filesystem::path& path, int tile_size, std::string slide_id = {});

/// One pyramid step: 2x2 box mean with round-half-up, edge pixels clamped.
RgbImage halve(const RgbImage& src);

/// Bilinear resize with pixel-center alignment, i.e. source coordinate
/// s = (d + 0.5) * in / out - 0.5 clamped to [0, in - 1]; channel results are
/// rounded half-up. A resize to identical dimensions is the identity.
RgbImage resize_bilinear(const RgbImage& src, int width, int height);

/// Fixed-size overview of a slide: resamples the smallest pyramid level that
/// is at least `width` x `height` (level 0 if none is) to exactly that size.
/// Aspect ratio is not preserved.
RgbImage downsample_to(const TiledSlide& slide, int width, int height);

/// Index of the smallest level whose dimensions are both >= the target.
int pick_level_at_least(const TiledSlide& slide, int width, int height);

}  // namespace wsiseg
