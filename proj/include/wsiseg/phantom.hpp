#pragma once

#include "wsiseg/image.hpp"
#include "wsiseg/slide.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace wsiseg {

struct PhantomSpec {
    std::string slide_id = "phantom";
    int width = 4096;
    int height = 4096;
    int tile_size = 512;
    int n_tumor_blobs = 2;
    double blob_radius_min = 450.0;  // level-0 pixels, before deformation
    double blob_radius_max = 650.0;
    double tissue_coverage = 0.55;   // undeformed tissue disc area / slide area
    std::uint64_t texture_seed = 0;  // 0: derived from seed
    std::uint64_t seed = 1;
};

/// Throws ConfigError for impossible sizes or ratios.
void validate(const PhantomSpec& spec);

struct Phantom {
    TiledSlide slide;
    BinaryMask tissue_truth;  // level 0
    BinaryMask tumor_truth;   // level 0, subset of tissue_truth
    double implied_tumor_area = 0.0;  // sum of the undeformed blob disc areas
};

// Glass is near-white with faint noise. Tissue is a disc with a smooth,
// harmonically deformed outline filled with pink, mildly textured stroma.
// Tumor blobs are deformed discs strictly inside the tissue, purple-shifted
// and more strongly textured. Blobs never overlap. Placement that keeps
// failing raises PlacementError.
Phantom generate_phantom(const PhantomSpec& spec);

/// Writes the slide directory plus tissue_truth.png and tumor_truth.png.
void write_phantom(const std::filesystem::path& dir, const Phantom& phantom);

/// Small rendered samples of each texture, used by tests and the heuristic fit.
RgbImage render_stroma_patch(int size, std::uint64_t seed);
RgbImage render_tumor_patch(int size, std::uint64_t seed);

}  // namespace wsiseg
