#pragma once

#include "wsiseg/image.hpp"
#include "wsiseg/rng.hpp"

#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace wsiseg {

/// One local radial warp. Positive strength samples closer to the centre and
/// magnifies the middle of the disc; negative strength samples farther out and
/// shrinks it.
struct LensSpec {
    double cx = 0.0;  // column of the centre (integral)
    double cy = 0.0;  // row of the centre (integral)
    double radius = 1.0;
    double strength = 0.0;

    friend bool operator==(const LensSpec&, const LensSpec&) = default;
};

struct ValueRange {
    double min = 0.0;
    double max = 0.0;
};

struct AugmentConfig {
    int num_lenses = 4;
    // Unset means (0.1, 0.3) * min(H, W) of the image being warped.
    std::optional<ValueRange> radius_range;
    ValueRange strength_range{0.2, 0.4};  // magnitude; the sign is drawn separately
    bool random_sign = true;

    bool flip = true;
    bool rot90 = true;
    bool contrast = true;
    bool hue = true;
    bool brightness = true;
    bool lens = true;
    bool crop = true;

    double apply_probability = 0.5;        // per-transform coin
    ValueRange contrast_range{0.8, 1.2};   // multiplicative factor about 128
    ValueRange hue_range{-10.0, 10.0};     // degrees
    ValueRange brightness_range{-20.0, 20.0};  // 8-bit units
    int crop_size = 224;

    std::uint64_t seed = 0;
};

ValueRange resolved_radius_range(const AugmentConfig& config, int height, int width);

/// Draws `num_lenses` lenses. Per lens, in this order: radius ~ U(radius_range),
/// |strength| ~ U(strength_range), sign ~ fair coin (if random_sign), then
/// integer centre cx ~ U{0..floor(W - radius)}, cy ~ U{0..floor(H - radius)}.
std::vector<LensSpec> sample_lenses(const AugmentConfig& config, int height, int width, Rng& rng);

/// Source pixel that output pixel (x, y) reads under one lens: the offset from
/// the centre is scaled by 1 - strength * max(1 - r / radius, 0), clipped to the
/// image, and rounded half-up to the nearest pixel.
std::pair<int, int> lens_source(const LensSpec& lens, int x, int y, int width, int height);

/// Applies the lenses one after another, each warping the image left by the
/// previous one (backward mapping, nearest-neighbour sampling).
RgbImage apply_multi_lens_distortion(const RgbImage& image, std::span<const LensSpec> lenses);

RgbImage flip_horizontal(const RgbImage& image);
RgbImage flip_vertical(const RgbImage& image);
/// Counter-clockwise rotation by quarter_turns * 90 degrees.
RgbImage rotate90(const RgbImage& image, int quarter_turns);
RgbImage adjust_contrast(const RgbImage& image, double factor);
RgbImage adjust_brightness(const RgbImage& image, double delta);
RgbImage rotate_hue(const RgbImage& image, double degrees);
RgbImage crop(const RgbImage& image, int x, int y, int width, int height);

/// Random augmentation of one training patch: flips, quarter-turn rotation,
/// contrast, hue, brightness and multi-lens distortion, each behind its own
/// coin, followed by a random crop_size x crop_size crop.
RgbImage augment_patch(const RgbImage& image, const AugmentConfig& config, Rng& rng);

/// Draws a regular line grid, for eyeballing how lenses bend straight lines.
void draw_grid_overlay(RgbImage& image, int spacing, std::uint8_t r = 0, std::uint8_t g = 0, std::uint8_t b = 0);

}  // namespace wsiseg
