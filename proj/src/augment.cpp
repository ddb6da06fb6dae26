#include "wsiseg/augment.hpp"

#include "wsiseg/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace wsiseg {

ValueRange resolved_radius_range(const AugmentConfig& config, int height, int width) {
    if (config.radius_range) return *config.radius_range;
    const double m = std::min(height, width);
    return {0.1 * m, 0.3 * m};
}

std::vector<LensSpec> sample_lenses(const AugmentConfig& config, int height, int width, Rng& rng) {
    if (height < 1 || width < 1) throw ConfigError("image dimensions must be positive");
    if (config.num_lenses < 0) throw ConfigError("num_lenses must be non-negative");
    const ValueRange radius = resolved_radius_range(config, height, width);
    const ValueRange strength = config.strength_range;
    if (!(radius.min > 0.0) || radius.max < radius.min) throw ConfigError("radius range must satisfy 0 < min <= max");
    if (radius.max > std::min(height, width)) {
        throw ConfigError("lens radius range exceeds the image dimensions");
    }
    if (strength.min < 0.0 || strength.max < strength.min || !(strength.max < 1.0)) {
        throw ConfigError("strength magnitude range must satisfy 0 <= min <= max < 1");
    }

    std::vector<LensSpec> lenses;
    lenses.reserve(static_cast<std::size_t>(config.num_lenses));
    for (int i = 0; i < config.num_lenses; ++i) {
        LensSpec l;
        l.radius = rng.uniform(radius.min, radius.max);
        l.strength = rng.uniform(strength.min, strength.max);
        if (config.random_sign && rng.coin()) l.strength = -l.strength;
        l.cx = rng.uniform_int(0, static_cast<int>(std::floor(width - l.radius)));
        l.cy = rng.uniform_int(0, static_cast<int>(std::floor(height - l.radius)));
        lenses.push_back(l);
    }
    return lenses;
}

std::pair<int, int> lens_source(const LensSpec& lens, int x, int y, int width, int height) {
    const double dx = x - lens.cx;
    const double dy = y - lens.cy;
    const double r = std::sqrt(dx * dx + dy * dy);
    const double scaling = std::max(1.0 - r / lens.radius, 0.0);
    const double factor = 1.0 - lens.strength * scaling;
    const double sx = std::clamp(dx * factor + lens.cx, 0.0, static_cast<double>(width - 1));
    const double sy = std::clamp(dy * factor + lens.cy, 0.0, static_cast<double>(height - 1));
    return {static_cast<int>(std::floor(sx + 0.5)), static_cast<int>(std::floor(sy + 0.5))};
}

RgbImage apply_multi_lens_distortion(const RgbImage& image, std::span<const LensSpec> lenses) {
    if (image.empty()) throw InputError("cannot distort an empty image");
    RgbImage current = image;
    RgbImage source;
    for (const LensSpec& lens : lenses) {
        if (!(lens.radius > 0.0) || !(std::abs(lens.strength) < 1.0)) {
            throw ConfigError("lens needs radius > 0 and |strength| < 1");
        }
        // Outside the disc the mapping is the identity, so only its bounding box is touched.
        const int x0 = std::max(0, static_cast<int>(std::ceil(lens.cx - lens.radius)));
        const int x1 = std::min(image.width - 1, static_cast<int>(std::floor(lens.cx + lens.radius)));
        const int y0 = std::max(0, static_cast<int>(std::ceil(lens.cy - lens.radius)));
        const int y1 = std::min(image.height - 1, static_cast<int>(std::floor(lens.cy + lens.radius)));
        if (x0 > x1 || y0 > y1) continue;
        source = current;
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                const auto [sx, sy] = lens_source(lens, x, y, image.width, image.height);
                std::memcpy(current.pixel(x, y), source.pixel(sx, sy), 3);
            }
        }
    }
    return current;
}

RgbImage flip_horizontal(const RgbImage& image) {
    RgbImage out(image.width, image.height);
    for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width; ++x) std::memcpy(out.pixel(image.width - 1 - x, y), image.pixel(x, y), 3);
    return out;
}

RgbImage flip_vertical(const RgbImage& image) {
    RgbImage out(image.width, image.height);
    for (int y = 0; y < image.height; ++y)
        std::memcpy(out.pixel(0, image.height - 1 - y), image.pixel(0, y), static_cast<std::size_t>(image.width) * 3);
    return out;
}

RgbImage rotate90(const RgbImage& image, int quarter_turns) {
    const int k = ((quarter_turns % 4) + 4) % 4;
    if (k == 0) return image;
    if (k == 2) return flip_vertical(flip_horizontal(image));
    RgbImage out(image.height, image.width);
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
            // counter-clockwise: (x, y) -> (y, W-1-x); clockwise: (x, y) -> (H-1-y, x)
            const int ox = k == 1 ? y : image.height - 1 - y;
            const int oy = k == 1 ? image.width - 1 - x : x;
            std::memcpy(out.pixel(ox, oy), image.pixel(x, y), 3);
        }
    }
    return out;
}

RgbImage adjust_contrast(const RgbImage& image, double factor) {
    RgbImage out = image;
    for (auto& v : out.data) v = clamp_round_u8(factor * (v - 128.0) + 128.0);
    return out;
}

RgbImage adjust_brightness(const RgbImage& image, double delta) {
    RgbImage out = image;
    for (auto& v : out.data) v = clamp_round_u8(v + delta);
    return out;
}

namespace {

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
    const double mx = std::max({r, g, b});
    const double mn = std::min({r, g, b});
    const double d = mx - mn;
    v = mx;
    s = mx > 0.0 ? d / mx : 0.0;
    if (d == 0.0) {
        h = 0.0;
    } else if (mx == r) {
        h = 60.0 * std::fmod((g - b) / d + 6.0, 6.0);
    } else if (mx == g) {
        h = 60.0 * ((b - r) / d + 2.0);
    } else {
        h = 60.0 * ((r - g) / d + 4.0);
    }
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
    const double c = v * s;
    const double hp = h / 60.0;
    const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
    const double m = v - c;
    double r1 = 0, g1 = 0, b1 = 0;
    switch (static_cast<int>(std::floor(hp)) % 6) {
        case 0: r1 = c; g1 = x; break;
        case 1: r1 = x; g1 = c; break;
        case 2: g1 = c; b1 = x; break;
        case 3: g1 = x; b1 = c; break;
        case 4: r1 = x; b1 = c; break;
        default: r1 = c; b1 = x; break;
    }
    r = r1 + m;
    g = g1 + m;
    b = b1 + m;
}

}  // namespace

RgbImage rotate_hue(const RgbImage& image, double degrees) {
    RgbImage out = image;
    for (std::size_t i = 0; i < out.data.size(); i += 3) {
        double h, s, v;
        rgb_to_hsv(out.data[i], out.data[i + 1], out.data[i + 2], h, s, v);
        h = std::fmod(h + degrees, 360.0);
        if (h < 0.0) h += 360.0;
        double r, g, b;
        hsv_to_rgb(h, s, v, r, g, b);
        out.data[i] = clamp_round_u8(r);
        out.data[i + 1] = clamp_round_u8(g);
        out.data[i + 2] = clamp_round_u8(b);
    }
    return out;
}

RgbImage crop(const RgbImage& image, int x, int y, int width, int height) {
    if (x < 0 || y < 0 || width < 1 || height < 1 || x + width > image.width || y + height > image.height) {
        throw BoundsError("crop window outside the image");
    }
    RgbImage out(width, height);
    for (int r = 0; r < height; ++r) {
        std::memcpy(out.pixel(0, r), image.pixel(x, y + r), static_cast<std::size_t>(width) * 3);
    }
    return out;
}

RgbImage augment_patch(const RgbImage& image, const AugmentConfig& config, Rng& rng) {
    if (image.empty()) throw InputError("cannot augment an empty image");
    if (config.crop && (image.width < config.crop_size || image.height < config.crop_size)) {
        throw SizeError("image " + std::to_string(image.width) + "x" + std::to_string(image.height) +
                        " is smaller than the " + std::to_string(config.crop_size) + " crop");
    }
    const double p = config.apply_probability;
    RgbImage img = image;
    if (config.flip) {
        if (rng.coin(p)) img = flip_horizontal(img);
        if (rng.coin(p)) img = flip_vertical(img);
    }
    if (config.rot90 && rng.coin(p)) img = rotate90(img, rng.uniform_int(0, 3));
    if (config.contrast && rng.coin(p)) {
        img = adjust_contrast(img, rng.uniform(config.contrast_range.min, config.contrast_range.max));
    }
    if (config.hue && rng.coin(p)) img = rotate_hue(img, rng.uniform(config.hue_range.min, config.hue_range.max));
    if (config.brightness && rng.coin(p)) {
        img = adjust_brightness(img, rng.uniform(config.brightness_range.min, config.brightness_range.max));
    }
    if (config.lens && config.num_lenses > 0 && rng.coin(p)) {
        const auto lenses = sample_lenses(config, img.height, img.width, rng);
        img = apply_multi_lens_distortion(img, lenses);
    }
    if (config.crop) {
        const int x = rng.uniform_int(0, img.width - config.crop_size);
        const int y = rng.uniform_int(0, img.height - config.crop_size);
        img = crop(img, x, y, config.crop_size, config.crop_size);
    }
    return img;
}

void draw_grid_overlay(RgbImage& image, int spacing, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    if (spacing < 2) throw ConfigError("grid spacing must be at least 2");
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
            if (x % spacing == 0 || y % spacing == 0) {
                std::uint8_t* px = image.pixel(x, y);
                px[0] = r;
                px[1] = g;
                px[2] = b;
            }
        }
    }
}

}  // namespace wsiseg
