#include "wsiseg/phantom.hpp"

#include "wsiseg/errors.hpp"
#include "wsiseg/rng.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <vector>

namespace wsiseg {

namespace {

constexpr double kPi = std::numbers::pi;

// Texture constants. Changing any of them changes every phantom and the
// heuristic golden file.
constexpr std::array<double, 3> kGlass = {251.0, 251.0, 252.0};
constexpr std::array<double, 3> kStroma = {230.0, 165.0, 195.0};
constexpr std::array<double, 3> kTumor = {175.0, 125.0, 200.0};
constexpr double kStromaScaleCoarse = 32.0;
constexpr double kStromaScaleFine = 9.0;
constexpr double kStromaAmplitude = 14.0;
constexpr int kStromaGrain = 5;
constexpr double kTumorScaleCoarse = 14.0;
constexpr double kTumorScaleFine = 5.0;
constexpr double kTumorAmplitude = 26.0;
constexpr int kTumorGrain = 9;
constexpr int kHarmonics = 3;                 // k = 2, 3, 4
constexpr double kTissueWobble = 0.025;       // per-harmonic amplitude bound
constexpr double kBlobWobble = 0.03;
constexpr double kEdgeMargin = 32.0;
constexpr double kBlobMargin = 8.0;
constexpr int kPlacementTries = 2000;
constexpr int kPlacementRestarts = 10;

std::uint64_t lattice_hash(std::int64_t ix, std::int64_t iy, std::uint64_t seed) {
    return mix64(seed ^ mix64(static_cast<std::uint64_t>(ix) * 0x9E3779B97F4A7C15ULL +
                              static_cast<std::uint64_t>(iy) * 0xC2B2AE3D27D4EB4FULL));
}

double lattice_value(std::int64_t ix, std::int64_t iy, std::uint64_t seed) {
    return static_cast<double>(lattice_hash(ix, iy, seed) >> 11) * 0x1.0p-53 * 2.0 - 1.0;
}

/// Smoothly interpolated lattice noise in [-1, 1].
double value_noise(double x, double y, double scale, std::uint64_t seed) {
    const double fx = x / scale;
    const double fy = y / scale;
    const double x0 = std::floor(fx);
    const double y0 = std::floor(fy);
    const auto ix = static_cast<std::int64_t>(x0);
    const auto iy = static_cast<std::int64_t>(y0);
    double tx = fx - x0;
    double ty = fy - y0;
    tx = tx * tx * (3.0 - 2.0 * tx);
    ty = ty * ty * (3.0 - 2.0 * ty);
    const double a = lattice_value(ix, iy, seed);
    const double b = lattice_value(ix + 1, iy, seed);
    const double c = lattice_value(ix, iy + 1, seed);
    const double d = lattice_value(ix + 1, iy + 1, seed);
    const double top = a + (b - a) * tx;
    const double bottom = c + (d - c) * tx;
    return top + (bottom - top) * ty;
}

int grain(std::int64_t x, std::int64_t y, std::uint64_t seed, int amplitude) {
    return static_cast<int>(lattice_hash(x, y, seed) % static_cast<std::uint64_t>(2 * amplitude + 1)) - amplitude;
}

enum class Kind { Glass, Stroma, Tumor };

struct TextureSeeds {
    std::uint64_t glass, coarse, fine, grain;
    explicit TextureSeeds(std::uint64_t s)
        : glass(combine_seed(s, 1)), coarse(combine_seed(s, 2)), fine(combine_seed(s, 3)), grain(combine_seed(s, 4)) {}
};

void shade(Kind kind, std::int64_t x, std::int64_t y, const TextureSeeds& t, std::uint8_t* out) {
    const auto px = static_cast<double>(x);
    const auto py = static_cast<double>(y);
    switch (kind) {
        case Kind::Glass: {
            const int g = grain(x, y, t.glass, 1);
            for (int c = 0; c < 3; ++c) out[c] = static_cast<std::uint8_t>(kGlass[static_cast<std::size_t>(c)] + g);
            return;
        }
        case Kind::Stroma: {
            const double n = 0.65 * value_noise(px, py, kStromaScaleCoarse, t.coarse) +
                             0.35 * value_noise(px, py, kStromaScaleFine, t.fine);
            const double s = kStromaAmplitude * n;
            const int g = grain(x, y, t.grain, kStromaGrain);
            out[0] = clamp_round_u8(kStroma[0] + s + g);
            out[1] = clamp_round_u8(kStroma[1] + s + g);
            out[2] = clamp_round_u8(kStroma[2] + 0.8 * s + g);
            return;
        }
        case Kind::Tumor: {
            const double n = 0.5 * value_noise(px, py, kTumorScaleCoarse, t.coarse ^ 0x55) +
                             0.5 * value_noise(px, py, kTumorScaleFine, t.fine ^ 0x55);
            const double s = kTumorAmplitude * n;
            const int g = grain(x, y, t.grain ^ 0x55, kTumorGrain);
            out[0] = clamp_round_u8(kTumor[0] + s + g);
            out[1] = clamp_round_u8(kTumor[1] + s + g);
            out[2] = clamp_round_u8(kTumor[2] + 0.8 * s + g);
            return;
        }
    }
}

/// Closed curve r(theta) = r0 * (1 + sum_k a_k cos(k theta + phi_k)), k = 2..4.
struct Outline {
    double cx = 0.0;
    double cy = 0.0;
    double r0 = 0.0;
    std::array<double, kHarmonics> amp{};
    std::array<double, kHarmonics> phase{};

    double wobble_bound() const {
        double s = 0.0;
        for (double a : amp) s += a;
        return s;
    }
    double r_min() const { return r0 * (1.0 - wobble_bound()); }
    double r_max() const { return r0 * (1.0 + wobble_bound()); }
    double radius(double theta) const {
        double f = 1.0;
        for (int k = 0; k < kHarmonics; ++k) {
            f += amp[static_cast<std::size_t>(k)] * std::cos((k + 2) * theta + phase[static_cast<std::size_t>(k)]);
        }
        return r0 * f;
    }
    bool contains(double x, double y, double margin = 0.0) const {
        const double dx = x - cx;
        const double dy = y - cy;
        const double d2 = dx * dx + dy * dy;
        const double lo = r_min() - margin;
        if (lo > 0 && d2 <= lo * lo) return true;
        const double hi = r_max() - margin;
        if (hi <= 0 || d2 > hi * hi) return false;
        return std::sqrt(d2) <= radius(std::atan2(dy, dx)) - margin;
    }

    static Outline random(double cx, double cy, double r0, double wobble, Rng& rng) {
        Outline o;
        o.cx = cx;
        o.cy = cy;
        o.r0 = r0;
        for (int k = 0; k < kHarmonics; ++k) {
            o.amp[static_cast<std::size_t>(k)] = rng.uniform(0.0, wobble);
            o.phase[static_cast<std::size_t>(k)] = rng.uniform(0.0, 2.0 * kPi);
        }
        return o;
    }
};

bool blob_fits(const Outline& blob, const Outline& tissue) {
    constexpr int kSamples = 256;
    for (int i = 0; i < kSamples; ++i) {
        const double th = 2.0 * kPi * i / kSamples;
        const double r = blob.radius(th) + kBlobMargin;
        if (!tissue.contains(blob.cx + r * std::cos(th), blob.cy + r * std::sin(th))) return false;
    }
    return true;
}

std::vector<Outline> place_blobs(const PhantomSpec& spec, const Outline& tissue, Rng& rng) {
    for (int restart = 0; restart < kPlacementRestarts; ++restart) {
        std::vector<Outline> blobs;
        bool ok = true;
        for (int b = 0; b < spec.n_tumor_blobs && ok; ++b) {
            const double r0 = rng.uniform(spec.blob_radius_min, spec.blob_radius_max);
            const double reach = tissue.r_max();
            ok = false;
            for (int attempt = 0; attempt < kPlacementTries; ++attempt) {
                const double cx = tissue.cx + rng.uniform(-reach, reach);
                const double cy = tissue.cy + rng.uniform(-reach, reach);
                Outline blob = Outline::random(cx, cy, r0, kBlobWobble, rng);
                bool clear = true;
                for (const Outline& o : blobs) {
                    const double gap = o.r_max() + blob.r_max() + kBlobMargin;
                    if (std::hypot(o.cx - cx, o.cy - cy) < gap) {
                        clear = false;
                        break;
                    }
                }
                if (clear && blob_fits(blob, tissue)) {
                    blobs.push_back(blob);
                    ok = true;
                    break;
                }
            }
        }
        if (ok) return blobs;
    }
    throw PlacementError("could not place " + std::to_string(spec.n_tumor_blobs) + " tumor blobs of radius " +
                         std::to_string(spec.blob_radius_min) + ".." + std::to_string(spec.blob_radius_max) +
                         " inside the tissue region");
}

RgbImage render_texture(Kind kind, int size, std::uint64_t seed) {
    if (size < 1) throw ConfigError("patch size must be positive");
    const TextureSeeds t(seed);
    const auto ox = static_cast<std::int64_t>(mix64(seed) % 100000);
    const auto oy = static_cast<std::int64_t>(mix64(seed + 1) % 100000);
    RgbImage img(size, size);
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) shade(kind, ox + x, oy + y, t, img.pixel(x, y));
    }
    return img;
}

}  // namespace

void validate(const PhantomSpec& s) {
    if (s.width < 64 || s.height < 64) throw ConfigError("phantom must be at least 64x64");
    if (!(s.tissue_coverage > 0.0 && s.tissue_coverage <= 1.0)) throw ConfigError("tissue_coverage must lie in (0, 1]");
    if (s.n_tumor_blobs < 0) throw ConfigError("n_tumor_blobs must be >= 0");
    if (!(s.blob_radius_min > 0.0 && s.blob_radius_max >= s.blob_radius_min)) {
        throw ConfigError("blob radius range must be positive and ordered");
    }
    if (s.tile_size < 1 || (s.tile_size & (s.tile_size - 1)) != 0) throw ConfigError("tile_size must be a power of two");
}

Phantom generate_phantom(const PhantomSpec& spec) {
    validate(spec);
    Rng rng(combine_seed(spec.seed, stable_hash("phantom-geometry")));
    const TextureSeeds tex(spec.texture_seed ? spec.texture_seed : combine_seed(spec.seed, stable_hash("phantom-texture")));

    const double r0 = std::sqrt(spec.tissue_coverage * spec.width * spec.height / kPi);
    const double half = std::min(spec.width, spec.height) / 2.0 - kEdgeMargin;
    if (r0 * (1.0 + kHarmonics * kTissueWobble) > half) {
        throw ConfigError("tissue_coverage " + std::to_string(spec.tissue_coverage) + " does not fit a " +
                          std::to_string(spec.width) + "x" + std::to_string(spec.height) + " phantom");
    }
    Outline proto = Outline::random(0, 0, r0, kTissueWobble, rng);
    const double slack_x = spec.width / 2.0 - kEdgeMargin - proto.r_max();
    const double slack_y = spec.height / 2.0 - kEdgeMargin - proto.r_max();
    proto.cx = spec.width / 2.0 + rng.uniform(-slack_x, slack_x);
    proto.cy = spec.height / 2.0 + rng.uniform(-slack_y, slack_y);
    const Outline tissue = proto;
    const std::vector<Outline> blobs = place_blobs(spec, tissue, rng);

    Phantom ph;
    ph.tissue_truth = BinaryMask(spec.width, spec.height);
    ph.tumor_truth = BinaryMask(spec.width, spec.height);
    for (const Outline& b : blobs) ph.implied_tumor_area += kPi * b.r0 * b.r0;

    RgbImage img(spec.width, spec.height);
    for (int y = 0; y < spec.height; ++y) {
        const double py = y + 0.5;
        for (int x = 0; x < spec.width; ++x) {
            const double px = x + 0.5;
            Kind kind = Kind::Glass;
            if (tissue.contains(px, py)) {
                kind = Kind::Stroma;
                ph.tissue_truth.at(x, y) = 1;
                for (const Outline& b : blobs) {
                    if (std::abs(px - b.cx) <= b.r_max() && std::abs(py - b.cy) <= b.r_max() && b.contains(px, py)) {
                        kind = Kind::Tumor;
                        ph.tumor_truth.at(x, y) = 1;
                        break;
                    }
                }
            }
            shade(kind, x, y, tex, img.pixel(x, y));
        }
    }
    ph.slide = TiledSlide::from_image(spec.slide_id, img, spec.tile_size);
    return ph;
}

void write_phantom(const std::filesystem::path& dir, const Phantom& ph) {
    ph.slide.save(dir);
    write_mask_png(dir / "tissue_truth.png", ph.tissue_truth);
    write_mask_png(dir / "tumor_truth.png", ph.tumor_truth);
}

RgbImage render_stroma_patch(int size, std::uint64_t seed) { return render_texture(Kind::Stroma, size, seed); }
RgbImage render_tumor_patch(int size, std::uint64_t seed) { return render_texture(Kind::Tumor, size, seed); }

}  // namespace wsiseg
