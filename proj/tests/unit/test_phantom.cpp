#include "scratch.hpp"

#include "wsiseg/errors.hpp"
#include "wsiseg/phantom.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace wsiseg;

namespace {

PhantomSpec small_spec(std::uint64_t seed) {
    PhantomSpec s;
    s.width = s.height = 1024;
    s.tile_size = 256;
    s.blob_radius_min = 100;
    s.blob_radius_max = 160;
    s.seed = seed;
    return s;
}

}  // namespace

TEST(Phantom, NoBlobsNoTumor) {
    PhantomSpec s = small_spec(3);
    s.n_tumor_blobs = 0;
    const Phantom p = generate_phantom(s);
    EXPECT_EQ(p.tumor_truth.count(), 0u);
    EXPECT_GT(p.tissue_truth.count(), 0u);
    EXPECT_EQ(p.implied_tumor_area, 0.0);
}

TEST(Phantom, SeedDeterminesEverything) {
    const Phantom a = generate_phantom(small_spec(8));
    const Phantom b = generate_phantom(small_spec(8));
    EXPECT_EQ(a.slide.read_level(0), b.slide.read_level(0));
    EXPECT_EQ(a.tissue_truth, b.tissue_truth);
    EXPECT_EQ(a.tumor_truth, b.tumor_truth);
    const Phantom c = generate_phantom(small_spec(9));
    EXPECT_NE(a.tumor_truth, c.tumor_truth);
}

TEST(Phantom, AreasAndNesting) {
    for (std::uint64_t seed : {1, 2, 3}) {
        PhantomSpec s;
        s.seed = seed;
        const Phantom p = generate_phantom(s);
        ASSERT_EQ(p.tumor_truth.width, 4096);
        const double tumor = static_cast<double>(p.tumor_truth.count());
        const double tissue = static_cast<double>(p.tissue_truth.count());
        const double disc = s.tissue_coverage * s.width * s.height;
        EXPECT_NEAR(tumor / p.implied_tumor_area, 1.0, 0.2) << seed;
        EXPECT_NEAR((tumor / tissue) / (p.implied_tumor_area / disc), 1.0, 0.2) << seed;
        EXPECT_GE(p.implied_tumor_area, 2 * M_PI * 450 * 450);
        EXPECT_LE(p.implied_tumor_area, 2 * M_PI * 650 * 650);
        for (std::size_t i = 0; i < p.tumor_truth.bits.size(); ++i)
            ASSERT_LE(p.tumor_truth.bits[i], p.tissue_truth.bits[i]);
    }
}

TEST(Phantom, TextureLuminance) {
    const Phantom p = generate_phantom(small_spec(4));
    const RgbImage img = p.slide.read_level(0);
    double glass_min = 255, stroma_sum = 0;
    std::size_t stroma_n = 0;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const double l = luminance(img.pixel(x, y));
            if (!p.tissue_truth.at(x, y)) {
                glass_min = std::min(glass_min, l);
            } else if (!p.tumor_truth.at(x, y)) {
                stroma_sum += l;
                ++stroma_n;
            }
        }
    EXPECT_GE(glass_min, 250.0);
    const double stroma_mean = stroma_sum / static_cast<double>(stroma_n);
    EXPECT_GE(stroma_mean, 140.0);
    EXPECT_LE(stroma_mean, 200.0);
}

TEST(Phantom, ValidationAndPlacementErrors) {
    PhantomSpec s = small_spec(1);
    s.tissue_coverage = 0.0;
    EXPECT_THROW(generate_phantom(s), ConfigError);
    s = small_spec(1);
    s.tissue_coverage = 1.2;
    EXPECT_THROW(validate(s), ConfigError);
    s = small_spec(1);
    s.blob_radius_min = 200;
    s.blob_radius_max = 100;
    EXPECT_THROW(validate(s), ConfigError);
    s = small_spec(1);
    s.width = 0;
    EXPECT_THROW(validate(s), ConfigError);
    s = small_spec(1);
    s.n_tumor_blobs = 40;
    EXPECT_THROW(generate_phantom(s), PlacementError);
}

TEST(Phantom, WrittenDirectory) {
    const Phantom p = generate_phantom(small_spec(5));
    const Scratch dir("phantom_write");
    write_phantom(dir.path / "ph", p);
    EXPECT_TRUE(std::filesystem::exists(dir.path / "ph" / "manifest.json"));
    EXPECT_EQ(read_mask_png(dir.path / "ph" / "tumor_truth.png"), p.tumor_truth);
    EXPECT_EQ(read_mask_png(dir.path / "ph" / "tissue_truth.png"), p.tissue_truth);
    EXPECT_EQ(TiledSlide::open(dir.path / "ph").read_level(0), p.slide.read_level(0));
}

TEST(Phantom, TexturePatchesAreSeeded) {
    EXPECT_EQ(render_tumor_patch(64, 3), render_tumor_patch(64, 3));
    EXPECT_NE(render_tumor_patch(64, 3), render_tumor_patch(64, 4));
    EXPECT_NE(render_tumor_patch(64, 3), render_stroma_patch(64, 3));
    EXPECT_EQ(render_stroma_patch(64, 3).width, 64);
}
