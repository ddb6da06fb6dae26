#include "oracles.hpp"
#include "scratch.hpp"

#include "wsiseg/errors.hpp"
#include "wsiseg/metrics.hpp"
#include "wsiseg/phantom.hpp"
#include "wsiseg/postprocess.hpp"
#include "wsiseg/tissue_grid.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace wsiseg;

namespace {

BinaryMask rows_filled(int w, int h, int pixels) {
    BinaryMask m(w, h);
    for (int i = 0; i < pixels; ++i) m.bits[static_cast<std::size_t>(i)] = 1;
    return m;
}

// One patch of side 200 with exactly `tissue_px` tissue and `tumor_px` tumor pixels.
PatchRecord single_patch(int tissue_px, std::optional<int> tumor_px) {
    const TiledSlide s = TiledSlide::from_image("p", RgbImage(200, 200, 180), 256);
    const TissueMask tissue{0, rows_filled(200, 200, tissue_px)};
    std::optional<LevelMask> truth;
    if (tumor_px) truth = LevelMask{0, rows_filled(200, 200, *tumor_px)};
    const PatchGrid g = build_patch_grid(s, 0, 200, tissue, truth ? &*truth : nullptr);
    EXPECT_EQ(g.records.size(), 1u);
    return g.records.at(0);
}

}  // namespace

TEST(TissueMask, WhiteSlideIsGlass) {
    const TiledSlide s = TiledSlide::from_image("w", RgbImage(256, 256, 255), 128);
    const TissueMask m = compute_tissue_mask(s, 0);
    EXPECT_EQ(m.mask.count(), 0u);
}

TEST(TissueMask, DarkPinkSlideIsTissue) {
    RgbImage img(256, 256);
    for (int i = 0; i < 256 * 256; ++i) {
        img.data[i * 3] = 190;
        img.data[i * 3 + 1] = 130;
        img.data[i * 3 + 2] = 160;
    }
    ASSERT_NEAR(luminance(img.pixel(0, 0)), 151.4, 0.1);
    const TiledSlide s = TiledSlide::from_image("pink", img, 128);
    const TissueMask m = compute_tissue_mask(s, 1);
    EXPECT_EQ(m.level, 1);
    EXPECT_EQ(m.mask.count(), m.mask.bits.size());
}

TEST(TissueMask, LevelOutOfRangeThrows) {
    const TiledSlide s = TiledSlide::from_image("w", RgbImage(64, 64, 255), 64);
    EXPECT_THROW(compute_tissue_mask(s, 3), BoundsError);
}

TEST(TissueMask, PhantomTissueAgreesWithTruth) {
    PhantomSpec spec;
    spec.seed = 21;
    const Phantom p = generate_phantom(spec);
    const TissueMask m = compute_tissue_mask(p.slide, default_mask_level(p.slide));
    const BinaryMask truth = resize_mask_nearest(p.tissue_truth, m.mask.width, m.mask.height);
    const MetricsReport r = evaluate_masks(m.mask, truth);
    EXPECT_GE(r.dsc, 0.98);
}

TEST(TissueMask, DefaultLevelIsNearestOneThirtySecond) {
    const TiledSlide s = TiledSlide::from_image("big", RgbImage(4096, 4096, 255), 64);
    EXPECT_EQ(default_mask_level(s), 5);
    const TiledSlide small = TiledSlide::from_image("small", RgbImage(300, 300, 255), 256);
    EXPECT_EQ(default_mask_level(small), small.level_count() - 1);
}

TEST(PatchLabel, BoundaryRules) {
    EXPECT_EQ(label_patch(0.25, 0.0), PatchLabel::GlassExcluded);
    EXPECT_EQ(label_patch(std::nextafter(0.25, 1.0), std::nullopt), PatchLabel::Eligible);
    EXPECT_EQ(label_patch(1.0, 0.0), PatchLabel::NonTumor);
    EXPECT_EQ(label_patch(1.0, 0.03), PatchLabel::AmbiguousExcluded);
    EXPECT_EQ(label_patch(1.0, 0.05), PatchLabel::Tumor);
    EXPECT_EQ(label_patch(0.1, 0.9), PatchLabel::GlassExcluded);
}

TEST(PatchLabel, ConstructedMasks) {
    // 200 x 200 = 40000 pixels: 10000 is exactly a quarter, 2000 is 5%, 1200 is 3%.
    EXPECT_EQ(single_patch(10000, 0).label, PatchLabel::GlassExcluded);
    EXPECT_EQ(single_patch(10001, std::nullopt).label, PatchLabel::Eligible);
    EXPECT_EQ(single_patch(40000, 0).label, PatchLabel::NonTumor);
    EXPECT_EQ(single_patch(40000, 1200).label, PatchLabel::AmbiguousExcluded);
    EXPECT_EQ(single_patch(40000, 2000).label, PatchLabel::Tumor);
    EXPECT_DOUBLE_EQ(single_patch(10000, 0).tissue_fraction, 0.25);
    EXPECT_DOUBLE_EQ(*single_patch(40000, 1200).tumor_fraction, 0.03);
}

TEST(PatchLabel, NamesRoundtrip) {
    for (PatchLabel l : {PatchLabel::GlassExcluded, PatchLabel::Eligible, PatchLabel::NonTumor, PatchLabel::Tumor,
                         PatchLabel::AmbiguousExcluded}) {
        EXPECT_EQ(parse_patch_label(to_string(l)), l);
    }
    EXPECT_THROW(parse_patch_label("MAYBE"), InputError);
}

TEST(PatchGrid, AllGlassSlide) {
    const TiledSlide s = TiledSlide::from_image("glass", RgbImage(1000, 700, 252), 256);
    const TissueMask m = compute_tissue_mask(s, default_mask_level(s));
    const PatchGrid g = build_patch_grid(s, 0, 224, m);
    EXPECT_EQ(g.cols, 5);
    EXPECT_EQ(g.rows, 4);
    for (const PatchRecord& r : g.records) EXPECT_EQ(r.label, PatchLabel::GlassExcluded);
    EXPECT_TRUE(g.eligible_indices().empty());
}

TEST(PatchGrid, MismatchedMaskThrows) {
    const TiledSlide s = TiledSlide::from_image("m", RgbImage(400, 400, 200), 256);
    const TissueMask wrong{1, BinaryMask(150, 200, 1)};
    EXPECT_THROW(build_patch_grid(s, 0, 224, wrong), ConsistencyError);
}

TEST(PatchGrid, FractionsMatchUpscaledMaskOracle) {
    std::mt19937_64 g(44);
    std::uniform_int_distribution<int> pick(1, 3);
    for (int trial = 0; trial < 20; ++trial) {
        const TiledSlide s = TiledSlide::from_image("f", RgbImage(512, 384, 200), 128);
        const int level = pick(g) - 1;
        const TissueMask tissue{level, oracle::random_mask(g, s.level(level).width, s.level(level).height)};
        const LevelMask truth{0, oracle::random_mask(g, 512, 384)};
        const int patch = 64 * pick(g) - 5;
        const PatchGrid grid = build_patch_grid(s, 0, patch, tissue, &truth);
        const BinaryMask up = upscale_nearest(tissue.mask, 512, 384);
        for (const PatchRecord& r : grid.records) {
            long tissue_px = 0, tumor_px = 0;
            for (int y = r.origin_y; y < r.origin_y + r.height; ++y)
                for (int x = r.origin_x; x < r.origin_x + r.width; ++x) {
                    tissue_px += up.at(x, y);
                    tumor_px += truth.mask.at(x, y);
                }
            const double area = double(r.width) * r.height;
            ASSERT_NEAR(r.tissue_fraction, tissue_px / area, 1e-12);
            ASSERT_NEAR(*r.tumor_fraction, tumor_px / area, 1e-12);
            ASSERT_EQ(r.label, label_patch(r.tissue_fraction, r.tumor_fraction));
        }
    }
}

TEST(PatchGrid, FootprintsTileTheLevel) {
    const TiledSlide s = TiledSlide::from_image("t", RgbImage(1000, 1000, 100), 256);
    const PatchGrid g = build_patch_grid(s, 1, 224, compute_tissue_mask(s, 2));
    EXPECT_EQ(g.level_width, 500);
    EXPECT_EQ(g.cols, 3);
    long area = 0;
    for (const PatchRecord& r : g.records) area += long(r.width) * r.height;
    EXPECT_EQ(area, 500L * 500L);
}

TEST(ExtractPatch, InteriorEqualsRegion) {
    std::mt19937_64 rng(9);
    const TiledSlide s = TiledSlide::from_image("e", oracle::random_image(rng, 1000, 1000), 256);
    const PatchGrid g = build_patch_grid(s, 0, 224, TissueMask{0, BinaryMask(1000, 1000, 1)});
    const PatchRecord& r = g.at(2, 1);
    EXPECT_EQ(extract_patch(s, r, 224), s.read_region({0, r.origin_x, r.origin_y, 224, 224}));
}

TEST(ExtractPatch, CornerIsZeroPadded) {
    std::mt19937_64 rng(10);
    const TiledSlide s = TiledSlide::from_image("e", oracle::random_image(rng, 1000, 1000), 256);
    const PatchGrid g = build_patch_grid(s, 0, 224, TissueMask{0, BinaryMask(1000, 1000, 1)});
    const PatchRecord& r = g.at(4, 4);
    EXPECT_EQ(r.width, 104);
    EXPECT_EQ(r.height, 104);
    const RgbImage p = extract_patch(s, r, 224);
    ASSERT_EQ(p.width, 224);
    ASSERT_EQ(p.height, 224);
    const RgbImage region = s.read_region({0, 896, 896, 104, 104});
    for (int y = 0; y < 224; ++y)
        for (int x = 0; x < 224; ++x)
            for (int c = 0; c < 3; ++c) {
                const int expect = (x < 104 && y < 104) ? region.pixel(x, y)[c] : 0;
                ASSERT_EQ(p.pixel(x, y)[c], expect);
            }
}

TEST(ExtractPatch, StaleGridThrows) {
    const TiledSlide a = TiledSlide::from_image("a", RgbImage(500, 500, 90), 256);
    const TiledSlide b = TiledSlide::from_image("b", RgbImage(300, 500, 90), 256);
    const PatchGrid g = build_patch_grid(a, 0, 224, compute_tissue_mask(a, 1));
    EXPECT_THROW(check_grid_matches(b, g), ConsistencyError);
    EXPECT_THROW(extract_patch(b, g.at(2, 2), 224), ConsistencyError);
}

TEST(PatchGrid, CsvRoundtrip) {
    std::mt19937_64 rng(4);
    const TiledSlide s = TiledSlide::from_image("csv", RgbImage(700, 500, 150), 256);
    const LevelMask truth{0, oracle::random_mask(rng, 700, 500)};
    const PatchGrid g = build_patch_grid(s, 0, 224, compute_tissue_mask(s, 1), &truth);
    const Scratch dir("grid_csv");
    write_patch_grid(dir.path / "patches.csv", dir.path / "grid.json", g);
    EXPECT_EQ(read_patch_grid(dir.path / "patches.csv", dir.path / "grid.json"), g);
}
