#include "scratch.hpp"
#include "tree.hpp"

#include "wsiseg/errors.hpp"
#include "wsiseg/phantom.hpp"
#include "wsiseg/pipeline.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>

using namespace wsiseg;
namespace fs = std::filesystem;

namespace {

PhantomSpec mid_spec(std::uint64_t seed) {
    PhantomSpec s;
    s.width = s.height = 2048;
    s.blob_radius_min = 225;
    s.blob_radius_max = 325;
    s.seed = seed;
    s.slide_id = "mid-" + std::to_string(seed);
    return s;
}

std::vector<SlideJob> phantom_jobs(std::initializer_list<std::uint64_t> seeds, bool full_size = false) {
    std::vector<SlideJob> jobs;
    for (std::uint64_t seed : seeds) {
        PhantomSpec s = full_size ? PhantomSpec{} : mid_spec(seed);
        s.seed = seed;
        if (full_size) s.slide_id = "phantom-" + std::to_string(seed);
        Phantom p = generate_phantom(s);
        jobs.push_back({p.slide, std::move(p.tumor_truth)});
    }
    return jobs;
}

int run_cli(const std::string& args) {
    const int rc = std::system((std::string(CLI_BINARY) + " " + args + " > /dev/null 2>&1").c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string stub_selector(const char* mode) { return std::string("exec:") + BRIDGE_STUB + " " + mode; }

}  // namespace

TEST(Config, JsonRoundtripAndUnknownKeys) {
    PipelineConfig c;
    c.slides.push_back({"a/slide", fs::path("a/truth.png"), "a"});
    c.slides.push_back({"b.png", std::nullopt, ""});
    c.classifier = "exec:model --fast";
    c.batch_size = 7;
    c.mask_level = 3;
    c.heatmap_resize = HeatmapResize::AlignCorners;
    c.augment.radius_range = ValueRange{5, 9};
    c.postprocess.median_kernel = 5;
    c.seed = 42;
    c.workers = 8;
    const nlohmann::json j = to_json(c);
    EXPECT_FALSE(j.contains("workers"));
    const PipelineConfig back = pipeline_config_from_json(j);
    EXPECT_EQ(to_json(back), j);
    EXPECT_EQ(back.workers, 1);
    EXPECT_EQ(back.slides.at(0).truth, fs::path("a/truth.png"));

    nlohmann::json bad = j;
    bad["postprocess"]["kernel"] = 3;
    EXPECT_THROW(pipeline_config_from_json(bad), ConfigError);
    EXPECT_THROW(pipeline_config_from_json({{"treshold", 0.5}}), ConfigError);
    EXPECT_THROW(pipeline_config_from_json({{"heatmap_resize", "bicubic"}}), ConfigError);
    EXPECT_NO_THROW(pipeline_config_from_json({{"slides", {"x.png"}}}));
}

TEST(Config, Validation) {
    PipelineConfig c;
    EXPECT_NO_THROW(validate(c));
    c.batch_size = 0;
    EXPECT_THROW(validate(c), ConfigError);
    c = {};
    c.refinement_size = 0;
    EXPECT_THROW(validate(c), ConfigError);
    c = {};
    c.postprocess.opening_kernel = 4;
    EXPECT_THROW(validate(c), ConfigError);
}

TEST(Pipeline, EmptySlideListIsNoop) {
    const Scratch dir("pipe_empty");
    PipelineConfig c;
    c.output_dir = dir.path / "out";
    const PipelineResult r = run_pipeline(c);
    EXPECT_TRUE(r.slides.empty());
    EXPECT_TRUE(r.all_ok());
    EXPECT_FALSE(r.summary.has_value());
}

TEST(Pipeline, PhantomEndToEnd) {
    const auto jobs = phantom_jobs({31}, true);
    const Scratch dir("pipe_e2e");
    PipelineConfig c;
    c.output_dir = dir.path;
    c.write_upscaled_mask = true;
    const PipelineResult r = run_pipeline(c, jobs);
    ASSERT_EQ(r.slides.size(), 1u);
    const SlideResult& s = r.slides[0];
    ASSERT_TRUE(s.ok) << s.error;
    ASSERT_TRUE(s.metrics.has_value());
    EXPECT_GE(s.metrics->dsc, 0.90);

    const fs::path root = dir.path / "phantom-31";
    for (const char* f : {"mask/tissue_mask.png", "grid/patches.csv", "classify/probabilities.csv", "stitch/heatmap.png",
                          "downsample/rgb.png", "fuse/refinement_input.f32", "fuse/heatmap_resized.png",
                          "refine/probability.png", "postprocess/mask.png", "postprocess/mask_level0.png",
                          "eval/metrics.json", "eval/overlay.png"})
        EXPECT_TRUE(fs::exists(root / f)) << f;
    for (const char* f : {"effective_config.json", "metrics.csv", "summary.csv", "status.json", "run-info/timings.json"})
        EXPECT_TRUE(fs::exists(dir.path / f)) << f;
    EXPECT_EQ(read_mask_png(root / "postprocess" / "mask_level0.png").width, 4096);

    const RefinementInput in = read_refinement_input(root / "fuse" / "refinement_input.f32", root / "fuse" / "refinement_input.json");
    EXPECT_EQ(in.width, 1120);
    EXPECT_EQ(in.height, 1120);
    EXPECT_EQ(in.planes.size(), 4u * 1120 * 1120);
    EXPECT_EQ(in.channel(3), s.resized_heatmap);
    EXPECT_EQ(s.final_mask.width, 1120);
    std::vector<std::string> stages;
    for (const StageTiming& t : s.timings) stages.push_back(t.stage);
    EXPECT_EQ(stages, (std::vector<std::string>{"mask", "grid", "classify", "stitch", "downsample", "fuse", "refine",
                                                "postprocess", "eval"}));
}

TEST(Pipeline, RepeatAndWorkerCountGiveIdenticalTrees) {
    const auto jobs = phantom_jobs({5, 6});
    const Scratch dir("pipe_det");
    std::map<std::string, std::string> first;
    for (int workers : {1, 3, 1}) {
        PipelineConfig c;
        c.workers = workers;
        c.output_dir = dir.path / ("w" + std::to_string(workers));
        fs::remove_all(c.output_dir);
        ASSERT_TRUE(run_pipeline(c, jobs).all_ok());
        const auto tree = snapshot_tree(c.output_dir);
        if (first.empty()) first = tree;
        EXPECT_EQ(first_difference(first, tree), "") << "workers " << workers;
    }
}

TEST(Pipeline, FailingSlideIsRecorded) {
    const Scratch dir("pipe_fail");
    Phantom p = generate_phantom(mid_spec(2));
    write_phantom(dir.path / "good", p);
    PipelineConfig c;
    c.slides = {{dir.path / "missing", std::nullopt, {}}, {dir.path / "good", std::nullopt, {}}};
    c.output_dir = dir.path / "out";
    const PipelineResult r = run_pipeline(c);
    ASSERT_EQ(r.slides.size(), 2u);
    EXPECT_FALSE(r.slides[0].ok);
    EXPECT_FALSE(r.slides[0].error.empty());
    EXPECT_TRUE(r.slides[1].ok) << r.slides[1].error;
    EXPECT_TRUE(r.slides[1].metrics.has_value());  // tumor_truth.png picked up from the slide directory
    EXPECT_FALSE(r.all_ok());
    std::ifstream in(c.output_dir / "status.json");
    const auto status = nlohmann::json::parse(in);
    EXPECT_NE(status.dump().find("missing"), std::string::npos);
}

TEST(Pipeline, ExternalClassifierStub) {
    const auto jobs = phantom_jobs({3});
    PipelineConfig c;
    c.classifier = stub_selector("const");
    c.batch_size = 16;
    const PipelineResult r = run_pipeline(c, jobs);
    ASSERT_TRUE(r.all_ok()) << r.slides[0].error;
    for (double v : r.slides[0].heatmap.values) ASSERT_TRUE(v == 0.0 || v == 0.5);
    c.classifier = stub_selector("p-range");
    const PipelineResult bad = run_pipeline(c, jobs);
    EXPECT_FALSE(bad.all_ok());
}

TEST(Experiment, IdenticalConfigsAreDegenerate) {
    const auto jobs = phantom_jobs({11, 12});
    const Scratch dir("exp_same");
    PipelineConfig c;
    const ExperimentResult r = run_experiment_matrix({{"a", c}, {"b", c}}, jobs, dir.path);
    ASSERT_EQ(r.pairings.size(), 1u);
    EXPECT_TRUE(r.pairings[0].degenerate);
    EXPECT_FALSE(r.pairings[0].result.has_value());
    EXPECT_TRUE(fs::exists(dir.path / "pairwise_wilcoxon.csv"));
    EXPECT_THROW(run_experiment_matrix({{"a", c}}, jobs, dir.path), ConfigError);
}

TEST(Experiment, IdentityBeatsHalvingRefiner) {
    const auto jobs = phantom_jobs({21, 22, 23, 24, 25});
    const Scratch dir("exp_halve");
    PipelineConfig identity, halve;
    halve.refiner = stub_selector("refine-halve");
    const ExperimentResult r = run_experiment_matrix({{"identity", identity}, {"halve", halve}}, jobs, dir.path);
    ASSERT_EQ(r.pairings.size(), 1u);
    const PairwiseTest& t = r.pairings[0];
    EXPECT_GT(r.summaries.at("identity").dsc.mean, r.summaries.at("halve").dsc.mean);
    ASSERT_TRUE(t.result.has_value());
    EXPECT_EQ(t.result->n_effective, 5);
    EXPECT_DOUBLE_EQ(t.result->p_value, 0.0625);
    for (const char* f : {"experiment_summary.csv", "boxplot.csv", "pairwise_wilcoxon.csv"})
        EXPECT_TRUE(fs::exists(dir.path / f)) << f;
}

TEST(Experiment, TenConfigsFortyFivePairings) {
    const auto jobs = phantom_jobs({41, 42});
    const Scratch dir("exp_ten");
    std::vector<std::pair<std::string, PipelineConfig>> configs;
    for (int i = 0; i < 10; ++i) {
        PipelineConfig c;
        c.postprocess.threshold = 0.3 + 0.04 * i;
        c.write_refinement_input = false;
        configs.push_back({"t" + std::to_string(i), c});
    }
    const ExperimentResult r = run_experiment_matrix(configs, jobs, dir.path);
    EXPECT_EQ(r.pairings.size(), 45u);
    std::ifstream in(dir.path / "pairwise_wilcoxon.csv");
    std::string line;
    int rows = -1;
    while (std::getline(in, line)) rows += !line.empty();
    EXPECT_EQ(rows, 45);
}

TEST(Experiment, MismatchedSlidesRejected) {
    const Scratch dir("exp_mismatch");
    for (std::uint64_t seed : {51, 52}) {
        Phantom p = generate_phantom(mid_spec(seed));
        write_phantom(dir.path / ("s" + std::to_string(seed)), p);
    }
    PipelineConfig a, b;
    a.slides = {{dir.path / "s51", std::nullopt, {}}};
    b.slides = {{dir.path / "s52", std::nullopt, {}}};
    EXPECT_THROW(run_experiment_matrix({{"a", a}, {"b", b}}, dir.path / "out"), ConsistencyError);
}

TEST(Cli, PhantomPipelineAndFailureExitCode) {
    const Scratch dir("cli");
    const std::string d = dir.path.string();
    ASSERT_EQ(run_cli("phantom --out " + d + "/ph --count 1 --seed 7 --width 2048 --height 2048 --radius-min 225 --radius-max 325"), 0);
    ASSERT_EQ(run_cli("pipeline " + d + "/ph/phantom-7 --out " + d + "/run --workers 2"), 0);
    EXPECT_TRUE(fs::exists(dir.path / "run" / "phantom-7" / "postprocess" / "mask.png"));
    EXPECT_EQ(run_cli("pipeline " + d + "/ph/phantom-7 " + d + "/nope --out " + d + "/run2"), 1);
    EXPECT_EQ(run_cli("eval --pred " + d + "/run/phantom-7/postprocess/mask.png --truth " + d +
                      "/run/phantom-7/postprocess/mask.png --out " + d + "/ev"),
              0);
    EXPECT_EQ(run_cli("grid " + d + "/ph/phantom-7 --out " + d + "/g"), 0);
    EXPECT_EQ(run_cli("classify " + d + "/ph/phantom-7 --out " + d + "/c"), 0);
    EXPECT_EQ(run_cli("stitch --grid " + d + "/c/phantom-7/grid --probs " + d + "/c/phantom-7/classify/probabilities.csv --out " +
                      d + "/st"),
              0);
    EXPECT_TRUE(fs::exists(dir.path / "st" / "heatmap.png"));
    EXPECT_NE(run_cli("frobnicate"), 0);
}
