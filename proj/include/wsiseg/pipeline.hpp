#pragma once

#include "wsiseg/augment.hpp"
#include "wsiseg/bridge.hpp"
#include "wsiseg/heatmap.hpp"
#include "wsiseg/metrics.hpp"
#include "wsiseg/postprocess.hpp"
#include "wsiseg/tissue_grid.hpp"

#include <json.hpp>

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace wsiseg {

struct SlideInput {
    std::filesystem::path path;                 // slide directory or RGB raster
    std::optional<std::filesystem::path> truth;  // level-0 tumor mask PNG
    std::string slide_id;                        // empty: from the slide
};

enum class HeatmapResize { AlignCorners, Registered };

struct PipelineConfig {
    std::vector<SlideInput> slides;
    std::string classifier = "heuristic";  // heuristic | exec:<cmd>
    std::string refiner = "identity";      // identity | exec:<cmd>
    int batch_size = 32;
    int backend_timeout_ms = 30000;
    int patch_size = 224;
    int grid_level = 0;
    int refinement_size = 1120;
    int import_tile_size = 512;
    std::optional<int> mask_level;  // default: default_mask_level()
    TissueParams tissue;
    HeatmapResize heatmap_resize = HeatmapResize::Registered;
    AugmentConfig augment;
    PostprocessConfig postprocess;
    std::filesystem::path output_dir;  // empty: write nothing
    bool write_refinement_input = true;
    bool write_upscaled_mask = false;
    std::uint64_t seed = 0;
    int workers = 1;  // runtime only; never echoed, never affects results
};

/// Throws ConfigError for out-of-range values.
void validate(const PipelineConfig& config);

/// Effective configuration without runtime-only fields.
nlohmann::json to_json(const PipelineConfig& config);
/// Missing keys keep their defaults; unknown keys raise ConfigError.
PipelineConfig pipeline_config_from_json(const nlohmann::json& j);
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

std::string_view to_string(HeatmapResize mode);
HeatmapResize parse_heatmap_resize(std::string_view text);

struct StageTiming {
    std::string stage;
    double seconds = 0.0;
};

struct SlideResult {
    std::string slide_id;
    bool ok = false;
    std::string error;
    std::optional<MetricsReport> metrics;
    std::vector<StageTiming> timings;
    double total_seconds = 0.0;

    // Kept in memory for callers; not part of the artifact tree.
    Heatmap heatmap;
    ScalarRaster resized_heatmap;
    std::optional<RefinementInput> refinement_input;
    BinaryMask final_mask;
};

struct SlideJob {
    TiledSlide slide;
    std::optional<BinaryMask> truth;  // level 0
};

/// Loads a slide directory (manifest.json) or imports a raster; picks up
/// `tumor_truth.png` next to a slide directory when no truth path is given.
SlideJob load_slide_job(const SlideInput& input, int import_tile_size);

class Refiner;

struct SlideRunOptions {
    bool keep_refinement_input = false;
};

/// Runs every stage on one slide. Artifacts go under
/// `<output_dir>/<slide_id>/<stage>/` when output_dir is set. Must be called
/// inside the task arena that sets the worker count.
SlideResult run_slide(const SlideJob& job, const PipelineConfig& config, PatchBackend& backend, Refiner& refiner,
                      const SlideRunOptions& options = {});

struct PipelineResult {
    std::vector<SlideResult> slides;
    std::optional<CohortSummary> summary;  // over slides with metrics
    bool all_ok() const;
};

/// Loads and runs every slide with `config.workers` threads. A failing slide
/// is recorded and the rest continue. Writes effective_config.json,
/// metrics.csv and summary.csv at the top of the output tree and stage
/// timings under run-info/.
PipelineResult run_pipeline(const PipelineConfig& config);

/// Same, for slides already in memory.
PipelineResult run_pipeline(const PipelineConfig& config, std::span<const SlideJob> jobs);

/// Patch probabilities for every tissue-eligible record, in grid order.
std::vector<PatchProbability> classify_grid(const TiledSlide& slide, const PatchGrid& grid, PatchBackend& backend,
                                            int batch_size);

struct PairwiseTest {
    std::string a;
    std::string b;
    std::optional<WilcoxonResult> result;  // empty when every difference is zero
    bool degenerate = false;
    double mean_dsc_a = 0.0;
    double mean_dsc_b = 0.0;
};

struct ExperimentResult {
    std::vector<std::string> names;
    std::map<std::string, PipelineResult> runs;
    std::map<std::string, CohortSummary> summaries;
    std::vector<PairwiseTest> pairings;  // i < j in name order
};

/// Runs each named configuration on its slides, then compares per-slide DSC
/// pairwise. Every configuration must cover the same slide ids, each with
/// truth; otherwise ConsistencyError. Outputs under `output_dir/<name>/` and
/// comparison tables in `output_dir`.
ExperimentResult run_experiment_matrix(const std::vector<std::pair<std::string, PipelineConfig>>& configs,
                                       const std::filesystem::path& output_dir);

/// Same, over slides already in memory shared by every configuration.
ExperimentResult run_experiment_matrix(const std::vector<std::pair<std::string, PipelineConfig>>& configs,
                                       std::span<const SlideJob> jobs, const std::filesystem::path& output_dir);

}  // namespace wsiseg
