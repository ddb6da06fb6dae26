#include "wsiseg/pipeline.hpp"

#include "wsiseg/errors.hpp"
#include "wsiseg/postprocess.hpp"

#include <tbb/parallel_for.h>
#include <tbb/global_control.h>
#include <tbb/task_arena.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>

namespace wsiseg {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(HeatmapResize mode) {
    return mode == HeatmapResize::AlignCorners ? "align_corners" : "registered";
}

HeatmapResize parse_heatmap_resize(std::string_view text) {
    if (text == "align_corners") return HeatmapResize::AlignCorners;
    if (text == "registered") return HeatmapResize::Registered;
    throw ConfigError("heatmap_resize must be align_corners or registered, got '" + std::string(text) + "'");
}

void validate(const PipelineConfig& c) {
    if (c.workers < 1) throw ConfigError("workers must be at least 1");
    if (c.batch_size < 1) throw ConfigError("batch_size must be at least 1");
    if (c.backend_timeout_ms < 1) throw ConfigError("backend_timeout_ms must be positive");
    if (c.patch_size < 1) throw ConfigError("patch_size must be positive");
    if (c.grid_level < 0) throw ConfigError("grid_level must be >= 0");
    if (c.refinement_size < 1) throw ConfigError("refinement_size must be positive");
    if (c.mask_level && *c.mask_level < 0) throw ConfigError("mask_level must be >= 0");
    validate(c.postprocess);
}

// ---------------------------------------------------------------------------
// JSON

namespace {

json range_json(const ValueRange& r) { return json::array({r.min, r.max}); }

ValueRange range_from(const json& j, const char* key) {
    if (!j.is_array() || j.size() != 2) throw ConfigError(std::string(key) + " must be a [min, max] pair");
    return {j[0].get<double>(), j[1].get<double>()};
}

void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
            throw ConfigError("unknown key '" + key + "' in " + where);
        }
    }
}

template <class T>
void read_if(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

json augment_json(const AugmentConfig& a) {
    json j = {{"num_lenses", a.num_lenses},
              {"strength_range", range_json(a.strength_range)},
              {"random_sign", a.random_sign},
              {"flip", a.flip},
              {"rot90", a.rot90},
              {"contrast", a.contrast},
              {"hue", a.hue},
              {"brightness", a.brightness},
              {"lens", a.lens},
              {"crop", a.crop},
              {"apply_probability", a.apply_probability},
              {"contrast_range", range_json(a.contrast_range)},
              {"hue_range", range_json(a.hue_range)},
              {"brightness_range", range_json(a.brightness_range)},
              {"crop_size", a.crop_size},
              {"seed", a.seed}};
    j["radius_range"] = a.radius_range ? range_json(*a.radius_range) : json(nullptr);
    return j;
}

AugmentConfig augment_from(const json& j) {
    reject_unknown(j,
                   {"num_lenses", "radius_range", "strength_range", "random_sign", "flip", "rot90", "contrast", "hue",
                    "brightness", "lens", "crop", "apply_probability", "contrast_range", "hue_range",
                    "brightness_range", "crop_size", "seed"},
                   "augment");
    AugmentConfig a;
    read_if(j, "num_lenses", a.num_lenses);
    if (j.contains("radius_range") && !j["radius_range"].is_null()) a.radius_range = range_from(j["radius_range"], "radius_range");
    if (j.contains("strength_range")) a.strength_range = range_from(j["strength_range"], "strength_range");
    read_if(j, "random_sign", a.random_sign);
    read_if(j, "flip", a.flip);
    read_if(j, "rot90", a.rot90);
    read_if(j, "contrast", a.contrast);
    read_if(j, "hue", a.hue);
    read_if(j, "brightness", a.brightness);
    read_if(j, "lens", a.lens);
    read_if(j, "crop", a.crop);
    read_if(j, "apply_probability", a.apply_probability);
    if (j.contains("contrast_range")) a.contrast_range = range_from(j["contrast_range"], "contrast_range");
    if (j.contains("hue_range")) a.hue_range = range_from(j["hue_range"], "hue_range");
    if (j.contains("brightness_range")) a.brightness_range = range_from(j["brightness_range"], "brightness_range");
    read_if(j, "crop_size", a.crop_size);
    read_if(j, "seed", a.seed);
    return a;
}

}  // namespace

json to_json(const PipelineConfig& c) {
    json slides = json::array();
    for (const SlideInput& s : c.slides) {
        json e = {{"path", s.path.string()}};
        e["truth"] = s.truth ? json(s.truth->string()) : json(nullptr);
        if (!s.slide_id.empty()) e["slide_id"] = s.slide_id;
        slides.push_back(e);
    }
    json j = {{"slides", slides},
              {"classifier", c.classifier},
              {"refiner", c.refiner},
              {"batch_size", c.batch_size},
              {"backend_timeout_ms", c.backend_timeout_ms},
              {"patch_size", c.patch_size},
              {"grid_level", c.grid_level},
              {"refinement_size", c.refinement_size},
              {"import_tile_size", c.import_tile_size},
              {"tissue",
               {{"gradient_threshold", c.tissue.gradient_threshold},
                {"brightness_ceiling", c.tissue.brightness_ceiling}}},
              {"heatmap_resize", std::string(to_string(c.heatmap_resize))},
              {"augment", augment_json(c.augment)},
              {"postprocess",
               {{"threshold", c.postprocess.threshold},
                {"min_fragment_area", c.postprocess.min_fragment_area},
                {"opening_kernel", c.postprocess.opening_kernel},
                {"median_kernel", c.postprocess.median_kernel}}},
              {"output_dir", c.output_dir.string()},
              {"write_refinement_input", c.write_refinement_input},
              {"write_upscaled_mask", c.write_upscaled_mask},
              {"seed", c.seed}};
    j["mask_level"] = c.mask_level ? json(*c.mask_level) : json(nullptr);
    return j;
}

PipelineConfig pipeline_config_from_json(const json& j) {
    try {
        reject_unknown(j,
                       {"slides", "classifier", "refiner", "batch_size", "backend_timeout_ms", "patch_size",
                        "grid_level", "refinement_size", "import_tile_size", "mask_level", "tissue", "heatmap_resize",
                        "augment", "postprocess", "output_dir", "write_refinement_input", "write_upscaled_mask",
                        "seed", "workers"},
                       "pipeline config");
        PipelineConfig c;
        if (j.contains("slides")) {
            for (const json& s : j["slides"]) {
                SlideInput in;
                if (s.is_string()) {
                    in.path = s.get<std::string>();
                } else {
                    reject_unknown(s, {"path", "truth", "slide_id"}, "slide entry");
                    in.path = s.at("path").get<std::string>();
                    if (s.contains("truth") && !s["truth"].is_null()) in.truth = s["truth"].get<std::string>();
                    read_if(s, "slide_id", in.slide_id);
                }
                c.slides.push_back(std::move(in));
            }
        }
        read_if(j, "classifier", c.classifier);
        read_if(j, "refiner", c.refiner);
        read_if(j, "batch_size", c.batch_size);
        read_if(j, "backend_timeout_ms", c.backend_timeout_ms);
        read_if(j, "patch_size", c.patch_size);
        read_if(j, "grid_level", c.grid_level);
        read_if(j, "refinement_size", c.refinement_size);
        read_if(j, "import_tile_size", c.import_tile_size);
        if (j.contains("mask_level") && !j["mask_level"].is_null()) c.mask_level = j["mask_level"].get<int>();
        if (j.contains("tissue")) {
            reject_unknown(j["tissue"], {"gradient_threshold", "brightness_ceiling"}, "tissue");
            read_if(j["tissue"], "gradient_threshold", c.tissue.gradient_threshold);
            read_if(j["tissue"], "brightness_ceiling", c.tissue.brightness_ceiling);
        }
        if (j.contains("heatmap_resize")) c.heatmap_resize = parse_heatmap_resize(j["heatmap_resize"].get<std::string>());
        if (j.contains("augment")) c.augment = augment_from(j["augment"]);
        if (j.contains("postprocess")) {
            const json& p = j["postprocess"];
            reject_unknown(p, {"threshold", "min_fragment_area", "opening_kernel", "median_kernel"}, "postprocess");
            read_if(p, "threshold", c.postprocess.threshold);
            read_if(p, "min_fragment_area", c.postprocess.min_fragment_area);
            read_if(p, "opening_kernel", c.postprocess.opening_kernel);
            read_if(p, "median_kernel", c.postprocess.median_kernel);
        }
        if (j.contains("output_dir")) c.output_dir = j["output_dir"].get<std::string>();
        read_if(j, "write_refinement_input", c.write_refinement_input);
        read_if(j, "write_upscaled_mask", c.write_upscaled_mask);
        read_if(j, "seed", c.seed);
        read_if(j, "workers", c.workers);
        return c;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid pipeline config: ") + e.what());
    }
}

PipelineConfig load_pipeline_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return pipeline_config_from_json(j);
}

// ---------------------------------------------------------------------------

SlideJob load_slide_job(const SlideInput& input, int import_tile_size) {
    SlideJob job;
    if (fs::is_directory(input.path)) {
        job.slide = TiledSlide::open(input.path);
        if (!input.slide_id.empty() && input.slide_id != job.slide.slide_id()) {
            throw ConfigError("slide directory " + input.path.string() + " holds slide '" + job.slide.slide_id() +
                              "', not '" + input.slide_id + "'");
        }
    } else {
        job.slide = import_raster(input.path, import_tile_size, input.slide_id);
    }
    fs::path truth;
    if (input.truth) {
        truth = *input.truth;
    } else if (fs::is_directory(input.path) && fs::exists(input.path / "tumor_truth.png")) {
        truth = input.path / "tumor_truth.png";
    }
    if (!truth.empty()) {
        job.truth = read_mask_png(truth);
        const LevelDesc& l0 = job.slide.level(0);
        if (job.truth->width != l0.width || job.truth->height != l0.height) {
            throw ConsistencyError("truth mask " + truth.string() + " does not match the slide's level 0");
        }
    }
    return job;
}

std::vector<PatchProbability> classify_grid(const TiledSlide& slide, const PatchGrid& grid, PatchBackend& backend,
                                            int batch_size) {
    if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
    check_grid_matches(slide, grid);
    const std::vector<std::size_t> eligible = grid.eligible_indices();
    const std::size_t batches = (eligible.size() + static_cast<std::size_t>(batch_size) - 1) / static_cast<std::size_t>(batch_size);
    std::vector<PatchProbability> out(eligible.size());
    tbb::parallel_for(std::size_t{0}, batches, [&](std::size_t b) {
        const std::size_t begin = b * static_cast<std::size_t>(batch_size);
        const std::size_t end = std::min(eligible.size(), begin + static_cast<std::size_t>(batch_size));
        std::vector<PatchInput> inputs;
        inputs.reserve(end - begin);
        for (std::size_t i = begin; i < end; ++i) {
            const PatchRecord& r = grid.records[eligible[i]];
            inputs.push_back({{r.grid_x, r.grid_y}, extract_patch(slide, r, kPatchSize)});
        }
        const std::vector<PatchProbability> probs = backend.classify_batch(inputs);
        if (probs.size() != inputs.size()) throw ProtocolError("backend returned the wrong number of probabilities");
        std::copy(probs.begin(), probs.end(), out.begin() + static_cast<std::ptrdiff_t>(begin));
    });
    return out;
}

namespace {

class StageClock {
public:
    explicit StageClock(std::vector<StageTiming>& sink) : sink_(sink), start_(std::chrono::steady_clock::now()) {}
    void lap(const char* stage) {
        const auto now = std::chrono::steady_clock::now();
        sink_.push_back({stage, std::chrono::duration<double>(now - start_).count()});
        start_ = now;
    }

private:
    std::vector<StageTiming>& sink_;
    std::chrono::steady_clock::time_point start_;
};

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path.string());
    out << text;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_probabilities_csv(const fs::path& path, std::span<const PatchProbability> probs) {
    std::string s = "grid_x,grid_y,p_tumor\n";
    for (const PatchProbability& p : probs) {
        s += std::to_string(p.grid_x) + "," + std::to_string(p.grid_y) + "," + fmt(p.p_tumor) + "\n";
    }
    write_text(path, s);
}

}  // namespace

SlideResult run_slide(const SlideJob& job, const PipelineConfig& cfg, PatchBackend& backend, Refiner& refiner,
                      const SlideRunOptions& options) {
    const auto t0 = std::chrono::steady_clock::now();
    SlideResult res;
    const TiledSlide& slide = job.slide;
    res.slide_id = slide.slide_id();
    const bool write = !cfg.output_dir.empty();
    const fs::path root = cfg.output_dir / res.slide_id;
    StageClock clock(res.timings);

    const int mask_level = cfg.mask_level ? *cfg.mask_level : default_mask_level(slide);
    const TissueMask tissue = compute_tissue_mask(slide, mask_level, cfg.tissue);
    if (write) {
        write_mask_png(root / "mask" / "tissue_mask.png", tissue.mask);
        write_text(root / "mask" / "mask.json",
                   json{{"slide_id", res.slide_id},
                        {"level", tissue.level},
                        {"width", tissue.mask.width},
                        {"height", tissue.mask.height},
                        {"gradient_threshold", cfg.tissue.gradient_threshold},
                        {"brightness_ceiling", cfg.tissue.brightness_ceiling}}
                           .dump(2) + "\n");
    }
    clock.lap("mask");

    std::optional<LevelMask> truth;
    if (job.truth) truth = LevelMask{0, *job.truth};
    const PatchGrid grid = build_patch_grid(slide, cfg.grid_level, cfg.patch_size, tissue, truth ? &*truth : nullptr);
    if (write) write_patch_grid(root / "grid" / "patches.csv", root / "grid" / "grid.json", grid);
    clock.lap("grid");

    const std::vector<PatchProbability> probs = classify_grid(slide, grid, backend, cfg.batch_size);
    if (write) write_probabilities_csv(root / "classify" / "probabilities.csv", probs);
    clock.lap("classify");

    res.heatmap = stitch_heatmap(grid, probs);
    if (write) write_heatmap(root / "stitch" / "heatmap.png", root / "stitch" / "heatmap.json", res.heatmap);
    clock.lap("stitch");

    const int R = cfg.refinement_size;
    const RgbImage overview = downsample_to(slide, R, R);
    if (write) write_rgb_png(root / "downsample" / "rgb.png", overview);
    clock.lap("downsample");

    res.resized_heatmap = cfg.heatmap_resize == HeatmapResize::AlignCorners
                              ? resize_heatmap(res.heatmap, R)
                              : resize_heatmap_registered(res.heatmap, grid, R, R);
    RefinementInput fused = fuse_inputs(overview, res.resized_heatmap);
    if (write) {
        write_unit_png16(root / "fuse" / "heatmap_resized.png", res.resized_heatmap);
        if (cfg.write_refinement_input) {
            write_refinement_input(root / "fuse" / "refinement_input.f32", root / "fuse" / "refinement_input.json",
                                   fused);
        }
    }
    clock.lap("fuse");

    const ScalarRaster refined = refiner.refine(fused);
    if (refined.width != R || refined.height != R) throw ProtocolError("refiner changed the raster size");
    if (write) write_unit_png16(root / "refine" / "probability.png", refined);
    if (options.keep_refinement_input) res.refinement_input = std::move(fused);
    clock.lap("refine");

    res.final_mask = postprocess(refined, cfg.postprocess);
    if (write) {
        write_mask_png(root / "postprocess" / "mask.png", res.final_mask);
        if (cfg.write_upscaled_mask) {
            const LevelDesc& l0 = slide.level(0);
            write_mask_png(root / "postprocess" / "mask_level0.png", upscale_nearest(res.final_mask, l0.width, l0.height));
        }
    }
    clock.lap("postprocess");

    if (job.truth) {
        const BinaryMask truth_r = resize_mask_nearest(*job.truth, R, R);
        res.metrics = evaluate_masks(res.final_mask, truth_r, res.slide_id);
        if (write) {
            write_report_json(root / "eval" / "metrics.json", *res.metrics);
            write_rgb_png(root / "eval" / "overlay.png", overlay_confusion(res.final_mask, truth_r));
        }
        clock.lap("eval");
    }
    res.ok = true;
    res.total_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

bool PipelineResult::all_ok() const {
    return std::all_of(slides.begin(), slides.end(), [](const SlideResult& s) { return s.ok; });
}

namespace {

std::unique_ptr<PatchBackend> backend_for(const PipelineConfig& cfg) {
    BackendDescriptor d = parse_backend_selector(cfg.classifier);
    d.batch_size = cfg.batch_size;
    d.timeout = std::chrono::milliseconds(cfg.backend_timeout_ms);
    return make_backend(d);
}

void write_cohort_files(const PipelineConfig& cfg, PipelineResult& result) {
    std::vector<MetricsReport> reports;
    for (const SlideResult& s : result.slides) {
        if (s.ok && s.metrics) reports.push_back(*s.metrics);
    }
    if (!reports.empty()) result.summary = aggregate(reports);
    if (cfg.output_dir.empty()) return;

    fs::create_directories(cfg.output_dir);
    nlohmann::json effective = to_json(cfg);
    effective.erase("output_dir");
    write_text(cfg.output_dir / "effective_config.json", effective.dump(2) + "\n");
    write_reports_csv(cfg.output_dir / "metrics.csv", reports);
    if (result.summary) write_summary_csv(cfg.output_dir / "summary.csv", *result.summary);

    json status = json::array();
    json timings = json::array();
    for (const SlideResult& s : result.slides) {
        json st = {{"slide_id", s.slide_id}, {"ok", s.ok}};
        if (!s.ok) st["error"] = s.error;
        status.push_back(st);
        json stages = json::object();
        for (const StageTiming& t : s.timings) stages[t.stage] = t.seconds;
        timings.push_back({{"slide_id", s.slide_id}, {"stages", stages}, {"total_seconds", s.total_seconds}});
    }
    write_text(cfg.output_dir / "status.json", status.dump(2) + "\n");
    write_text(cfg.output_dir / "run-info" / "timings.json",
               json{{"workers", cfg.workers}, {"slides", timings}}.dump(2) + "\n");
}

PipelineResult run_jobs(const PipelineConfig& cfg, std::size_t count,
                        const std::function<SlideJob(std::size_t)>& job_at) {
    validate(cfg);
    PipelineResult result;
    result.slides.resize(count);
    std::unique_ptr<PatchBackend> backend = backend_for(cfg);
    make_refiner(cfg.refiner, std::chrono::milliseconds(cfg.backend_timeout_ms));  // fail fast on a bad selector

    tbb::global_control threads(tbb::global_control::max_allowed_parallelism,
                                static_cast<std::size_t>(std::max(cfg.workers, 1)));
    tbb::task_arena arena(cfg.workers);
    arena.execute([&] {
        tbb::parallel_for(std::size_t{0}, count, [&](std::size_t i) {
            SlideResult& out = result.slides[i];
            try {
                const SlideJob job = job_at(i);
                out.slide_id = job.slide.slide_id();
                auto refiner = make_refiner(cfg.refiner, std::chrono::milliseconds(cfg.backend_timeout_ms));
                out = run_slide(job, cfg, *backend, *refiner);
            } catch (const std::exception& e) {
                out.ok = false;
                out.error = e.what();
                if (out.slide_id.empty()) out.slide_id = "slide-" + std::to_string(i);
            }
        });
    });

    std::map<std::string, int> seen;
    for (const SlideResult& s : result.slides) ++seen[s.slide_id];
    for (SlideResult& s : result.slides) {
        if (seen[s.slide_id] > 1) {
            s.ok = false;
            s.error = "duplicate slide id '" + s.slide_id + "' in one run";
            s.metrics.reset();
        }
    }
    write_cohort_files(cfg, result);
    return result;
}

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& cfg) {
    return run_jobs(cfg, cfg.slides.size(),
                    [&](std::size_t i) { return load_slide_job(cfg.slides[i], cfg.import_tile_size); });
}

PipelineResult run_pipeline(const PipelineConfig& cfg, std::span<const SlideJob> jobs) {
    return run_jobs(cfg, jobs.size(), [&](std::size_t i) { return jobs[i]; });
}

// ---------------------------------------------------------------------------

namespace {

ExperimentResult compare_runs(const std::vector<std::pair<std::string, PipelineConfig>>& configs,
                              const std::function<PipelineResult(const std::string&, PipelineConfig)>& run,
                              const fs::path& output_dir) {
    if (configs.size() < 2) throw ConfigError("an experiment needs at least two configurations");
    ExperimentResult ex;
    std::set<std::string> names;
    for (const auto& [name, cfg] : configs) {
        if (name.empty() || !names.insert(name).second) throw ConfigError("configuration names must be unique and non-empty");
        ex.names.push_back(name);
    }

    std::map<std::string, std::map<std::string, MetricsReport>> by_slide;
    for (const auto& [name, cfg] : configs) {
        PipelineConfig c = cfg;
        c.output_dir = output_dir.empty() ? fs::path{} : output_dir / name;
        PipelineResult r = run(name, std::move(c));
        for (const SlideResult& s : r.slides) {
            if (!s.ok) throw ConsistencyError("configuration '" + name + "' failed on slide '" + s.slide_id + "': " + s.error);
            if (!s.metrics) throw ConsistencyError("slide '" + s.slide_id + "' has no truth mask");
            by_slide[name][s.slide_id] = *s.metrics;
        }
        if (!r.summary) throw ConsistencyError("configuration '" + name + "' produced no metrics");
        ex.summaries[name] = *r.summary;
        ex.runs.emplace(name, std::move(r));
    }
    const auto& ref = by_slide[ex.names.front()];
    for (const std::string& n : ex.names) {
        const auto& other = by_slide[n];
        if (other.size() != ref.size() ||
            !std::equal(other.begin(), other.end(), ref.begin(), [](const auto& a, const auto& b) { return a.first == b.first; })) {
            throw ConsistencyError("configurations '" + ex.names.front() + "' and '" + n + "' cover different slides");
        }
    }

    for (std::size_t i = 0; i < ex.names.size(); ++i) {
        for (std::size_t j = i + 1; j < ex.names.size(); ++j) {
            PairwiseTest t;
            t.a = ex.names[i];
            t.b = ex.names[j];
            std::vector<double> da, db;
            for (const auto& [id, rep] : by_slide[t.a]) {
                da.push_back(rep.dsc);
                db.push_back(by_slide[t.b].at(id).dsc);
            }
            t.mean_dsc_a = ex.summaries[t.a].dsc.mean;
            t.mean_dsc_b = ex.summaries[t.b].dsc.mean;
            try {
                t.result = wilcoxon_signed_rank(da, db);
            } catch (const DegenerateError&) {
                t.degenerate = true;
            }
            ex.pairings.push_back(std::move(t));
        }
    }

    if (!output_dir.empty()) {
        std::string summary = "config,metric,n,mean,median,q1,q3,min,max\n";
        std::string box = "config,slide_id,dsc,iou,precision,recall,f1,avg_hausdorff\n";
        for (const std::string& n : ex.names) {
            const CohortSummary& s = ex.summaries[n];
            auto row = [&](const char* metric, const SummaryStats& st) {
                summary += n + "," + metric + "," + std::to_string(st.n) + "," + fmt(st.mean) + "," + fmt(st.median) +
                           "," + fmt(st.q1) + "," + fmt(st.q3) + "," + fmt(st.min) + "," + fmt(st.max) + "\n";
            };
            row("dsc", s.dsc);
            row("iou", s.iou);
            row("precision", s.precision);
            row("recall", s.recall);
            row("f1", s.f1);
            if (s.avg_hausdorff) row("avg_hausdorff", *s.avg_hausdorff);
            for (const auto& [id, r] : by_slide[n]) {
                box += n + "," + id + "," + fmt(r.dsc) + "," + fmt(r.iou) + "," + fmt(r.precision) + "," +
                       fmt(r.recall) + "," + fmt(r.f1) + "," + (r.avg_hausdorff ? fmt(*r.avg_hausdorff) : "") + "\n";
            }
        }
        std::string pairs = "config_a,config_b,mean_dsc_a,mean_dsc_b,n_effective,w_statistic,p_value,method,degenerate\n";
        for (const PairwiseTest& t : ex.pairings) {
            pairs += t.a + "," + t.b + "," + fmt(t.mean_dsc_a) + "," + fmt(t.mean_dsc_b) + ",";
            if (t.result) {
                pairs += std::to_string(t.result->n_effective) + "," + fmt(t.result->w_statistic) + "," +
                         fmt(t.result->p_value) + "," + std::string(to_string(t.result->method)) + ",false\n";
            } else {
                pairs += "0,,,,true\n";
            }
        }
        write_text(output_dir / "experiment_summary.csv", summary);
        write_text(output_dir / "boxplot.csv", box);
        write_text(output_dir / "pairwise_wilcoxon.csv", pairs);
    }
    return ex;
}

}  // namespace

ExperimentResult run_experiment_matrix(const std::vector<std::pair<std::string, PipelineConfig>>& configs,
                                       const fs::path& output_dir) {
    return compare_runs(configs, [](const std::string&, PipelineConfig c) { return run_pipeline(c); }, output_dir);
}

ExperimentResult run_experiment_matrix(const std::vector<std::pair<std::string, PipelineConfig>>& configs,
                                       std::span<const SlideJob> jobs, const fs::path& output_dir) {
    return compare_runs(configs, [&](const std::string&, PipelineConfig c) { return run_pipeline(c, jobs); },
                        output_dir);
}

}  // namespace wsiseg
