#include "wsiseg/augment.hpp"
#include "wsiseg/bridge.hpp"
#include "wsiseg/cluster.hpp"
#include "wsiseg/errors.hpp"
#include "wsiseg/heatmap.hpp"
#include "wsiseg/metrics.hpp"
#include "wsiseg/phantom.hpp"
#include "wsiseg/pipeline.hpp"
#include "wsiseg/postprocess.hpp"
#include "wsiseg/rng.hpp"
#include "wsiseg/slide.hpp"
#include "wsiseg/tissue_grid.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <tbb/task_arena.h>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

using namespace wsiseg;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common {
    std::uint64_t seed = 0;
    int workers = 1;
    std::string config;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--seed", c.seed, "Global seed");
    cmd->add_option("--workers", c.workers, "Worker threads")->check(CLI::PositiveNumber);
    cmd->add_option("--config", c.config, "Pipeline config JSON")->check(CLI::ExistingFile);
}

PipelineConfig base_config(const Common& c) {
    PipelineConfig cfg = c.config.empty() ? PipelineConfig{} : load_pipeline_config(c.config);
    return cfg;
}

void write_json(const fs::path& p, const json& j) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream(p) << j.dump(2) << '\n';
}

SlideJob open_slide(const std::string& path, const std::string& truth, int tile_size) {
    SlideInput in;
    in.path = path;
    if (!truth.empty()) in.truth = truth;
    return load_slide_job(in, tile_size);
}

std::vector<PatchProbability> read_probabilities(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path.string());
    std::string line;
    std::getline(in, line);
    if (line != "grid_x,grid_y,p_tumor") throw InputError(path.string() + " is not a probability table");
    std::vector<PatchProbability> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        PatchProbability p;
        char c1 = 0, c2 = 0;
        std::istringstream ss(line);
        if (!(ss >> p.grid_x >> c1 >> p.grid_y >> c2 >> p.p_tumor) || c1 != ',' || c2 != ',') {
            throw InputError("malformed row in " + path.string() + ": " + line);
        }
        out.push_back(p);
    }
    return out;
}

std::vector<fs::path> mask_files(const fs::path& p) {
    std::vector<fs::path> out;
    if (fs::is_directory(p)) {
        for (const auto& e : fs::directory_iterator(p)) {
            if (e.path().extension() == ".png") out.push_back(e.path());
        }
        std::sort(out.begin(), out.end());
    } else {
        out.push_back(p);
    }
    return out;
}

void print_summary(const CohortSummary& s) {
    std::printf("slides %zu  DSC mean %.4f median %.4f [q1 %.4f q3 %.4f]  IoU mean %.4f  F1 mean %.4f\n", s.slides,
                s.dsc.mean, s.dsc.median, s.dsc.q1, s.dsc.q3, s.iou.mean, s.f1.mean);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Gigapixel slide segmentation toolkit"};
    app.require_subcommand(1);

    // import
    auto* imp = app.add_subcommand("import", "Import a PNG/TIFF raster as a tiled slide directory");
    std::string imp_in, imp_out, imp_id;
    int imp_tile = 512;
    imp->add_option("input", imp_in, "Raster file")->required()->check(CLI::ExistingFile);
    imp->add_option("--out", imp_out, "Slide directory to create")->required();
    imp->add_option("--tile-size", imp_tile, "Tile size (power of two)");
    imp->add_option("--slide-id", imp_id, "Slide id (default: file stem)");

    // phantom
    auto* ph = app.add_subcommand("phantom", "Generate synthetic slides with known truth");
    Common ph_c;
    add_common(ph, ph_c);
    PhantomSpec ph_spec;
    std::string ph_out;
    int ph_count = 1;
    ph->add_option("--out", ph_out, "Output directory; one slide directory per phantom")->required();
    ph->add_option("--count", ph_count, "Number of phantoms (seeds seed, seed+1, ...)");
    ph->add_option("--width", ph_spec.width);
    ph->add_option("--height", ph_spec.height);
    ph->add_option("--tile-size", ph_spec.tile_size);
    ph->add_option("--blobs", ph_spec.n_tumor_blobs, "Number of tumor blobs");
    ph->add_option("--radius-min", ph_spec.blob_radius_min);
    ph->add_option("--radius-max", ph_spec.blob_radius_max);
    ph->add_option("--coverage", ph_spec.tissue_coverage, "Tissue disc area / slide area");
    ph->add_option("--prefix", ph_spec.slide_id, "Slide id prefix");

    // mask
    auto* mk = app.add_subcommand("mask", "Compute the tissue mask of a slide");
    Common mk_c;
    add_common(mk, mk_c);
    std::string mk_slide, mk_out;
    int mk_level = -1;
    mk->add_option("slide", mk_slide, "Slide directory or raster")->required();
    mk->add_option("--out", mk_out, "Output root")->required();
    mk->add_option("--level", mk_level, "Mask level (default: nearest 1/32)");

    // grid
    auto* gr = app.add_subcommand("grid", "Build the labelled patch grid");
    Common gr_c;
    add_common(gr, gr_c);
    std::string gr_slide, gr_out, gr_truth;
    gr->add_option("slide", gr_slide)->required();
    gr->add_option("--out", gr_out, "Output root")->required();
    gr->add_option("--truth", gr_truth, "Level-0 tumor mask PNG");

    // augment
    auto* au = app.add_subcommand("augment", "Write augmented variants of an image");
    Common au_c;
    add_common(au, au_c);
    std::string au_in, au_out;
    int au_count = 1;
    bool au_overlay = false;
    int au_spacing = 16;
    bool au_lens_only = false;
    int au_lenses = -1;
    std::vector<double> au_radius, au_strength;
    au->add_option("input", au_in, "Image file")->required()->check(CLI::ExistingFile);
    au->add_option("--out", au_out, "Output PNG; with --count > 1 a numeric suffix is added")->required();
    au->add_option("--count", au_count, "Number of variants")->check(CLI::PositiveNumber);
    au->add_option("--lenses", au_lenses, "Number of lenses")->check(CLI::NonNegativeNumber);
    au->add_option("--radius-range", au_radius, "min max lens radius in pixels")->expected(2);
    au->add_option("--strength-range", au_strength, "min max strength magnitude")->expected(2);
    au->add_flag("--grid-overlay", au_overlay, "Draw a line grid before warping");
    au->add_option("--grid-spacing", au_spacing, "Grid line spacing for --grid-overlay")->check(CLI::PositiveNumber);
    au->add_flag("--lens-only", au_lens_only, "Apply only the multi-lens distortion");

    // classify
    auto* cl = app.add_subcommand("classify", "Classify every tissue patch of a slide");
    Common cl_c;
    add_common(cl, cl_c);
    std::string cl_slide, cl_out, cl_backend, cl_truth;
    int cl_batch = 0;
    cl->add_option("slide", cl_slide)->required();
    cl->add_option("--out", cl_out, "Output root")->required();
    cl->add_option("--backend", cl_backend, "heuristic | exec:<cmd>");
    cl->add_option("--batch-size", cl_batch);
    cl->add_option("--truth", cl_truth, "Level-0 tumor mask PNG (labels only)");

    // stitch
    auto* st = app.add_subcommand("stitch", "Stitch patch probabilities into a heatmap");
    std::string st_grid, st_probs, st_out;
    st->add_option("--grid", st_grid, "Directory holding patches.csv and grid.json")->required();
    st->add_option("--probs", st_probs, "probabilities.csv")->required();
    st->add_option("--out", st_out, "Output directory")->required();

    // refine
    auto* rf = app.add_subcommand("refine", "Run a refiner on a fused refinement input");
    std::string rf_in, rf_header, rf_out, rf_refiner = "identity";
    int rf_timeout = 30000;
    rf->add_option("--input", rf_in, "refinement_input.f32")->required();
    rf->add_option("--header", rf_header, "refinement_input.json")->required();
    rf->add_option("--refiner", rf_refiner, "identity | exec:<cmd>");
    rf->add_option("--timeout-ms", rf_timeout);
    rf->add_option("--out", rf_out, "Output directory")->required();

    // postprocess
    auto* pp = app.add_subcommand("postprocess", "Threshold and clean a probability raster");
    Common pp_c;
    add_common(pp, pp_c);
    std::string pp_in, pp_out;
    PostprocessConfig pp_cfg;
    pp->add_option("--input", pp_in, "16-bit probability PNG")->required()->check(CLI::ExistingFile);
    pp->add_option("--out", pp_out, "Output mask PNG")->required();
    pp->add_option("--threshold", pp_cfg.threshold);
    pp->add_option("--min-fragment-area", pp_cfg.min_fragment_area);
    pp->add_option("--opening-kernel", pp_cfg.opening_kernel);
    pp->add_option("--median-kernel", pp_cfg.median_kernel);

    // eval
    auto* ev = app.add_subcommand("eval", "Compare predicted masks with truth masks");
    std::string ev_pred, ev_truth, ev_out;
    ev->add_option("--pred", ev_pred, "Mask PNG or directory of PNGs")->required();
    ev->add_option("--truth", ev_truth, "Mask PNG or directory with the same file names")->required();
    ev->add_option("--out", ev_out, "Output directory")->required();

    // pipeline
    auto* pl = app.add_subcommand("pipeline", "Run every stage on a cohort of slides");
    Common pl_c;
    add_common(pl, pl_c);
    std::vector<std::string> pl_slides;
    std::string pl_out, pl_backend, pl_refiner, pl_resize;
    bool pl_no_f32 = false;
    pl->add_option("slides", pl_slides, "Slide directories or rasters (appended to the config's list)");
    pl->add_option("--out", pl_out, "Output root");
    pl->add_option("--backend", pl_backend, "heuristic | exec:<cmd>");
    pl->add_option("--refiner", pl_refiner, "identity | exec:<cmd>");
    pl->add_option("--heatmap-resize", pl_resize, "registered | align_corners");
    pl->add_flag("--no-refinement-input", pl_no_f32, "Skip writing the raw 4-channel float file");

    // experiment
    auto* ex = app.add_subcommand("experiment", "Compare named pipeline configurations on the same slides");
    Common ex_c;
    add_common(ex, ex_c);
    std::string ex_matrix, ex_out;
    ex->add_option("matrix", ex_matrix, "JSON: {\"base\": {...}, \"configs\": {\"name\": {...overrides}}}")
        ->required()
        ->check(CLI::ExistingFile);
    ex->add_option("--out", ex_out, "Output root")->required();

    // cluster
    auto* cu = app.add_subcommand("cluster", "Cluster patch features and draw a balanced sample");
    Common cu_c;
    add_common(cu, cu_c);
    std::string cu_slide, cu_out, cu_backend = "heuristic";
    EvolutionConfig cu_evo;
    int cu_per_cluster = 10;
    cu->add_option("slide", cu_slide)->required();
    cu->add_option("--out", cu_out, "Output root")->required();
    cu->add_option("--backend", cu_backend, "Feature extractor: heuristic | exec:<cmd>");
    cu->add_option("--k-min", cu_evo.k_min);
    cu->add_option("--k-max", cu_evo.k_max);
    cu->add_option("--population", cu_evo.population);
    cu->add_option("--generations", cu_evo.generations);
    cu->add_option("--mutation-rate", cu_evo.mutation_rate);
    cu->add_option("--per-cluster", cu_per_cluster);

    // bench
    auto* bn = app.add_subcommand("bench", "Time every pipeline stage on generated phantoms");
    Common bn_c;
    add_common(bn, bn_c);
    int bn_count = 3;
    int bn_size = 4096;
    bn->add_option("--count", bn_count);
    bn->add_option("--size", bn_size, "Phantom side length; blob radii scale with it");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*imp) {
            const TiledSlide s = import_raster(imp_in, imp_tile, imp_id);
            s.save(imp_out);
            std::printf("%s: %d levels, level 0 %dx%d\n", s.slide_id().c_str(), s.level_count(), s.level(0).width,
                        s.level(0).height);
        } else if (*ph) {
            const std::string prefix = ph_spec.slide_id;
            for (int i = 0; i < ph_count; ++i) {
                PhantomSpec spec = ph_spec;
                spec.seed = ph_c.seed + static_cast<std::uint64_t>(i);
                spec.slide_id = prefix + "-" + std::to_string(spec.seed);
                const Phantom p = generate_phantom(spec);
                write_phantom(fs::path(ph_out) / spec.slide_id, p);
                std::printf("%s: tissue %zu px, tumor %zu px\n", spec.slide_id.c_str(), p.tissue_truth.count(),
                            p.tumor_truth.count());
            }
        } else if (*mk) {
            const PipelineConfig cfg = base_config(mk_c);
            const SlideJob job = open_slide(mk_slide, "", cfg.import_tile_size);
            const int level = mk_level >= 0 ? mk_level : (cfg.mask_level ? *cfg.mask_level : default_mask_level(job.slide));
            const TissueMask m = compute_tissue_mask(job.slide, level, cfg.tissue);
            const fs::path dir = fs::path(mk_out) / job.slide.slide_id() / "mask";
            write_mask_png(dir / "tissue_mask.png", m.mask);
            write_json(dir / "mask.json", {{"slide_id", job.slide.slide_id()}, {"level", m.level},
                                           {"width", m.mask.width}, {"height", m.mask.height}});
            std::printf("level %d: %zu of %zu pixels are tissue\n", level, m.mask.count(), m.mask.bits.size());
        } else if (*gr) {
            const PipelineConfig cfg = base_config(gr_c);
            const SlideJob job = open_slide(gr_slide, gr_truth, cfg.import_tile_size);
            const TissueMask m = compute_tissue_mask(
                job.slide, cfg.mask_level ? *cfg.mask_level : default_mask_level(job.slide), cfg.tissue);
            std::optional<LevelMask> truth;
            if (job.truth) truth = LevelMask{0, *job.truth};
            const PatchGrid g = build_patch_grid(job.slide, cfg.grid_level, cfg.patch_size, m, truth ? &*truth : nullptr);
            const fs::path dir = fs::path(gr_out) / job.slide.slide_id() / "grid";
            write_patch_grid(dir / "patches.csv", dir / "grid.json", g);
            std::printf("%dx%d grid, %zu tissue-eligible patches\n", g.cols, g.rows, g.eligible_indices().size());
        } else if (*au) {
            AugmentConfig acfg = base_config(au_c).augment;
            if (au_lenses >= 0) acfg.num_lenses = au_lenses;
            if (!au_radius.empty()) acfg.radius_range = ValueRange{au_radius[0], au_radius[1]};
            if (!au_strength.empty()) acfg.strength_range = ValueRange{au_strength[0], au_strength[1]};
            if (au->count("--seed")) acfg.seed = au_c.seed;
            RgbImage img = read_rgb(au_in);
            if (au_overlay) draw_grid_overlay(img, au_spacing);
            const fs::path out(au_out);
            if (out.has_parent_path()) fs::create_directories(out.parent_path());
            for (int i = 0; i < au_count; ++i) {
                Rng rng(au_count == 1 ? acfg.seed : combine_seed(acfg.seed, static_cast<std::uint64_t>(i)));
                RgbImage res;
                if (au_lens_only) {
                    const auto lenses = sample_lenses(acfg, img.height, img.width, rng);
                    res = apply_multi_lens_distortion(img, lenses);
                } else {
                    res = augment_patch(img, acfg, rng);
                }
                fs::path dst = out;
                if (au_count > 1) {
                    char suffix[16];
                    std::snprintf(suffix, sizeof suffix, "_%03d", i);
                    dst = out.parent_path() / (out.stem().string() + suffix + out.extension().string());
                }
                write_rgb_png(dst, res);
            }
        } else if (*cl) {
            PipelineConfig cfg = base_config(cl_c);
            if (!cl_backend.empty()) cfg.classifier = cl_backend;
            if (cl_batch > 0) cfg.batch_size = cl_batch;
            const SlideJob job = open_slide(cl_slide, cl_truth, cfg.import_tile_size);
            const TissueMask m = compute_tissue_mask(
                job.slide, cfg.mask_level ? *cfg.mask_level : default_mask_level(job.slide), cfg.tissue);
            std::optional<LevelMask> truth;
            if (job.truth) truth = LevelMask{0, *job.truth};
            const PatchGrid g = build_patch_grid(job.slide, cfg.grid_level, cfg.patch_size, m, truth ? &*truth : nullptr);
            BackendDescriptor d = parse_backend_selector(cfg.classifier);
            d.batch_size = cfg.batch_size;
            d.timeout = std::chrono::milliseconds(cfg.backend_timeout_ms);
            auto backend = make_backend(d);
            tbb::task_arena arena(cl_c.workers);
            std::vector<PatchProbability> probs;
            arena.execute([&] { probs = classify_grid(job.slide, g, *backend, cfg.batch_size); });
            const fs::path root = fs::path(cl_out) / job.slide.slide_id();
            write_patch_grid(root / "grid" / "patches.csv", root / "grid" / "grid.json", g);
            std::ofstream out((fs::create_directories(root / "classify"), root / "classify" / "probabilities.csv"));
            out << "grid_x,grid_y,p_tumor\n";
            for (const PatchProbability& p : probs) {
                char buf[32];
                std::snprintf(buf, sizeof buf, "%.17g", p.p_tumor);
                out << p.grid_x << ',' << p.grid_y << ',' << buf << '\n';
            }
            std::printf("classified %zu patches\n", probs.size());
        } else if (*st) {
            const PatchGrid g = read_patch_grid(fs::path(st_grid) / "patches.csv", fs::path(st_grid) / "grid.json");
            const Heatmap hm = stitch_heatmap(g, read_probabilities(st_probs));
            write_heatmap(fs::path(st_out) / "heatmap.png", fs::path(st_out) / "heatmap.json", hm);
            std::printf("%dx%d heatmap\n", hm.cols, hm.rows);
        } else if (*rf) {
            const RefinementInput in = read_refinement_input(rf_in, rf_header);
            auto refiner = make_refiner(rf_refiner, std::chrono::milliseconds(rf_timeout));
            const ScalarRaster out = refiner->refine(in);
            write_unit_png16(fs::path(rf_out) / "probability.png", out);
            write_scalar_raster(fs::path(rf_out) / "probability.f32", fs::path(rf_out) / "probability.json", out);
        } else if (*pp) {
            PostprocessConfig c = pp_c.config.empty() ? pp_cfg : base_config(pp_c).postprocess;
            if (!pp_c.config.empty()) {
                if (pp->count("--threshold")) c.threshold = pp_cfg.threshold;
                if (pp->count("--min-fragment-area")) c.min_fragment_area = pp_cfg.min_fragment_area;
                if (pp->count("--opening-kernel")) c.opening_kernel = pp_cfg.opening_kernel;
                if (pp->count("--median-kernel")) c.median_kernel = pp_cfg.median_kernel;
            }
            const BinaryMask m = postprocess(read_unit_png16(pp_in), c);
            write_mask_png(pp_out, m);
            std::printf("%zu foreground pixels\n", m.count());
        } else if (*ev) {
            std::vector<MetricsReport> reports;
            for (const fs::path& p : mask_files(ev_pred)) {
                const fs::path t = fs::is_directory(ev_truth) ? fs::path(ev_truth) / p.filename() : fs::path(ev_truth);
                reports.push_back(evaluate_masks(read_mask_png(p), read_mask_png(t), p.stem().string()));
                write_report_json(fs::path(ev_out) / (p.stem().string() + ".json"), reports.back());
            }
            if (reports.empty()) throw InputError("no prediction masks found in " + ev_pred);
            write_reports_csv(fs::path(ev_out) / "metrics.csv", reports);
            const CohortSummary s = aggregate(reports);
            write_summary_csv(fs::path(ev_out) / "summary.csv", s);
            print_summary(s);
        } else if (*pl) {
            PipelineConfig cfg = base_config(pl_c);
            for (const std::string& s : pl_slides) cfg.slides.push_back({s, std::nullopt, {}});
            if (!pl_out.empty()) cfg.output_dir = pl_out;
            if (!pl_backend.empty()) cfg.classifier = pl_backend;
            if (!pl_refiner.empty()) cfg.refiner = pl_refiner;
            if (!pl_resize.empty()) cfg.heatmap_resize = parse_heatmap_resize(pl_resize);
            if (pl_no_f32) cfg.write_refinement_input = false;
            if (pl->count("--seed")) cfg.seed = pl_c.seed;
            cfg.workers = pl_c.workers;
            if (cfg.output_dir.empty()) throw ConfigError("pipeline needs --out or output_dir in the config");
            const PipelineResult r = run_pipeline(cfg);
            for (const SlideResult& s : r.slides) {
                if (!s.ok) {
                    std::fprintf(stderr, "%s: FAILED: %s\n", s.slide_id.c_str(), s.error.c_str());
                } else if (s.metrics) {
                    std::printf("%s: DSC %.4f  IoU %.4f  %.2f s\n", s.slide_id.c_str(), s.metrics->dsc, s.metrics->iou,
                                s.total_seconds);
                } else {
                    std::printf("%s: done in %.2f s\n", s.slide_id.c_str(), s.total_seconds);
                }
            }
            if (r.summary) print_summary(*r.summary);
            return r.all_ok() ? 0 : 1;
        } else if (*ex) {
            std::ifstream in(ex_matrix);
            const json m = json::parse(in);
            json base = m.value("base", json::object());
            std::vector<std::pair<std::string, PipelineConfig>> configs;
            for (const auto& [name, overrides] : m.at("configs").items()) {
                json merged = base;
                merged.merge_patch(overrides);
                PipelineConfig c = pipeline_config_from_json(merged);
                c.workers = ex_c.workers;
                if (ex->count("--seed")) c.seed = ex_c.seed;
                configs.emplace_back(name, std::move(c));
            }
            const ExperimentResult r = run_experiment_matrix(configs, ex_out);
            for (const std::string& n : r.names) {
                std::printf("%-20s DSC mean %.4f median %.4f\n", n.c_str(), r.summaries.at(n).dsc.mean,
                            r.summaries.at(n).dsc.median);
            }
            for (const PairwiseTest& t : r.pairings) {
                if (t.result) {
                    std::printf("%s vs %s: W %.1f  p %.4g (%s)\n", t.a.c_str(), t.b.c_str(), t.result->w_statistic,
                                t.result->p_value, std::string(to_string(t.result->method)).c_str());
                } else {
                    std::printf("%s vs %s: all differences zero (degenerate)\n", t.a.c_str(), t.b.c_str());
                }
            }
        } else if (*cu) {
            const PipelineConfig cfg = base_config(cu_c);
            const SlideJob job = open_slide(cu_slide, "", cfg.import_tile_size);
            const TissueMask m = compute_tissue_mask(
                job.slide, cfg.mask_level ? *cfg.mask_level : default_mask_level(job.slide), cfg.tissue);
            const PatchGrid g = build_patch_grid(job.slide, cfg.grid_level, cfg.patch_size, m);
            BackendDescriptor d = parse_backend_selector(cu_backend);
            auto backend = make_backend(d);
            std::vector<PatchInput> inputs;
            for (std::size_t i : g.eligible_indices()) {
                const PatchRecord& r = g.records[i];
                inputs.push_back({{r.grid_x, r.grid_y}, extract_patch(job.slide, r, kPatchSize)});
            }
            const auto features = backend->extract_features(inputs);
            cu_evo.seed = cu_c.seed;
            ClusterModel model;
            tbb::task_arena arena(cu_c.workers);
            arena.execute([&] { model = evolve_cluster_count(features, cu_evo); });
            const fs::path dir = fs::path(cu_out) / job.slide.slide_id() / "cluster";
            write_cluster_model(dir / "model.json", model);
            const auto sample = balanced_sample(g, model, cu_per_cluster, cu_c.seed);
            std::ofstream out(dir / "balanced_sample.csv");
            out << "grid_x,grid_y,origin_x,origin_y\n";
            for (const PatchRecord& r : sample) out << r.grid_x << ',' << r.grid_y << ',' << r.origin_x << ',' << r.origin_y << '\n';
            std::printf("k = %d (objective %.4g%s), %zu sampled patches\n", model.k, model.objective.value,
                        model.objective.capped ? ", capped" : "", sample.size());
        } else if (*bn) {
            PipelineConfig cfg = base_config(bn_c);
            cfg.output_dir.clear();
            cfg.workers = bn_c.workers;
            std::vector<SlideJob> jobs;
            double gen = 0.0;
            for (int i = 0; i < bn_count; ++i) {
                PhantomSpec spec;
                spec.width = spec.height = bn_size;
                spec.blob_radius_min *= bn_size / 4096.0;
                spec.blob_radius_max *= bn_size / 4096.0;
                spec.seed = bn_c.seed + static_cast<std::uint64_t>(i);
                spec.slide_id = "bench-" + std::to_string(spec.seed);
                const auto t0 = std::chrono::steady_clock::now();
                Phantom p = generate_phantom(spec);
                gen += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
                jobs.push_back({p.slide, std::move(p.tumor_truth)});
            }
            const auto t0 = std::chrono::steady_clock::now();
            const PipelineResult r = run_pipeline(cfg, jobs);
            const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            json j = {{"phantoms", bn_count}, {"size", bn_size}, {"workers", bn_c.workers},
                      {"generation_seconds_per_phantom", gen / bn_count}, {"pipeline_wall_seconds", wall}};
            std::map<std::string, double> stage;
            for (const SlideResult& s : r.slides) {
                for (const StageTiming& t : s.timings) stage[t.stage] += t.seconds / bn_count;
            }
            j["mean_stage_seconds"] = stage;
            std::cout << j.dump(2) << '\n';
            return r.all_ok() ? 0 : 1;
        }
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
