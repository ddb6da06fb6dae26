#include "oracles.hpp"
#include "scratch.hpp"
#include "tree.hpp"

#include "wsiseg/augment.hpp"
#include "wsiseg/bridge.hpp"
#include "wsiseg/cluster.hpp"
#include "wsiseg/errors.hpp"
#include "wsiseg/heatmap.hpp"
#include "wsiseg/metrics.hpp"
#include "wsiseg/phantom.hpp"
#include "wsiseg/pipeline.hpp"
#include "wsiseg/postprocess.hpp"
#include "wsiseg/tissue_grid.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <thread>

using namespace wsiseg;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool ok = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

bool same_pixel(const RgbImage& a, int ax, int ay, const RgbImage& b, int bx, int by) {
    return std::equal(a.pixel(ax, ay), a.pixel(ax, ay) + 3, b.pixel(bx, by));
}

LensSpec random_lens(std::mt19937_64& g, int w, int h, bool zero) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    LensSpec l;
    l.radius = 0.5 + u(g) * std::min(w, h);
    l.strength = zero ? 0.0 : u(g) * 1.98 - 0.99;
    l.cx = std::floor(u(g) * w);
    l.cy = std::floor(u(g) * h);
    return l;
}

Outcome augmentation_suite() {
    const auto t0 = Clock::now();
    std::mt19937_64 g(100);
    std::uniform_int_distribution<int> dim(4, 40);
    long failures = 0;
    const int cases = 100000;
    for (int i = 0; i < cases; ++i) {
        const int w = dim(g), h = dim(g);
        const RgbImage img = oracle::random_image(g, w, h);
        const bool zero = i % 4 == 0;
        const LensSpec l = random_lens(g, w, h, zero);
        const std::vector<LensSpec> lenses{l};
        const RgbImage out = apply_multi_lens_distortion(img, lenses);
        bool ok = true;
        if (zero) ok = out == img;
        for (int y = 0; y < h && ok; ++y)
            for (int x = 0; x < w && ok; ++x) {
                const auto [sx, sy] = lens_source(l, x, y, w, h);
                if (sx < 0 || sy < 0 || sx >= w || sy >= h) ok = false;
                else if (!same_pixel(out, x, y, img, sx, sy)) ok = false;
                else if (std::hypot(x - l.cx, y - l.cy) >= l.radius && !(sx == x && sy == y && same_pixel(out, x, y, img, x, y)))
                    ok = false;
            }
        const int cx = static_cast<int>(l.cx), cy = static_cast<int>(l.cy);
        if (!same_pixel(out, cx, cy, img, cx, cy)) ok = false;
        failures += !ok;
    }
    const double secs = seconds_since(t0);
    return {failures == 0 && secs < 60.0, fmt("%d cases, %ld failures, %.1f s (limit 60 s)", cases, failures, secs)};
}

Outcome lens_golden() {
    const LensSpec lens{4.0, 4.0, 4.0, 0.5};
    RgbImage img(9, 9);
    for (int y = 0; y < 9; ++y)
        for (int x = 0; x < 9; ++x) img.pixel(x, y)[0] = static_cast<std::uint8_t>(10 * y + x);
    const std::vector<LensSpec> one{lens};
    const RgbImage out = apply_multi_lens_distortion(img, one);
    bool ok = lens_source(lens, 2, 4, 9, 9) == std::make_pair(3, 4) && out.pixel(2, 4)[0] == 43 &&
              out == oracle::lens_reference(img, one);
    std::mt19937_64 g(9);
    std::uniform_int_distribution<int> dim(1, 64), count(1, 5);
    int mismatches = 0;
    for (int i = 0; i < 50; ++i) {
        const int w = dim(g), h = dim(g);
        const RgbImage im = oracle::random_image(g, w, h);
        std::vector<LensSpec> lenses;
        for (int k = count(g); k > 0; --k) lenses.push_back(random_lens(g, w, h, false));
        mismatches += apply_multi_lens_distortion(im, lenses) != oracle::lens_reference(im, lenses);
    }
    ok = ok && mismatches == 0;
    return {ok, fmt("9x9 pixel (x=2,y=4) = %d (want 43), 50 random cases, %d mismatches", out.pixel(2, 4)[0], mismatches)};
}

Outcome morphology_oracles() {
    std::mt19937_64 g(7);
    std::uniform_int_distribution<int> dim(1, 64), area(1, 40);
    int mismatches = 0;
    for (int i = 0; i < 1000; ++i) {
        const BinaryMask m = oracle::random_mask(g, dim(g), dim(g));
        for (int k : {3, 5, 7, 11}) {
            const BinaryMask e = oracle::erode(m, k);
            mismatches += erode(m, k) != e;
            mismatches += dilate(m, k) != oracle::dilate(m, k);
            mismatches += morphological_open(m, k) != oracle::dilate(e, k);
            mismatches += median_blur(m, k) != oracle::median(m, k);
        }
        const int a = area(g);
        mismatches += remove_small_fragments(m, a) != oracle::drop_small(m, a);
    }
    return {mismatches == 0, fmt("1000 masks x kernels {3,5,7,11}, %d mismatches", mismatches)};
}

Outcome metric_oracles() {
    std::mt19937_64 g(5);
    int count_fail = 0, hd_fail = 0, identity_fail = 0, hd_cases = 0;
    double worst_hd = 0.0, worst_identity = 0.0;
    for (int t = 0; t < 500; ++t) {
        const int w = 1 + static_cast<int>(g() % 32), h = 1 + static_cast<int>(g() % 32);
        const BinaryMask a = oracle::random_mask(g, w, h), b = oracle::random_mask(g, w, h);
        std::int64_t tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < a.bits.size(); ++i) {
            tp += a.bits[i] && b.bits[i];
            fp += a.bits[i] && !b.bits[i];
            fn += !a.bits[i] && b.bits[i];
        }
        const MetricsReport r = evaluate_masks(a, b);
        if (tp + fp + fn > 0) {
            const double p = tp + fp ? double(tp) / double(tp + fp) : 0.0;
            const double rc = tp + fn ? double(tp) / double(tp + fn) : 0.0;
            const double f1 = p + rc > 0 ? 2 * p * rc / (p + rc) : 0.0;
            count_fail += r.tp != tp || r.fp != fp || r.fn != fn || r.dsc != 2.0 * tp / (2.0 * tp + fp + fn) ||
                          r.iou != double(tp) / double(tp + fp + fn) || r.precision != p || r.recall != rc ||
                          std::abs(r.f1 - f1) > 1e-15;
        }
        const double gap = std::abs(r.dsc - 2 * r.iou / (1 + r.iou));
        worst_identity = std::max(worst_identity, gap);
        identity_fail += gap > 1e-12;
        if (a.count() && b.count()) {
            ++hd_cases;
            const double err = std::abs(*r.avg_hausdorff - oracle::avg_hausdorff(a, b));
            worst_hd = std::max(worst_hd, err);
            hd_fail += err > 1e-9;
        } else {
            hd_fail += r.avg_hausdorff.has_value();
        }
    }
    return {count_fail + hd_fail + identity_fail == 0,
            fmt("500 pairs: count mismatches %d, HD worst error %.2e over %d pairs (tol 1e-9), dsc/iou worst gap %.2e (tol "
                "1e-12)",
                count_fail, worst_hd, hd_cases, worst_identity)};
}

Outcome wilcoxon_exactness() {
    std::mt19937_64 g(12);
    double worst = 0.0;
    int cases = 0;
    for (int n = 1; n <= 12; ++n)
        for (int t = 0; t < 60; ++t) {
            std::vector<double> a(n), b(n);
            const int levels = t % 2 ? 5 : 1000;
            for (int i = 0; i < n; ++i) {
                a[i] = static_cast<double>(g() % levels);
                b[i] = static_cast<double>(g() % levels);
            }
            if (a == b) continue;
            ++cases;
            worst = std::max(worst, std::abs(wilcoxon_signed_rank(a, b).p_value - oracle::wilcoxon_enumerate(a, b)));
        }
    const std::vector<double> a{1.1, 2.3, 3.6, 4.0, 5.5}, b{1.0, 2.0, 3.0, 3.0, 4.0};
    const double p5 = wilcoxon_signed_rank(a, b).p_value;
    return {worst <= 1e-12 && std::abs(p5 - 0.0625) <= 1e-12,
            fmt("%d cases n<=12, worst |p - enumeration| %.2e (tol 1e-12); n=5 all positive p = %.6f", cases, worst, p5)};
}

BinaryMask first_pixels(int pixels) {
    BinaryMask m(200, 200);
    for (int i = 0; i < pixels; ++i) m.bits[static_cast<std::size_t>(i)] = 1;
    return m;
}

PatchLabel label_of(int tissue_px, std::optional<int> tumor_px) {
    const TiledSlide s = TiledSlide::from_image("p", RgbImage(200, 200, 180), 256);
    const TissueMask tissue{0, first_pixels(tissue_px)};
    std::optional<LevelMask> truth;
    if (tumor_px) truth = LevelMask{0, first_pixels(*tumor_px)};
    return build_patch_grid(s, 0, 200, tissue, truth ? &*truth : nullptr).records.at(0).label;
}

Outcome patch_rules() {
    struct Case {
        const char* what;
        int tissue;
        std::optional<int> tumor;
        PatchLabel want;
    };
    // 200 x 200 patch: 10000 px is a quarter, 1200 px is 3%, 2000 px is 5%
    const Case cases[] = {{"tissue 0.25", 10000, 0, PatchLabel::GlassExcluded},
                          {"tissue 0.25+eps", 10001, std::nullopt, PatchLabel::Eligible},
                          {"tumor 0.0", 40000, 0, PatchLabel::NonTumor},
                          {"tumor 0.03", 40000, 1200, PatchLabel::AmbiguousExcluded},
                          {"tumor 0.05", 40000, 2000, PatchLabel::Tumor}};
    bool ok = label_patch(0.25, 0.0) == PatchLabel::GlassExcluded &&
              label_patch(std::nextafter(0.25, 1.0), std::nullopt) == PatchLabel::Eligible &&
              label_patch(1.0, 0.0) == PatchLabel::NonTumor && label_patch(1.0, 0.03) == PatchLabel::AmbiguousExcluded &&
              label_patch(1.0, 0.05) == PatchLabel::Tumor;
    std::ostringstream d;
    for (const Case& c : cases) {
        const PatchLabel got = label_of(c.tissue, c.tumor);
        ok = ok && got == c.want;
        d << c.what << " -> " << to_string(got) << "; ";
    }
    return {ok, d.str()};
}

std::vector<SlideJob> phantom_jobs(std::uint64_t first, int count) {
    std::vector<SlideJob> jobs;
    for (int i = 0; i < count; ++i) {
        PhantomSpec s;
        s.seed = first + static_cast<std::uint64_t>(i);
        s.slide_id = "phantom-" + std::to_string(s.seed);
        Phantom p = generate_phantom(s);
        jobs.push_back({p.slide, std::move(p.tumor_truth)});
    }
    return jobs;
}

Outcome phantom_segmentation() {
    std::vector<double> dsc;
    double worst_secs = 0.0, total_secs = 0.0;
    int failed = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto jobs = phantom_jobs(seed, 1);
        PipelineConfig c;
        c.workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
        const auto t0 = Clock::now();
        const PipelineResult r = run_pipeline(c, jobs);
        const double secs = seconds_since(t0);
        worst_secs = std::max(worst_secs, secs);
        total_secs += secs;
        if (!r.all_ok() || !r.slides[0].metrics) {
            ++failed;
            continue;
        }
        dsc.push_back(r.slides[0].metrics->dsc);
    }
    if (dsc.empty()) return {false, fmt("%d of 20 phantoms failed", failed)};
    const SummaryStats s = summarize(dsc);
    return {failed == 0 && s.mean >= 0.90 && s.median >= 0.90 && worst_secs < 10.0,
            fmt("20 phantoms: mean DSC %.4f, median %.4f, min %.4f (need >= 0.90); %.2f s/phantom mean, %.2f s max on %u "
                "thread(s) (limit 10 s)",
                s.mean, s.median, s.min, total_secs / 20, worst_secs, std::max(1u, std::thread::hardware_concurrency()))};
}

Outcome evolutionary_clustering() {
    const std::vector<std::vector<double>> centres{{0.0, 0.0}, {10.0, 0.0}, {5.0, 9.0}};
    int recovered = 0, oracle_disagree = 0, elitism_fail = 0;
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        std::mt19937_64 g(seed);
        const auto f = oracle::gaussian_blobs(g, centres, 30, 0.5);
        EvolutionConfig c;
        c.seed = seed;
        EvolutionTrace trace;
        const ClusterModel m = evolve_cluster_count(f, c, &trace);
        recovered += m.k == 3;

        int best_k = 0;
        double best = -1.0;
        for (int k = c.k_min; k <= c.k_max; ++k) {
            const double v = kmeans_assign(f, k, combine_seed(seed, static_cast<std::uint64_t>(k))).objective.value;
            if (v > best) {
                best = v;
                best_k = k;
            }
        }
        oracle_disagree += best_k != m.k;

        std::map<int, double> fitness;
        for (const auto& [k, v] : trace.evaluated) fitness[k] = v.value;
        double prev = -1.0;
        bool elitist = true;
        for (const auto& gen : trace.generations) {
            double gen_best = -1.0;
            for (int k : gen) gen_best = std::max(gen_best, fitness.at(k));
            elitist = elitist && gen_best >= prev;
            prev = gen_best;
        }
        elitism_fail += !elitist || fitness.at(m.k) != prev;
    }
    return {recovered >= 95 && oracle_disagree == 0 && elitism_fail == 0,
            fmt("k=3 recovered in %d/100 seeds (need 95); sweep oracle disagreements %d; elitism violations %d", recovered,
                oracle_disagree, elitism_fail)};
}

Outcome determinism() {
    const Scratch dir("accept_det");
    const auto jobs = phantom_jobs(101, 3);
    std::map<std::string, std::string> reference;
    std::string diff;
    for (int workers : {1, 4, 16}) {
        PipelineConfig c;
        c.workers = workers;
        c.output_dir = dir.path / ("w" + std::to_string(workers));
        if (!run_pipeline(c, jobs).all_ok()) return {false, fmt("pipeline failed with %d workers", workers)};
        const auto tree = snapshot_tree(c.output_dir);
        if (reference.empty()) reference = tree;
        else if (const std::string d = first_difference(reference, tree); !d.empty() && diff.empty())
            diff = "workers " + std::to_string(workers) + " differ at " + d;
    }
    return {diff.empty(), diff.empty() ? fmt("3 phantoms x workers {1,4,16}: %zu files byte-identical", reference.size())
                                       : diff};
}

Outcome refinement_contract() {
    const Scratch dir("accept_fuse");
    const auto jobs = phantom_jobs(7, 1);
    PipelineConfig c;
    c.output_dir = dir.path;
    const PipelineResult r = run_pipeline(c, jobs);
    if (!r.all_ok()) return {false, "pipeline failed: " + r.slides[0].error};
    const fs::path root = dir.path / r.slides[0].slide_id;
    const RefinementInput in =
        read_refinement_input(root / "fuse" / "refinement_input.f32", root / "fuse" / "refinement_input.json");
    const PatchGrid grid = read_patch_grid(root / "grid" / "patches.csv", root / "grid" / "grid.json");
    const ScalarRaster expect = resize_heatmap_registered(r.slides[0].heatmap, grid, 1120, 1120);
    const RgbImage rgb = read_rgb(root / "downsample" / "rgb.png");
    const bool dims = in.width == 1120 && in.height == 1120 && in.planes.size() == 4u * 1120 * 1120;
    const bool heat = dims && in.channel(3) == expect;
    bool colour = dims && rgb.width == 1120 && rgb.height == 1120;
    for (int ch = 0; ch < 3 && colour; ++ch)
        for (int y = 0; y < 1120 && colour; ++y)
            for (int x = 0; x < 1120 && colour; ++x)
                colour = in.at(ch, x, y) == static_cast<float>(rgb.pixel(x, y)[ch] / 255.0);
    return {dims && heat && colour, fmt("tensor %dx%dx%zu; channel 3 %s resized heatmap; RGB planes %s", in.width,
                                        in.height, in.width ? in.planes.size() / (std::size_t(in.width) * in.height) : 0,
                                        heat ? "equals" : "DIFFERS FROM", colour ? "match" : "DIFFER")};
}

PatchInput tagged_patch(int i) {
    PatchInput p{{i % 101, i / 101}, RgbImage(kPatchSize, kPatchSize, 50)};
    p.pixels.data[0] = static_cast<std::uint8_t>(i >> 8);
    p.pixels.data[1] = static_cast<std::uint8_t>(i & 255);
    return p;
}

BackendDescriptor stub(const std::string& mode) {
    BackendDescriptor d = parse_backend_selector(std::string("exec:") + BRIDGE_STUB + " " + mode);
    d.batch_size = 100;
    d.timeout = std::chrono::milliseconds(20000);
    return d;
}

Outcome bridge_protocol() {
    const int n = 10000;
    std::vector<PatchInput> in;
    for (int i = 0; i < n; ++i) in.push_back(tagged_patch(i));
    int mismatches = 0;
    for (const char* mode : {"echo", "echo-reverse"}) {
        auto b = make_backend(stub(mode));
        const auto out = b->classify_batch(in);
        if (out.size() != in.size()) return {false, fmt("%s returned %zu of %d answers", mode, out.size(), n)};
        for (int i = 0; i < n; ++i)
            mismatches += out[i].grid_x != in[i].index.grid_x || out[i].grid_y != in[i].index.grid_y ||
                          out[i].p_tumor != i / 65535.0;
    }
    int unflagged = 0;
    const std::vector<PatchInput> few(in.begin(), in.begin() + 8);
    for (const char* mode : {"bad-json", "bad-id", "no-p", "p-range", "p-nan"}) {
        try {
            make_backend(stub(mode))->classify_batch(few);
            ++unflagged;
        } catch (const ProtocolError&) {
        } catch (...) {
            ++unflagged;
        }
    }
    return {mismatches == 0 && unflagged == 0,
            fmt("2 x %d roundtrips (in order and reversed), %d mismatches; malformed modes not raising ProtocolError: %d", n,
                mismatches, unflagged)};
}

}  // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"augmentation-suite", augmentation_suite},
        {"lens-arithmetic-golden", lens_golden},
        {"morphology-oracles", morphology_oracles},
        {"metric-oracles", metric_oracles},
        {"wilcoxon-exactness", wilcoxon_exactness},
        {"patch-rules", patch_rules},
        {"phantom-segmentation", phantom_segmentation},
        {"evolutionary-clustering", evolutionary_clustering},
        {"determinism", determinism},
        {"refinement-input", refinement_contract},
        {"bridge-protocol", bridge_protocol},
    };
    int failed = 0;
    for (const auto& [name, run] : criteria) {
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.ok;
        std::printf("%s %s: %s\n", o.ok ? "PASS" : "FAIL", name, o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed ? 1 : 0;
}
