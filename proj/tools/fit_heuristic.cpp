// Fits the heuristic backend's logistic weights on phantom patches and prints
// the frozen model source; optionally writes the golden fixture file.
//
//   fit_heuristic --phantoms 6 --model-out src/heuristic_model.cpp --golden-out tests/data/heuristic_golden.json

#include "wsiseg/bridge.hpp"
#include "wsiseg/phantom.hpp"
#include "wsiseg/tissue_grid.hpp"

#include <CLI11.hpp>
#include <Eigen/Dense>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>

using namespace wsiseg;

namespace {

struct Sample {
    HeuristicFeatures f;
    double target;
};

// Newton iterations on the soft-target cross-entropy with a small ridge on the
// standardised weights.
std::pair<Eigen::VectorXd, double> fit(const std::vector<Sample>& samples, double ridge) {
    const int d = kHeuristicFeatureDim;
    const auto n = static_cast<Eigen::Index>(samples.size());
    Eigen::MatrixXd X(n, d);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) X(i, j) = samples[static_cast<std::size_t>(i)].f[static_cast<std::size_t>(j)];
        y(i) = samples[static_cast<std::size_t>(i)].target;
    }
    const Eigen::VectorXd mu = X.colwise().mean();
    Eigen::VectorXd sd = ((X.rowwise() - mu.transpose()).array().square().colwise().sum() / static_cast<double>(n)).sqrt();
    for (int j = 0; j < d; ++j) sd(j) = sd(j) > 1e-12 ? sd(j) : 1.0;
    Eigen::MatrixXd Z(n, d + 1);
    Z.leftCols(d) = (X.rowwise() - mu.transpose()).array().rowwise() / sd.transpose().array();
    Z.col(d).setOnes();

    Eigen::VectorXd w = Eigen::VectorXd::Zero(d + 1);
    for (int it = 0; it < 100; ++it) {
        const Eigen::VectorXd p = (-(Z * w)).array().exp().matrix().unaryExpr([](double e) { return 1.0 / (1.0 + e); });
        Eigen::VectorXd grad = Z.transpose() * (p - y);
        Eigen::VectorXd s = (p.array() * (1.0 - p.array())).matrix();
        Eigen::MatrixXd H = Z.transpose() * s.asDiagonal() * Z;
        for (int j = 0; j < d; ++j) {
            grad(j) += ridge * w(j);
            H(j, j) += ridge;
        }
        const Eigen::VectorXd step = H.ldlt().solve(grad);
        w -= step;
        if (step.norm() < 1e-12) break;
    }
    Eigen::VectorXd raw(d);
    double bias = w(d);
    for (int j = 0; j < d; ++j) {
        raw(j) = w(j) / sd(j);
        bias -= raw(j) * mu(j);
    }
    return {raw, bias};
}

std::string exact(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Fit the heuristic backend on phantom patches"};
    int phantoms = 6;
    std::uint64_t seed = 9001;
    double ridge = 1e-3;
    std::string version = "phantom-fit-1";
    std::string model_out;
    std::string golden_out;
    app.add_option("--phantoms", phantoms, "Number of phantoms to sample");
    app.add_option("--seed", seed, "First phantom seed");
    app.add_option("--ridge", ridge, "L2 penalty on standardised weights");
    app.add_option("--version", version, "Model version tag");
    app.add_option("--model-out", model_out, "Write the model source file here");
    app.add_option("--golden-out", golden_out, "Write the golden fixture JSON here (uses the shipped model)");
    CLI11_PARSE(app, argc, argv);

    if (!golden_out.empty() && model_out.empty()) {
        const HeuristicModel& m = shipped_heuristic_model();
        nlohmann::json cases = nlohmann::json::array();
        auto add = [&](const char* name, const RgbImage& img) {
            const HeuristicFeatures f = heuristic_features(img);
            cases.push_back({{"name", name},
                             {"features", std::vector<double>(f.begin(), f.end())},
                             {"p_tumor", heuristic_probability(f, m.weights, m.bias)}});
        };
        add("stroma_seed1", render_stroma_patch(kPatchSize, 1));
        add("tumor_seed1", render_tumor_patch(kPatchSize, 1));
        add("stroma_seed2", render_stroma_patch(kPatchSize, 2));
        add("tumor_seed2", render_tumor_patch(kPatchSize, 2));
        nlohmann::json j = {{"version", m.version}, {"patch_size", kPatchSize}, {"cases", cases}};
        std::ofstream(golden_out) << j.dump(2, ' ', false, nlohmann::json::error_handler_t::strict) << '\n';
        std::cerr << "wrote " << golden_out << "\n";
        return 0;
    }

    std::vector<Sample> samples;
    for (int i = 0; i < phantoms; ++i) {
        PhantomSpec spec;
        spec.seed = seed + static_cast<std::uint64_t>(i);
        spec.slide_id = "fit-" + std::to_string(spec.seed);
        const Phantom ph = generate_phantom(spec);
        const TissueMask tissue = compute_tissue_mask(ph.slide, default_mask_level(ph.slide));
        const LevelMask truth{0, ph.tumor_truth};
        const PatchGrid grid = build_patch_grid(ph.slide, 0, kPatchSize, tissue, &truth);
        for (std::size_t idx : grid.eligible_indices()) {
            const PatchRecord& r = grid.records[idx];
            if (r.width != kPatchSize || r.height != kPatchSize) continue;
            samples.push_back({heuristic_features(extract_patch(ph.slide, r, kPatchSize)), r.tumor_fraction.value_or(0.0)});
        }
        std::cerr << "phantom " << spec.seed << ": " << samples.size() << " samples\n";
    }
    const auto [w, b] = fit(samples, ridge);

    double err = 0.0;
    int wrong = 0;
    for (const Sample& s : samples) {
        const double p = heuristic_probability(s.f, std::vector<double>(w.data(), w.data() + w.size()), b);
        err += std::abs(p - s.target);
        if ((p >= 0.5) != (s.target >= 0.5)) ++wrong;
    }
    std::cerr << "mean |p - fraction| = " << err / static_cast<double>(samples.size()) << ", side errors " << wrong
              << " / " << samples.size() << "\n";

    std::string src =
        "#include \"wsiseg/bridge.hpp\"\n\n"
        "namespace wsiseg {\n\n"
        "// Generated by tools/fit_heuristic; regenerate tests/data/heuristic_golden.json with it.\n"
        "const HeuristicModel& shipped_heuristic_model() {\n"
        "    static const HeuristicModel model{\n"
        "        \"" + version + "\",\n        {";
    for (int j = 0; j < w.size(); ++j) src += (j ? ", " : "") + exact(w(j));
    src += "},\n        " + exact(b) + ",\n    };\n    return model;\n}\n\n}  // namespace wsiseg\n";
    if (model_out.empty()) {
        std::cout << src;
    } else {
        std::ofstream(model_out) << src;
        std::cerr << "wrote " << model_out << "\n";
    }
    return 0;
}
