#include "wsiseg/bridge.hpp"

#include "wsiseg/process.hpp"
#include "wsiseg/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <unordered_map>

namespace wsiseg {

BackendDescriptor parse_backend_selector(const std::string& selector) {
    BackendDescriptor d;
    if (selector == "heuristic") {
        d.kind = BackendKind::Heuristic;
        d.feature_dim = kHeuristicFeatureDim;
        return d;
    }
    if (selector.rfind("exec:", 0) == 0) {
        d.kind = BackendKind::ExternalProcess;
        std::istringstream ss(selector.substr(5));
        for (std::string tok; ss >> tok;) d.command.push_back(tok);
        if (d.command.empty()) throw ConfigError("exec backend needs a command");
        return d;
    }
    throw ConfigError("unknown backend selector '" + selector + "' (expected heuristic or exec:<cmd>)");
}

std::string backend_selector(const BackendDescriptor& d) {
    if (d.kind == BackendKind::Heuristic) return "heuristic";
    std::string s = "exec:";
    for (std::size_t i = 0; i < d.command.size(); ++i) s += (i ? " " : "") + d.command[i];
    return s;
}

std::unique_ptr<PatchBackend> make_backend(const BackendDescriptor& d) {
    if (d.batch_size < 1) throw ConfigError("backend batch size must be at least 1");
    if (d.kind == BackendKind::Heuristic) return std::make_unique<HeuristicBackend>(d);
    return std::make_unique<ExternalBackend>(d);
}

namespace {

void check_patch_shapes(std::span<const PatchInput> patches) {
    for (const PatchInput& p : patches) {
        if (p.pixels.width != kPatchSize || p.pixels.height != kPatchSize ||
            p.pixels.data.size() != static_cast<std::size_t>(kPatchSize) * kPatchSize * 3) {
            throw SizeError("patch (" + std::to_string(p.index.grid_x) + "," + std::to_string(p.index.grid_y) +
                            ") is not 224x224x3");
        }
    }
}

}  // namespace

// ---------------------------------------------------------------------------

HeuristicFeatures heuristic_features(const RgbImage& patch) {
    if (patch.empty()) throw InputError("cannot describe an empty patch");
    const int w = patch.width;
    const int h = patch.height;
    const double n = static_cast<double>(w) * h;

    double sum[3] = {0, 0, 0};
    double lum_sum = 0.0;
    double lum_sq = 0.0;
    double sat_sum = 0.0;
    std::vector<double> lum(static_cast<std::size_t>(w) * h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::uint8_t* p = patch.pixel(x, y);
            sum[0] += p[0];
            sum[1] += p[1];
            sum[2] += p[2];
            const double l = luminance(p);
            lum[static_cast<std::size_t>(y) * w + x] = l;
            lum_sum += l;
            lum_sq += l * l;
            const int mx = std::max({p[0], p[1], p[2]});
            const int mn = std::min({p[0], p[1], p[2]});
            sat_sum += mx > 0 ? static_cast<double>(mx - mn) / mx : 0.0;
        }
    }
    const double lum_mean = lum_sum / n;
    const double lum_var = std::max(0.0, lum_sq / n - lum_mean * lum_mean);

    // Sobel over interior pixels only, so padding rules do not matter.
    double energy = 0.0;
    std::size_t count = 0;
    const double norm = 4.0 * 255.0 * std::sqrt(2.0);
    auto L = [&](int x, int y) { return lum[static_cast<std::size_t>(y) * w + x]; };
    for (int y = 1; y + 1 < h; ++y) {
        for (int x = 1; x + 1 < w; ++x) {
            const double gx = (L(x + 1, y - 1) + 2 * L(x + 1, y) + L(x + 1, y + 1)) -
                              (L(x - 1, y - 1) + 2 * L(x - 1, y) + L(x - 1, y + 1));
            const double gy = (L(x - 1, y + 1) + 2 * L(x, y + 1) + L(x + 1, y + 1)) -
                              (L(x - 1, y - 1) + 2 * L(x, y - 1) + L(x + 1, y - 1));
            energy += (gx * gx + gy * gy) / (norm * norm);
            ++count;
        }
    }
    return {sum[0] / n / 255.0, sum[1] / n / 255.0, sum[2] / n / 255.0, lum_var / (255.0 * 255.0),
            count ? energy / count : 0.0, sat_sum / n};
}

double heuristic_probability(std::span<const double> features, std::span<const double> weights, double bias) {
    if (features.size() != weights.size()) {
        throw ConfigError("feature/weight dimension mismatch: " + std::to_string(features.size()) + " vs " +
                          std::to_string(weights.size()));
    }
    double z = bias;
    if (!std::isfinite(bias)) throw NumericError("non-finite bias");
    for (std::size_t i = 0; i < features.size(); ++i) {
        if (!std::isfinite(features[i]) || !std::isfinite(weights[i])) throw NumericError("non-finite feature or weight");
        z += features[i] * weights[i];
    }
    return 1.0 / (1.0 + std::exp(-z));
}

HeuristicBackend::HeuristicBackend(BackendDescriptor descriptor) : descriptor_(std::move(descriptor)) {
    descriptor_.kind = BackendKind::Heuristic;
    descriptor_.feature_dim = kHeuristicFeatureDim;
}

std::vector<PatchProbability> HeuristicBackend::classify_batch(std::span<const PatchInput> patches) {
    check_patch_shapes(patches);
    const HeuristicModel& model = shipped_heuristic_model();
    std::vector<PatchProbability> out;
    out.reserve(patches.size());
    for (const PatchInput& p : patches) {
        const HeuristicFeatures f = heuristic_features(p.pixels);
        out.push_back({p.index.grid_x, p.index.grid_y, heuristic_probability(f, model.weights, model.bias)});
    }
    return out;
}

std::vector<std::vector<double>> HeuristicBackend::extract_features(std::span<const PatchInput> patches) {
    check_patch_shapes(patches);
    std::vector<std::vector<double>> out;
    out.reserve(patches.size());
    for (const PatchInput& p : patches) {
        const HeuristicFeatures f = heuristic_features(p.pixels);
        out.emplace_back(f.begin(), f.end());
    }
    return out;
}

// ---------------------------------------------------------------------------

struct ExternalBackend::Reply {
    std::optional<double> p;
    std::vector<double> f;
};

ExternalBackend::ExternalBackend(BackendDescriptor descriptor) : descriptor_(std::move(descriptor)) {
    descriptor_.kind = BackendKind::ExternalProcess;
    if (descriptor_.command.empty()) throw ConfigError("external backend needs a command");
    if (descriptor_.batch_size < 1) throw ConfigError("backend batch size must be at least 1");
}

ExternalBackend::~ExternalBackend() = default;

std::vector<ExternalBackend::Reply> ExternalBackend::round_trip(std::span<const PatchInput> patches, const char* op) {
    check_patch_shapes(patches);
    const bool want_features = std::string_view(op) == "features";
    std::vector<Reply> replies(patches.size());
    std::lock_guard lock(mutex_);

    for (std::size_t start = 0; start < patches.size(); start += static_cast<std::size_t>(descriptor_.batch_size)) {
        const std::size_t end = std::min(patches.size(), start + static_cast<std::size_t>(descriptor_.batch_size));
        if (!child_ || !child_->alive()) child_ = std::make_unique<ChildProcess>(descriptor_.command);

        std::unordered_map<std::int64_t, std::size_t> pending;
        std::vector<std::string> lines;
        for (std::size_t i = start; i < end; ++i) {
            protocol::Request req;
            req.id = next_id_++;
            req.op = op;
            req.shape = {kPatchSize, kPatchSize, 3};
            req.pixels_b64 = protocol::base64_encode(patches[i].pixels.data);
            pending.emplace(req.id, i);
            lines.push_back(protocol::encode(req));
        }
        auto unprocessed = [&] {
            std::vector<std::size_t> idx;
            for (const auto& [id, i] : pending) idx.push_back(i);
            std::sort(idx.begin(), idx.end());
            std::vector<GridIndex> out;
            for (std::size_t i : idx) out.push_back(patches[i].index);
            return out;
        };

        ChildProcess::Outcome outcome;
        try {
            outcome = child_->exchange(
                lines,
                [&](std::string_view line) {
                    const protocol::Response r = protocol::decode_response(line);
                    const auto it = pending.find(r.id);
                    if (it == pending.end()) throw ProtocolError("response carries unknown id " + std::to_string(r.id));
                    if (r.error) throw BackendError("backend reported: " + *r.error, unprocessed());
                    Reply& reply = replies[it->second];
                    if (want_features) {
                        if (!r.f) throw ProtocolError("response " + std::to_string(r.id) + " lacks features");
                        if (descriptor_.feature_dim > 0 && r.f->size() != static_cast<std::size_t>(descriptor_.feature_dim)) {
                            throw ProtocolError("response " + std::to_string(r.id) + " has " + std::to_string(r.f->size()) +
                                                " features, expected " + std::to_string(descriptor_.feature_dim));
                        }
                        for (double v : *r.f) {
                            if (!std::isfinite(v)) throw ProtocolError("non-finite feature in response " + std::to_string(r.id));
                        }
                        reply.f = *r.f;
                    } else {
                        if (!r.p) throw ProtocolError("response " + std::to_string(r.id) + " lacks a probability");
                        if (!std::isfinite(*r.p) || *r.p < 0.0 || *r.p > 1.0) {
                            throw ProtocolError("probability out of range in response " + std::to_string(r.id));
                        }
                        reply.p = *r.p;
                    }
                    pending.erase(it);
                    return pending.empty();
                },
                descriptor_.timeout);
        } catch (...) {
            child_->kill();
            throw;
        }
        if (outcome != ChildProcess::Outcome::Completed) {
            child_->kill();
            throw BackendError(outcome == ChildProcess::Outcome::TimedOut ? "external backend timed out"
                                                                         : "external backend exited early",
                               unprocessed());
        }
    }
    return replies;
}

std::vector<PatchProbability> ExternalBackend::classify_batch(std::span<const PatchInput> patches) {
    const auto replies = round_trip(patches, "classify");
    std::vector<PatchProbability> out;
    out.reserve(patches.size());
    for (std::size_t i = 0; i < patches.size(); ++i) {
        out.push_back({patches[i].index.grid_x, patches[i].index.grid_y, *replies[i].p});
    }
    return out;
}

std::vector<std::vector<double>> ExternalBackend::extract_features(std::span<const PatchInput> patches) {
    if (descriptor_.feature_dim <= 0) throw CapabilityError("external backend was not declared with feature support");
    auto replies = round_trip(patches, "features");
    std::vector<std::vector<double>> out;
    out.reserve(replies.size());
    for (auto& r : replies) out.push_back(std::move(r.f));
    return out;
}

}  // namespace wsiseg
