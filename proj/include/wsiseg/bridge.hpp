#pragma once

#include "wsiseg/errors.hpp"
#include "wsiseg/image.hpp"

#include <array>
#include <chrono>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

namespace wsiseg {

enum class BackendKind { Heuristic, ExternalProcess };

struct BackendDescriptor {
    BackendKind kind = BackendKind::Heuristic;
    std::vector<std::string> command;  // executable + args, EXTERNAL_PROCESS only
    int batch_size = 32;
    int feature_dim = 0;  // 0: no feature support
    std::chrono::milliseconds timeout{30000};  // per batch
};

/// Parses `heuristic` or `exec:<command line>` (split on whitespace).
BackendDescriptor parse_backend_selector(const std::string& selector);
std::string backend_selector(const BackendDescriptor& descriptor);

struct GridIndex {
    int grid_x = 0;
    int grid_y = 0;
    friend bool operator==(const GridIndex&, const GridIndex&) = default;
};

struct PatchInput {
    GridIndex index;
    RgbImage pixels;  // 224 x 224 x 3
};

struct PatchProbability {
    int grid_x = 0;
    int grid_y = 0;
    double p_tumor = 0.0;
    friend bool operator==(const PatchProbability&, const PatchProbability&) = default;
};

/// An external backend died, hung, or reported an error. `unprocessed` lists
/// the patches of the failed batch that received no answer.
class BackendError : public Error {
public:
    BackendError(const std::string& what, std::vector<GridIndex> unprocessed)
        : Error(what), unprocessed(std::move(unprocessed)) {}
    std::vector<GridIndex> unprocessed;
};

inline constexpr int kPatchSize = 224;

class PatchBackend {
public:
    virtual ~PatchBackend() = default;

    /// One probability per patch, in input order.
    virtual std::vector<PatchProbability> classify_batch(std::span<const PatchInput> patches) = 0;
    /// One feature_dim()-long vector per patch, in input order; throws
    /// CapabilityError when feature_dim() == 0.
    virtual std::vector<std::vector<double>> extract_features(std::span<const PatchInput> patches) = 0;

    virtual int feature_dim() const = 0;
    virtual const BackendDescriptor& descriptor() const = 0;
};

std::unique_ptr<PatchBackend> make_backend(const BackendDescriptor& descriptor);

// ---------------------------------------------------------------------------
// Built-in heuristic backend

inline constexpr int kHeuristicFeatureDim = 6;
using HeuristicFeatures = std::array<double, kHeuristicFeatureDim>;

/// Hand-crafted descriptor of an RGB patch:
///   [0..2] mean R, G, B / 255
///   [3]    luminance variance / 255^2
///   [4]    gradient energy: mean squared Sobel magnitude of luminance,
///          normalised so the largest 8-bit edge has magnitude 1
///   [5]    mean HSV saturation
HeuristicFeatures heuristic_features(const RgbImage& patch);

/// logistic(weights . features + bias); throws NumericError on non-finite
/// input and ConfigError on a dimension mismatch.
double heuristic_probability(std::span<const double> features, std::span<const double> weights, double bias);

/// Frozen logistic-regression parameters for the heuristic backend, fitted
/// once on phantom patches (tools/fit_heuristic).
struct HeuristicModel {
    const char* version;
    std::array<double, kHeuristicFeatureDim> weights;
    double bias;
};
const HeuristicModel& shipped_heuristic_model();

class HeuristicBackend final : public PatchBackend {
public:
    explicit HeuristicBackend(BackendDescriptor descriptor = {});
    std::vector<PatchProbability> classify_batch(std::span<const PatchInput> patches) override;
    std::vector<std::vector<double>> extract_features(std::span<const PatchInput> patches) override;
    int feature_dim() const override { return kHeuristicFeatureDim; }
    const BackendDescriptor& descriptor() const override { return descriptor_; }

private:
    BackendDescriptor descriptor_;
};

// ---------------------------------------------------------------------------
// External process backend

class ChildProcess;

class ExternalBackend final : public PatchBackend {
public:
    explicit ExternalBackend(BackendDescriptor descriptor);
    ~ExternalBackend() override;

    std::vector<PatchProbability> classify_batch(std::span<const PatchInput> patches) override;
    std::vector<std::vector<double>> extract_features(std::span<const PatchInput> patches) override;
    int feature_dim() const override { return descriptor_.feature_dim; }
    const BackendDescriptor& descriptor() const override { return descriptor_; }

private:
    struct Reply;
    std::vector<Reply> round_trip(std::span<const PatchInput> patches, const char* op);

    BackendDescriptor descriptor_;
    std::mutex mutex_;  // one child serves one request stream at a time
    std::unique_ptr<ChildProcess> child_;
    std::int64_t next_id_ = 1;
};

}  // namespace wsiseg
