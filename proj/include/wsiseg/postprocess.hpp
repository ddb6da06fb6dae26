#pragma once

#include "wsiseg/bridge.hpp"
#include "wsiseg/heatmap.hpp"
#include "wsiseg/image.hpp"

#include <chrono>
#include <filesystem>
#include <memory>
#include <string>

namespace wsiseg {

class Refiner {
public:
    virtual ~Refiner() = default;
    /// Probability raster with the input's dimensions, values in [0, 1].
    virtual ScalarRaster refine(const RefinementInput& input) = 0;
    virtual std::string name() const = 0;
};

/// Returns the heatmap channel unchanged.
class IdentityRefiner final : public Refiner {
public:
    ScalarRaster refine(const RefinementInput& input) override { return input.channel(3); }
    std::string name() const override { return "identity"; }
};

/// Sends op "refine" over the bridge protocol. The planar float input is
/// written to a scratch file whose path travels in the request; the child
/// writes a single-plane float raster of the same size to `output_path`.
class ExternalRefiner final : public Refiner {
public:
    explicit ExternalRefiner(BackendDescriptor descriptor, std::filesystem::path scratch_dir = {});
    ~ExternalRefiner() override;
    ScalarRaster refine(const RefinementInput& input) override;
    std::string name() const override { return backend_selector(descriptor_); }

private:
    BackendDescriptor descriptor_;
    std::filesystem::path scratch_dir_;
    std::unique_ptr<class ChildProcess> child_;
    std::int64_t next_id_ = 1;
};

/// `identity` or `exec:<cmd>`.
std::unique_ptr<Refiner> make_refiner(const std::string& selector, std::chrono::milliseconds timeout = std::chrono::milliseconds{30000});

struct PostprocessConfig {
    double threshold = 0.5;
    int min_fragment_area = 100;
    int opening_kernel = 7;
    int median_kernel = 11;
};

/// Throws ConfigError unless threshold is in (0, 1), kernels are odd and >= 1
/// and min_fragment_area >= 0.
void validate(const PostprocessConfig& config);

/// bit = 1 iff value >= t.
BinaryMask threshold_mask(const ScalarRaster& raster, double t);

/// Clears 8-connected components whose area is below `min_area`.
BinaryMask remove_small_fragments(const BinaryMask& mask, int min_area);

/// Square structuring element of side `kernel`; pixels outside the mask count as 0.
BinaryMask erode(const BinaryMask& mask, int kernel);
BinaryMask dilate(const BinaryMask& mask, int kernel);
BinaryMask morphological_open(const BinaryMask& mask, int kernel);

/// Majority vote over a `kernel` x `kernel` window with edge-replicated borders.
BinaryMask median_blur(const BinaryMask& mask, int kernel);

/// threshold -> remove_small_fragments -> morphological_open -> median_blur.
BinaryMask postprocess(const ScalarRaster& raster, const PostprocessConfig& config);

BinaryMask upscale_nearest(const BinaryMask& mask, int width, int height);
BinaryMask resize_mask_nearest(const BinaryMask& mask, int width, int height);

/// TP green, FP white, FN red, TN black.
RgbImage overlay_confusion(const BinaryMask& pred, const BinaryMask& truth);

}  // namespace wsiseg
