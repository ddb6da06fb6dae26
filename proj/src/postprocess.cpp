#include "wsiseg/postprocess.hpp"

#include "wsiseg/errors.hpp"
#include "wsiseg/process.hpp"
#include "wsiseg/protocol.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <vector>

#include <unistd.h>

namespace wsiseg {

namespace fs = std::filesystem;

namespace {

fs::path default_scratch_dir() {
    static std::atomic<int> counter{0};
    return fs::temp_directory_path() /
           ("wsiseg-refine-" + std::to_string(::getpid()) + "-" + std::to_string(counter.fetch_add(1)));
}

}  // namespace

ExternalRefiner::ExternalRefiner(BackendDescriptor descriptor, fs::path scratch_dir)
    : descriptor_(std::move(descriptor)), scratch_dir_(std::move(scratch_dir)) {
    if (descriptor_.command.empty()) throw ConfigError("external refiner needs a command");
    if (scratch_dir_.empty()) scratch_dir_ = default_scratch_dir();
}

ExternalRefiner::~ExternalRefiner() {
    child_.reset();
    std::error_code ec;
    fs::remove_all(scratch_dir_, ec);
}

ScalarRaster ExternalRefiner::refine(const RefinementInput& input) {
    fs::create_directories(scratch_dir_);
    const std::int64_t id = next_id_++;
    const fs::path in_path = scratch_dir_ / ("input_" + std::to_string(id) + ".f32");
    const fs::path out_path = scratch_dir_ / ("output_" + std::to_string(id) + ".f32");
    write_planar_f32(in_path, {}, input.width, input.height, RefinementInput::kChannels, input.planes);
    std::error_code ec;
    fs::remove(out_path, ec);

    protocol::Request req;
    req.id = id;
    req.op = "refine";
    req.shape = {input.height, input.width, RefinementInput::kChannels};
    req.input_path = in_path.string();
    req.output_path = out_path.string();

    if (!child_ || !child_->alive()) child_ = std::make_unique<ChildProcess>(descriptor_.command);
    bool done = false;
    ChildProcess::Outcome outcome;
    try {
        outcome = child_->exchange(
            {protocol::encode(req)},
            [&](std::string_view line) {
                const protocol::Response r = protocol::decode_response(line);
                if (r.id != id) throw ProtocolError("refine response carries unknown id " + std::to_string(r.id));
                if (r.error) throw BackendError("refiner reported: " + *r.error, {});
                if (!r.done) throw ProtocolError("refine response lacks \"done\"");
                done = true;
                return true;
            },
            descriptor_.timeout);
    } catch (...) {
        child_->kill();
        fs::remove(in_path, ec);
        throw;
    }
    fs::remove(in_path, ec);
    if (outcome != ChildProcess::Outcome::Completed || !done) {
        child_->kill();
        throw BackendError(outcome == ChildProcess::Outcome::TimedOut ? "external refiner timed out"
                                                                     : "external refiner exited early",
                           {});
    }

    ScalarRaster out(input.width, input.height);
    try {
        out.values = read_planar_f32(out_path, input.width, input.height, 1);
    } catch (const ConsistencyError& e) {
        throw ProtocolError(std::string("refiner output has wrong dimensions: ") + e.what());
    } catch (const InputError& e) {
        throw ProtocolError(std::string("refiner produced no output: ") + e.what());
    }
    fs::remove(out_path, ec);
    for (float v : out.values) {
        if (!std::isfinite(v) || v < 0.0f || v > 1.0f) throw ProtocolError("refiner output outside [0, 1]");
    }
    return out;
}

std::unique_ptr<Refiner> make_refiner(const std::string& selector, std::chrono::milliseconds timeout) {
    if (selector == "identity") return std::make_unique<IdentityRefiner>();
    if (selector.rfind("exec:", 0) != 0) {
        throw ConfigError("unknown refiner selector '" + selector + "' (expected identity or exec:<cmd>)");
    }
    BackendDescriptor d = parse_backend_selector(selector);
    d.timeout = timeout;
    return std::make_unique<ExternalRefiner>(std::move(d));
}

// ---------------------------------------------------------------------------

void validate(const PostprocessConfig& c) {
    if (!(c.threshold > 0.0 && c.threshold < 1.0)) throw ConfigError("threshold must lie in (0, 1)");
    if (c.min_fragment_area < 0) throw ConfigError("min_fragment_area must be >= 0");
    for (int k : {c.opening_kernel, c.median_kernel}) {
        if (k < 1 || k % 2 == 0) throw ConfigError("kernel sizes must be odd and >= 1");
    }
}

namespace {

void check_kernel(int k) {
    if (k < 1 || k % 2 == 0) throw ConfigError("kernel must be odd and >= 1, got " + std::to_string(k));
}

/// Summed-area table with a zero row/column in front.
struct Integral {
    int w, h;
    std::vector<std::int32_t> s;

    explicit Integral(const BinaryMask& m) : w(m.width), h(m.height), s(static_cast<std::size_t>(w + 1) * (h + 1), 0) {
        for (int y = 0; y < h; ++y) {
            std::int32_t row = 0;
            for (int x = 0; x < w; ++x) {
                row += m.at(x, y);
                s[idx(x + 1, y + 1)] = s[idx(x + 1, y)] + row;
            }
        }
    }
    std::size_t idx(int x, int y) const { return static_cast<std::size_t>(y) * (w + 1) + x; }

    // Ones in [x0, x1) x [y0, y1), clipped to the raster.
    std::int32_t box(int x0, int y0, int x1, int y1) const {
        x0 = std::max(x0, 0);
        y0 = std::max(y0, 0);
        x1 = std::min(x1, w);
        y1 = std::min(y1, h);
        if (x0 >= x1 || y0 >= y1) return 0;
        return s[idx(x1, y1)] - s[idx(x0, y1)] - s[idx(x1, y0)] + s[idx(x0, y0)];
    }
};

}  // namespace

BinaryMask threshold_mask(const ScalarRaster& raster, double t) {
    BinaryMask m(raster.width, raster.height);
    for (std::size_t i = 0; i < raster.values.size(); ++i) {
        const float v = raster.values[i];
        if (!std::isfinite(v)) throw NumericError("non-finite value in probability raster");
        m.bits[i] = v >= t ? 1 : 0;
    }
    return m;
}

BinaryMask remove_small_fragments(const BinaryMask& mask, int min_area) {
    if (min_area < 0) throw ConfigError("min_area must be >= 0");
    BinaryMask out = mask;
    if (min_area <= 1) return out;
    const int w = mask.width;
    const int h = mask.height;
    std::vector<std::uint8_t> visited(mask.bits.size(), 0);
    std::vector<std::int32_t> stack;
    std::vector<std::int32_t> component;
    for (std::int32_t start = 0; start < static_cast<std::int32_t>(mask.bits.size()); ++start) {
        if (!mask.bits[start] || visited[start]) continue;
        component.clear();
        stack.assign(1, start);
        visited[start] = 1;
        while (!stack.empty()) {
            const std::int32_t i = stack.back();
            stack.pop_back();
            component.push_back(i);
            const int x = i % w;
            const int y = i / w;
            for (int dy = -1; dy <= 1; ++dy) {
                const int ny = y + dy;
                if (ny < 0 || ny >= h) continue;
                for (int dx = -1; dx <= 1; ++dx) {
                    const int nx = x + dx;
                    if (nx < 0 || nx >= w) continue;
                    const std::int32_t j = ny * w + nx;
                    if (mask.bits[j] && !visited[j]) {
                        visited[j] = 1;
                        stack.push_back(j);
                    }
                }
            }
        }
        if (static_cast<std::int64_t>(component.size()) < min_area) {
            for (std::int32_t i : component) out.bits[i] = 0;
        }
    }
    return out;
}

BinaryMask erode(const BinaryMask& mask, int kernel) {
    check_kernel(kernel);
    const int r = kernel / 2;
    const Integral I(mask);
    const std::int32_t full = kernel * kernel;
    BinaryMask out(mask.width, mask.height);
    for (int y = 0; y < mask.height; ++y) {
        for (int x = 0; x < mask.width; ++x) {
            out.at(x, y) = I.box(x - r, y - r, x + r + 1, y + r + 1) == full ? 1 : 0;
        }
    }
    return out;
}

BinaryMask dilate(const BinaryMask& mask, int kernel) {
    check_kernel(kernel);
    const int r = kernel / 2;
    const Integral I(mask);
    BinaryMask out(mask.width, mask.height);
    for (int y = 0; y < mask.height; ++y) {
        for (int x = 0; x < mask.width; ++x) {
            out.at(x, y) = I.box(x - r, y - r, x + r + 1, y + r + 1) > 0 ? 1 : 0;
        }
    }
    return out;
}

BinaryMask morphological_open(const BinaryMask& mask, int kernel) { return dilate(erode(mask, kernel), kernel); }

BinaryMask median_blur(const BinaryMask& mask, int kernel) {
    check_kernel(kernel);
    if (mask.width == 0 || mask.height == 0) return mask;
    const int r = kernel / 2;
    BinaryMask padded(mask.width + 2 * r, mask.height + 2 * r);
    for (int y = 0; y < padded.height; ++y) {
        const int sy = std::clamp(y - r, 0, mask.height - 1);
        for (int x = 0; x < padded.width; ++x) {
            padded.at(x, y) = mask.at(std::clamp(x - r, 0, mask.width - 1), sy);
        }
    }
    const Integral I(padded);
    const std::int32_t half = kernel * kernel / 2;
    BinaryMask out(mask.width, mask.height);
    for (int y = 0; y < mask.height; ++y) {
        for (int x = 0; x < mask.width; ++x) {
            out.at(x, y) = I.box(x, y, x + kernel, y + kernel) > half ? 1 : 0;
        }
    }
    return out;
}

BinaryMask postprocess(const ScalarRaster& raster, const PostprocessConfig& config) {
    validate(config);
    BinaryMask m = threshold_mask(raster, config.threshold);
    m = remove_small_fragments(m, config.min_fragment_area);
    m = morphological_open(m, config.opening_kernel);
    return median_blur(m, config.median_kernel);
}

BinaryMask resize_mask_nearest(const BinaryMask& mask, int width, int height) {
    if (width < 1 || height < 1) throw ConfigError("resize target must be at least 1x1");
    if (mask.width < 1 || mask.height < 1) throw InputError("cannot resize an empty mask");
    std::vector<int> sx(static_cast<std::size_t>(width));
    for (int x = 0; x < width; ++x) {
        sx[static_cast<std::size_t>(x)] =
            static_cast<int>(std::min<std::int64_t>((2LL * x + 1) * mask.width / (2LL * width), mask.width - 1));
    }
    BinaryMask out(width, height);
    for (int y = 0; y < height; ++y) {
        const int syy =
            static_cast<int>(std::min<std::int64_t>((2LL * y + 1) * mask.height / (2LL * height), mask.height - 1));
        for (int x = 0; x < width; ++x) out.at(x, y) = mask.at(sx[static_cast<std::size_t>(x)], syy);
    }
    return out;
}

BinaryMask upscale_nearest(const BinaryMask& mask, int width, int height) {
    if (width < mask.width || height < mask.height) throw ConfigError("upscale target is smaller than the mask");
    return resize_mask_nearest(mask, width, height);
}

RgbImage overlay_confusion(const BinaryMask& pred, const BinaryMask& truth) {
    if (!pred.same_dims(truth)) throw ConsistencyError("prediction and truth masks differ in size");
    RgbImage img(pred.width, pred.height);
    for (std::size_t i = 0; i < pred.bits.size(); ++i) {
        std::uint8_t* p = img.data.data() + 3 * i;
        if (pred.bits[i] && truth.bits[i]) {
            p[1] = 255;
        } else if (pred.bits[i]) {
            p[0] = p[1] = p[2] = 255;
        } else if (truth.bits[i]) {
            p[0] = 255;
        }
    }
    return img;
}

}  // namespace wsiseg
