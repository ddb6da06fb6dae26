#include "wsiseg/heatmap.hpp"

#include "wsiseg/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace wsiseg {

namespace fs = std::filesystem;
using nlohmann::json;

Heatmap stitch_heatmap(const PatchGrid& grid, std::span<const PatchProbability> probs) {
    Heatmap hm;
    hm.slide_id = grid.slide_id;
    hm.cols = grid.cols;
    hm.rows = grid.rows;
    hm.values.assign(static_cast<std::size_t>(grid.cols) * grid.rows, 0.0);
    std::vector<std::uint8_t> seen(hm.values.size(), 0);
    for (const PatchProbability& p : probs) {
        if (p.grid_x < 0 || p.grid_y < 0 || p.grid_x >= grid.cols || p.grid_y >= grid.rows) {
            throw ConsistencyError("probability for (" + std::to_string(p.grid_x) + "," + std::to_string(p.grid_y) +
                                   ") lies outside the " + std::to_string(grid.cols) + "x" +
                                   std::to_string(grid.rows) + " grid");
        }
        const std::size_t i = static_cast<std::size_t>(p.grid_y) * grid.cols + p.grid_x;
        if (seen[i]) {
            throw ConsistencyError("duplicate probability for (" + std::to_string(p.grid_x) + "," +
                                   std::to_string(p.grid_y) + ")");
        }
        if (grid.records[i].label == PatchLabel::GlassExcluded) {
            throw ConsistencyError("probability supplied for glass-excluded patch (" + std::to_string(p.grid_x) + "," +
                                   std::to_string(p.grid_y) + ")");
        }
        if (!std::isfinite(p.p_tumor) || p.p_tumor < 0.0 || p.p_tumor > 1.0) {
            throw NumericError("probability outside [0, 1]");
        }
        seen[i] = 1;
        hm.values[i] = p.p_tumor;
    }
    return hm;
}

ScalarRaster resize_align_corners(std::span<const double> values, int in_width, int in_height, int out_width,
                                  int out_height) {
    if (out_width < 1 || out_height < 1) throw ConfigError("resize target must be at least 1x1");
    if (in_width < 1 || in_height < 1 || values.size() != static_cast<std::size_t>(in_width) * in_height) {
        throw ConsistencyError("raster dimensions do not match its data");
    }
    struct Tap {
        int i0, i1;
        double f;
    };
    auto taps = [](int out, int in) {
        std::vector<Tap> t(static_cast<std::size_t>(out));
        for (int d = 0; d < out; ++d) {
            const double s = out == 1 ? (in - 1) / 2.0 : static_cast<double>(d) * (in - 1) / (out - 1);
            const int i0 = std::min(static_cast<int>(std::floor(s)), in - 1);
            t[static_cast<std::size_t>(d)] = {i0, std::min(i0 + 1, in - 1), s - i0};
        }
        return t;
    };
    const auto tx = taps(out_width, in_width);
    const auto ty = taps(out_height, in_height);
    auto V = [&](int x, int y) { return values[static_cast<std::size_t>(y) * in_width + x]; };

    ScalarRaster out(out_width, out_height);
    for (int y = 0; y < out_height; ++y) {
        const Tap& b = ty[static_cast<std::size_t>(y)];
        for (int x = 0; x < out_width; ++x) {
            const Tap& a = tx[static_cast<std::size_t>(x)];
            const double v00 = V(a.i0, b.i0);
            const double v10 = V(a.i1, b.i0);
            const double v01 = V(a.i0, b.i1);
            const double v11 = V(a.i1, b.i1);
            const double top = v00 + (v10 - v00) * a.f;
            const double bottom = v01 + (v11 - v01) * a.f;
            out.at(x, y) = static_cast<float>(top + (bottom - top) * b.f);
        }
    }
    return out;
}

ScalarRaster resize_heatmap(const Heatmap& heatmap, int target) {
    return resize_align_corners(heatmap.values, heatmap.cols, heatmap.rows, target, target);
}

ScalarRaster resize_heatmap_registered(const Heatmap& hm, const PatchGrid& grid, int out_width, int out_height) {
    if (out_width < 1 || out_height < 1) throw ConfigError("resize target must be at least 1x1");
    if (hm.cols != grid.cols || hm.rows != grid.rows) throw ConsistencyError("heatmap does not match the patch grid");
    if (hm.cols < 1 || hm.rows < 1) throw ConsistencyError("empty heatmap");
    struct Tap {
        int i0, i1;
        double f;
    };
    auto taps = [&](int out, int level_extent, int cells) {
        std::vector<Tap> t(static_cast<std::size_t>(out));
        for (int d = 0; d < out; ++d) {
            const double u = (d + 0.5) * level_extent / out;
            const double g = std::clamp((u - grid.patch_size / 2.0) / grid.patch_size, 0.0, cells - 1.0);
            const int i0 = std::min(static_cast<int>(std::floor(g)), cells - 1);
            t[static_cast<std::size_t>(d)] = {i0, std::min(i0 + 1, cells - 1), g - i0};
        }
        return t;
    };
    const auto tx = taps(out_width, grid.level_width, hm.cols);
    const auto ty = taps(out_height, grid.level_height, hm.rows);
    ScalarRaster out(out_width, out_height);
    for (int y = 0; y < out_height; ++y) {
        const Tap& b = ty[static_cast<std::size_t>(y)];
        for (int x = 0; x < out_width; ++x) {
            const Tap& a = tx[static_cast<std::size_t>(x)];
            const double top = hm.at(a.i0, b.i0) + (hm.at(a.i1, b.i0) - hm.at(a.i0, b.i0)) * a.f;
            const double bottom = hm.at(a.i0, b.i1) + (hm.at(a.i1, b.i1) - hm.at(a.i0, b.i1)) * a.f;
            out.at(x, y) = static_cast<float>(top + (bottom - top) * b.f);
        }
    }
    return out;
}

ScalarRaster RefinementInput::channel(int c) const {
    if (c < 0 || c >= kChannels) throw BoundsError("refinement input has 4 channels");
    ScalarRaster r(width, height);
    const auto begin = planes.begin() + static_cast<std::ptrdiff_t>(c) * width * height;
    std::copy(begin, begin + static_cast<std::ptrdiff_t>(width) * height, r.values.begin());
    return r;
}

RefinementInput fuse_inputs(const RgbImage& rgb, const ScalarRaster& heatmap) {
    if (rgb.width != heatmap.width || rgb.height != heatmap.height) {
        throw ConsistencyError("RGB overview is " + std::to_string(rgb.width) + "x" + std::to_string(rgb.height) +
                               " but heatmap is " + std::to_string(heatmap.width) + "x" +
                               std::to_string(heatmap.height));
    }
    RefinementInput in;
    in.width = rgb.width;
    in.height = rgb.height;
    const std::size_t n = static_cast<std::size_t>(rgb.width) * rgb.height;
    in.planes.resize(4 * n);
    for (std::size_t i = 0; i < n; ++i) {
        for (int c = 0; c < 3; ++c) in.planes[c * n + i] = static_cast<float>(rgb.data[3 * i + c] / 255.0);
        in.planes[3 * n + i] = heatmap.values[i];
    }
    return in;
}

void write_heatmap(const fs::path& png_path, const fs::path& json_path, const Heatmap& hm) {
    ScalarRaster r(hm.cols, hm.rows);
    std::transform(hm.values.begin(), hm.values.end(), r.values.begin(), [](double v) { return static_cast<float>(v); });
    write_unit_png16(png_path, r);
    if (json_path.has_parent_path()) fs::create_directories(json_path.parent_path());
    const json j = {{"slide_id", hm.slide_id}, {"cols", hm.cols}, {"rows", hm.rows}, {"encoding", "round(p*65535)"}};
    std::ofstream(json_path) << j.dump(2) << '\n';
}

Heatmap read_heatmap(const fs::path& png_path, const fs::path& json_path) {
    std::ifstream in(json_path);
    if (!in) throw InputError("cannot open heatmap sidecar " + json_path.string());
    Heatmap hm;
    try {
        const json j = json::parse(in);
        hm.slide_id = j.at("slide_id").get<std::string>();
        hm.cols = j.at("cols").get<int>();
        hm.rows = j.at("rows").get<int>();
    } catch (const json::exception& e) {
        throw InputError("malformed heatmap sidecar: " + std::string(e.what()));
    }
    const ScalarRaster r = read_unit_png16(png_path);
    if (r.width != hm.cols || r.height != hm.rows) throw ConsistencyError("heatmap PNG does not match its sidecar");
    hm.values.assign(r.values.begin(), r.values.end());
    for (auto& v : hm.values) v = std::round(v * 65535.0) / 65535.0;
    return hm;
}

namespace {

void write_floats_le(std::ofstream& out, std::span<const float> v) {
    if constexpr (std::endian::native == std::endian::little) {
        out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size_bytes()));
    } else {
        for (float f : v) {
            auto u = std::bit_cast<std::uint32_t>(f);
            const char b[4] = {char(u), char(u >> 8), char(u >> 16), char(u >> 24)};
            out.write(b, 4);
        }
    }
}

}  // namespace

void write_planar_f32(const fs::path& raw_path, const fs::path& json_path, int width, int height, int channels,
                      std::span<const float> planes) {
    if (planes.size() != static_cast<std::size_t>(width) * height * channels) {
        throw ConsistencyError("plane data does not match the declared dimensions");
    }
    if (raw_path.has_parent_path()) fs::create_directories(raw_path.parent_path());
    std::ofstream out(raw_path, std::ios::binary);
    if (!out) throw InputError("cannot write " + raw_path.string());
    write_floats_le(out, planes);
    if (!json_path.empty()) {
        const json j = {{"width", width},       {"height", height},         {"channels", channels},
                        {"layout", "planar"},   {"dtype", "float32"},       {"byte_order", "little"},
                        {"data", raw_path.filename().string()}};
        std::ofstream(json_path) << j.dump(2) << '\n';
    }
}

std::vector<float> read_planar_f32(const fs::path& raw_path, int width, int height, int channels) {
    const std::size_t n = static_cast<std::size_t>(width) * height * channels;
    std::ifstream in(raw_path, std::ios::binary | std::ios::ate);
    if (!in) throw InputError("cannot open " + raw_path.string());
    if (static_cast<std::size_t>(in.tellg()) != n * 4) {
        throw ConsistencyError(raw_path.string() + " holds " + std::to_string(static_cast<long long>(in.tellg())) +
                               " bytes, expected " + std::to_string(n * 4));
    }
    in.seekg(0);
    std::vector<float> v(n);
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * 4));
    if constexpr (std::endian::native != std::endian::little) {
        for (float& f : v) f = std::bit_cast<float>(__builtin_bswap32(std::bit_cast<std::uint32_t>(f)));
    }
    return v;
}

namespace {

json read_header(const fs::path& json_path) {
    std::ifstream in(json_path);
    if (!in) throw InputError("cannot open " + json_path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw InputError("malformed header " + json_path.string() + ": " + e.what());
    }
}

}  // namespace

void write_refinement_input(const fs::path& raw_path, const fs::path& json_path, const RefinementInput& input) {
    write_planar_f32(raw_path, json_path, input.width, input.height, RefinementInput::kChannels, input.planes);
}

RefinementInput read_refinement_input(const fs::path& raw_path, const fs::path& json_path) {
    const json h = read_header(json_path);
    RefinementInput in;
    in.width = h.at("width").get<int>();
    in.height = h.at("height").get<int>();
    if (h.at("channels").get<int>() != RefinementInput::kChannels) throw FormatError("refinement input must have 4 channels");
    in.planes = read_planar_f32(raw_path, in.width, in.height, RefinementInput::kChannels);
    return in;
}

void write_scalar_raster(const fs::path& raw_path, const fs::path& json_path, const ScalarRaster& raster) {
    write_planar_f32(raw_path, json_path, raster.width, raster.height, 1, raster.values);
}

ScalarRaster read_scalar_raster(const fs::path& raw_path, const fs::path& json_path) {
    const json h = read_header(json_path);
    ScalarRaster r;
    r.width = h.at("width").get<int>();
    r.height = h.at("height").get<int>();
    if (h.at("channels").get<int>() != 1) throw FormatError("scalar raster must have 1 channel");
    r.values = read_planar_f32(raw_path, r.width, r.height, 1);
    return r;
}

}  // namespace wsiseg
