#include "wsiseg/tissue_grid.hpp"

#include "wsiseg/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace wsiseg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Largest Sobel magnitude attainable on 8-bit input.
const double kSobelMax = 4.0 * 255.0 * std::sqrt(2.0);

int clampi(int v, int lo, int hi) { return std::min(std::max(v, lo), hi); }

}  // namespace

BinaryMask tissue_mask_from_image(const RgbImage& image, const TissueParams& params) {
    if (!(params.gradient_threshold > 0.0 && params.gradient_threshold < 1.0) ||
        !(params.brightness_ceiling > 0.0 && params.brightness_ceiling < 1.0)) {
        throw ConfigError("tissue thresholds must lie in (0, 1)");
    }
    const int w = image.width;
    const int h = image.height;
    std::vector<double> lum(static_cast<std::size_t>(w) * h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) lum[static_cast<std::size_t>(y) * w + x] = luminance(image.pixel(x, y));
    }
    auto L = [&](int x, int y) { return lum[static_cast<std::size_t>(clampi(y, 0, h - 1)) * w + clampi(x, 0, w - 1)]; };

    std::vector<double> grad(lum.size());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double gx = (L(x + 1, y - 1) + 2 * L(x + 1, y) + L(x + 1, y + 1)) -
                              (L(x - 1, y - 1) + 2 * L(x - 1, y) + L(x - 1, y + 1));
            const double gy = (L(x - 1, y + 1) + 2 * L(x, y + 1) + L(x + 1, y + 1)) -
                              (L(x - 1, y - 1) + 2 * L(x, y - 1) + L(x + 1, y - 1));
            grad[static_cast<std::size_t>(y) * w + x] = std::sqrt(gx * gx + gy * gy) / kSobelMax;
        }
    }
    auto G = [&](int x, int y) { return grad[static_cast<std::size_t>(clampi(y, 0, h - 1)) * w + clampi(x, 0, w - 1)]; };

    const double dark = params.brightness_ceiling * 255.0;
    BinaryMask mask(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) s += G(x + dx, y + dy);
            const bool tissue = s / 9.0 > params.gradient_threshold || lum[static_cast<std::size_t>(y) * w + x] < dark;
            mask.at(x, y) = tissue ? 1 : 0;
        }
    }
    return mask;
}

TissueMask compute_tissue_mask(const TiledSlide& slide, int mask_level, const TissueParams& params) {
    return {mask_level, tissue_mask_from_image(slide.read_level(mask_level), params)};
}

int default_mask_level(const TiledSlide& slide) {
    int best = 0;
    double best_err = 1e300;
    for (const LevelDesc& d : slide.levels()) {
        const double err = std::abs(std::log2(d.downsample_factor) - 5.0);
        if (err < best_err) {
            best_err = err;
            best = d.level;
        }
    }
    return best;
}

std::string_view to_string(PatchLabel label) {
    switch (label) {
        case PatchLabel::GlassExcluded: return "GLASS_EXCLUDED";
        case PatchLabel::Eligible: return "ELIGIBLE";
        case PatchLabel::NonTumor: return "NON_TUMOR";
        case PatchLabel::Tumor: return "TUMOR";
        case PatchLabel::AmbiguousExcluded: return "AMBIGUOUS_EXCLUDED";
    }
    return "?";
}

PatchLabel parse_patch_label(std::string_view text) {
    for (PatchLabel l : {PatchLabel::GlassExcluded, PatchLabel::Eligible, PatchLabel::NonTumor, PatchLabel::Tumor,
                         PatchLabel::AmbiguousExcluded}) {
        if (to_string(l) == text) return l;
    }
    throw InputError("unknown patch label '" + std::string(text) + "'");
}

PatchLabel label_patch(double tissue_fraction, std::optional<double> tumor_fraction) {
    if (!(tissue_fraction > kMinTissueFraction)) return PatchLabel::GlassExcluded;
    if (!tumor_fraction) return PatchLabel::Eligible;
    if (*tumor_fraction >= kMinTumorFraction) return PatchLabel::Tumor;
    if (*tumor_fraction == 0.0) return PatchLabel::NonTumor;
    return PatchLabel::AmbiguousExcluded;
}

std::vector<std::size_t> PatchGrid::eligible_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (records[i].tissue_eligible()) out.push_back(i);
    }
    return out;
}

namespace {

struct AxisWeight {
    int index;
    double weight;
};

// Overlap of [a, b) (in mask pixel units) with each mask pixel column.
std::vector<AxisWeight> axis_weights(double a, double b, int extent) {
    std::vector<AxisWeight> out;
    a = std::clamp(a, 0.0, static_cast<double>(extent));
    b = std::clamp(b, 0.0, static_cast<double>(extent));
    for (int i = static_cast<int>(std::floor(a)); i < extent && i < b; ++i) {
        const double wgt = std::min(b, i + 1.0) - std::max(a, static_cast<double>(i));
        if (wgt > 0.0) out.push_back({i, wgt});
    }
    return out;
}

void check_mask_level(const TiledSlide& slide, const LevelMask& m, const char* what) {
    const LevelDesc& d = slide.level(m.level);
    if (m.mask.width != d.width || m.mask.height != d.height) {
        throw ConsistencyError(std::string(what) + " mask is " + std::to_string(m.mask.width) + "x" +
                               std::to_string(m.mask.height) + " but level " + std::to_string(m.level) + " is " +
                               std::to_string(d.width) + "x" + std::to_string(d.height));
    }
}

}  // namespace

double mask_area_fraction(const TiledSlide& slide, const LevelMask& m, int level, int x, int y, int w, int h) {
    const double ratio = slide.level(level).downsample_factor / slide.level(m.level).downsample_factor;
    const auto wx = axis_weights(x * ratio, (x + w) * ratio, m.mask.width);
    const auto wy = axis_weights(y * ratio, (y + h) * ratio, m.mask.height);
    double total_x = 0.0;
    for (const auto& a : wx) total_x += a.weight;
    double total_y = 0.0;
    double covered = 0.0;
    for (const auto& b : wy) {
        total_y += b.weight;
        const std::uint8_t* row = &m.mask.bits[static_cast<std::size_t>(b.index) * m.mask.width];
        double line = 0.0;
        for (const auto& a : wx) {
            if (row[a.index]) line += a.weight;
        }
        covered += line * b.weight;
    }
    const double area = total_x * total_y;
    return area > 0.0 ? std::min(1.0, covered / area) : 0.0;
}

PatchGrid build_patch_grid(const TiledSlide& slide, int level, int patch_size, const TissueMask& tissue,
                           const LevelMask* truth) {
    if (patch_size < 8) throw ConfigError("patch size must be at least 8");
    const LevelDesc& d = slide.level(level);
    check_mask_level(slide, tissue, "tissue");
    if (truth) check_mask_level(slide, *truth, "truth");

    PatchGrid grid;
    grid.slide_id = slide.slide_id();
    grid.level = level;
    grid.patch_size = patch_size;
    grid.level_width = d.width;
    grid.level_height = d.height;
    grid.cols = (d.width + patch_size - 1) / patch_size;
    grid.rows = (d.height + patch_size - 1) / patch_size;
    grid.records.reserve(static_cast<std::size_t>(grid.cols) * grid.rows);
    for (int gy = 0; gy < grid.rows; ++gy) {
        for (int gx = 0; gx < grid.cols; ++gx) {
            PatchRecord r;
            r.grid_x = gx;
            r.grid_y = gy;
            r.level = level;
            r.origin_x = gx * patch_size;
            r.origin_y = gy * patch_size;
            r.patch_size = patch_size;
            r.width = std::min(patch_size, d.width - r.origin_x);
            r.height = std::min(patch_size, d.height - r.origin_y);
            r.tissue_fraction = mask_area_fraction(slide, tissue, level, r.origin_x, r.origin_y, r.width, r.height);
            if (truth) {
                r.tumor_fraction = mask_area_fraction(slide, *truth, level, r.origin_x, r.origin_y, r.width, r.height);
            }
            r.label = label_patch(r.tissue_fraction, r.tumor_fraction);
            grid.records.push_back(r);
        }
    }
    return grid;
}

RgbImage extract_patch(const TiledSlide& slide, const PatchRecord& r, int out_size) {
    if (out_size < 1) throw ConfigError("patch output size must be positive");
    if (r.level < 0 || r.level >= slide.level_count()) throw ConsistencyError("patch record refers to a missing level");
    const LevelDesc& d = slide.level(r.level);
    const bool geometry_ok = r.patch_size > 0 && r.origin_x == r.grid_x * r.patch_size &&
                             r.origin_y == r.grid_y * r.patch_size && r.origin_x < d.width && r.origin_y < d.height &&
                             r.width == std::min(r.patch_size, d.width - r.origin_x) &&
                             r.height == std::min(r.patch_size, d.height - r.origin_y);
    if (!geometry_ok) {
        throw ConsistencyError("patch record (" + std::to_string(r.grid_x) + "," + std::to_string(r.grid_y) +
                               ") does not belong to slide " + slide.slide_id());
    }
    const int w = std::min(r.width, out_size);
    const int h = std::min(r.height, out_size);
    const RgbImage content = slide.read_region({r.level, r.origin_x, r.origin_y, w, h});
    if (w == out_size && h == out_size) return content;
    RgbImage out(out_size, out_size, 0);
    for (int y = 0; y < h; ++y) {
        std::copy_n(content.pixel(0, y), static_cast<std::size_t>(w) * 3, out.pixel(0, y));
    }
    return out;
}

void check_grid_matches(const TiledSlide& slide, const PatchGrid& grid) {
    if (grid.slide_id != slide.slide_id()) {
        throw ConsistencyError("grid belongs to slide '" + grid.slide_id + "', not '" + slide.slide_id() + "'");
    }
    if (grid.level < 0 || grid.level >= slide.level_count()) throw ConsistencyError("grid level missing from slide");
    const LevelDesc& d = slide.level(grid.level);
    if (d.width != grid.level_width || d.height != grid.level_height) {
        throw ConsistencyError("grid level dimensions do not match slide");
    }
}

void write_patch_grid(const fs::path& csv_path, const fs::path& json_path, const PatchGrid& grid) {
    if (csv_path.has_parent_path()) fs::create_directories(csv_path.parent_path());
    if (json_path.has_parent_path()) fs::create_directories(json_path.parent_path());
    std::ofstream csv(csv_path);
    csv << "grid_x,grid_y,level,origin_x,origin_y,patch_size,width,height,tissue_fraction,tumor_fraction,label\n";
    char buf[64];
    for (const PatchRecord& r : grid.records) {
        csv << r.grid_x << ',' << r.grid_y << ',' << r.level << ',' << r.origin_x << ',' << r.origin_y << ','
            << r.patch_size << ',' << r.width << ',' << r.height << ',';
        std::snprintf(buf, sizeof buf, "%.17g", r.tissue_fraction);
        csv << buf << ',';
        if (r.tumor_fraction) {
            std::snprintf(buf, sizeof buf, "%.17g", *r.tumor_fraction);
            csv << buf;
        }
        csv << ',' << to_string(r.label) << '\n';
    }
    json counts = json::object();
    for (PatchLabel l : {PatchLabel::GlassExcluded, PatchLabel::Eligible, PatchLabel::NonTumor, PatchLabel::Tumor,
                         PatchLabel::AmbiguousExcluded}) {
        counts[std::string(to_string(l))] =
            std::count_if(grid.records.begin(), grid.records.end(), [l](const PatchRecord& r) { return r.label == l; });
    }
    const json header = {{"slide_id", grid.slide_id},     {"level", grid.level},
                         {"patch_size", grid.patch_size}, {"level_width", grid.level_width},
                         {"level_height", grid.level_height}, {"cols", grid.cols},
                         {"rows", grid.rows},             {"label_counts", counts}};
    std::ofstream(json_path) << header.dump(2) << '\n';
}

PatchGrid read_patch_grid(const fs::path& csv_path, const fs::path& json_path) {
    std::ifstream hj(json_path);
    if (!hj) throw InputError("cannot open grid header " + json_path.string());
    PatchGrid grid;
    try {
        const json h = json::parse(hj);
        grid.slide_id = h.at("slide_id").get<std::string>();
        grid.level = h.at("level").get<int>();
        grid.patch_size = h.at("patch_size").get<int>();
        grid.level_width = h.at("level_width").get<int>();
        grid.level_height = h.at("level_height").get<int>();
        grid.cols = h.at("cols").get<int>();
        grid.rows = h.at("rows").get<int>();
    } catch (const json::exception& e) {
        throw InputError("malformed grid header " + json_path.string() + ": " + e.what());
    }
    std::ifstream csv(csv_path);
    if (!csv) throw InputError("cannot open grid table " + csv_path.string());
    std::string line;
    std::getline(csv, line);
    while (std::getline(csv, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) f.push_back(cell);
        if (f.size() != 11) throw InputError("malformed grid row: " + line);
        PatchRecord r;
        try {
            r.grid_x = std::stoi(f[0]);
            r.grid_y = std::stoi(f[1]);
            r.level = std::stoi(f[2]);
            r.origin_x = std::stoi(f[3]);
            r.origin_y = std::stoi(f[4]);
            r.patch_size = std::stoi(f[5]);
            r.width = std::stoi(f[6]);
            r.height = std::stoi(f[7]);
            r.tissue_fraction = std::stod(f[8]);
            if (!f[9].empty()) r.tumor_fraction = std::stod(f[9]);
        } catch (const std::exception&) {
            throw InputError("malformed grid row: " + line);
        }
        r.label = parse_patch_label(f[10]);
        grid.records.push_back(r);
    }
    if (grid.records.size() != static_cast<std::size_t>(grid.cols) * grid.rows) {
        throw ConsistencyError("grid table has " + std::to_string(grid.records.size()) + " rows, header implies " +
                               std::to_string(grid.cols * grid.rows));
    }
    return grid;
}

}  // namespace wsiseg
