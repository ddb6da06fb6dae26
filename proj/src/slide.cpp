#include "wsiseg/slide.hpp"

#include "wsiseg/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace wsiseg {

namespace fs = std::filesystem;
using nlohmann::json;

struct TiledSlide::Storage {
    std::string slide_id;
    int tile_size = 0;
    fs::path source_path;
    std::vector<LevelDesc> levels;
    std::vector<int> tiles_x;
    std::vector<int> tiles_y;
    std::vector<std::vector<RgbImage>> tiles;  // per level, row-major over (ty, tx)
};

namespace {

bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

int ceil_div(int a, int b) { return (a + b - 1) / b; }

RgbImage crop(const RgbImage& src, int x, int y, int w, int h) {
    RgbImage out(w, h);
    for (int r = 0; r < h; ++r) {
        std::memcpy(out.pixel(0, r), src.pixel(x, y + r), static_cast<std::size_t>(w) * 3);
    }
    return out;
}

std::string tile_name(int level, int tx, int ty) {
    return "L" + std::to_string(level) + "_x" + std::to_string(tx) + "_y" + std::to_string(ty) + ".png";
}

void add_level(TiledSlide::Storage& s, int index, const RgbImage& img) {
    LevelDesc d{index, img.width, img.height, std::ldexp(1.0, index)};
    const int nx = ceil_div(img.width, s.tile_size);
    const int ny = ceil_div(img.height, s.tile_size);
    std::vector<RgbImage> tiles;
    tiles.reserve(static_cast<std::size_t>(nx) * ny);
    for (int ty = 0; ty < ny; ++ty) {
        for (int tx = 0; tx < nx; ++tx) {
            const int x = tx * s.tile_size;
            const int y = ty * s.tile_size;
            tiles.push_back(crop(img, x, y, std::min(s.tile_size, img.width - x), std::min(s.tile_size, img.height - y)));
        }
    }
    s.levels.push_back(d);
    s.tiles_x.push_back(nx);
    s.tiles_y.push_back(ny);
    s.tiles.push_back(std::move(tiles));
}

}  // namespace

RgbImage halve(const RgbImage& src) {
    const int w = (src.width + 1) / 2;
    const int h = (src.height + 1) / 2;
    RgbImage out(w, h);
    for (int y = 0; y < h; ++y) {
        const int y0 = 2 * y;
        const int y1 = std::min(2 * y + 1, src.height - 1);
        for (int x = 0; x < w; ++x) {
            const int x0 = 2 * x;
            const int x1 = std::min(2 * x + 1, src.width - 1);
            const std::uint8_t* a = src.pixel(x0, y0);
            const std::uint8_t* b = src.pixel(x1, y0);
            const std::uint8_t* c = src.pixel(x0, y1);
            const std::uint8_t* d = src.pixel(x1, y1);
            std::uint8_t* o = out.pixel(x, y);
            for (int ch = 0; ch < 3; ++ch) {
                o[ch] = static_cast<std::uint8_t>((a[ch] + b[ch] + c[ch] + d[ch] + 2) / 4);
            }
        }
    }
    return out;
}

TiledSlide TiledSlide::from_image(std::string slide_id, const RgbImage& level0, int tile_size, fs::path source_path) {
    if (level0.empty()) throw InputError("cannot build a slide from an empty image");
    if (!is_power_of_two(tile_size)) throw ConfigError("tile size must be a power of two, got " + std::to_string(tile_size));
    auto s = std::make_shared<Storage>();
    s->slide_id = std::move(slide_id);
    s->tile_size = tile_size;
    s->source_path = std::move(source_path);

    add_level(*s, 0, level0);
    RgbImage current;
    const RgbImage* prev = &level0;
    while (std::max(prev->width, prev->height) > tile_size) {
        current = halve(*prev);
        add_level(*s, static_cast<int>(s->levels.size()), current);
        prev = &current;
    }
    TiledSlide slide;
    slide.storage_ = std::move(s);
    return slide;
}

const std::string& TiledSlide::slide_id() const { return storage_->slide_id; }
int TiledSlide::tile_size() const { return storage_->tile_size; }
const fs::path& TiledSlide::source_path() const { return storage_->source_path; }
const std::vector<LevelDesc>& TiledSlide::levels() const { return storage_->levels; }

const LevelDesc& TiledSlide::level(int index) const {
    if (index < 0 || index >= level_count()) {
        throw BoundsError("level " + std::to_string(index) + " out of range [0, " + std::to_string(level_count()) + ")");
    }
    return storage_->levels[static_cast<std::size_t>(index)];
}

int TiledSlide::tiles_x(int lv) const { return storage_->tiles_x[static_cast<std::size_t>(level(lv).level)]; }
int TiledSlide::tiles_y(int lv) const { return storage_->tiles_y[static_cast<std::size_t>(level(lv).level)]; }

const RgbImage& TiledSlide::tile(int lv, int tx, int ty) const {
    const int nx = tiles_x(lv);
    const int ny = tiles_y(lv);
    if (tx < 0 || ty < 0 || tx >= nx || ty >= ny) throw BoundsError("tile index out of range");
    return storage_->tiles[static_cast<std::size_t>(lv)][static_cast<std::size_t>(ty) * nx + tx];
}

RgbImage TiledSlide::read_region(const Region& r) const {
    const LevelDesc& d = level(r.level);
    if (r.width <= 0 || r.height <= 0) throw BoundsError("region must have positive size");
    if (r.x < 0 || r.y < 0 || r.x > d.width - r.width || r.y > d.height - r.height) {
        throw BoundsError("region [" + std::to_string(r.x) + "," + std::to_string(r.y) + " " + std::to_string(r.width) +
                          "x" + std::to_string(r.height) + "] exceeds level " + std::to_string(r.level) + " bounds " +
                          std::to_string(d.width) + "x" + std::to_string(d.height));
    }
    const int ts = tile_size();
    RgbImage out(r.width, r.height);
    for (int ty = r.y / ts; ty <= (r.y + r.height - 1) / ts; ++ty) {
        for (int tx = r.x / ts; tx <= (r.x + r.width - 1) / ts; ++tx) {
            const RgbImage& t = tile(r.level, tx, ty);
            const int tx0 = tx * ts;
            const int ty0 = ty * ts;
            const int x0 = std::max(r.x, tx0);
            const int x1 = std::min(r.x + r.width, tx0 + t.width);
            const int y0 = std::max(r.y, ty0);
            const int y1 = std::min(r.y + r.height, ty0 + t.height);
            for (int y = y0; y < y1; ++y) {
                std::memcpy(out.pixel(x0 - r.x, y - r.y), t.pixel(x0 - tx0, y - ty0),
                            static_cast<std::size_t>(x1 - x0) * 3);
            }
        }
    }
    return out;
}

RgbImage TiledSlide::read_level(int lv) const {
    const LevelDesc& d = level(lv);
    return read_region({lv, 0, 0, d.width, d.height});
}

void TiledSlide::save(const fs::path& dir) const {
    fs::create_directories(dir);
    json levels = json::array();
    for (const LevelDesc& d : storage_->levels) {
        levels.push_back({{"level", d.level},
                          {"width", d.width},
                          {"height", d.height},
                          {"downsample_factor", d.downsample_factor},
                          {"tiles_x", tiles_x(d.level)},
                          {"tiles_y", tiles_y(d.level)}});
        for (int ty = 0; ty < tiles_y(d.level); ++ty) {
            for (int tx = 0; tx < tiles_x(d.level); ++tx) {
                write_rgb_png(dir / tile_name(d.level, tx, ty), tile(d.level, tx, ty));
            }
        }
    }
    json manifest = {{"format", "wsiseg-slide"},
                     {"version", 1},
                     {"slide_id", storage_->slide_id},
                     {"tile_size", storage_->tile_size},
                     {"channels", channels()},
                     {"width", storage_->levels[0].width},
                     {"height", storage_->levels[0].height},
                     {"source_path", storage_->source_path.string()},
                     {"tile_pattern", "L{level}_x{tx}_y{ty}.png"},
                     {"levels", levels}};
    std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';
}

TiledSlide TiledSlide::open(const fs::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw InputError("no slide manifest in " + dir.string());
    json m;
    try {
        m = json::parse(in);
    } catch (const json::exception& e) {
        throw InputError("malformed slide manifest in " + dir.string() + ": " + e.what());
    }
    auto s = std::make_shared<Storage>();
    try {
        s->slide_id = m.at("slide_id").get<std::string>();
        s->tile_size = m.at("tile_size").get<int>();
        s->source_path = m.value("source_path", std::string{});
        if (m.at("channels").get<int>() != 3) throw FormatError("slide must have 3 channels");
        if (!is_power_of_two(s->tile_size)) throw FormatError("tile size must be a power of two");
        for (const json& l : m.at("levels")) {
            LevelDesc d{l.at("level").get<int>(), l.at("width").get<int>(), l.at("height").get<int>(),
                        l.at("downsample_factor").get<double>()};
            if (d.level != static_cast<int>(s->levels.size()) || d.width < 1 || d.height < 1) {
                throw FormatError("inconsistent level table in " + dir.string());
            }
            const int nx = ceil_div(d.width, s->tile_size);
            const int ny = ceil_div(d.height, s->tile_size);
            std::vector<RgbImage> tiles;
            tiles.reserve(static_cast<std::size_t>(nx) * ny);
            for (int ty = 0; ty < ny; ++ty) {
                for (int tx = 0; tx < nx; ++tx) {
                    RgbImage t = read_rgb(dir / tile_name(d.level, tx, ty));
                    const int ew = std::min(s->tile_size, d.width - tx * s->tile_size);
                    const int eh = std::min(s->tile_size, d.height - ty * s->tile_size);
                    if (t.width != ew || t.height != eh) {
                        throw FormatError("tile " + tile_name(d.level, tx, ty) + " has unexpected size");
                    }
                    tiles.push_back(std::move(t));
                }
            }
            s->levels.push_back(d);
            s->tiles_x.push_back(nx);
            s->tiles_y.push_back(ny);
            s->tiles.push_back(std::move(tiles));
        }
    } catch (const json::exception& e) {
        throw InputError("malformed slide manifest in " + dir.string() + ": " + e.what());
    }
    if (s->levels.empty()) throw FormatError("slide has no levels: " + dir.string());
    TiledSlide slide;
    slide.storage_ = std::move(s);
    return slide;
}

TiledSlide import_raster(const fs::path& path, int tile_size, std::string slide_id) {
    RgbImage img = read_rgb(path);
    if (slide_id.empty()) slide_id = path.stem().string();
    return TiledSlide::from_image(std::move(slide_id), img, tile_size, path);
}

RgbImage resize_bilinear(const RgbImage& src, int width, int height) {
    if (width < 1 || height < 1) throw ConfigError("resize target must be at least 1x1");
    if (src.empty()) throw InputError("cannot resize an empty image");
    if (width == src.width && height == src.height) return src;

    struct Tap {
        int i0, i1;
        double f;
    };
    auto taps = [](int out, int in) {
        std::vector<Tap> t(static_cast<std::size_t>(out));
        const double scale = static_cast<double>(in) / out;
        for (int d = 0; d < out; ++d) {
            const double s = std::clamp((d + 0.5) * scale - 0.5, 0.0, static_cast<double>(in - 1));
            const int i0 = static_cast<int>(std::floor(s));
            t[static_cast<std::size_t>(d)] = {i0, std::min(i0 + 1, in - 1), s - i0};
        }
        return t;
    };
    const auto tx = taps(width, src.width);
    const auto ty = taps(height, src.height);

    RgbImage out(width, height);
    for (int y = 0; y < height; ++y) {
        const Tap& vy = ty[static_cast<std::size_t>(y)];
        for (int x = 0; x < width; ++x) {
            const Tap& vx = tx[static_cast<std::size_t>(x)];
            const std::uint8_t* p00 = src.pixel(vx.i0, vy.i0);
            const std::uint8_t* p10 = src.pixel(vx.i1, vy.i0);
            const std::uint8_t* p01 = src.pixel(vx.i0, vy.i1);
            const std::uint8_t* p11 = src.pixel(vx.i1, vy.i1);
            std::uint8_t* o = out.pixel(x, y);
            for (int c = 0; c < 3; ++c) {
                const double top = p00[c] + (p10[c] - p00[c]) * vx.f;
                const double bottom = p01[c] + (p11[c] - p01[c]) * vx.f;
                o[c] = clamp_round_u8(top + (bottom - top) * vy.f);
            }
        }
    }
    return out;
}

int pick_level_at_least(const TiledSlide& slide, int width, int height) {
    int best = 0;
    for (const LevelDesc& d : slide.levels()) {
        if (d.width >= width && d.height >= height) best = d.level;
    }
    return best;
}

RgbImage downsample_to(const TiledSlide& slide, int width, int height) {
    if (width < 1 || height < 1) throw ConfigError("downsample target must be at least 1x1");
    return resize_bilinear(slide.read_level(pick_level_at_least(slide, width, height)), width, height);
}

}  // namespace wsiseg
