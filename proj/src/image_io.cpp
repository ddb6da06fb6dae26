#include "wsiseg/image.hpp"

#include "wsiseg/errors.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <cmath>

namespace wsiseg {

namespace fs = std::filesystem;

std::size_t BinaryMask::count() const {
    return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

std::uint8_t clamp_round_u8(double v) {
    const double r = std::floor(v + 0.5);
    if (!(r > 0.0)) return 0;  // also maps NaN to 0
    if (r >= 255.0) return 255;
    return static_cast<std::uint8_t>(r);
}

namespace {

cv::Mat decode(const fs::path& path) {
    if (!fs::exists(path)) throw InputError("no such image file: " + path.string());
    cv::Mat m;
    try {
        m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    } catch (const cv::Exception& e) {
        throw InputError("cannot decode " + path.string() + ": " + e.what());
    }
    if (m.empty()) throw InputError("cannot decode " + path.string());
    return m;
}

void encode(const fs::path& path, const cv::Mat& m, const std::vector<int>& params) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    bool ok = false;
    try {
        ok = cv::imwrite(path.string(), m, params);
    } catch (const cv::Exception& e) {
        throw InputError("cannot write " + path.string() + ": " + e.what());
    }
    if (!ok) throw InputError("cannot write " + path.string());
}

}  // namespace

RgbImage read_rgb(const fs::path& path) {
    const cv::Mat m = decode(path);
    if (m.depth() != CV_8U || m.channels() != 3) {
        throw FormatError(path.string() + ": expected 8-bit RGB, got " + std::to_string(m.channels()) +
                          " channel(s) of depth code " + std::to_string(m.depth()));
    }
    RgbImage img(m.cols, m.rows);
    for (int y = 0; y < m.rows; ++y) {
        const auto* row = m.ptr<std::uint8_t>(y);
        std::uint8_t* out = img.pixel(0, y);
        for (int x = 0; x < m.cols; ++x) {
            // OpenCV decodes to BGR
            out[3 * x + 0] = row[3 * x + 2];
            out[3 * x + 1] = row[3 * x + 1];
            out[3 * x + 2] = row[3 * x + 0];
        }
    }
    return img;
}

void write_rgb_png(const fs::path& path, const RgbImage& img) {
    cv::Mat m(img.height, img.width, CV_8UC3);
    for (int y = 0; y < img.height; ++y) {
        const std::uint8_t* in = img.pixel(0, y);
        auto* row = m.ptr<std::uint8_t>(y);
        for (int x = 0; x < img.width; ++x) {
            row[3 * x + 0] = in[3 * x + 2];
            row[3 * x + 1] = in[3 * x + 1];
            row[3 * x + 2] = in[3 * x + 0];
        }
    }
    encode(path, m, {cv::IMWRITE_PNG_COMPRESSION, 1});
}

BinaryMask read_mask_png(const fs::path& path) {
    const cv::Mat m = decode(path);
    if (m.channels() != 1) throw FormatError(path.string() + ": mask must be single-channel");
    BinaryMask mask(m.cols, m.rows);
    for (int y = 0; y < m.rows; ++y) {
        for (int x = 0; x < m.cols; ++x) {
            const bool on = m.depth() == CV_16U ? m.at<std::uint16_t>(y, x) != 0 : m.at<std::uint8_t>(y, x) != 0;
            mask.at(x, y) = on ? 1 : 0;
        }
    }
    return mask;
}

void write_mask_png(const fs::path& path, const BinaryMask& mask) {
    cv::Mat m(mask.height, mask.width, CV_8UC1);
    for (int y = 0; y < mask.height; ++y) {
        auto* row = m.ptr<std::uint8_t>(y);
        for (int x = 0; x < mask.width; ++x) row[x] = mask.at(x, y) ? 255 : 0;
    }
    encode(path, m, {cv::IMWRITE_PNG_BILEVEL, 1});
}

void write_unit_png16(const fs::path& path, const ScalarRaster& raster) {
    cv::Mat m(raster.height, raster.width, CV_16UC1);
    for (int y = 0; y < raster.height; ++y) {
        auto* row = m.ptr<std::uint16_t>(y);
        for (int x = 0; x < raster.width; ++x) {
            const double v = std::clamp(static_cast<double>(raster.at(x, y)), 0.0, 1.0);
            row[x] = static_cast<std::uint16_t>(std::floor(v * 65535.0 + 0.5));
        }
    }
    encode(path, m, {cv::IMWRITE_PNG_COMPRESSION, 3});
}

ScalarRaster read_unit_png16(const fs::path& path) {
    const cv::Mat m = decode(path);
    if (m.channels() != 1 || m.depth() != CV_16U) {
        throw FormatError(path.string() + ": expected 16-bit grayscale PNG");
    }
    ScalarRaster r(m.cols, m.rows);
    for (int y = 0; y < m.rows; ++y) {
        for (int x = 0; x < m.cols; ++x) r.at(x, y) = static_cast<float>(m.at<std::uint16_t>(y, x) / 65535.0);
    }
    return r;
}

}  // namespace wsiseg
