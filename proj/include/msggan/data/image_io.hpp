#pragma once

#include <cstdint>
#include <filesystem>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <vector>

#include "msggan/core/errors.hpp"
#include "msggan/data/image.hpp"

namespace msggan {

struct GrayImage8 {
    std::size_t h = 0, w = 0;
    std::vector<std::uint8_t> px;  // row-major
};

// Decodes PNG/JPEG to 8-bit grayscale. Multi-channel inputs are reduced by
// the channel average; 16-bit depths are rescaled to 8-bit.
inline GrayImage8 read_image_gray(const std::filesystem::path& path) {
    cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    if (m.empty()) throw IngestionError("failed to decode image: " + path.string());

    cv::Mat m8;
    if (m.depth() == CV_8U)
        m8 = m;
    else if (m.depth() == CV_16U)
        m.convertTo(m8, CV_8U, 1.0 / 257.0);
    else
        throw IngestionError("unsupported bit depth in image: " + path.string());

    GrayImage8 out;
    out.h = static_cast<std::size_t>(m8.rows);
    out.w = static_cast<std::size_t>(m8.cols);
    out.px.resize(out.h * out.w);
    const int ch = m8.channels();
    if (ch == 1) {
        for (std::size_t y = 0; y < out.h; ++y)
            std::memcpy(out.px.data() + y * out.w, m8.ptr<std::uint8_t>(static_cast<int>(y)),
                        out.w);
    } else if (ch == 3 || ch == 4) {
        for (std::size_t y = 0; y < out.h; ++y) {
            const std::uint8_t* row = m8.ptr<std::uint8_t>(static_cast<int>(y));
            for (std::size_t x = 0; x < out.w; ++x) {
                const int sum = row[x * ch] + row[x * ch + 1] + row[x * ch + 2];
                out.px[y * out.w + x] = static_cast<std::uint8_t>((sum + 1) / 3);
            }
        }
    } else {
        throw IngestionError("unsupported channel count in image: " + path.string());
    }
    return out;
}

inline void write_png_gray8(const std::filesystem::path& path, std::size_t h, std::size_t w,
                            const std::uint8_t* px) {
    cv::Mat m(static_cast<int>(h), static_cast<int>(w), CV_8UC1);
    for (std::size_t y = 0; y < h; ++y)
        std::memcpy(m.ptr<std::uint8_t>(static_cast<int>(y)), px + y * w, w);
    if (!cv::imwrite(path.string(), m))
        throw IngestionError("failed to write PNG: " + path.string());
}

template <typename T>
inline std::uint8_t quantize_pixel(T v, RangeTag range) {
    const double unit = range == RangeTag::unit ? static_cast<double>(v)
                                                : (static_cast<double>(v) + 1.0) / 2.0;
    const double scaled = std::round(unit * 255.0);
    return static_cast<std::uint8_t>(std::min(255.0, std::max(0.0, scaled)));
}

// Writes sample b of a batch as an 8-bit grayscale PNG.
template <typename T>
void write_batch_png(const ImageBatch<T>& batch, std::size_t b,
                     const std::filesystem::path& path) {
    const std::size_t h = batch.data.dim(2), w = batch.data.dim(3);
    std::vector<std::uint8_t> px(h * w);
    const T* src = batch.data.data() + b * h * w;
    for (std::size_t i = 0; i < px.size(); ++i) px[i] = quantize_pixel(src[i], batch.range);
    write_png_gray8(path, h, w, px.data());
}

// Tiled grid of the first rows*cols samples (missing tiles stay black).
template <typename T>
void write_montage_png(const ImageBatch<T>& batch, std::size_t rows, std::size_t cols,
                       const std::filesystem::path& path) {
    const std::size_t h = batch.data.dim(2), w = batch.data.dim(3);
    std::vector<std::uint8_t> canvas(rows * h * cols * w, 0);
    const std::size_t n = std::min(batch.batch(), rows * cols);
    for (std::size_t b = 0; b < n; ++b) {
        const std::size_t ty = b / cols, tx = b % cols;
        const T* src = batch.data.data() + b * h * w;
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x)
                canvas[(ty * h + y) * cols * w + tx * w + x] =
                    quantize_pixel(src[y * w + x], batch.range);
    }
    write_png_gray8(path, rows * h, cols * w, canvas.data());
}

}  // namespace msggan
