#pragma once

#include <cstdint>
#include <vector>

#include "msggan/core/rng.hpp"
#include "msggan/core/tensor.hpp"

namespace msggan {

// Value-range tag carried by every image batch: training tensors live in
// [-1,1], metric inputs in [0,1].
enum class RangeTag { unit, symmetric };

inline const char* range_tag_name(RangeTag t) {
    return t == RangeTag::unit ? "unit" : "symmetric";
}

template <typename T>
struct ImageBatch {
    Tensor<T> data;  // [B, 1, H, W]
    RangeTag range = RangeTag::symmetric;

    std::size_t batch() const { return data.dim(0); }
    std::size_t resolution() const { return data.dim(2); }

    void validate() const {
        const Shape& s = data.shape();
        if (s.size() != 4 || s[1] != 1 || s[2] != s[3])
            throw ConfigError("image batch must be [B,1,H,H], got " + shape_str(s));
        const std::size_t h = s[2];
        if (h != 4 && h != 8 && h != 16 && h != 32 && h != 64)
            throw ConfigError("image resolution must be one of 4,8,16,32,64");
        const T lo = range == RangeTag::unit ? T{0} : T{-1};
        const T hi = T{1};
        for (std::size_t i = 0; i < data.numel(); ++i) {
            if (!std::isfinite(static_cast<double>(data[i])))
                throw NumericError("image batch contains non-finite values");
            if (data[i] < lo || data[i] > hi)
                throw NumericError(std::string("pixel outside declared range ") +
                                   range_tag_name(range));
        }
    }
};

// Bilinear resampling with the half-pixel (corner-aligned=false) convention:
// src_x = (dst_x + 0.5) * (src_w / dst_w) - 0.5. Pinned because the resize
// convention shifts FID materially.
template <typename S>
void bilinear_resize_plane(const S* src, std::size_t sh, std::size_t sw, S* dst, std::size_t dh,
                           std::size_t dw) {
    const double sy = static_cast<double>(sh) / static_cast<double>(dh);
    const double sx = static_cast<double>(sw) / static_cast<double>(dw);
    for (std::size_t y = 0; y < dh; ++y) {
        double fy = (static_cast<double>(y) + 0.5) * sy - 0.5;
        fy = std::min(std::max(fy, 0.0), static_cast<double>(sh - 1));
        const std::size_t y0 = static_cast<std::size_t>(fy);
        const std::size_t y1 = std::min(y0 + 1, sh - 1);
        const double wy = fy - static_cast<double>(y0);
        for (std::size_t x = 0; x < dw; ++x) {
            double fx = (static_cast<double>(x) + 0.5) * sx - 0.5;
            fx = std::min(std::max(fx, 0.0), static_cast<double>(sw - 1));
            const std::size_t x0 = static_cast<std::size_t>(fx);
            const std::size_t x1 = std::min(x0 + 1, sw - 1);
            const double wx = fx - static_cast<double>(x0);
            const double top = (1.0 - wx) * src[y0 * sw + x0] + wx * src[y0 * sw + x1];
            const double bot = (1.0 - wx) * src[y1 * sw + x0] + wx * src[y1 * sw + x1];
            dst[y * dw + x] = static_cast<S>((1.0 - wy) * top + wy * bot);
        }
    }
}

template <typename T>
void hflip_plane(T* plane, std::size_t h, std::size_t w) {
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w / 2; ++x)
            std::swap(plane[y * w + x], plane[y * w + (w - 1 - x)]);
}

// Mirrors the samples selected by `mask` in place-free fashion.
template <typename T>
ImageBatch<T> hflip_batch(const ImageBatch<T>& batch, const std::vector<bool>& mask) {
    if (mask.size() != batch.batch()) throw ConfigError("hflip mask size mismatch");
    ImageBatch<T> out{batch.data.clone(), batch.range};
    const std::size_t h = batch.data.dim(2), w = batch.data.dim(3);
    for (std::size_t b = 0; b < batch.batch(); ++b)
        if (mask[b]) hflip_plane(out.data.data() + b * h * w, h, w);
    return out;
}

// Per-sample mirror with probability 0.5 under the supplied rng; identity
// when disabled (the batch is returned unchanged, bitwise).
template <typename T>
ImageBatch<T> augment_hflip(const ImageBatch<T>& batch, bool enabled, Rng& rng) {
    if (!enabled) return batch;
    std::vector<bool> mask(batch.batch());
    for (std::size_t b = 0; b < mask.size(); ++b) mask[b] = rng.uniform() < 0.5;
    return hflip_batch(batch, mask);
}

template <typename T>
ImageBatch<T> convert_range(const ImageBatch<T>& batch, RangeTag target) {
    if (batch.range == target) return batch;
    ImageBatch<T> out{batch.data.clone(), target};
    if (target == RangeTag::unit) {
        for (std::size_t i = 0; i < out.data.numel(); ++i)
            out.data[i] = (out.data[i] + T{1}) / T{2};
    } else {
        for (std::size_t i = 0; i < out.data.numel(); ++i)
            out.data[i] = out.data[i] * T{2} - T{1};
    }
    return out;
}

}  // namespace msggan
