#ifndef GWCOSAL_IMAGE_IO_HPP
#define GWCOSAL_IMAGE_IO_HPP

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "gwcosal/tensor.hpp"

namespace gwcosal::pipeline {

inline constexpr std::array<float, 3> kDefaultChannelMean = {0.485f, 0.456f, 0.406f};

// Interleaved 8-bit pixels, row-major; channels is 1 or 3.
struct ImageU8 {
    long h = 0;
    long w = 0;
    long channels = 0;
    std::vector<std::uint8_t> pixels;
};

// Decode an 8-bit PNG or JPEG (sniffed by magic bytes) to 3-channel RGB.
ImageU8 decode_rgb8(const std::string& path);

// Decode to single-channel grayscale (used for masks and saliency maps).
ImageU8 decode_gray8(const std::string& path);

void write_gray_png(const std::string& path, long h, long w,
                    const std::vector<std::uint8_t>& pixels);
void write_rgb_png(const std::string& path, long h, long w,
                   const std::vector<std::uint8_t>& pixels);

// (1, c, h, w) tensor of raw 8-bit values (0..255) as float.
Tensor<float> image_to_tensor(const ImageU8& img);

// Bilinear resampling with half-pixel-centre sampling and edge clamping.
Tensor<float> bilinear_resize(const Tensor<float>& x, long out_h, long out_w);

// Full-resolution [0,1] RGB load, no normalization (descriptor input).
Tensor<float> load_image_raw01(const std::string& path);

// decode -> 3-channel -> bilinear resize -> /255 -> subtract per-channel mean.
Tensor<float> load_image_resized(const std::string& path, long h, long w,
                                 const std::array<float, 3>& mean = kDefaultChannelMean);

// Grayscale mask in [0,1], resized the same way as images.
Tensor<float> load_mask_resized(const std::string& path, long h, long w);

// Clamp to [0,1] and write round(v*255) as 8-bit grayscale PNG.
void save_saliency_png(const std::string& path, const Tensor<float>& map);

// Runs fn(0..n-1) on worker threads; the count is capped by the
// GWCOSAL_THREADS environment variable. Result slots must be disjoint per
// index, which keeps output independent of scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

} // namespace gwcosal::pipeline

#endif
