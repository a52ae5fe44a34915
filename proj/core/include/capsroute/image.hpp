#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "capsroute/tensor.hpp"

namespace capsroute {

/// 8-bit raster, interleaved channels (1 = gray, 3 = RGB).
struct Raster {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 1;
  std::vector<std::uint8_t> pixels;
};

/// Reads gray or colour PNGs (alpha is dropped). Throws IngestionError
/// naming the file on failure.
Raster read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Raster& raster);

/// Luminance 0.299R + 0.587G + 0.114B (or the gray value), in [0,255].
std::vector<double> luminance(const Raster& raster);

/// Half-pixel-centred bilinear resize of a single-channel image.
std::vector<double> resize_bilinear(const std::vector<double>& src, std::size_t width,
                                    std::size_t height, std::size_t out_width,
                                    std::size_t out_height);

/// Gray conversion, bilinear resize to size x size, scale to [0,1].
/// Returns [1,size,size].
Tensor normalize_frame(const Raster& raster, std::size_t size = 48);

/// [1,S,S] tensor in [0,1] -> 8-bit gray raster (rounded, clamped).
Raster to_raster(const Tensor& frame);

/// Mirror a [..,S,S] stack of images left-right.
Tensor mirror_horizontal(const Tensor& images);

/// Rotate every [S,S] image of a [..,S,S] stack about its centre by
/// `degrees` (positive = counter-clockwise as displayed). Bilinear sampling;
/// samples outside the image replicate the nearest edge pixel.
Tensor rotate(const Tensor& images, double degrees);

}  // namespace capsroute
