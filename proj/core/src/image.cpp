#include "capsroute/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "capsroute/errors.hpp"

namespace capsroute {

Raster read_png(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw IngestionError("cannot read image " + path.string() + ": " + image.message);
  }
  const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  Raster out;
  out.width = image.width;
  out.height = image.height;
  out.channels = color ? 3 : 1;
  out.pixels.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr)) {
    std::string message = image.message;
    png_image_free(&image);
    throw IngestionError("cannot decode image " + path.string() + ": " + message);
  }
  if (out.width == 0 || out.height == 0) throw IngestionError("empty image " + path.string());
  return out;
}

void write_png(const std::filesystem::path& path, const Raster& raster) {
  if (raster.channels != 1 && raster.channels != 3) {
    throw IngestionError("can only write gray or RGB PNGs: " + path.string());
  }
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(raster.width);
  image.height = static_cast<png_uint_32>(raster.height);
  image.format = raster.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.c_str(), 0, raster.pixels.data(), 0, nullptr)) {
    throw IngestionError("cannot write image " + path.string() + ": " + image.message);
  }
}

std::vector<double> luminance(const Raster& raster) {
  const std::size_t n = raster.width * raster.height;
  if (n == 0 || raster.pixels.size() != n * raster.channels) {
    throw IngestionError("raster is empty or inconsistent with its dimensions");
  }
  std::vector<double> out(n);
  if (raster.channels == 1) {
    for (std::size_t i = 0; i < n; ++i) out[i] = raster.pixels[i];
  } else if (raster.channels >= 3) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto* px = &raster.pixels[i * raster.channels];
      out[i] = 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
    }
  } else {
    throw IngestionError("unsupported channel count " + std::to_string(raster.channels));
  }
  return out;
}

namespace {

double sample_clamped(const double* img, std::size_t width, std::size_t height, double x, double y) {
  x = std::clamp(x, 0.0, static_cast<double>(width - 1));
  y = std::clamp(y, 0.0, static_cast<double>(height - 1));
  const auto x0 = static_cast<std::size_t>(std::floor(x));
  const auto y0 = static_cast<std::size_t>(std::floor(y));
  const std::size_t x1 = std::min(x0 + 1, width - 1);
  const std::size_t y1 = std::min(y0 + 1, height - 1);
  const double fx = x - static_cast<double>(x0);
  const double fy = y - static_cast<double>(y0);
  const double top = img[y0 * width + x0] * (1.0 - fx) + img[y0 * width + x1] * fx;
  const double bottom = img[y1 * width + x0] * (1.0 - fx) + img[y1 * width + x1] * fx;
  return top * (1.0 - fy) + bottom * fy;
}

void check_image_stack(const Tensor& images, const char* what) {
  if (images.rank() < 2) {
    throw DimensionError(std::string(what) + " expects [..,H,W] images, got " +
                         shape_string(images.shape()));
  }
}

}  // namespace

std::vector<double> resize_bilinear(const std::vector<double>& src, std::size_t width,
                                    std::size_t height, std::size_t out_width,
                                    std::size_t out_height) {
  if (width == out_width && height == out_height) return src;
  std::vector<double> out(out_width * out_height);
  const double sx = static_cast<double>(width) / static_cast<double>(out_width);
  const double sy = static_cast<double>(height) / static_cast<double>(out_height);
  for (std::size_t y = 0; y < out_height; ++y) {
    const double fy = (static_cast<double>(y) + 0.5) * sy - 0.5;
    for (std::size_t x = 0; x < out_width; ++x) {
      const double fx = (static_cast<double>(x) + 0.5) * sx - 0.5;
      out[y * out_width + x] = sample_clamped(src.data(), width, height, fx, fy);
    }
  }
  return out;
}

Tensor normalize_frame(const Raster& raster, std::size_t size) {
  auto gray = resize_bilinear(luminance(raster), raster.width, raster.height, size, size);
  for (auto& v : gray) v = std::clamp(v / 255.0, 0.0, 1.0);
  return Tensor(Shape{1, size, size}, std::move(gray));
}

Raster to_raster(const Tensor& frame) {
  if (frame.rank() != 3 || frame.dim(0) != 1) {
    throw DimensionError("to_raster expects [1,H,W], got " + shape_string(frame.shape()));
  }
  Raster out;
  out.height = frame.dim(1);
  out.width = frame.dim(2);
  out.channels = 1;
  out.pixels.resize(frame.size());
  auto v = frame.data();
  for (std::size_t i = 0; i < v.size(); ++i) {
    out.pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp(v[i], 0.0, 1.0) * 255.0));
  }
  return out;
}

Tensor mirror_horizontal(const Tensor& images) {
  check_image_stack(images, "mirror_horizontal");
  const std::size_t w = images.shape().back();
  const std::size_t rows = images.size() / w;
  Tensor out(images.shape());
  auto src = images.data();
  auto dst = out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t x = 0; x < w; ++x) dst[r * w + x] = src[r * w + (w - 1 - x)];
  }
  return out;
}

Tensor rotate(const Tensor& images, double degrees) {
  check_image_stack(images, "rotate");
  const std::size_t w = images.shape().back();
  const std::size_t h = images.shape()[images.rank() - 2];
  const std::size_t count = images.size() / (w * h);
  const double theta = degrees * std::numbers::pi / 180.0;
  const double cos_t = std::cos(theta), sin_t = std::sin(theta);
  const double cx = (static_cast<double>(w) - 1.0) / 2.0;
  const double cy = (static_cast<double>(h) - 1.0) / 2.0;

  Tensor out(images.shape());
  for (std::size_t n = 0; n < count; ++n) {
    const double* src = images.data().data() + n * w * h;
    double* dst = out.data().data() + n * w * h;
    for (std::size_t y = 0; y < h; ++y) {
      const double dy = static_cast<double>(y) - cy;
      for (std::size_t x = 0; x < w; ++x) {
        const double dx = static_cast<double>(x) - cx;
        // Inverse map from the output pixel back into the source image.
        const double sx = cx + cos_t * dx - sin_t * dy;
        const double sy = cy + sin_t * dx + cos_t * dy;
        dst[y * w + x] = sample_clamped(src, w, h, sx, sy);
      }
    }
  }
  return out;
}

}  // namespace capsroute
