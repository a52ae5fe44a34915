#include "capsroute/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "capsroute/errors.hpp"
#include "capsroute/image.hpp"
#include "capsroute/random.hpp"

namespace capsroute {

namespace fs = std::filesystem;

namespace {

std::string numbered(const char* prefix, std::size_t value, int width) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%0*zu", prefix, width, value);
  return buf;
}

double segment_distance(double px, double py, double cx, double cy, double ux, double uy,
                        double half_length) {
  const double dx = px - cx;
  const double dy = py - cy;
  const double along = std::clamp(dx * ux + dy * uy, -half_length, half_length);
  const double ex = dx - along * ux;
  const double ey = dy - along * uy;
  return std::sqrt(ex * ex + ey * ey);
}

}  // namespace

Tensor render_synthetic_sequence(std::size_t label, std::size_t index,
                                 const SyntheticOptions& options) {
  const auto k = static_cast<double>(label);
  const auto classes = static_cast<double>(options.num_classes);
  const std::size_t s = options.size;
  const double scale = static_cast<double>(s) / 48.0;

  Rng rng(derive_seed(options.seed, (static_cast<std::uint64_t>(label) << 32) | index));
  std::uniform_real_distribution<double> jitter(-1.0, 1.0);

  const double orientation = std::numbers::pi * k / classes + 0.1 * jitter(rng);
  const double direction = std::numbers::pi / 2 + 2 * std::numbers::pi * k / classes;
  const double speed = (1.2 + 0.2 * jitter(rng)) * scale;
  const double half_length = (7.0 + jitter(rng)) * scale;
  const double thickness = 1.5 * scale;
  const double ux = std::cos(orientation);
  const double uy = std::sin(orientation);
  const double mx = std::cos(direction);
  const double my = std::sin(direction);
  const double span = speed * static_cast<double>(options.frames - 1);
  const double cx0 = (static_cast<double>(s) - 1) / 2 - mx * span / 2 + 2.0 * scale * jitter(rng);
  const double cy0 = (static_cast<double>(s) - 1) / 2 - my * span / 2 + 2.0 * scale * jitter(rng);

  std::normal_distribution<double> noise(0.0, options.noise_stddev);
  Tensor out(Shape{options.frames, 1, s, s});
  auto px = out.data();
  for (std::size_t t = 0; t < options.frames; ++t) {
    const double cx = cx0 + mx * speed * static_cast<double>(t);
    const double cy = cy0 + my * speed * static_cast<double>(t);
    for (std::size_t y = 0; y < s; ++y) {
      for (std::size_t x = 0; x < s; ++x) {
        const double d = segment_distance(static_cast<double>(x), static_cast<double>(y), cx, cy,
                                          ux, uy, half_length);
        const double bar = std::clamp(thickness + 0.5 - d, 0.0, 1.0);
        const double v = 0.15 + 0.7 * bar + noise(rng);
        px[(t * s + y) * s + x] = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  return out;
}

DatasetManifest generate_synthetic(const fs::path& out_dir, const SyntheticOptions& options) {
  if (options.num_classes < 2) throw ConfigError("synthetic data needs at least 2 classes");
  if (options.frames == 0 || options.size < 8) throw ConfigError("synthetic frames too small");
  fs::create_directories(out_dir);

  DatasetManifest manifest;
  manifest.base_dir = out_dir;
  for (std::size_t k = 0; k < options.num_classes; ++k) {
    manifest.labels.push_back(numbered("class_", k, 2));
  }
  const std::size_t s = options.size;
  for (std::size_t k = 0; k < options.num_classes; ++k) {
    for (std::size_t i = 0; i < options.sequences_per_class; ++i) {
      const fs::path rel = fs::path(manifest.labels[k]) / numbered("seq_", i, 4);
      fs::create_directories(out_dir / rel);
      Tensor frames = render_synthetic_sequence(k, i, options);
      for (std::size_t t = 0; t < options.frames; ++t) {
        Tensor frame(Shape{1, s, s});
        auto src = frames.data().subspan(t * s * s, s * s);
        std::copy(src.begin(), src.end(), frame.data().begin());
        write_png(out_dir / rel / (numbered("frame_", t, 4) + ".png"), to_raster(frame));
      }
      manifest.entries.push_back({rel.generic_string(), manifest.labels[k], {}});
    }
  }
  manifest.save(out_dir / "manifest.tsv");
  return manifest;
}

}  // namespace capsroute
