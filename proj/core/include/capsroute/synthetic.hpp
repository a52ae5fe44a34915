#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>

#include "capsroute/dataset.hpp"

namespace capsroute {

struct SyntheticOptions {
  std::size_t num_classes = 2;
  std::size_t sequences_per_class = 10;
  std::uint64_t seed = 0;
  std::size_t frames = 16;
  std::size_t size = 48;
  double noise_stddev = 0.04;
};

/// Class k is a bright bar at orientation pi*k/K translating in direction
/// pi/2 + 2*pi*k/K (image coordinates, y down) over dark noisy background.
/// Writes <out>/class_KK/seq_XXXX/frame_TTTT.png and <out>/manifest.tsv.
/// Output depends only on the options.
DatasetManifest generate_synthetic(const std::filesystem::path& out_dir,
                                   const SyntheticOptions& options);

/// Rendered frames [T,1,S,S] of one synthetic sequence, before quantisation.
Tensor render_synthetic_sequence(std::size_t label, std::size_t index,
                                 const SyntheticOptions& options);

}  // namespace capsroute
