#pragma once

#include <array>
#include <cstddef>
#include <deque>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "capsroute/config.hpp"
#include "capsroute/errors.hpp"
#include "capsroute/tensor.hpp"

namespace capsroute {

/// T consecutive [1,S,S] frames in [0,1] and one class label.
struct FrameSequence {
  Tensor frames;  // [T,1,S,S]
  std::size_t label = 0;
  std::string source_id;

  std::size_t length() const { return frames.dim(0); }
};

/// Rotation angles of the augmentation set, in output order after the
/// original and its mirror.
inline constexpr std::array<double, 6> kAugmentAngles{5.0, 10.0, 15.0, -5.0, -10.0, -15.0};

/// Zero-based start of the centred window: floor((length - window) / 2).
std::size_t middle_window_start(std::size_t length, std::size_t window = 16);

/// The centred run of `window` items. Throws SequenceTooShortError when
/// there are fewer than `window` items.
template <class T>
std::vector<T> select_middle_frames(const std::vector<T>& frames, std::size_t window = 16) {
  if (frames.size() < window) throw SequenceTooShortError(frames.size(), window);
  const auto start = static_cast<std::ptrdiff_t>(middle_window_start(frames.size(), window));
  return std::vector<T>(frames.begin() + start,
                        frames.begin() + start + static_cast<std::ptrdiff_t>(window));
}

/// [original, mirror, rotations by kAugmentAngles]. One transform per
/// sequence; labels are kept.
std::vector<FrameSequence> augment_x8(const FrameSequence& seq);

/// Tab-separated manifest:
///
///   #labels<TAB>anger<TAB>disgust<TAB>...
///   relative/or/absolute/sequence_dir<TAB>label[<TAB>subject]
///
/// Lines starting with '#' other than the labels header are comments.
/// Relative paths resolve against the manifest's directory.
struct DatasetManifest {
  struct Entry {
    std::string path;
    std::string label;
    std::string subject;
  };

  std::filesystem::path base_dir;
  std::vector<std::string> labels;  // sorted, defines label indices
  std::vector<Entry> entries;

  static DatasetManifest load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::size_t num_classes() const { return labels.size(); }
  std::size_t label_index(const std::string& label) const;
  std::filesystem::path resolve(const Entry& entry) const;
};

enum class Split { kTrain, kTest, kAll };

Split parse_split(const std::string& name);

/// Entry indices (ascending) belonging to `split`. Stratified per label
/// unless cfg.subject_disjoint, in which case whole subjects move to the
/// test side. Deterministic in cfg.split_seed.
std::vector<std::size_t> split_indices(const DatasetManifest& manifest, Split split,
                                       const DataConfig& cfg);

/// PNG files of a sequence directory in name order. Throws IngestionError
/// for a missing directory or one without frames.
std::vector<std::filesystem::path> list_frames(const std::filesystem::path& dir);

/// Reads a sequence directory: middle `length` frames, each normalised to
/// [1,size,size]. Returns [length,1,size,size].
Tensor load_sequence_frames(const std::filesystem::path& dir, std::size_t length, std::size_t size);

/// Lazily loads (and, for the training split, augments) sequences in a
/// fixed order.
class SequenceStream {
 public:
  SequenceStream(DatasetManifest manifest, std::vector<std::size_t> indices, bool augment,
                 std::size_t length, std::size_t size);

  std::optional<FrameSequence> next();
  /// Number of sequences the stream yields in total.
  std::size_t size() const { return indices_.size() * (augment_ ? 8 : 1); }
  const DatasetManifest& manifest() const { return manifest_; }

 private:
  DatasetManifest manifest_;
  std::vector<std::size_t> indices_;
  bool augment_;
  std::size_t length_;
  std::size_t size_;
  std::size_t cursor_ = 0;
  std::deque<FrameSequence> pending_;
};

struct LoadOptions {
  DataConfig data;
  std::size_t sequence_length = 16;
  std::size_t frame_size = 48;
};

/// Validates the manifest (every sequence directory must exist) and opens
/// a stream over `split`. Augmentation only applies to the training split.
SequenceStream load_dataset(const std::filesystem::path& manifest_path, Split split, bool augment,
                            const LoadOptions& options = {});

std::vector<FrameSequence> materialize(SequenceStream& stream);

}  // namespace capsroute
