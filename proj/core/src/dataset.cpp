#include "capsroute/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "capsroute/image.hpp"
#include "capsroute/random.hpp"

namespace capsroute {

namespace fs = std::filesystem;

std::size_t middle_window_start(std::size_t length, std::size_t window) {
  if (length < window) throw SequenceTooShortError(length, window);
  return (length - window) / 2;
}

std::vector<FrameSequence> augment_x8(const FrameSequence& seq) {
  std::vector<FrameSequence> out;
  out.reserve(8);
  out.push_back(seq);
  out.push_back({mirror_horizontal(seq.frames), seq.label, seq.source_id + "#mirror"});
  for (double angle : kAugmentAngles) {
    std::ostringstream id;
    id << seq.source_id << "#rot" << (angle > 0 ? "+" : "") << angle;
    out.push_back({rotate(seq.frames, angle), seq.label, id.str()});
  }
  return out;
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, '\t')) out.push_back(field);
  return out;
}

}  // namespace

DatasetManifest DatasetManifest::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ManifestError("cannot open manifest " + path.string());
  DatasetManifest m;
  m.base_dir = path.parent_path();
  bool have_header = false;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.rfind("#labels", 0) == 0) {
      auto fields = split_tabs(line);
      m.labels.assign(fields.begin() + 1, fields.end());
      have_header = true;
      continue;
    }
    if (line.front() == '#') continue;
    auto fields = split_tabs(line);
    if (fields.size() < 2 || fields.size() > 3 || fields[0].empty() || fields[1].empty()) {
      throw ManifestError(path.string() + ":" + std::to_string(line_no) +
                          ": expected path<TAB>label[<TAB>subject]");
    }
    m.entries.push_back({fields[0], fields[1], fields.size() == 3 ? fields[2] : std::string()});
  }
  if (!have_header) {
    std::set<std::string> seen;
    for (const auto& e : m.entries) seen.insert(e.label);
    m.labels.assign(seen.begin(), seen.end());
  }
  std::sort(m.labels.begin(), m.labels.end());
  if (std::adjacent_find(m.labels.begin(), m.labels.end()) != m.labels.end()) {
    throw ManifestError(path.string() + ": duplicate label in vocabulary");
  }
  std::set<std::string> paths;
  for (const auto& e : m.entries) {
    if (!std::binary_search(m.labels.begin(), m.labels.end(), e.label)) {
      throw ManifestError(path.string() + ": label '" + e.label + "' of " + e.path +
                          " is not in the vocabulary");
    }
    if (!paths.insert(e.path).second) {
      throw ManifestError(path.string() + ": sequence " + e.path + " listed twice");
    }
  }
  return m;
}

void DatasetManifest::save(const fs::path& path) const {
  std::ofstream out(path);
  if (!out) throw ManifestError("cannot write manifest " + path.string());
  out << "#labels";
  for (const auto& l : labels) out << '\t' << l;
  out << '\n';
  for (const auto& e : entries) {
    out << e.path << '\t' << e.label;
    if (!e.subject.empty()) out << '\t' << e.subject;
    out << '\n';
  }
}

std::size_t DatasetManifest::label_index(const std::string& label) const {
  auto it = std::lower_bound(labels.begin(), labels.end(), label);
  if (it == labels.end() || *it != label) {
    throw ManifestError("label '" + label + "' is not in the vocabulary");
  }
  return static_cast<std::size_t>(it - labels.begin());
}

fs::path DatasetManifest::resolve(const Entry& entry) const {
  fs::path p(entry.path);
  return p.is_absolute() ? p : base_dir / p;
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "test") return Split::kTest;
  if (name == "all") return Split::kAll;
  throw ConfigError("split must be train, test or all, got '" + name + "'");
}

std::vector<std::size_t> split_indices(const DatasetManifest& manifest, Split split,
                                       const DataConfig& cfg) {
  const std::size_t n = manifest.entries.size();
  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;
  if (split == Split::kAll) return all;

  std::vector<bool> is_test(n, false);
  Rng rng(derive_seed(cfg.split_seed, 0x5eed));
  if (cfg.subject_disjoint) {
    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& e = manifest.entries[i];
      groups[e.subject.empty() ? "path:" + e.path : e.subject].push_back(i);
    }
    std::vector<const std::vector<std::size_t>*> order;
    for (const auto& [key, members] : groups) order.push_back(&members);
    std::shuffle(order.begin(), order.end(), rng);
    const auto target = static_cast<std::size_t>(std::llround(cfg.test_fraction * static_cast<double>(n)));
    std::size_t taken = 0;
    for (const auto* members : order) {
      if (taken >= target) break;
      for (auto i : *members) is_test[i] = true;
      taken += members->size();
    }
  } else {
    for (std::size_t label = 0; label < manifest.labels.size(); ++label) {
      std::vector<std::size_t> members;
      for (std::size_t i = 0; i < n; ++i) {
        if (manifest.entries[i].label == manifest.labels[label]) members.push_back(i);
      }
      std::shuffle(members.begin(), members.end(), rng);
      const auto take = static_cast<std::size_t>(
          std::llround(cfg.test_fraction * static_cast<double>(members.size())));
      for (std::size_t k = 0; k < take && k < members.size(); ++k) is_test[members[k]] = true;
    }
  }

  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (is_test[i] == (split == Split::kTest)) out.push_back(i);
  }
  return out;
}

std::vector<fs::path> list_frames(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IngestionError("sequence directory not found: " + dir.string());
  std::vector<fs::path> frames;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    auto ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png") frames.push_back(entry.path());
  }
  if (frames.empty()) throw IngestionError("no PNG frames in " + dir.string());
  std::sort(frames.begin(), frames.end());
  return frames;
}

Tensor load_sequence_frames(const fs::path& dir, std::size_t length, std::size_t size) {
  auto frames = select_middle_frames(list_frames(dir), length);
  Tensor out(Shape{length, 1, size, size});
  const std::size_t stride = size * size;
  for (std::size_t t = 0; t < length; ++t) {
    Tensor frame = normalize_frame(read_png(frames[t]), size);
    std::copy(frame.data().begin(), frame.data().end(),
              out.data().begin() + static_cast<std::ptrdiff_t>(t * stride));
  }
  return out;
}

SequenceStream::SequenceStream(DatasetManifest manifest, std::vector<std::size_t> indices,
                               bool augment, std::size_t length, std::size_t size)
    : manifest_(std::move(manifest)),
      indices_(std::move(indices)),
      augment_(augment),
      length_(length),
      size_(size) {}

std::optional<FrameSequence> SequenceStream::next() {
  if (pending_.empty()) {
    if (cursor_ >= indices_.size()) return std::nullopt;
    const auto& entry = manifest_.entries[indices_[cursor_++]];
    FrameSequence seq{load_sequence_frames(manifest_.resolve(entry), length_, size_),
                      manifest_.label_index(entry.label), entry.path};
    if (augment_) {
      for (auto& s : augment_x8(seq)) pending_.push_back(std::move(s));
    } else {
      pending_.push_back(std::move(seq));
    }
  }
  FrameSequence out = std::move(pending_.front());
  pending_.pop_front();
  return out;
}

SequenceStream load_dataset(const fs::path& manifest_path, Split split, bool augment,
                            const LoadOptions& options) {
  DatasetManifest manifest = DatasetManifest::load(manifest_path);
  if (!options.data.data_root.empty()) manifest.base_dir = options.data.data_root;
  std::vector<std::string> missing;
  for (const auto& e : manifest.entries) {
    if (!fs::is_directory(manifest.resolve(e))) missing.push_back(manifest.resolve(e).string());
  }
  if (!missing.empty()) {
    std::string message = "missing sequence directories:";
    for (const auto& m : missing) message += "\n  " + m;
    throw IngestionError(message);
  }
  auto indices = split_indices(manifest, split, options.data);
  return SequenceStream(std::move(manifest), std::move(indices), augment && split == Split::kTrain,
                        options.sequence_length, options.frame_size);
}

std::vector<FrameSequence> materialize(SequenceStream& stream) {
  std::vector<FrameSequence> out;
  out.reserve(stream.size());
  while (auto seq = stream.next()) out.push_back(std::move(*seq));
  return out;
}

}  // namespace capsroute
