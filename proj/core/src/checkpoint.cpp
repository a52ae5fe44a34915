#include "capsroute/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "capsroute/errors.hpp"

namespace capsroute {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[4] = {'C', 'A', 'P', 'S'};

template <class T>
void put(std::ostream& out, T value) {
  static_assert(std::is_unsigned_v<T>);
  unsigned char bytes[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<unsigned char>(value >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <class T>
T get(std::istream& in, const fs::path& path) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) {
    throw VersionError("truncated checkpoint " + path.string());
  }
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(bytes[i]) << (8 * i);
  return value;
}

CheckpointRecord numeric_record(const std::string& name, const std::vector<std::size_t>& values) {
  CheckpointRecord r{name, Shape{values.size()}, {}};
  for (auto v : values) r.values.push_back(static_cast<float>(v));
  return r;
}

std::vector<std::size_t> record_sizes(const CheckpointFile& file, const std::string& name) {
  const auto* r = file.find(name);
  if (r == nullptr) throw VersionError("checkpoint lacks architecture record " + name);
  std::vector<std::size_t> out;
  for (float v : r->values) {
    if (!(v >= 0.0f) || v != static_cast<float>(static_cast<std::size_t>(v))) {
      throw VersionError("checkpoint record " + name + " is not a non-negative integer");
    }
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

std::size_t record_size(const CheckpointFile& file, const std::string& name) {
  auto values = record_sizes(file, name);
  if (values.size() != 1) throw VersionError("checkpoint record " + name + " must hold one value");
  return values[0];
}

std::string join(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

std::vector<std::string> architecture_diffs(const ArchitectureConfig& stored,
                                            const ArchitectureConfig& expected) {
  std::vector<std::string> diffs;
  auto check = [&](const char* key, auto a, auto b) {
    if (a != b) {
      std::ostringstream s;
      if constexpr (std::is_same_v<decltype(a), std::vector<std::size_t>>) {
        s << key << ": checkpoint " << join(a) << " vs expected " << join(b);
      } else {
        s << key << ": checkpoint " << a << " vs expected " << b;
      }
      diffs.push_back(s.str());
    }
  };
  if (expected.num_classes != 0) check("num_classes", stored.num_classes, expected.num_classes);
  check("input_size", stored.input_size, expected.input_size);
  check("capsule_dim", stored.capsule_dim, expected.capsule_dim);
  check("primary_capsule_dim", stored.primary_capsule_dim, expected.primary_capsule_dim);
  check("primary_capsule_channels", stored.primary_capsule_channels,
        expected.primary_capsule_channels);
  check("routing_iterations", stored.routing_iterations, expected.routing_iterations);
  check("conv_channels", stored.conv_channels, expected.conv_channels);
  check("shared_routing_weights", stored.shared_routing_weights, expected.shared_routing_weights);
  check("decoder", to_string(stored.decoder), to_string(expected.decoder));
  check("decoder_hidden_sizes", stored.decoder_hidden_sizes, expected.decoder_hidden_sizes);
  check("lstm_hidden", stored.lstm_hidden, expected.lstm_hidden);
  check("sequence_length", stored.sequence_length, expected.sequence_length);
  return diffs;
}

void throw_if_mismatch(const std::vector<std::string>& diffs) {
  if (diffs.empty()) return;
  std::string message = "checkpoint does not match the model:";
  for (const auto& d : diffs) message += "\n  " + d;
  throw VersionError(message);
}

}  // namespace

CheckpointFile CheckpointFile::read(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw VersionError("cannot open checkpoint " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw VersionError(path.string() + " is not a CAPS checkpoint");
  }
  CheckpointFile file;
  file.version = get<std::uint16_t>(in, path);
  if (file.version != kCheckpointVersion) {
    throw VersionError("checkpoint " + path.string() + " has format version " +
                       std::to_string(file.version) + ", expected " +
                       std::to_string(kCheckpointVersion));
  }
  while (in.peek() != std::char_traits<char>::eof()) {
    CheckpointRecord r;
    const auto name_length = get<std::uint32_t>(in, path);
    r.name.resize(name_length);
    if (!in.read(r.name.data(), name_length)) throw VersionError("truncated checkpoint " + path.string());
    const auto rank = get<std::uint32_t>(in, path);
    for (std::uint32_t d = 0; d < rank; ++d) r.shape.push_back(get<std::uint32_t>(in, path));
    const std::size_t count = shape_size(r.shape);
    r.values.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
      r.values.push_back(std::bit_cast<float>(get<std::uint32_t>(in, path)));
    }
    file.records.push_back(std::move(r));
  }
  return file;
}

void CheckpointFile::write(const fs::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out.write(kMagic, 4);
  put<std::uint16_t>(out, version);
  for (const auto& r : records) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(r.name.size()));
    out.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(r.shape.size()));
    for (auto d : r.shape) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (float v : r.values) put<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  }
  if (!out) throw Error("failed writing checkpoint " + path.string());
}

const CheckpointRecord* CheckpointFile::find(const std::string& name) const {
  for (const auto& r : records) {
    if (r.name == name) return &r;
  }
  return nullptr;
}

CheckpointFile to_checkpoint(const CapsuleLstmModel& model) {
  const auto& a = model.arch();
  CheckpointFile file;
  file.records.push_back(numeric_record("arch.num_classes", {a.num_classes}));
  file.records.push_back(numeric_record("arch.input_size", {a.input_size}));
  file.records.push_back(numeric_record("arch.capsule_dim", {a.capsule_dim}));
  file.records.push_back(numeric_record("arch.primary_capsule_dim", {a.primary_capsule_dim}));
  file.records.push_back(numeric_record("arch.primary_capsule_channels", {a.primary_capsule_channels}));
  file.records.push_back(numeric_record("arch.routing_iterations", {a.routing_iterations}));
  file.records.push_back(numeric_record("arch.conv_channels", a.conv_channels));
  file.records.push_back(numeric_record("arch.shared_routing_weights", {a.shared_routing_weights ? 1u : 0u}));
  file.records.push_back(numeric_record("arch.decoder", {a.decoder == DecoderKind::kDeconv ? 1u : 0u}));
  file.records.push_back(numeric_record("arch.decoder_hidden_sizes", a.decoder_hidden_sizes));
  file.records.push_back(numeric_record("arch.lstm_hidden", {a.lstm_hidden}));
  file.records.push_back(numeric_record("arch.sequence_length", {a.sequence_length}));
  for (const auto& p : model.parameters()) {
    CheckpointRecord r{p.name, p.value.shape(), {}};
    r.values.reserve(p.value.size());
    for (double v : p.value.data()) r.values.push_back(static_cast<float>(v));
    file.records.push_back(std::move(r));
  }
  return file;
}

void save_checkpoint(const fs::path& path, const CapsuleLstmModel& model) {
  to_checkpoint(model).write(path);
}

ArchitectureConfig checkpoint_architecture(const CheckpointFile& file) {
  ArchitectureConfig a;
  a.num_classes = record_size(file, "arch.num_classes");
  a.input_size = record_size(file, "arch.input_size");
  a.capsule_dim = record_size(file, "arch.capsule_dim");
  a.primary_capsule_dim = record_size(file, "arch.primary_capsule_dim");
  a.primary_capsule_channels = record_size(file, "arch.primary_capsule_channels");
  a.routing_iterations = record_size(file, "arch.routing_iterations");
  a.conv_channels = record_sizes(file, "arch.conv_channels");
  a.shared_routing_weights = record_size(file, "arch.shared_routing_weights") != 0;
  a.decoder = record_size(file, "arch.decoder") != 0 ? DecoderKind::kDeconv : DecoderKind::kFullyConnected;
  a.decoder_hidden_sizes = record_sizes(file, "arch.decoder_hidden_sizes");
  a.lstm_hidden = record_size(file, "arch.lstm_hidden");
  a.sequence_length = record_size(file, "arch.sequence_length");
  return a;
}

void load_parameters(const CheckpointFile& file, const CapsuleLstmModel& model) {
  auto diffs = architecture_diffs(checkpoint_architecture(file), model.arch());
  for (const auto& p : model.parameters()) {
    const auto* r = file.find(p.name);
    if (r == nullptr) {
      diffs.push_back(p.name + ": missing from checkpoint");
    } else if (r->shape != p.value.shape()) {
      diffs.push_back(p.name + ": checkpoint " + shape_string(r->shape) + " vs model " +
                      shape_string(p.value.shape()));
    }
  }
  throw_if_mismatch(diffs);
  for (const auto& p : model.parameters()) {
    const auto* r = file.find(p.name);
    Tensor value = p.value;
    auto dst = value.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<double>(r->values[i]);
  }
}

CapsuleLstmModel load_checkpoint(const fs::path& path) {
  const auto file = CheckpointFile::read(path);
  const auto arch = checkpoint_architecture(file);
  CapsuleLstmModel model(arch, arch.num_classes, 0);
  load_parameters(file, model);
  return model;
}

CapsuleLstmModel load_checkpoint(const fs::path& path, const ArchitectureConfig& expected) {
  const auto file = CheckpointFile::read(path);
  const auto stored = checkpoint_architecture(file);
  throw_if_mismatch(architecture_diffs(stored, expected));
  CapsuleLstmModel model(stored, stored.num_classes, 0);
  load_parameters(file, model);
  return model;
}

}  // namespace capsroute
