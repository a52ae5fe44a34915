#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "capsroute/config.hpp"
#include "capsroute/model.hpp"

namespace capsroute {

inline constexpr std::uint16_t kCheckpointVersion = 1;

/// One named array. Architecture values are stored as `arch.<key>` records
/// next to the `encoder.*`, `decoder.*` and `lstm.*` parameters.
struct CheckpointRecord {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

/// Binary layout, little-endian:
///   "CAPS" u16 version
///   per record: u32 name_length, name bytes, u32 rank, u32 dims[rank],
///               f32 values[prod(dims)]
struct CheckpointFile {
  std::uint16_t version = kCheckpointVersion;
  std::vector<CheckpointRecord> records;

  static CheckpointFile read(const std::filesystem::path& path);
  void write(const std::filesystem::path& path) const;
  const CheckpointRecord* find(const std::string& name) const;
};

CheckpointFile to_checkpoint(const CapsuleLstmModel& model);
void save_checkpoint(const std::filesystem::path& path, const CapsuleLstmModel& model);

ArchitectureConfig checkpoint_architecture(const CheckpointFile& file);

/// Copies parameter records into the model. Throws VersionError listing
/// every architecture field and parameter whose dimensions differ.
void load_parameters(const CheckpointFile& file, const CapsuleLstmModel& model);

/// Rebuilds a model from the architecture stored in the checkpoint.
CapsuleLstmModel load_checkpoint(const std::filesystem::path& path);

/// As above, but first checks the stored architecture against `expected`
/// (num_classes 0 in `expected` matches any class count).
CapsuleLstmModel load_checkpoint(const std::filesystem::path& path,
                                 const ArchitectureConfig& expected);

}  // namespace capsroute
