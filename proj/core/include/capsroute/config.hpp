#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "capsroute/losses.hpp"

namespace capsroute {

/// Flat UTF-8 `key = value` file. `#` starts a comment; blank lines are
/// ignored. Keys are unique.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::istream& in, const std::string& source = "<stream>");
  static KeyValueConfig load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::string& get(const std::string& key) const;
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<std::size_t> get_sizes(const std::string& key,
                                     const std::vector<std::size_t>& fallback) const;

  const std::map<std::string, std::string>& entries() const { return values_; }
  std::string to_string() const;

 private:
  std::map<std::string, std::string> values_;
};

enum class DecoderKind { kFullyConnected, kDeconv };

struct ArchitectureConfig {
  /// 0 means "take it from the dataset manifest".
  std::size_t num_classes = 0;
  std::size_t input_size = 48;
  std::size_t capsule_dim = 30;
  std::size_t primary_capsule_dim = 8;
  std::size_t primary_capsule_channels = 32;
  std::size_t routing_iterations = 3;
  /// Plain conv layers before the primary-capsule conv. The first runs at
  /// stride 1, the rest (and the primary-capsule conv) at stride 2.
  std::vector<std::size_t> conv_channels{64, 128};
  bool shared_routing_weights = true;
  DecoderKind decoder = DecoderKind::kFullyConnected;
  std::vector<std::size_t> decoder_hidden_sizes{512, 1024};
  std::size_t lstm_hidden = 128;
  std::size_t sequence_length = 16;

  static constexpr std::size_t kKernel = 3;

  void validate() const;
  /// Spatial size of each conv output, ending with the primary-capsule grid.
  std::vector<std::size_t> feature_sizes() const;
  std::size_t primary_grid() const { return feature_sizes().back(); }
  std::size_t primary_capsule_count() const;
};

struct DataConfig {
  std::string data_root;
  std::uint64_t split_seed = 0;
  double test_fraction = 0.2;
  bool subject_disjoint = false;
  bool augment = true;
};

struct TrainingConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t batch_size = 8;
  std::size_t epochs = 100;
  std::size_t early_stop_patience = 15;
  std::uint64_t seed = 0;
  /// Stop after this many optimizer steps; 0 means no limit.
  std::size_t max_steps = 0;
};

struct RunConfig {
  ArchitectureConfig arch;
  LossConfig loss = LossConfig::from_name("mrc");
  DataConfig data;
  TrainingConfig training;

  /// Unknown keys are rejected with ConfigError.
  static RunConfig from_key_values(const KeyValueConfig& kv);
  static RunConfig load(const std::filesystem::path& path);
  KeyValueConfig to_key_values() const;
};

std::string to_string(DecoderKind kind);

}  // namespace capsroute
