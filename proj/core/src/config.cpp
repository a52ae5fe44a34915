#include "capsroute/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "capsroute/errors.hpp"

namespace capsroute {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::string join_sizes(const std::vector<std::size_t>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(values[i]);
  }
  return out;
}

std::string format_double(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(std::istream& in, const std::string& source) {
  KeyValueConfig cfg;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    std::string key = trim(std::string_view(body).substr(0, eq));
    std::string value = trim(std::string_view(body).substr(eq + 1));
    if (key.empty()) throw ConfigError(source + ":" + std::to_string(line_no) + ": empty key");
    if (cfg.has(key)) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
    cfg.values_.emplace(std::move(key), std::move(value));
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  return parse(in, path.string());
}

void KeyValueConfig::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write config file " + path.string());
  out << to_string();
}

const std::string& KeyValueConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("missing config key '" + key + "'");
  return it->second;
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
  return has(key) ? get(key) : fallback;
}

long long KeyValueConfig::get_int(const std::string& key, long long fallback) const {
  if (!has(key)) return fallback;
  const auto& s = get(key);
  long long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError("config key '" + key + "' expects an integer, got '" + s + "'");
  }
  return v;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  if (!has(key)) return fallback;
  const auto& s = get(key);
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' expects a number, got '" + s + "'");
  }
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const auto& s = get(key);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError("config key '" + key + "' expects a boolean, got '" + s + "'");
}

std::vector<std::size_t> KeyValueConfig::get_sizes(const std::string& key,
                                                   const std::vector<std::size_t>& fallback) const {
  if (!has(key)) return fallback;
  std::vector<std::size_t> out;
  std::stringstream ss(get(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (item.empty() || ec != std::errc() || ptr != item.data() + item.size() || v == 0) {
      throw ConfigError("config key '" + key + "' expects a comma-separated list of positive integers, got '" +
                        get(key) + "'");
    }
    out.push_back(v);
  }
  return out;
}

std::string KeyValueConfig::to_string() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

void ArchitectureConfig::validate() const {
  if (capsule_dim == 0 || primary_capsule_dim == 0 || primary_capsule_channels == 0) {
    throw ConfigError("capsule dimensions must be positive");
  }
  if (routing_iterations < 1) throw ConfigError("routing_iterations must be at least 1");
  if (lstm_hidden == 0) throw ConfigError("lstm_hidden must be positive");
  if (sequence_length == 0) throw ConfigError("sequence_length must be positive");
  if (conv_channels.empty()) throw ConfigError("conv_channels needs at least one layer");
  if (decoder_hidden_sizes.empty()) throw ConfigError("decoder_hidden_sizes needs at least one layer");
  std::size_t size = input_size;
  for (std::size_t layer = 0; layer <= conv_channels.size(); ++layer) {
    const std::size_t stride = layer == 0 ? 1 : 2;
    if (size < kKernel) {
      throw ConfigError("input_size " + std::to_string(input_size) + " too small for " +
                        std::to_string(conv_channels.size() + 1) + " conv layers");
    }
    size = (size - kKernel) / stride + 1;
  }
  if (decoder == DecoderKind::kDeconv && input_size % 8 != 0) {
    throw ConfigError("decoder = deconv needs input_size divisible by 8");
  }
}

std::vector<std::size_t> ArchitectureConfig::feature_sizes() const {
  validate();
  std::vector<std::size_t> sizes;
  std::size_t size = input_size;
  for (std::size_t layer = 0; layer <= conv_channels.size(); ++layer) {
    const std::size_t stride = layer == 0 ? 1 : 2;
    size = (size - kKernel) / stride + 1;
    sizes.push_back(size);
  }
  return sizes;
}

std::size_t ArchitectureConfig::primary_capsule_count() const {
  const std::size_t grid = primary_grid();
  return primary_capsule_channels * grid * grid;
}

std::string to_string(DecoderKind kind) {
  return kind == DecoderKind::kFullyConnected ? "fc" : "deconv";
}

namespace {

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys{
      "num_classes",       "input_size",          "capsule_dim",
      "primary_capsule_dim", "primary_capsule_channels", "routing_iterations",
      "conv_channels",     "shared_routing_weights", "decoder",
      "decoder_hidden_sizes", "lstm_hidden",      "sequence_length",
      "loss_config",       "data_root",           "split_seed",
      "test_fraction",     "subject_disjoint",    "augment",
      "learning_rate",     "beta1",               "beta2",
      "epsilon",           "batch_size",          "epochs",
      "early_stop_patience", "seed",              "max_steps"};
  return keys;
}

std::size_t positive(long long v, const char* key) {
  if (v <= 0) throw ConfigError(std::string("config key '") + key + "' must be positive");
  return static_cast<std::size_t>(v);
}

}  // namespace

RunConfig RunConfig::from_key_values(const KeyValueConfig& kv) {
  for (const auto& [key, value] : kv.entries()) {
    if (!known_keys().count(key)) throw ConfigError("unknown config key '" + key + "'");
  }
  RunConfig cfg;
  auto& a = cfg.arch;
  a.num_classes = static_cast<std::size_t>(std::max(0LL, kv.get_int("num_classes", 0)));
  a.input_size = positive(kv.get_int("input_size", 48), "input_size");
  a.capsule_dim = positive(kv.get_int("capsule_dim", 30), "capsule_dim");
  a.primary_capsule_dim = positive(kv.get_int("primary_capsule_dim", 8), "primary_capsule_dim");
  a.primary_capsule_channels =
      positive(kv.get_int("primary_capsule_channels", 32), "primary_capsule_channels");
  a.routing_iterations = positive(kv.get_int("routing_iterations", 3), "routing_iterations");
  a.conv_channels = kv.get_sizes("conv_channels", a.conv_channels);
  a.shared_routing_weights = kv.get_bool("shared_routing_weights", true);
  const auto decoder = kv.get_string("decoder", "fc");
  if (decoder == "fc") {
    a.decoder = DecoderKind::kFullyConnected;
  } else if (decoder == "deconv") {
    a.decoder = DecoderKind::kDeconv;
  } else {
    throw ConfigError("decoder must be 'fc' or 'deconv', got '" + decoder + "'");
  }
  a.decoder_hidden_sizes = kv.get_sizes("decoder_hidden_sizes", a.decoder_hidden_sizes);
  a.lstm_hidden = positive(kv.get_int("lstm_hidden", 128), "lstm_hidden");
  a.sequence_length = positive(kv.get_int("sequence_length", 16), "sequence_length");
  a.validate();

  cfg.loss = LossConfig::from_name(kv.get_string("loss_config", "mrc"));

  auto& d = cfg.data;
  d.data_root = kv.get_string("data_root", "");
  d.split_seed = static_cast<std::uint64_t>(kv.get_int("split_seed", 0));
  d.test_fraction = kv.get_double("test_fraction", 0.2);
  if (d.test_fraction < 0.0 || d.test_fraction >= 1.0) {
    throw ConfigError("test_fraction must be in [0,1)");
  }
  d.subject_disjoint = kv.get_bool("subject_disjoint", false);
  d.augment = kv.get_bool("augment", true);

  auto& t = cfg.training;
  t.learning_rate = kv.get_double("learning_rate", 1e-4);
  t.beta1 = kv.get_double("beta1", 0.9);
  t.beta2 = kv.get_double("beta2", 0.999);
  t.epsilon = kv.get_double("epsilon", 1e-8);
  if (t.learning_rate <= 0.0) throw ConfigError("learning_rate must be positive");
  if (t.beta1 < 0.0 || t.beta1 >= 1.0 || t.beta2 < 0.0 || t.beta2 >= 1.0) {
    throw ConfigError("beta1 and beta2 must be in [0,1)");
  }
  t.batch_size = positive(kv.get_int("batch_size", 8), "batch_size");
  t.epochs = positive(kv.get_int("epochs", 100), "epochs");
  t.early_stop_patience = positive(kv.get_int("early_stop_patience", 15), "early_stop_patience");
  t.seed = static_cast<std::uint64_t>(kv.get_int("seed", 0));
  t.max_steps = static_cast<std::size_t>(std::max(0LL, kv.get_int("max_steps", 0)));
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  return from_key_values(KeyValueConfig::load(path));
}

KeyValueConfig RunConfig::to_key_values() const {
  KeyValueConfig kv;
  kv.set("num_classes", std::to_string(arch.num_classes));
  kv.set("input_size", std::to_string(arch.input_size));
  kv.set("capsule_dim", std::to_string(arch.capsule_dim));
  kv.set("primary_capsule_dim", std::to_string(arch.primary_capsule_dim));
  kv.set("primary_capsule_channels", std::to_string(arch.primary_capsule_channels));
  kv.set("routing_iterations", std::to_string(arch.routing_iterations));
  kv.set("conv_channels", join_sizes(arch.conv_channels));
  kv.set("shared_routing_weights", arch.shared_routing_weights ? "true" : "false");
  kv.set("decoder", to_string(arch.decoder));
  kv.set("decoder_hidden_sizes", join_sizes(arch.decoder_hidden_sizes));
  kv.set("lstm_hidden", std::to_string(arch.lstm_hidden));
  kv.set("sequence_length", std::to_string(arch.sequence_length));
  kv.set("loss_config", loss.name);
  kv.set("data_root", data.data_root);
  kv.set("split_seed", std::to_string(data.split_seed));
  kv.set("test_fraction", format_double(data.test_fraction));
  kv.set("subject_disjoint", data.subject_disjoint ? "true" : "false");
  kv.set("augment", data.augment ? "true" : "false");
  kv.set("learning_rate", format_double(training.learning_rate));
  kv.set("beta1", format_double(training.beta1));
  kv.set("beta2", format_double(training.beta2));
  kv.set("epsilon", format_double(training.epsilon));
  kv.set("batch_size", std::to_string(training.batch_size));
  kv.set("epochs", std::to_string(training.epochs));
  kv.set("early_stop_patience", std::to_string(training.early_stop_patience));
  kv.set("seed", std::to_string(training.seed));
  kv.set("max_steps", std::to_string(training.max_steps));
  return kv;
}

}  // namespace capsroute
