#include "capsroute/confusion.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include "capsroute/errors.hpp"

namespace capsroute {

ConfusionMatrix::ConfusionMatrix(std::vector<std::string> class_names)
    : names_(std::move(class_names)), counts_(names_.size() * names_.size(), 0) {}

void ConfusionMatrix::add(std::size_t truth, std::size_t predicted) {
  const std::size_t n = names_.size();
  if (truth >= n || predicted >= n) {
    throw LabelError("confusion entry (" + std::to_string(truth) + ", " +
                     std::to_string(predicted) + ") outside " + std::to_string(n) + " classes");
  }
  ++counts_[truth * n + predicted];
}

std::size_t ConfusionMatrix::count(std::size_t truth, std::size_t predicted) const {
  return counts_.at(truth * names_.size() + predicted);
}

std::size_t ConfusionMatrix::total() const {
  std::size_t sum = 0;
  for (auto c : counts_) sum += c;
  return sum;
}

std::size_t ConfusionMatrix::row_total(std::size_t truth) const {
  std::size_t sum = 0;
  for (std::size_t p = 0; p < names_.size(); ++p) sum += count(truth, p);
  return sum;
}

double ConfusionMatrix::accuracy() const {
  const std::size_t n = total();
  if (n == 0) return 0.0;
  std::size_t trace = 0;
  for (std::size_t k = 0; k < names_.size(); ++k) trace += count(k, k);
  return static_cast<double>(trace) / static_cast<double>(n);
}

std::vector<std::vector<double>> ConfusionMatrix::row_normalized() const {
  const std::size_t n = names_.size();
  std::vector<std::vector<double>> out(n, std::vector<double>(n, 0.0));
  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t row = row_total(t);
    if (row == 0) continue;
    for (std::size_t p = 0; p < n; ++p) {
      out[t][p] = static_cast<double>(count(t, p)) / static_cast<double>(row);
    }
  }
  return out;
}

void ConfusionMatrix::write_csv(std::ostream& out) const {
  out << "true\\predicted";
  for (const auto& name : names_) out << ',' << name;
  out << '\n';
  for (std::size_t t = 0; t < names_.size(); ++t) {
    out << names_[t];
    for (std::size_t p = 0; p < names_.size(); ++p) out << ',' << count(t, p);
    out << '\n';
  }
}

void ConfusionMatrix::save_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  write_csv(out);
}

std::string ConfusionMatrix::to_table() const {
  const auto norm = row_normalized();
  std::size_t width = 7;
  for (const auto& name : names_) width = std::max(width, name.size());
  std::ostringstream out;
  auto pad = [&](const std::string& s) {
    out << std::string(width + 2 - std::min(width + 2, s.size()), ' ') << s;
  };
  pad("");
  for (const auto& name : names_) pad(name);
  out << '\n';
  for (std::size_t t = 0; t < names_.size(); ++t) {
    pad(names_[t]);
    for (std::size_t p = 0; p < names_.size(); ++p) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.1f%%", 100.0 * norm[t][p]);
      pad(buf);
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace capsroute
