#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace capsroute {

/// Counts indexed by (true class, predicted class).
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::vector<std::string> class_names);

  void add(std::size_t truth, std::size_t predicted);

  std::size_t num_classes() const { return names_.size(); }
  const std::vector<std::string>& class_names() const { return names_; }
  std::size_t count(std::size_t truth, std::size_t predicted) const;
  std::size_t total() const;
  std::size_t row_total(std::size_t truth) const;
  /// trace / total; 0 for an empty matrix.
  double accuracy() const;
  /// Each non-empty row divided by its sum; empty rows stay zero.
  std::vector<std::vector<double>> row_normalized() const;

  /// Header "true\\predicted,<names...>", then one row of counts per class.
  void write_csv(std::ostream& out) const;
  void save_csv(const std::filesystem::path& path) const;
  /// Aligned text table of row-normalised percentages.
  std::string to_table() const;

  bool operator==(const ConfusionMatrix& other) const = default;

 private:
  std::vector<std::string> names_;
  std::vector<std::size_t> counts_;
};

}  // namespace capsroute
