#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

namespace palmpipe {

/// K x K counts, rows = true class, columns = predicted class.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int classes);
  /// Throws std::invalid_argument on a non-square or negative table.
  static ConfusionMatrix from_counts(const std::vector<std::vector<std::int64_t>>& counts);

  int classes() const { return k_; }
  void add(int truth, int predicted, std::int64_t n = 1);
  std::int64_t operator()(int truth, int predicted) const { return counts_[truth * k_ + predicted]; }
  std::int64_t row_sum(int truth) const;
  std::int64_t total() const;
  std::int64_t trace() const;

  /// trace / total; 0 for an empty matrix.
  double accuracy() const;
  /// Row-normalized fraction in cell (truth, predicted).
  double rate(int truth, int predicted) const;
  bool is_diagonal() const;

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  int k_;
  std::vector<std::int64_t> counts_;
};

/// Unweighted mean over classes of the per-class correct fraction. Throws
/// std::invalid_argument when any row is empty.
double overall_rate(const ConfusionMatrix& m);

/// Same on a table that is already row-normalized.
double overall_rate(const std::vector<std::vector<double>>& normalized);

/// Row-normalized rows with two decimals, padded columns.
void write_normalized(std::ostream& out, const ConfusionMatrix& m);

}  // namespace palmpipe
