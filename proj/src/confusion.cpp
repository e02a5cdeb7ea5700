#include "palmpipe/confusion.hpp"

#include <iomanip>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>

namespace palmpipe {

ConfusionMatrix::ConfusionMatrix(int classes) : k_(classes) {
  if (classes < 1) throw std::invalid_argument("confusion matrix needs at least one class");
  counts_.assign(static_cast<std::size_t>(classes) * classes, 0);
}

ConfusionMatrix ConfusionMatrix::from_counts(const std::vector<std::vector<std::int64_t>>& counts) {
  ConfusionMatrix m(static_cast<int>(counts.size()));
  for (int t = 0; t < m.k_; ++t) {
    if (static_cast<int>(counts[t].size()) != m.k_) {
      throw std::invalid_argument("confusion matrix rows must have " + std::to_string(m.k_) + " entries");
    }
    for (int p = 0; p < m.k_; ++p) m.add(t, p, counts[t][p]);
  }
  return m;
}

void ConfusionMatrix::add(int truth, int predicted, std::int64_t n) {
  if (truth < 0 || truth >= k_ || predicted < 0 || predicted >= k_) {
    throw std::out_of_range("class index out of range");
  }
  if (n < 0) throw std::invalid_argument("confusion counts must be non-negative");
  counts_[truth * k_ + predicted] += n;
}

std::int64_t ConfusionMatrix::row_sum(int truth) const {
  const auto first = counts_.begin() + truth * k_;
  return std::accumulate(first, first + k_, std::int64_t{0});
}

std::int64_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::int64_t{0});
}

std::int64_t ConfusionMatrix::trace() const {
  std::int64_t t = 0;
  for (int i = 0; i < k_; ++i) t += (*this)(i, i);
  return t;
}

double ConfusionMatrix::accuracy() const {
  const auto n = total();
  return n == 0 ? 0.0 : static_cast<double>(trace()) / static_cast<double>(n);
}

double ConfusionMatrix::rate(int truth, int predicted) const {
  const auto n = row_sum(truth);
  return n == 0 ? 0.0 : static_cast<double>((*this)(truth, predicted)) / static_cast<double>(n);
}

bool ConfusionMatrix::is_diagonal() const {
  for (int t = 0; t < k_; ++t) {
    for (int p = 0; p < k_; ++p) {
      if (t != p && (*this)(t, p) != 0) return false;
    }
  }
  return true;
}

double overall_rate(const ConfusionMatrix& m) {
  double sum = 0.0;
  for (int t = 0; t < m.classes(); ++t) {
    if (m.row_sum(t) == 0) throw std::invalid_argument("class " + std::to_string(t) + " has no trials");
    sum += m.rate(t, t);
  }
  return sum / m.classes();
}

double overall_rate(const std::vector<std::vector<double>>& normalized) {
  if (normalized.empty()) throw std::invalid_argument("empty confusion table");
  double sum = 0.0;
  for (std::size_t t = 0; t < normalized.size(); ++t) {
    if (normalized[t].size() != normalized.size()) throw std::invalid_argument("table must be square");
    if (std::accumulate(normalized[t].begin(), normalized[t].end(), 0.0) <= 0.0) {
      throw std::invalid_argument("row " + std::to_string(t) + " is empty");
    }
    sum += normalized[t][t];
  }
  return sum / static_cast<double>(normalized.size());
}

void write_normalized(std::ostream& out, const ConfusionMatrix& m) {
  const auto flags = out.flags();
  out << std::setw(4) << "";
  for (int p = 0; p < m.classes(); ++p) out << std::setw(6) << p;
  out << '\n';
  out << std::fixed << std::setprecision(2);
  for (int t = 0; t < m.classes(); ++t) {
    out << std::setw(4) << t;
    for (int p = 0; p < m.classes(); ++p) out << std::setw(6) << m.rate(t, p);
    out << '\n';
  }
  out.flags(flags);
}

}  // namespace palmpipe
