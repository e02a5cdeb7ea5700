#include "palmpipe/downsample.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace palmpipe {

namespace {

constexpr double kCubicA = -0.5;
constexpr int kSrc = 10;
constexpr int kDst = 3;

// Four taps and weights for one output coordinate.
struct Taps {
  std::array<int, 4> index{};
  std::array<double, 4> weight{};
};

Taps taps_for(int out_index) {
  const double src = (out_index + 0.5) * static_cast<double>(kSrc) / kDst - 0.5;
  const int base = static_cast<int>(std::floor(src));
  Taps t;
  for (int k = 0; k < 4; ++k) {
    const int i = base - 1 + k;
    t.index[k] = std::clamp(i, 0, kSrc - 1);
    t.weight[k] = cubic_kernel(src - i);
  }
  return t;
}

const std::array<Taps, kDst>& taps_table() {
  static const std::array<Taps, kDst> table{taps_for(0), taps_for(1), taps_for(2)};
  return table;
}

}  // namespace

ForceGrid10 merge_fingers(const TactileFrame& frame, FingerFusion fusion) {
  if (fusion == FingerFusion::FingerAOnly) return frame.finger_a;
  Grid10 out;
  for (std::size_t r = 0; r < 10; ++r) {
    for (std::size_t c = 0; c < 10; ++c) {
      out(r, c) = std::max(frame.finger_a(r, c), frame.finger_b(r, 9 - c));
    }
  }
  return ForceGrid10(out);
}

double cubic_kernel(double x) {
  const double ax = std::abs(x);
  if (ax <= 1.0) return ((kCubicA + 2.0) * ax - (kCubicA + 3.0)) * ax * ax + 1.0;
  if (ax < 2.0) return ((kCubicA * ax - 5.0 * kCubicA) * ax + 8.0 * kCubicA) * ax - 4.0 * kCubicA;
  return 0.0;
}

Grid3 bicubic_resample(const Grid10& grid) {
  const auto& taps = taps_table();
  // Horizontal pass: 10 rows x 3 columns.
  Grid<10, 3> horiz;
  for (std::size_t r = 0; r < 10; ++r) {
    for (int oc = 0; oc < kDst; ++oc) {
      double acc = 0.0;
      for (int k = 0; k < 4; ++k) acc += taps[oc].weight[k] * grid(r, taps[oc].index[k]);
      horiz(r, oc) = acc;
    }
  }
  Grid3 out;
  for (int orow = 0; orow < kDst; ++orow) {
    for (int oc = 0; oc < kDst; ++oc) {
      double acc = 0.0;
      for (int k = 0; k < 4; ++k) acc += taps[orow].weight[k] * horiz(taps[orow].index[k], oc);
      out(orow, oc) = acc;
    }
  }
  return out;
}

Grid3 bicubic_resize(const ForceGrid10& grid) {
  Grid3 out = bicubic_resample(grid.grid());
  for (double& v : out.cells) v = std::min(std::max(v, 0.0) / kMaxForceN, 1.0);
  return out;
}

StimulusGrid row_peak_filter(const Grid3& g) {
  Grid3 out{};
  for (std::size_t r = 0; r < 3; ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < 3; ++c) {
      if (g(r, c) > g(r, best)) best = c;
    }
    if (g(r, best) > 0.0) out(r, best) = g(r, best);
  }
  return StimulusGrid(out);
}

RowStimulus row_stimulus(const StimulusGrid& s, int row) {
  if (row < 0 || row > 2) throw std::out_of_range("row must be in [0, 2]");
  RowStimulus rs;
  rs.row = row;
  for (int c = 0; c < 3; ++c) {
    if (s(row, c) > 0.0) {
      rs.column = c;
      rs.intensity = s(row, c);
      break;
    }
  }
  return rs;
}

StimulusGrid downsize(const TactileFrame& frame, FingerFusion fusion) {
  return row_peak_filter(bicubic_resize(merge_fingers(frame, fusion)));
}

}  // namespace palmpipe
