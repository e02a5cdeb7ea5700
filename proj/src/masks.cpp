#include "palmpipe/masks.hpp"

#include <ostream>

#include "palmpipe/downsample.hpp"

namespace palmpipe {

namespace {

Mask rasterize(AngleClass angle, PositionClass position) {
  // Shift along the pattern's normal: -1 for left/up, +1 for right/down.
  const int shift = position == PositionClass::Center ? 0 : (position == PositionClass::Left ? -1 : 1);
  Mask m{};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      bool on = false;
      switch (angle) {
        case AngleClass::Deg0: on = r == 1 + shift; break;
        case AngleClass::Deg90: on = c == 1 + shift; break;
        case AngleClass::Deg45: on = c - r == shift; break;
        case AngleClass::Deg135: on = c + r == 2 + shift; break;
      }
      m(r, c) = on;
    }
  }
  return m;
}

std::array<Mask, kPatternCount> build_table() {
  std::array<Mask, kPatternCount> t{};
  for (int id = 0; id < kPatternCount; ++id) {
    const auto [angle, position] = pattern_of(id);
    t[id] = rasterize(angle, position);
  }
  return t;
}

}  // namespace

const std::array<Mask, kPatternCount>& mask_table() {
  static const std::array<Mask, kPatternCount> table = build_table();
  return table;
}

Mask mask_for(PatternId id) { return mask_table()[id.value()]; }

Mask mask_for(int id) { return mask_for(PatternId(id)); }

Grid3 apply_mask(const Grid3& g, const Mask& m) {
  Grid3 out{};
  for (std::size_t i = 0; i < Grid3::kSize; ++i) out.cells[i] = m.cells[i] ? g.cells[i] : 0.0;
  return out;
}

StimulusGrid apply_mask(const StimulusGrid& s, const Mask& m) {
  return StimulusGrid(apply_mask(s.grid(), m));
}

StimulusGrid render_masked(const Grid3& downsized, PatternId id, MaskOrdering ordering) {
  const Mask& m = mask_for(id);
  if (ordering == MaskOrdering::MaskFirst) return row_peak_filter(apply_mask(downsized, m));
  return apply_mask(row_peak_filter(downsized), m);
}

std::vector<Mask> admissible_supports(PatternId id) {
  const Mask& m = mask_for(id);
  std::vector<Mask> out{Mask{}};
  for (int r = 0; r < 3; ++r) {
    std::vector<int> cols;
    for (int c = 0; c < 3; ++c) {
      if (m(r, c)) cols.push_back(c);
    }
    if (cols.empty()) continue;
    std::vector<Mask> next;
    for (const auto& partial : out) {
      for (int c : cols) {
        Mask s = partial;
        s(r, c) = true;
        next.push_back(s);
      }
    }
    out = std::move(next);
  }
  return out;
}

void write_mask_table(std::ostream& out) {
  for (const auto& m : mask_table()) {
    for (bool b : m.cells) out << (b ? '1' : '0');
    out << '\n';
  }
}

}  // namespace palmpipe
