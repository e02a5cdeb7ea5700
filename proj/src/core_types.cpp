#include "palmpipe/core_types.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace palmpipe {

namespace {

// Block order of angles in the pattern numbering.
constexpr std::array<AngleClass, kAngleCount> kBlockOrder{
    AngleClass::Deg0, AngleClass::Deg45, AngleClass::Deg135, AngleClass::Deg90};

int block_of(AngleClass a) {
  for (int b = 0; b < kAngleCount; ++b) {
    if (kBlockOrder[b] == a) return b;
  }
  throw std::logic_error("unknown angle class");
}

}  // namespace

AngleClass angle_from_degrees(int deg) {
  switch (deg) {
    case 0: return AngleClass::Deg0;
    case 45: return AngleClass::Deg45;
    case 90: return AngleClass::Deg90;
    case 135: return AngleClass::Deg135;
    default: throw std::out_of_range("angle must be 0, 45, 90 or 135 degrees, got " + std::to_string(deg));
  }
}

AngleClass angle_from_index(int index) {
  if (index < 0 || index >= kAngleCount) {
    throw std::out_of_range("angle class index out of range: " + std::to_string(index));
  }
  return static_cast<AngleClass>(index);
}

PositionClass position_from_index(int index) {
  if (index < 0 || index >= kPositionCount) {
    throw std::out_of_range("position class index out of range: " + std::to_string(index));
  }
  return static_cast<PositionClass>(index);
}

std::string_view to_string(AngleClass a) {
  switch (a) {
    case AngleClass::Deg0: return "0deg";
    case AngleClass::Deg45: return "45deg";
    case AngleClass::Deg90: return "90deg";
    case AngleClass::Deg135: return "135deg";
  }
  return "?";
}

std::string_view to_string(PositionClass p) {
  switch (p) {
    case PositionClass::Center: return "center";
    case PositionClass::Left: return "left";
    case PositionClass::Right: return "right";
  }
  return "?";
}

std::string_view position_label(AngleClass a, PositionClass p) {
  if (a == AngleClass::Deg0) {
    if (p == PositionClass::Left) return "up";
    if (p == PositionClass::Right) return "down";
  }
  return to_string(p);
}

PatternId::PatternId(int id) : id_(id) {
  if (id < 0 || id >= kPatternCount) {
    throw std::out_of_range("pattern id out of range [0, 11]: " + std::to_string(id));
  }
}

PatternId pattern_id(AngleClass angle, PositionClass position) {
  return PatternId(block_of(angle) * kPositionCount + static_cast<int>(position));
}

std::pair<AngleClass, PositionClass> pattern_of(PatternId id) {
  return {kBlockOrder[id.value() / kPositionCount],
          static_cast<PositionClass>(id.value() % kPositionCount)};
}

std::pair<AngleClass, PositionClass> pattern_of(int id) { return pattern_of(PatternId(id)); }

ForceGrid10::ForceGrid10(const Grid10& values) : values_(values) {
  for (std::size_t i = 0; i < Grid10::kSize; ++i) {
    const double v = values.cells[i];
    if (!std::isfinite(v) || v < 0.0 || v > kMaxForceN) {
      throw std::domain_error("force value outside [0, 9] N at cell " + std::to_string(i) + ": " +
                              std::to_string(v));
    }
  }
}

double ForceGrid10::total() const {
  return std::accumulate(values_.cells.begin(), values_.cells.end(), 0.0);
}

double ForceGrid10::max() const {
  return *std::max_element(values_.cells.begin(), values_.cells.end());
}

ForceGrid10 mirror_columns(const ForceGrid10& g) {
  Grid10 out;
  for (std::size_t r = 0; r < 10; ++r) {
    for (std::size_t c = 0; c < 10; ++c) out(r, c) = g(r, 9 - c);
  }
  return ForceGrid10(out);
}

StimulusGrid::StimulusGrid(const Grid3& intensities) : values_(intensities) {
  for (double v : intensities.cells) {
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
      throw std::domain_error("stimulus intensity outside [0, 1]: " + std::to_string(v));
    }
  }
}

int StimulusGrid::active_count() const {
  return static_cast<int>(
      std::count_if(values_.cells.begin(), values_.cells.end(), [](double v) { return v > 0.0; }));
}

int count_true(const Mask& m) {
  return static_cast<int>(std::count(m.cells.begin(), m.cells.end(), true));
}

}  // namespace palmpipe
