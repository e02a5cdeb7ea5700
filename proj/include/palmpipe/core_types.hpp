/**
 * @file core_types.hpp
 * @brief Label taxonomy and shared value types.
 *
 * Twelve tactile patterns combine four tilt angles with three positions.
 * Pattern ids are grouped by angle in blocks of three:
 *
 *   Deg0   -> 0..2     Deg45 -> 3..5     Deg135 -> 6..8     Deg90 -> 9..11
 *
 * with position order (Center, Left, Right) inside each block. For Deg0 the
 * Left/Right variants read as Up/Down. Ids 0, 4, 5 and 6 are anchored by
 * published results; the rest of the layout follows from the block rule.
 */

#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string_view>
#include <utility>

namespace palmpipe {

enum class AngleClass : int { Deg0 = 0, Deg45 = 1, Deg90 = 2, Deg135 = 3 };
enum class PositionClass : int { Center = 0, Left = 1, Right = 2 };

inline constexpr int kAngleCount = 4;
inline constexpr int kPositionCount = 3;
inline constexpr int kPatternCount = 12;

inline constexpr std::array<AngleClass, kAngleCount> kAllAngles{
    AngleClass::Deg0, AngleClass::Deg45, AngleClass::Deg90, AngleClass::Deg135};
inline constexpr std::array<PositionClass, kPositionCount> kAllPositions{
    PositionClass::Center, PositionClass::Left, PositionClass::Right};

/// Tilt in degrees (0, 45, 90, 135).
constexpr int degrees(AngleClass a) { return 45 * static_cast<int>(a); }

/// Throws std::out_of_range for anything but 0/45/90/135.
AngleClass angle_from_degrees(int deg);
AngleClass angle_from_index(int index);
PositionClass position_from_index(int index);

std::string_view to_string(AngleClass a);
/// "center", "left", "right"; Deg0 callers use position_label() for up/down.
std::string_view to_string(PositionClass p);
std::string_view position_label(AngleClass a, PositionClass p);

/// Pattern number in [0, 11]. Construction rejects anything else.
class PatternId {
 public:
  explicit PatternId(int id);
  constexpr int value() const { return id_; }
  constexpr bool operator==(const PatternId&) const = default;
  constexpr auto operator<=>(const PatternId&) const = default;

 private:
  int id_;
};

PatternId pattern_id(AngleClass angle, PositionClass position);
std::pair<AngleClass, PositionClass> pattern_of(PatternId id);
/// Same as above; throws std::out_of_range when id is outside [0, 11].
std::pair<AngleClass, PositionClass> pattern_of(int id);

/// Dense row-major grid.
template <std::size_t Rows, std::size_t Cols, typename T = double>
struct Grid {
  static constexpr std::size_t kRows = Rows;
  static constexpr std::size_t kCols = Cols;
  static constexpr std::size_t kSize = Rows * Cols;

  std::array<T, kSize> cells{};

  constexpr T& operator()(std::size_t r, std::size_t c) { return cells[r * Cols + c]; }
  constexpr const T& operator()(std::size_t r, std::size_t c) const { return cells[r * Cols + c]; }
  constexpr bool operator==(const Grid&) const = default;
};

using Grid3 = Grid<3, 3>;
using Grid10 = Grid<10, 10>;

inline constexpr double kMaxForceN = 9.0;

/// 10x10 force map in newtons; every entry finite and within [0, 9].
class ForceGrid10 {
 public:
  ForceGrid10() = default;
  /// Throws std::domain_error when any entry violates the bound.
  explicit ForceGrid10(const Grid10& values);

  double operator()(std::size_t r, std::size_t c) const { return values_(r, c); }
  const Grid10& grid() const { return values_; }
  std::span<const double, 100> values() const { return values_.cells; }
  double total() const;
  double max() const;

  bool operator==(const ForceGrid10&) const = default;

 private:
  Grid10 values_{};
};

/// Mirror about the vertical axis (column c <-> 9 - c).
ForceGrid10 mirror_columns(const ForceGrid10& g);

struct TactileFrame {
  ForceGrid10 finger_a;
  ForceGrid10 finger_b;
  double timestamp = 0.0;  // seconds, monotonic

  bool operator==(const TactileFrame&) const = default;
};

/// Normalized 3x3 stimulation intensities; row index is the linkage index.
class StimulusGrid {
 public:
  StimulusGrid() = default;
  /// Throws std::domain_error unless every entry is finite and in [0, 1].
  explicit StimulusGrid(const Grid3& intensities);

  double operator()(std::size_t r, std::size_t c) const { return values_(r, c); }
  const Grid3& grid() const { return values_; }
  int active_count() const;

  bool operator==(const StimulusGrid&) const = default;

 private:
  Grid3 values_{};
};

using Mask = Grid<3, 3, bool>;

int count_true(const Mask& m);

}  // namespace palmpipe
