/**
 * @file sensor_sim.hpp
 * @brief Synthetic fingertip sensor frames of a grasped pipette.
 *
 * The pipette presses a stripe of force across each 10x10 array. The stripe
 * has a Gaussian cross-section around a straight line whose orientation
 * follows the tilt class (0 deg horizontal, 90 deg vertical, 45 deg along the
 * main diagonal, 135 deg along the anti-diagonal) and which is displaced
 * perpendicular to itself for non-center positions. Amplitude grows linearly
 * with the grip step (0..30).
 */

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <random>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "palmpipe/core_types.hpp"

namespace palmpipe {

inline constexpr int kMaxGripStep = 30;
inline constexpr int kGripStepCount = kMaxGripStep + 1;

struct SimConfig {
  double line_width_sigma = 1.2;     // cells
  double peak_force_per_step = 0.29; // N per grip step
  double noise_sigma = 0.15;         // N
  double offset_cells = 3.0;
  int reps_per_config = 36;

  /// Throws std::invalid_argument on non-positive fields or when the
  /// full-grip amplitude would exceed the sensor range.
  void validate() const;
  bool operator==(const SimConfig&) const = default;
};

struct GripSample {
  TactileFrame frame;
  AngleClass angle = AngleClass::Deg0;
  PositionClass position = PositionClass::Center;
  int grip_step = 0;

  PatternId pattern() const { return pattern_id(angle, position); }
  bool operator==(const GripSample&) const = default;
};

struct Dataset {
  std::vector<GripSample> samples;
  std::uint64_t seed = 0;
  SimConfig config;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
};

using Rng = std::mt19937_64;

/// Deterministic per-item stream: one generator per (seed, index) pair.
Rng make_stream(std::uint64_t seed, std::uint64_t index);

/// Noise-free stripe intensity in N at one cell.
double stripe_force(const SimConfig& cfg, AngleClass angle, PositionClass position, int grip_step,
                    double row, double col);

/// Noise-free finger_a grid (unclipped amplitude never exceeds 9 N for valid configs).
Grid10 stripe_grid(const SimConfig& cfg, AngleClass angle, PositionClass position, int grip_step);

/// finger_b is the column mirror of finger_a; each finger gets independent noise.
TactileFrame synth_frame(const SimConfig& cfg, AngleClass angle, PositionClass position,
                         int grip_step, Rng& rng, double timestamp = 0.0);

/// reps_per_config samples for each of the 12 x 31 (pattern, grip step)
/// configurations, pattern-major then grip step then repetition.
Dataset generate_dataset(const SimConfig& cfg, std::uint64_t seed);

struct SplitRatios {
  double train = 0.5;
  double val = 0.25;
  double test = 0.25;
};

/// Stratified by pattern id: each class is shuffled and cut at the ratios,
/// then every split is shuffled. Rejects non-positive ratios and sums != 1.
std::tuple<Dataset, Dataset, Dataset> split_dataset(const Dataset& d, SplitRatios ratios,
                                                    std::uint64_t seed);

// Text format: header `palmpipe-dataset v1,count=N,seed=S`, then one record
// per line: `pattern_id,grip_step,` + 200 forces (finger_a then finger_b).
void write_dataset(std::ostream& out, const Dataset& d);
void save_dataset(const std::filesystem::path& path, const Dataset& d);
/// Throws DatasetParseError naming the offending line.
Dataset read_dataset(std::istream& in);
Dataset load_dataset(const std::filesystem::path& path);

class DatasetParseError : public std::runtime_error {
 public:
  DatasetParseError(std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

}  // namespace palmpipe
