/**
 * @file pipeline.hpp
 * @brief Sense -> (classify -> mask) -> downsize -> gate -> contacts, at 60 Hz.
 */

#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "palmpipe/channel.hpp"
#include "palmpipe/cnn.hpp"
#include "palmpipe/downsample.hpp"
#include "palmpipe/kinematics.hpp"
#include "palmpipe/masks.hpp"
#include "palmpipe/sensor_sim.hpp"

namespace palmpipe {

inline constexpr double kTickRateHz = 60.0;
inline constexpr double kTickBudgetMs = 1000.0 / kTickRateHz;  // 16.67 ms
inline constexpr double kSensorRateHz = 120.0;

struct PipelineMode {
  enum class Kind { Direct, Masked };
  Kind kind = Kind::Direct;
  MaskOrdering ordering = MaskOrdering::MaskFirst;  // Masked only

  static PipelineMode direct() { return {Kind::Direct, MaskOrdering::MaskFirst}; }
  static PipelineMode masked(MaskOrdering o = MaskOrdering::MaskFirst) { return {Kind::Masked, o}; }
  bool is_masked() const { return kind == Kind::Masked; }
  bool operator==(const PipelineMode&) const = default;
};

std::string to_string(const PipelineMode& m);

/// Per-stage wall time in milliseconds. `cnn` is empty in Direct mode; `mask`
/// covers stimulus rendering (mask gate and peak filter, or peak filter alone).
struct StageLatency {
  double merge = 0.0;
  double resize = 0.0;
  std::optional<double> cnn;
  double mask = 0.0;
  double ik = 0.0;
  double total = 0.0;
};

struct ClassPrediction {
  AngleClass angle = AngleClass::Deg0;
  PositionClass position = PositionClass::Center;
  PatternId pattern{0};
};

struct TickSnapshot {
  std::uint64_t tick = 0;
  PipelineMode mode;
  TactileFrame frame;
  ForceGrid10 merged;
  Grid3 downsized{};
  std::optional<ClassPrediction> prediction;
  std::optional<Mask> mask;
  StimulusGrid stimulus;
  std::array<ContactCommand, 3> contacts{};
  StageLatency latency;
};

struct PipelineConfig {
  FingerFusion fusion = FingerFusion::Max;
  DisplayConfig display;
};

/// Loop state: tick counter, display setup, optional model. One instance is
/// driven by a single thread.
class Pipeline {
 public:
  explicit Pipeline(PipelineConfig cfg = {}, std::shared_ptr<const cnn::ModelParams> model = nullptr);

  /// Throws std::invalid_argument for Masked mode without a model.
  TickSnapshot tick(const TactileFrame& frame, const PipelineMode& mode);

  bool has_model() const { return model_ != nullptr; }
  std::uint64_t ticks() const { return ticks_; }
  std::uint64_t cnn_invocations() const { return cnn_invocations_; }
  const PipelineConfig& config() const { return cfg_; }

 private:
  PipelineConfig cfg_;
  std::shared_ptr<const cnn::ModelParams> model_;
  std::uint64_t ticks_ = 0;
  std::uint64_t cnn_invocations_ = 0;
};

/// Pose script for synthetic sources: frame index -> pose and noise stream.
struct Pose {
  AngleClass angle = AngleClass::Deg0;
  PositionClass position = PositionClass::Center;
  int grip_step = 0;
  bool operator==(const Pose&) const = default;
};

/// Cycles through the 12 patterns, 0.5 s each, ramping grip 10 -> 30 within each hold.
Pose scripted_pose(std::uint64_t frame_index, double rate_hz = kSensorRateHz);

/// Background producer publishing frames at a fixed rate into a latest-value slot.
class SyntheticSource {
 public:
  using PoseFn = std::function<Pose(std::uint64_t frame_index)>;

  SyntheticSource(SimConfig sim, std::uint64_t seed, double rate_hz = kSensorRateHz,
                  PoseFn pose = {});
  ~SyntheticSource();
  SyntheticSource(const SyntheticSource&) = delete;
  SyntheticSource& operator=(const SyntheticSource&) = delete;

  void start();
  void stop();

  /// Newest frame and its 1-based sequence number.
  std::optional<std::pair<TactileFrame, std::uint64_t>> latest() const { return slot_.read(); }
  std::uint64_t produced() const { return slot_.published(); }
  double rate_hz() const { return rate_hz_; }

  /// The frame the source emits at `index` (deterministic).
  TactileFrame frame_at(std::uint64_t index) const;

 private:
  SimConfig sim_;
  std::uint64_t seed_;
  double rate_hz_;
  PoseFn pose_;
  LatestValue<TactileFrame> slot_;
  std::atomic<bool> running_{false};
  std::thread worker_;
};

struct LatencySummary {
  double p50 = 0.0;
  double p99 = 0.0;
  double max = 0.0;
  std::size_t count = 0;
};

/// Nearest-rank percentiles.
LatencySummary summarize(std::vector<double> samples_ms);

struct RunReport {
  std::uint64_t ticks = 0;
  std::uint64_t frames_produced = 0;
  std::uint64_t frames_consumed = 0;  // distinct frames processed
  std::uint64_t dropped_frames = 0;   // produced but never processed
  std::uint64_t starved_ticks = 0;    // ticks that reused the previous frame
  std::uint64_t overruns = 0;         // ticks that missed their deadline
  bool starvation = false;
  LatencySummary total_latency;
  std::optional<std::string> sink_error;
};

using SnapshotSink = std::function<void(const TickSnapshot&)>;

struct RunOptions {
  double duration_s = 1.0;  // may be infinite when `stop` is set
  double tick_rate_hz = kTickRateHz;
  std::function<PipelineMode()> mode_provider;  // overrides `mode` each tick when set
  const std::atomic<bool>* stop = nullptr;      // optional external stop flag
};

/// Fixed-rate loop consuming the source's latest frame each tick. Sink
/// exceptions stop the loop; the message lands in RunReport::sink_error.
RunReport run(Pipeline& pipeline, SyntheticSource& source, const PipelineMode& mode,
              const SnapshotSink& sink, const RunOptions& opts);

}  // namespace palmpipe
