#include "palmpipe/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include <spdlog/spdlog.h>

namespace palmpipe {

namespace {

using Clock = std::chrono::steady_clock;

// Long runs summarize the most recent ticks only (about 4.6 h at 60 Hz).
constexpr std::size_t kLatencyWindow = std::size_t{1} << 20;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

}  // namespace

std::string to_string(const PipelineMode& m) {
  if (!m.is_masked()) return "direct";
  return m.ordering == MaskOrdering::MaskFirst ? "masked" : "masked-peak-first";
}

Pipeline::Pipeline(PipelineConfig cfg, std::shared_ptr<const cnn::ModelParams> model)
    : cfg_(std::move(cfg)), model_(std::move(model)) {
  cfg_.display.geometry.validate();
  cfg_.display.map.validate(cfg_.display.geometry);
}

TickSnapshot Pipeline::tick(const TactileFrame& frame, const PipelineMode& mode) {
  if (mode.is_masked() && !model_) {
    throw std::invalid_argument("masked mode needs a trained model");
  }
  TickSnapshot snap;
  snap.tick = ticks_++;
  snap.mode = mode;
  snap.frame = frame;
  auto& lat = snap.latency;
  const auto t0 = Clock::now();

  auto t = Clock::now();
  snap.merged = merge_fingers(frame, cfg_.fusion);
  lat.merge = ms_since(t);

  t = Clock::now();
  snap.downsized = bicubic_resize(snap.merged);
  lat.resize = ms_since(t);

  if (mode.is_masked()) {
    t = Clock::now();
    const cnn::Prediction pred = cnn::predict(*model_, frame);
    ++cnn_invocations_;
    ClassPrediction cp;
    cp.angle = angle_from_index(pred.angle);
    cp.position = position_from_index(pred.position);
    cp.pattern = pattern_id(cp.angle, cp.position);
    snap.prediction = cp;
    lat.cnn = ms_since(t);

    t = Clock::now();
    snap.mask = mask_for(cp.pattern);
    snap.stimulus = render_masked(snap.downsized, cp.pattern, mode.ordering);
    lat.mask = ms_since(t);
  } else {
    t = Clock::now();
    snap.stimulus = row_peak_filter(snap.downsized);
    lat.mask = ms_since(t);
  }

  t = Clock::now();
  snap.contacts = grid_to_contacts(snap.stimulus, cfg_.display.map, cfg_.display.geometry);
  lat.ik = ms_since(t);

  lat.total = ms_since(t0);
  return snap;
}

Pose scripted_pose(std::uint64_t frame_index, double rate_hz) {
  const auto hold = static_cast<std::uint64_t>(std::max(1.0, std::round(rate_hz / 2.0)));
  const auto segment = frame_index / hold;
  const auto within = frame_index % hold;
  const auto [angle, position] = pattern_of(static_cast<int>(segment % kPatternCount));
  Pose p;
  p.angle = angle;
  p.position = position;
  p.grip_step = hold > 1 ? 10 + static_cast<int>((within * 20) / (hold - 1)) : kMaxGripStep;
  return p;
}

SyntheticSource::SyntheticSource(SimConfig sim, std::uint64_t seed, double rate_hz, PoseFn pose)
    : sim_(sim), seed_(seed), rate_hz_(rate_hz), pose_(std::move(pose)) {
  if (!(rate_hz > 0.0)) throw std::invalid_argument("source rate must be positive");
  sim_.validate();
  if (!pose_) pose_ = [rate_hz](std::uint64_t i) { return scripted_pose(i, rate_hz); };
}

SyntheticSource::~SyntheticSource() { stop(); }

TactileFrame SyntheticSource::frame_at(std::uint64_t index) const {
  const Pose pose = pose_(index);
  Rng rng = make_stream(seed_, index);
  return synth_frame(sim_, pose.angle, pose.position, pose.grip_step, rng,
                     static_cast<double>(index) / rate_hz_);
}

void SyntheticSource::start() {
  if (running_.exchange(true)) return;
  worker_ = std::thread([this] {
    const auto period = std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(1.0 / rate_hz_));
    auto next = Clock::now();
    std::uint64_t index = 0;
    while (running_.load(std::memory_order_relaxed)) {
      slot_.publish(frame_at(index++));
      next += period;
      std::this_thread::sleep_until(next);
    }
  });
}

void SyntheticSource::stop() {
  if (!running_.exchange(false)) return;
  if (worker_.joinable()) worker_.join();
}

LatencySummary summarize(std::vector<double> samples_ms) {
  LatencySummary s;
  s.count = samples_ms.size();
  if (samples_ms.empty()) return s;
  std::sort(samples_ms.begin(), samples_ms.end());
  auto rank = [&](double q) {
    const auto k = static_cast<std::size_t>(std::ceil(q * static_cast<double>(samples_ms.size())));
    return samples_ms[std::clamp<std::size_t>(k, 1, samples_ms.size()) - 1];
  };
  s.p50 = rank(0.50);
  s.p99 = rank(0.99);
  s.max = samples_ms.back();
  return s;
}

RunReport run(Pipeline& pipeline, SyntheticSource& source, const PipelineMode& mode,
              const SnapshotSink& sink, const RunOptions& opts) {
  if (!(opts.duration_s > 0.0) || !(opts.tick_rate_hz > 0.0)) {
    throw std::invalid_argument("run duration and tick rate must be positive");
  }
  const bool unbounded = std::isinf(opts.duration_s);
  if (unbounded && !opts.stop) throw std::invalid_argument("an unbounded run needs a stop flag");
  if (mode.is_masked() && !pipeline.has_model()) {
    throw std::invalid_argument("masked mode needs a trained model");
  }
  RunReport report;
  std::vector<double> latencies;
  const auto period =
      std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(1.0 / opts.tick_rate_hz));
  const auto expected_ticks =
      unbounded ? std::numeric_limits<std::uint64_t>::max()
                : static_cast<std::uint64_t>(std::llround(opts.duration_s * opts.tick_rate_hz));
  latencies.reserve(std::min<std::uint64_t>(expected_ticks, kLatencyWindow));

  source.start();
  // Give the producer a moment so the first tick has a frame to work on.
  const auto first_frame_deadline = Clock::now() + std::chrono::milliseconds(100);
  while (source.produced() == 0 && Clock::now() < first_frame_deadline) {
    std::this_thread::sleep_for(std::chrono::microseconds(200));
  }
  const auto start = Clock::now();
  auto deadline = start;
  std::uint64_t last_seq = 0;
  TactileFrame current;

  for (std::uint64_t k = 0; k < expected_ticks; ++k) {
    if (opts.stop && opts.stop->load()) break;
    std::this_thread::sleep_until(deadline);

    if (auto latest = source.latest(); latest && latest->second != last_seq) {
      report.dropped_frames += latest->second - last_seq - 1;
      last_seq = latest->second;
      current = std::move(latest->first);
      ++report.frames_consumed;
    } else {
      ++report.starved_ticks;
    }

    const PipelineMode m = opts.mode_provider ? opts.mode_provider() : mode;
    TickSnapshot snap = pipeline.tick(current, m);
    if (latencies.size() < kLatencyWindow) {
      latencies.push_back(snap.latency.total);
    } else {
      latencies[report.ticks % kLatencyWindow] = snap.latency.total;
    }
    ++report.ticks;
    if (sink) {
      try {
        sink(snap);
      } catch (const std::exception& e) {
        report.sink_error = e.what();
        spdlog::error("snapshot sink failed at tick {}: {}", snap.tick, e.what());
        break;
      }
    }

    deadline += period;
    const auto now = Clock::now();
    if (now > deadline) {
      ++report.overruns;
      spdlog::debug("tick {} overran its deadline by {:.3f} ms", snap.tick,
                    std::chrono::duration<double, std::milli>(now - deadline).count());
      // Soft real-time: realign instead of bursting to catch up.
      deadline = now;
    }
  }
  source.stop();

  report.frames_produced = source.produced();
  report.dropped_frames += report.frames_produced - last_seq;
  // Occasional reuse from scheduling jitter (or a first tick ahead of the
  // first frame) is not starvation; a source slower than the loop is.
  report.starvation = report.starved_ticks > std::max<std::uint64_t>(1, report.ticks / 20);
  report.total_latency = summarize(std::move(latencies));
  return report;
}

}  // namespace palmpipe
