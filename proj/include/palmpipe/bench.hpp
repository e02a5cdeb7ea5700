/**
 * @file bench.hpp
 * @brief Back-to-back tick timing with per-stage percentiles.
 */

#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "palmpipe/pipeline.hpp"

namespace palmpipe {

struct StageStats {
  std::string stage;  // merge, resize, cnn, mask, ik, total
  LatencySummary latency;
};

struct BenchResult {
  PipelineMode mode;
  std::uint64_t ticks = 0;
  std::vector<StageStats> stages;  // no cnn row in Direct mode

  const StageStats* stage(std::string_view name) const;
};

/// Ticks the pipeline `ticks` times on the source's scripted frames without
/// pacing, so the numbers are pure compute time per tick.
BenchResult bench_ticks(Pipeline& pipeline, const SyntheticSource& source, const PipelineMode& mode,
                        std::uint64_t ticks);

/// One row per stage and mode, p50/p99/max in ms, then the masked total p99
/// against the tick budget.
void write_bench_table(std::ostream& out, const std::vector<BenchResult>& results);

}  // namespace palmpipe
