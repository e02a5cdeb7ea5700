#include "palmpipe/bench.hpp"

#include <iomanip>
#include <ostream>
#include <stdexcept>

namespace palmpipe {

const StageStats* BenchResult::stage(std::string_view name) const {
  for (const auto& s : stages) {
    if (s.stage == name) return &s;
  }
  return nullptr;
}

BenchResult bench_ticks(Pipeline& pipeline, const SyntheticSource& source, const PipelineMode& mode,
                        std::uint64_t ticks) {
  if (ticks == 0) throw std::invalid_argument("bench needs at least one tick");
  std::vector<double> merge, resize, cnn, mask, ik, total;
  for (auto* v : {&merge, &resize, &cnn, &mask, &ik, &total}) v->reserve(ticks);

  for (std::uint64_t k = 0; k < ticks; ++k) {
    // Two sensor frames per tick, as the 120 Hz source would deliver.
    const TickSnapshot snap = pipeline.tick(source.frame_at(2 * k), mode);
    const auto& l = snap.latency;
    merge.push_back(l.merge);
    resize.push_back(l.resize);
    if (l.cnn) cnn.push_back(*l.cnn);
    mask.push_back(l.mask);
    ik.push_back(l.ik);
    total.push_back(l.total);
  }

  BenchResult r;
  r.mode = mode;
  r.ticks = ticks;
  r.stages.push_back({"merge", summarize(std::move(merge))});
  r.stages.push_back({"resize", summarize(std::move(resize))});
  if (!cnn.empty()) r.stages.push_back({"cnn", summarize(std::move(cnn))});
  r.stages.push_back({"mask", summarize(std::move(mask))});
  r.stages.push_back({"ik", summarize(std::move(ik))});
  r.stages.push_back({"total", summarize(std::move(total))});
  return r;
}

void write_bench_table(std::ostream& out, const std::vector<BenchResult>& results) {
  const auto flags = out.flags();
  const auto precision = out.precision();
  out << std::left << std::setw(8) << "mode" << std::setw(8) << "stage" << std::right << std::setw(12)
      << "p50_ms" << std::setw(12) << "p99_ms" << std::setw(12) << "max_ms" << '\n';
  out << std::fixed << std::setprecision(4);
  for (const auto& r : results) {
    for (const auto& s : r.stages) {
      out << std::left << std::setw(8) << to_string(r.mode) << std::setw(8) << s.stage << std::right
          << std::setw(12) << s.latency.p50 << std::setw(12) << s.latency.p99 << std::setw(12)
          << s.latency.max << '\n';
    }
  }
  for (const auto& r : results) {
    if (!r.mode.is_masked()) continue;
    const double p99 = r.stage("total")->latency.p99;
    out << "masked total p99 " << p99 << " ms over " << r.ticks << " ticks, budget " << std::setprecision(2)
        << kTickBudgetMs << std::setprecision(4)
        << " ms: " << (p99 <= kTickBudgetMs ? "within budget" : "OVER BUDGET") << '\n';
  }
  out.flags(flags);
  out.precision(precision);
}

}  // namespace palmpipe
