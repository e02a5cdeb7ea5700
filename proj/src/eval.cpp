#include "palmpipe/eval.hpp"

#include <iomanip>
#include <limits>
#include <ostream>

namespace palmpipe {

ConfusionMatrix collapse_to_angles(const ConfusionMatrix& m) {
  if (m.classes() != kPatternCount) {
    throw std::invalid_argument("angle collapse needs a 12-class matrix, got " +
                                std::to_string(m.classes()));
  }
  ConfusionMatrix out(kAngleCount);
  for (int t = 0; t < kPatternCount; ++t) {
    const int ta = static_cast<int>(pattern_of(t).first);
    for (int p = 0; p < kPatternCount; ++p) out.add(ta, static_cast<int>(pattern_of(p).first), m(t, p));
  }
  return out;
}

double angle_marginal_rate(const ConfusionMatrix& m) { return overall_rate(collapse_to_angles(m)); }

TemplateObserver::TemplateObserver() {
  for (int id = 0; id < kPatternCount; ++id) {
    for (const Mask& support : admissible_supports(PatternId(id))) {
      Template t{PatternId(id), {}};
      for (std::size_t i = 0; i < Grid3::kSize; ++i) t.cells.cells[i] = support.cells[i] ? 1.0 : 0.0;
      templates_.push_back(t);
    }
  }
}

Grid3 TemplateObserver::perceived(const StimulusGrid& s) {
  Grid3 g{};
  for (std::size_t i = 0; i < Grid3::kSize; ++i) g.cells[i] = s.grid().cells[i] > 0.0 ? 1.0 : 0.0;
  return g;
}

PatternId TemplateObserver::classify(const StimulusGrid& s) const {
  const Grid3 seen = perceived(s);
  double best = std::numeric_limits<double>::infinity();
  int best_id = 0;
  // Templates are stored in ascending id order, so strict < keeps the lowest id on ties.
  for (const auto& t : templates_) {
    double d = 0.0;
    for (std::size_t i = 0; i < Grid3::kSize; ++i) {
      const double diff = seen.cells[i] - t.cells.cells[i];
      d += diff * diff;
    }
    if (d < best) {
      best = d;
      best_id = t.id.value();
    }
  }
  return PatternId(best_id);
}

StudyResult machine_observer_study(std::shared_ptr<const cnn::ModelParams> model,
                                   const PipelineMode& mode, const StudyConfig& cfg,
                                   const PipelineConfig& pipeline_cfg) {
  if (cfg.trials_per_pattern < 1) throw std::invalid_argument("trials_per_pattern must be at least 1");
  if (cfg.min_grip_step < 0 || cfg.max_grip_step > kMaxGripStep || cfg.min_grip_step > cfg.max_grip_step) {
    throw std::invalid_argument("grip step range must lie within [0, 30]");
  }
  if (mode.is_masked() && !model) throw std::invalid_argument("masked study needs a trained model");

  SimConfig sim = cfg.sim;
  sim.noise_sigma = cfg.noise_sigma;
  sim.validate();

  Pipeline pipeline(pipeline_cfg, std::move(model));
  const TemplateObserver observer;
  StudyResult result;
  result.mode = mode;
  std::uniform_int_distribution<int> grip(cfg.min_grip_step, cfg.max_grip_step);
  for (int id = 0; id < kPatternCount; ++id) {
    const auto [angle, position] = pattern_of(id);
    for (int t = 0; t < cfg.trials_per_pattern; ++t) {
      Rng rng = make_stream(cfg.seed, static_cast<std::uint64_t>(id) * cfg.trials_per_pattern + t);
      const int step = grip(rng);
      const TactileFrame frame = synth_frame(sim, angle, position, step, rng);
      const TickSnapshot snap = pipeline.tick(frame, mode);
      result.confusion.add(id, observer.classify(snap.stimulus).value());
    }
  }
  result.overall_rate = overall_rate(result.confusion);
  result.angle_rate = angle_marginal_rate(result.confusion);
  return result;
}

void write_study_report(std::ostream& out, const StudyConfig& cfg, const StudyResult& direct,
                        const StudyResult& masked) {
  const auto flags = out.flags();
  out << "machine-observer study\n";
  out << "trials_per_pattern = " << cfg.trials_per_pattern << '\n';
  out << "noise_sigma_n = " << cfg.noise_sigma << '\n';
  out << "seed = " << cfg.seed << '\n';
  out << "grip_steps = " << cfg.min_grip_step << ".." << cfg.max_grip_step << "\n\n";
  for (const StudyResult* r : {&direct, &masked}) {
    out << "confusion " << to_string(r->mode) << " (rows: pattern, columns: answer)\n";
    write_normalized(out, r->confusion);
    out << '\n';
  }
  out << std::fixed << std::setprecision(4);
  out << "overall_rate_direct = " << direct.overall_rate << '\n';
  out << "overall_rate_masked = " << masked.overall_rate << '\n';
  out << "angle_rate_direct = " << direct.angle_rate << '\n';
  out << "angle_rate_masked = " << masked.angle_rate << '\n';
  out.flags(flags);
}

}  // namespace palmpipe
