/**
 * @file eval.hpp
 * @brief Recognition metrics and the machine-observer perception study.
 *
 * The observer stands in for a person wearing the display. It perceives
 * which of the nine contact cells are touching the palm and answers with the
 * pattern whose ideal masked rendering is nearest (cellwise squared distance
 * between contact supports, ties to the lowest pattern id). A pattern's ideal
 * renderings are all supports render_masked can produce from noise-free
 * input: one contact per mask row, at any of that row's mask cells.
 */

#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <vector>

#include "palmpipe/confusion.hpp"
#include "palmpipe/pipeline.hpp"

namespace palmpipe {

/// Collapses a 12-class matrix to its 4 angle groups, then overall_rate.
double angle_marginal_rate(const ConfusionMatrix& m);
ConfusionMatrix collapse_to_angles(const ConfusionMatrix& m);

class TemplateObserver {
 public:
  TemplateObserver();
  PatternId classify(const StimulusGrid& s) const;
  /// Contact support as 0/1 cells.
  static Grid3 perceived(const StimulusGrid& s);

  struct Template {
    PatternId id;
    Grid3 cells;
  };
  const std::vector<Template>& templates() const { return templates_; }

 private:
  std::vector<Template> templates_;
};

struct StudyConfig {
  int trials_per_pattern = 500;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
  SimConfig sim;  // stripe geometry; noise_sigma above overrides sim.noise_sigma
  int min_grip_step = 10;
  int max_grip_step = 30;
};

struct StudyResult {
  PipelineMode mode;
  ConfusionMatrix confusion{kPatternCount};
  double overall_rate = 0.0;
  double angle_rate = 0.0;
};

/// For each pattern and trial: draw a grip step, synthesize a noisy frame,
/// run one pipeline tick and let the observer answer. Trial t of pattern i
/// draws from stream (seed, i * trials + t), so modes see identical frames.
/// Throws std::invalid_argument for trials_per_pattern < 1 or Masked mode
/// without a model.
StudyResult machine_observer_study(std::shared_ptr<const cnn::ModelParams> model,
                                   const PipelineMode& mode, const StudyConfig& cfg,
                                   const PipelineConfig& pipeline_cfg = {});

/// Both confusion matrices in row-normalized form plus summary rates.
void write_study_report(std::ostream& out, const StudyConfig& cfg, const StudyResult& direct,
                        const StudyResult& masked);

}  // namespace palmpipe
