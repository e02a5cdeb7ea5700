#pragma once

#include <optional>

#include "palmpipe/core_types.hpp"

namespace palmpipe {

enum class FingerFusion { Max, FingerAOnly };

/// Element-wise max of finger_a and finger_b mirrored back into finger_a's
/// orientation, or finger_a alone.
ForceGrid10 merge_fingers(const TactileFrame& frame, FingerFusion fusion = FingerFusion::Max);

/// Cubic convolution kernel, a = -0.5.
double cubic_kernel(double x);

/// Resample 10x10 -> 3x3 at the output cell centers (align-centers mapping,
/// source = (i + 0.5) * 10/3 - 0.5), separable cubic convolution with
/// clamped borders. No normalization or clipping.
Grid3 bicubic_resample(const Grid10& grid);

/// bicubic_resample, negative lobes clipped to 0, divided by 9 N, capped at 1.
Grid3 bicubic_resize(const ForceGrid10& grid);

struct RowStimulus {
  int row = 0;
  std::optional<int> column;  // empty when the row is inactive
  double intensity = 0.0;
};

/// Keep only the per-row maximum (ties to the lowest column); a row whose
/// maximum is 0 stays inactive.
StimulusGrid row_peak_filter(const Grid3& g);

RowStimulus row_stimulus(const StimulusGrid& s, int row);

/// merge -> resize -> peak, the full direct rendering chain.
StimulusGrid downsize(const TactileFrame& frame, FingerFusion fusion = FingerFusion::Max);

}  // namespace palmpipe
