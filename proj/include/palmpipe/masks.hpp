/**
 * @file masks.hpp
 * @brief Pattern masks and mask gating of the downsized stimulus.
 *
 * Each mask rasterizes its pattern's line onto the 3x3 display:
 *
 *   0 deg   : one full row (up = row 0, center = row 1, down = row 2)
 *   90 deg  : one full column (left = col 0, center = col 1, right = col 2)
 *   45 deg  : main diagonal, shifted one cell left (down-left) or right (up-right)
 *   135 deg : anti-diagonal, shifted one cell left (up-left) or right (down-right)
 */

#pragma once

#include <array>
#include <iosfwd>
#include <vector>

#include "palmpipe/core_types.hpp"

namespace palmpipe {

enum class MaskOrdering {
  MaskFirst,  ///< AND the mask, then pick the per-row peak (default)
  PeakFirst,  ///< pick the per-row peak, then AND the mask
};

const std::array<Mask, kPatternCount>& mask_table();

Mask mask_for(PatternId id);
/// Throws std::out_of_range outside [0, 11].
Mask mask_for(int id);

Grid3 apply_mask(const Grid3& g, const Mask& m);
StimulusGrid apply_mask(const StimulusGrid& s, const Mask& m);

StimulusGrid render_masked(const Grid3& downsized, PatternId id,
                           MaskOrdering ordering = MaskOrdering::MaskFirst);

/// Every support render_masked can produce for a correctly classified,
/// noise-free input: one cell per mask row, chosen among that row's mask cells.
std::vector<Mask> admissible_supports(PatternId id);

/// One line per mask, nine 0/1 characters, row-major.
void write_mask_table(std::ostream& out);

}  // namespace palmpipe
