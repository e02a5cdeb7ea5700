#pragma once

// Human-study confusion matrices, rows are fractions of 50 presentations.
// Direct rendering of the downsized grid, then masked rendering.

namespace fixtures {

inline constexpr double kStudyDirect[12][12] = {
    {0.16, 0.02, 0.18, 0.06, 0.04, 0.12, 0.06, 0.04, 0.04, 0.10, 0.08, 0.10},
    {0.06, 0.06, 0.32, 0.12, 0.00, 0.08, 0.00, 0.06, 0.00, 0.10, 0.10, 0.10},
    {0.14, 0.02, 0.16, 0.14, 0.02, 0.14, 0.04, 0.00, 0.10, 0.14, 0.06, 0.04},
    {0.12, 0.02, 0.22, 0.14, 0.04, 0.12, 0.02, 0.00, 0.04, 0.06, 0.16, 0.06},
    {0.12, 0.04, 0.16, 0.16, 0.00, 0.20, 0.00, 0.02, 0.08, 0.08, 0.04, 0.10},
    {0.08, 0.06, 0.18, 0.12, 0.08, 0.10, 0.06, 0.06, 0.04, 0.14, 0.06, 0.02},
    {0.18, 0.04, 0.20, 0.06, 0.02, 0.08, 0.06, 0.08, 0.06, 0.08, 0.12, 0.02},
    {0.16, 0.02, 0.16, 0.12, 0.08, 0.10, 0.02, 0.02, 0.12, 0.16, 0.02, 0.02},
    {0.12, 0.02, 0.22, 0.08, 0.08, 0.04, 0.04, 0.08, 0.12, 0.02, 0.06, 0.12},
    {0.08, 0.02, 0.24, 0.10, 0.00, 0.12, 0.10, 0.04, 0.14, 0.08, 0.04, 0.04},
    {0.10, 0.10, 0.32, 0.06, 0.08, 0.04, 0.00, 0.04, 0.10, 0.06, 0.08, 0.02},
    {0.10, 0.02, 0.06, 0.04, 0.08, 0.08, 0.10, 0.04, 0.12, 0.02, 0.16, 0.18},
};

inline constexpr double kStudyMasked[12][12] = {
    {0.92, 0.00, 0.04, 0.04, 0.00, 0.00, 0.00, 0.00, 0.00, 0.00, 0.00, 0.00},
    {0.02, 0.78, 0.00, 0.00, 0.12, 0.02, 0.00, 0.04, 0.02, 0.00, 0.00, 0.00},
    {0.04, 0.00, 0.80, 0.00, 0.00, 0.14, 0.02, 0.00, 0.00, 0.00, 0.00, 0.00},
    {0.04, 0.02, 0.02, 0.76, 0.06, 0.04, 0.00, 0.04, 0.02, 0.00, 0.00, 0.00},
    {0.12, 0.02, 0.00, 0.18, 0.58, 0.06, 0.00, 0.00, 0.04, 0.00, 0.00, 0.00},
    {0.00, 0.00, 0.02, 0.00, 0.00, 0.96, 0.00, 0.00, 0.02, 0.00, 0.00, 0.00},
    {0.08, 0.00, 0.00, 0.00, 0.00, 0.00, 0.92, 0.00, 0.00, 0.00, 0.00, 0.00},
    {0.06, 0.02, 0.00, 0.00, 0.00, 0.00, 0.02, 0.90, 0.00, 0.00, 0.00, 0.00},
    {0.00, 0.00, 0.10, 0.00, 0.02, 0.08, 0.08, 0.02, 0.66, 0.02, 0.00, 0.02},
    {0.00, 0.00, 0.00, 0.06, 0.00, 0.00, 0.00, 0.02, 0.00, 0.86, 0.00, 0.06},
    {0.00, 0.00, 0.00, 0.00, 0.00, 0.02, 0.00, 0.00, 0.02, 0.08, 0.88, 0.00},
    {0.02, 0.00, 0.00, 0.00, 0.00, 0.00, 0.00, 0.00, 0.00, 0.10, 0.00, 0.88},
};

}  // namespace fixtures
