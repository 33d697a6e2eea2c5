#pragma once

#include "inverseflow/common.hpp"

namespace inverseflow {

// Space-filling designs on the unit box [0,1]^d (rows are points).

Mat latin_hypercube(Eigen::Index n, Eigen::Index d, Rng& rng);

// Halton sequence with a random Cranley-Patterson shift; `skip` leading points
// are dropped. Supports up to 200 dimensions.
Mat shifted_halton(Eigen::Index n, Eigen::Index d, Rng& rng, Eigen::Index skip = 20);

// Affine map of unit-box rows onto [lo, hi] per column.
Mat scale_to_box(const Mat& unit, const Vec& lo, const Vec& hi);

}  // namespace inverseflow
