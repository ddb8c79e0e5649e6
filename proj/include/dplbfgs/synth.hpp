#pragma once

#include <cstdint>

#include "dplbfgs/data.hpp"

namespace dplbfgs {

// Deterministic synthetic classification sets for benchmarks and tests.
// Labels come from a planted sparse linear model with logistic noise.

// Text-like sparse data: feature popularity skewed toward low indices so
// the loss curvature is strongly anisotropic. Values are +/-1 when
// scale_decades is 0; a positive value spreads per-feature magnitudes over
// that many decades, which sharpens the anisotropy further.
LabeledDataset make_sparse_dataset(std::int64_t n, std::int64_t d,
                                   int nnz_per_instance, std::uint64_t seed,
                                   double scale_decades = 0.0);

// Dense data with per-feature scales spread over two decades.
LabeledDataset make_dense_dataset(std::int64_t n, std::int64_t d,
                                  std::uint64_t seed);

}  // namespace dplbfgs
