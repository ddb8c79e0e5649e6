#include "dplbfgs/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

namespace dplbfgs {

namespace {

// Uniform in [0,1) from explicit bit manipulation; distribution classes are
// not reproducible across standard library implementations.
double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double gaussian(std::mt19937_64& rng) {
  double u1 = uniform01(rng), u2 = uniform01(rng);
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

std::vector<double> planted_model(std::int64_t d, std::mt19937_64& rng) {
  std::vector<double> w(static_cast<std::size_t>(d), 0.0);
  for (auto& v : w)
    if (uniform01(rng) < 0.05) v = 4.0 * (uniform01(rng) - 0.5);
  return w;
}

int label_from_margin(double margin, std::mt19937_64& rng) {
  return margin + 0.5 * gaussian(rng) > 0 ? +1 : -1;
}

}  // namespace

LabeledDataset make_sparse_dataset(std::int64_t n, std::int64_t d,
                                   int nnz_per_instance, std::uint64_t seed,
                                   double scale_decades) {
  std::mt19937_64 rng(seed);
  LabeledDataset data;
  data.n = n;
  data.d = d;
  data.offsets.reserve(static_cast<std::size_t>(n) + 1);
  data.offsets.push_back(0);
  std::vector<double> scale(static_cast<std::size_t>(d), 1.0);
  if (scale_decades > 0)
    for (std::int64_t j = 0; j < d; ++j)
      scale[static_cast<std::size_t>(j)] =
          std::pow(10.0, -scale_decades * static_cast<double>(j) /
                             static_cast<double>(d));
  std::vector<double> w_true = planted_model(d, rng);
  std::vector<std::int64_t> idx;
  for (std::int64_t i = 0; i < n; ++i) {
    idx.clear();
    while (static_cast<int>(idx.size()) < nnz_per_instance) {
      // popularity skew: quadratic bias toward low feature indices
      double u = uniform01(rng);
      std::int64_t j = static_cast<std::int64_t>(u * u * static_cast<double>(d));
      if (j >= d) j = d - 1;
      if (std::find(idx.begin(), idx.end(), j) == idx.end()) idx.push_back(j);
    }
    std::sort(idx.begin(), idx.end());
    double margin = 0;
    for (std::int64_t j : idx) {
      double v = (uniform01(rng) < 0.5 ? -1.0 : 1.0) *
                 scale[static_cast<std::size_t>(j)];
      data.entries.push_back({j, v});
      margin += v * w_true[static_cast<std::size_t>(j)];
    }
    data.offsets.push_back(static_cast<std::int64_t>(data.entries.size()));
    data.labels.push_back(
        static_cast<std::int8_t>(label_from_margin(margin, rng)));
  }
  return data;
}

LabeledDataset make_dense_dataset(std::int64_t n, std::int64_t d,
                                  std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  LabeledDataset data;
  data.n = n;
  data.d = d;
  data.offsets.reserve(static_cast<std::size_t>(n) + 1);
  data.offsets.push_back(0);
  std::vector<double> scale(static_cast<std::size_t>(d));
  for (std::int64_t j = 0; j < d; ++j)
    scale[static_cast<std::size_t>(j)] =
        std::pow(10.0, -2.0 * static_cast<double>(j) / static_cast<double>(d));
  std::vector<double> w_true = planted_model(d, rng);
  for (std::int64_t i = 0; i < n; ++i) {
    double margin = 0;
    for (std::int64_t j = 0; j < d; ++j) {
      double v = gaussian(rng) * scale[static_cast<std::size_t>(j)];
      data.entries.push_back({j, v});
      margin += v * w_true[static_cast<std::size_t>(j)];
    }
    data.offsets.push_back(static_cast<std::int64_t>(data.entries.size()));
    data.labels.push_back(
        static_cast<std::int8_t>(label_from_margin(margin, rng)));
  }
  return data;
}

}  // namespace dplbfgs
