#pragma once

// Shared test fixtures: a trivial quadratic loss, a dense Hessian handle,
// and dataset builders.

#include <span>
#include <vector>

#include "dplbfgs/data.hpp"
#include "dplbfgs/lbfgs.hpp"
#include "dplbfgs/objective.hpp"
#include "support/oracles.hpp"

namespace testers {

// Per-instance loss z^2, so a single instance x = e1 gives F(w) = w1^2.
class QuadraticTestLoss : public dplbfgs::SmoothLoss {
 public:
  double value_local(const dplbfgs::LabeledShard& shard,
                     std::span<const double> z) const override {
    double s = 0;
    for (std::int64_t i = 0; i < shard.size(); ++i)
      s += z[static_cast<std::size_t>(i)] * z[static_cast<std::size_t>(i)];
    return s;
  }
  void gradient_coefficients(const dplbfgs::LabeledShard& shard,
                             std::span<const double> z,
                             std::span<double> coef) const override {
    for (std::int64_t i = 0; i < shard.size(); ++i)
      coef[static_cast<std::size_t>(i)] = 2 * z[static_cast<std::size_t>(i)];
  }
  double quadform_local(const dplbfgs::LabeledShard& shard,
                        std::span<const double>,
                        std::span<const double> v_dot_x) const override {
    double s = 0;
    for (std::int64_t i = 0; i < shard.size(); ++i)
      s += 2 * v_dot_x[static_cast<std::size_t>(i)] *
           v_dot_x[static_cast<std::size_t>(i)];
    return s;
  }
};

// Fixed dense H for subproblem tests; replicated update range only.
class DenseHessian : public dplbfgs::HessianHandle {
 public:
  DenseHessian(oracles::DenseMatrix m, double seed)
      : m_(std::move(m)), seed_(seed) {}
  double gamma_seed() const override { return seed_; }
  void apply(std::span<const double> p, dplbfgs::FeatureRange,
             dplbfgs::FeatureRange, dplbfgs::Comm&,
             std::span<double> hp) const override {
    auto y = m_.multiply(p);
    for (std::size_t i = 0; i < y.size(); ++i) hp[i] = y[i];
  }

 private:
  oracles::DenseMatrix m_;
  double seed_;
};

inline dplbfgs::LabeledDataset dataset_from_dense(
    const std::vector<std::vector<double>>& rows,
    const std::vector<int>& labels) {
  dplbfgs::LabeledDataset data;
  data.n = static_cast<std::int64_t>(rows.size());
  data.d = static_cast<std::int64_t>(rows[0].size());
  data.offsets.push_back(0);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      if (rows[i][j] != 0)
        data.entries.push_back({static_cast<std::int64_t>(j), rows[i][j]});
    data.offsets.push_back(static_cast<std::int64_t>(data.entries.size()));
    data.labels.push_back(static_cast<std::int8_t>(labels[i]));
  }
  return data;
}

// Random small logistic instance with dense rows, for oracle comparisons.
inline dplbfgs::LabeledDataset random_dense_dataset(
    std::int64_t n, std::int64_t d, std::mt19937_64& rng,
    std::vector<std::vector<double>>* rows_out = nullptr,
    std::vector<int>* labels_out = nullptr) {
  std::vector<std::vector<double>> rows(static_cast<std::size_t>(n));
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (auto& row : rows) {
    row.resize(static_cast<std::size_t>(d));
    for (auto& v : row) v = 2 * oracles::uniform01(rng) - 1;
  }
  for (auto& y : labels) y = oracles::uniform01(rng) < 0.5 ? -1 : 1;
  if (rows_out) *rows_out = rows;
  if (labels_out) *labels_out = labels;
  return dataset_from_dense(rows, labels);
}

}  // namespace testers
