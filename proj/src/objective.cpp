#include "dplbfgs/objective.hpp"

#include <algorithm>

#include "dplbfgs/errors.hpp"
#include "dplbfgs/vecops.hpp"

namespace dplbfgs {

double LogisticLoss::value_local(const LabeledShard& shard,
                                 std::span<const double> z) const {
  double sum = 0;
  for (std::int64_t i = 0; i < shard.size(); ++i)
    sum += softplus(-shard.label(i) * z[static_cast<std::size_t>(i)]);
  return c_ * sum;
}

void LogisticLoss::gradient_coefficients(const LabeledShard& shard,
                                         std::span<const double> z,
                                         std::span<double> coef) const {
  for (std::int64_t i = 0; i < shard.size(); ++i) {
    double y = shard.label(i);
    coef[static_cast<std::size_t>(i)] =
        -c_ * y * sigmoid(-y * z[static_cast<std::size_t>(i)]);
  }
}

double LogisticLoss::quadform_local(const LabeledShard& shard,
                                    std::span<const double> z,
                                    std::span<const double> v_dot_x) const {
  double sum = 0;
  for (std::int64_t i = 0; i < shard.size(); ++i) {
    double yz = shard.label(i) * z[static_cast<std::size_t>(i)];
    double s = sigmoid(yz);
    double xv = v_dot_x[static_cast<std::size_t>(i)];
    sum += s * (1.0 - s) * xv * xv;
  }
  return c_ * sum;
}

double L1Regularizer::value(std::span<const double> w) const {
  double sum = 0;
  for (double v : w) sum += std::fabs(v);
  return sum;
}

double L1Regularizer::value_diff(std::span<const double> w,
                                 std::span<const double> step) const {
  // per-coordinate |w+s| - |w| without forming the two large sums; every
  // term is O(|s_j|) so the accumulated error scales with ||step||_1
  double sum = 0;
  for (std::size_t j = 0; j < w.size(); ++j) {
    double wj = w[j], sj = step[j];
    double t = wj + sj;
    if (wj >= 0)
      sum += t >= 0 ? sj : -t - wj;
    else
      sum += t <= 0 ? -sj : t + wj;
  }
  return sum;
}

void L1Regularizer::prox_step(std::span<const double> u,
                              std::span<const double> w, double psi,
                              std::span<double> p) const {
  if (psi <= 0) throw Error("prox step requires psi > 0");
  const double tau = 1.0 / psi;
  for (std::size_t j = 0; j < u.size(); ++j)
    p[j] = soft_threshold(w[j] + u[j], tau) - w[j];
}

void ZeroRegularizer::prox_step(std::span<const double> u,
                                std::span<const double>, double psi,
                                std::span<double> p) const {
  if (psi <= 0) throw Error("prox step requires psi > 0");
  std::copy(u.begin(), u.end(), p.begin());
}

void LossCache::init(const LabeledShard& shard, std::span<const double> w) {
  z_.resize(static_cast<std::size_t>(shard.size()));
  z_dir_.assign(z_.size(), 0.0);
  trial_.assign(z_.size(), 0.0);
  shard.xt_w(w, z_);
}

void LossCache::set_direction(const LabeledShard& shard,
                              std::span<const double> p) {
  shard.xt_w(p, z_dir_);
}

std::span<const double> LossCache::trial(double alpha) {
  for (std::size_t i = 0; i < z_.size(); ++i)
    trial_[i] = z_[i] + alpha * z_dir_[i];
  return trial_;
}

void LossCache::accept_trial() { z_.swap(trial_); }

}  // namespace dplbfgs
