#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "dplbfgs/data.hpp"

namespace dplbfgs {

// Overflow-safe log(1 + exp(t)).
inline double softplus(double t) {
  return t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
}

inline double sigmoid(double t) {
  if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
  double e = std::exp(t);
  return e / (1.0 + e);
}

// Per-worker smooth loss over a shard; everything is a function of the
// cached products z = X_k^T w only.
class SmoothLoss {
 public:
  virtual ~SmoothLoss() = default;

  // Worker share of the loss value.
  virtual double value_local(const LabeledShard& shard,
                             std::span<const double> z) const = 0;
  // Per-instance derivative d loss_i / d z_i; the worker's additive gradient
  // share is X_k * coef, to be aggregated by allreduce.
  virtual void gradient_coefficients(const LabeledShard& shard,
                                     std::span<const double> z,
                                     std::span<double> coef) const = 0;
  // Worker share of ||v||^2 in the loss Hessian metric, given v_dot_x =
  // X_k^T v.
  virtual double quadform_local(const LabeledShard& shard,
                                std::span<const double> z,
                                std::span<const double> v_dot_x) const = 0;
};

// C * sum_i log(1 + exp(-y_i z_i))
class LogisticLoss : public SmoothLoss {
 public:
  explicit LogisticLoss(double c = 1.0) : c_(c) {}
  double weight() const { return c_; }

  double value_local(const LabeledShard& shard,
                     std::span<const double> z) const override;
  void gradient_coefficients(const LabeledShard& shard,
                             std::span<const double> z,
                             std::span<double> coef) const override;
  double quadform_local(const LabeledShard& shard, std::span<const double> z,
                        std::span<const double> v_dot_x) const override;

 private:
  double c_;
};

// Convex closed proper regularizer g. Separable instances may be evaluated
// piecewise on feature slices; non-separable ones require full-width spans
// and are only usable in the replicated subproblem mode.
class Regularizer {
 public:
  virtual ~Regularizer() = default;
  virtual bool separable() const = 0;
  virtual double value(std::span<const double> w) const = 0;
  // g(w + step) - g(w). Override when the difference can be formed without
  // cancelling two large sums; the comparisons that drive step acceptance
  // need its absolute error to scale with ||step||, not with ||w||.
  virtual double value_diff(std::span<const double> w,
                            std::span<const double> step) const {
    std::vector<double> ws(w.size());
    for (std::size_t j = 0; j < w.size(); ++j) ws[j] = w[j] + step[j];
    return value(ws) - value(w);
  }
  // Exact minimizer p of  (1/2)||p - u||^2 + g(w + p)/psi  over the slice.
  virtual void prox_step(std::span<const double> u, std::span<const double> w,
                         double psi, std::span<double> p) const = 0;
};

class L1Regularizer : public Regularizer {
 public:
  bool separable() const override { return true; }
  double value(std::span<const double> w) const override;
  double value_diff(std::span<const double> w,
                    std::span<const double> step) const override;
  void prox_step(std::span<const double> u, std::span<const double> w,
                 double psi, std::span<double> p) const override;
};

class ZeroRegularizer : public Regularizer {
 public:
  bool separable() const override { return true; }
  double value(std::span<const double>) const override { return 0.0; }
  void prox_step(std::span<const double> u, std::span<const double> w,
                 double psi, std::span<double> p) const override;
};

// Predicted decrease of Eq-line-search model: grad'p + g(w+p) - g(w), with
// the inner product already aggregated across workers.
inline double delta_term(double grad_dot_p, double g_new, double g_old) {
  return grad_dot_p + g_new - g_old;
}

// Cached per-worker products z = X_k^T w and z_dir = X_k^T p. The cache is
// advanced by axpy only on accepted steps; rejected line-search probes work
// on the trial buffer.
class LossCache {
 public:
  void init(const LabeledShard& shard, std::span<const double> w);
  void set_direction(const LabeledShard& shard, std::span<const double> p);
  // trial = z + alpha * z_dir
  std::span<const double> trial(double alpha);
  void accept_trial();

  std::span<const double> z() const { return z_; }
  std::span<const double> z_dir() const { return z_dir_; }

 private:
  std::vector<double> z_, z_dir_, trial_;
};

}  // namespace dplbfgs
