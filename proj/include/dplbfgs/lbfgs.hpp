#pragma once

#include <span>
#include <vector>

#include "dplbfgs/comm.hpp"
#include "dplbfgs/data.hpp"

namespace dplbfgs {

// Compact limited-memory BFGS model
//   H = gamma*I - U M^{-1} U^T,  U = [gamma*S, Y],
//   M = [[gamma*S^T S, L], [L^T, -D]],
// over the most recent m admitted curvature pairs, with the base scaling
// gamma = y'y / s'y of the newest pair. A pair (s, y) is admitted only when
// s'y >= delta * s's, which keeps H positive definite and gamma within
// [delta, L]. Pair vectors are replicated; the new gram entries are
// assembled from per-range partial sums so that one admission costs a
// single allreduce of length 2*m_tilde+2 and one product a single allreduce
// of length 2*m_tilde.
//
// M^{-1} is realized as a symmetric indefinite factorization through the
// Schur complement on the -D block:
//   M = [[I, L D^{-1}], [0, I]] diag(Q, -D) [[I, 0], [D^{-1} L^T, I]],
//   Q = gamma*S^T S + L D^{-1} L^T,
// with Q factored by Cholesky and refactored on every admission. If a
// Cholesky pivot falls below 1e-12*max|M|, the oldest pair is dropped and
// the factorization retried.
class LbfgsMemory {
 public:
  LbfgsMemory(int capacity, double delta);

  struct Admission {
    bool admitted = false;
    double s_dot_y = 0;
    double s_dot_s = 0;
  };

  // s, y span the full feature dimension on every worker; partial sums are
  // taken over `owned`.
  Admission try_push_pair(std::span<const double> s, std::span<const double> y,
                          FeatureRange owned, Comm& comm);

  int pair_count() const { return static_cast<int>(pairs_.size()); }
  int capacity() const { return capacity_; }
  double safeguard_delta() const { return delta_; }
  // gamma of the most recent admitted pair; requires pair_count() >= 1.
  double gamma() const;

  // hp = (H p) over `update`, with p indexed relative to update.begin and
  // partial products over `owned` (a subrange of update).
  void apply(std::span<const double> p, FeatureRange owned,
             FeatureRange update, Comm& comm, std::span<double> hp) const;

  // The three stages of apply, exposed for callers that reuse the reduced
  // products: one allreduce of the 2*m_tilde partials of U^T p ...
  std::vector<double> reduce_utp(std::span<const double> p, FeatureRange owned,
                                 FeatureRange update, Comm& comm) const;
  // ... the replicated small solve M z = utp ...
  std::vector<double> solve_middle(std::span<const double> utp) const;
  // ... and the local combination hp = gamma*p - U z.
  void combine(std::span<const double> p, std::span<const double> z,
               FeatureRange update, std::span<double> hp) const;

 private:
  struct Pair {
    std::vector<double> s, y;
  };

  void drop_oldest();
  bool refactor();

  int capacity_;
  double delta_;
  double gamma_ = 1.0;
  std::vector<Pair> pairs_;  // oldest first
  // Gram blocks over the retained pairs; sty_ is maintained on the lower
  // triangle including the diagonal (the upper part is never referenced).
  std::vector<double> sts_, sty_;        // m x m row-major
  std::vector<double> chol_;             // lower Cholesky factor of Q
  std::vector<double> dinv_;             // 1 / diag(s_i' y_i)
};

// Quadratic-model Hessian abstraction used by the subproblem solver.
class HessianHandle {
 public:
  virtual ~HessianHandle() = default;
  // Seed for the first spectral parameter of the subproblem solver.
  virtual double gamma_seed() const = 0;
  virtual void apply(std::span<const double> p, FeatureRange owned,
                     FeatureRange update, Comm& comm,
                     std::span<double> hp) const = 0;
};

class LbfgsHessian : public HessianHandle {
 public:
  explicit LbfgsHessian(const LbfgsMemory* memory) : memory_(memory) {}
  double gamma_seed() const override { return memory_->gamma(); }
  void apply(std::span<const double> p, FeatureRange owned,
             FeatureRange update, Comm& comm,
             std::span<double> hp) const override {
    memory_->apply(p, owned, update, comm, hp);
  }

 private:
  const LbfgsMemory* memory_;
};

// a0 * I fallback for iterations without curvature pairs.
class ScaledIdentityHessian : public HessianHandle {
 public:
  explicit ScaledIdentityHessian(double a0) : a0_(a0) {}
  double gamma_seed() const override { return a0_; }
  void apply(std::span<const double> p, FeatureRange, FeatureRange, Comm&,
             std::span<double> hp) const override {
    for (std::size_t j = 0; j < p.size(); ++j) hp[j] = a0_ * p[j];
  }

 private:
  double a0_;
};

struct InitialScaling {
  double value = 1.0;
  bool degenerate = false;  // zero gradient; fell back to 1
};

// a0 = ||grad||^2_{Hessian} / ||grad||^2 from the aggregated quadratic form
// and gradient norm.
inline InitialScaling compute_a0(double quadform, double grad_norm_sq) {
  if (grad_norm_sq <= 0) return {1.0, true};
  return {quadform / grad_norm_sq, false};
}

}  // namespace dplbfgs
