#pragma once

#include <functional>
#include <span>
#include <vector>

#include "dplbfgs/comm.hpp"
#include "dplbfgs/lbfgs.hpp"
#include "dplbfgs/objective.hpp"

namespace dplbfgs {

// Smooth part f_hat of the subproblem objective, presented to the engine as
// additively reducible value pieces plus a gradient over the worker's update
// range. Implementations perform whatever communication their evaluation
// needs; the engine itself reduces values and step norms.
class SmoothPart {
 public:
  virtual ~SmoothPart() = default;
  // Gradient at p = 0.
  virtual void init_gradient(std::span<double> grad, Comm& comm) = 0;
  // Worker piece of f_hat(cand) - f_hat(0). If the evaluation already
  // produced the gradient at cand, fill grad_out and set grad_ready.
  virtual double eval_candidate(std::span<const double> cand,
                                std::span<double> grad_out, bool& grad_ready,
                                Comm& comm) = 0;
  // Gradient at the just-accepted candidate, for oracles whose value
  // evaluation does not come with one.
  virtual void refresh_gradient(std::span<const double> cand,
                                std::span<double> grad_out, Comm& comm) = 0;
  virtual void accept_candidate() {}
};

// grad_anchor + H p: the quadratic model built around the outer iterate.
// Its value is evaluated through (grad_hat(p) + grad_anchor)' p / 2, so the
// gradient comes for free with each candidate.
class QuadraticModel : public SmoothPart {
 public:
  QuadraticModel(std::span<const double> grad_anchor, const HessianHandle* h,
                 FeatureRange owned, FeatureRange update)
      : anchor_(grad_anchor), h_(h), owned_(owned), update_(update) {}

  void init_gradient(std::span<double> grad, Comm&) override;
  double eval_candidate(std::span<const double> cand,
                        std::span<double> grad_out, bool& grad_ready,
                        Comm& comm) override;
  void refresh_gradient(std::span<const double>, std::span<double>,
                        Comm&) override {}

 private:
  std::span<const double> anchor_;
  const HessianHandle* h_;
  FeatureRange owned_, update_;
  std::vector<double> hp_;
};

// The raw loss as the smooth part: running the engine on this oracle is the
// plain SpaRSA method applied to F itself. Value pieces come from the local
// z = X_k^T (w + p) products; the gradient costs one d-length allreduce per
// accepted iterate and is therefore deferred to refresh_gradient. Requires
// the replicated update range.
class DirectLossModel : public SmoothPart {
 public:
  DirectLossModel(const LabeledShard* shard, const SmoothLoss* loss,
                  std::span<const double> w_anchor,
                  std::span<const double> grad0);

  void init_gradient(std::span<double> grad, Comm& comm) override;
  double eval_candidate(std::span<const double> cand,
                        std::span<double> grad_out, bool& grad_ready,
                        Comm& comm) override;
  void refresh_gradient(std::span<const double> cand,
                        std::span<double> grad_out, Comm& comm) override;
  void accept_candidate() override;

  std::span<const double> z_accepted() const { return z_; }

 private:
  const LabeledShard* shard_;
  const SmoothLoss* loss_;
  std::span<const double> w_anchor_;
  std::span<const double> grad0_;
  double f0_piece_ = 0;
  std::vector<double> z_, z_trial_, wbuf_, coef_;
};

enum class SparsaStop { step_ratio, max_iters, stationary, external };

// State handed to per-iteration hooks after each accepted step. All fields
// are identical on every worker.
struct SparsaIterate {
  int iteration;                 // accepted steps so far, 1-based
  double q_rel;                  // Q(p) - Q(0)
  double psi;
  double step_norm;
  std::span<const double> p;     // over the update range
  std::span<const double> grad;  // smooth gradient at p
};

struct SubproblemSpec {
  SmoothPart* smooth = nullptr;
  const Regularizer* reg = nullptr;
  // Outer iterate slice over the update range; the subproblem regularizer
  // is g evaluated at w_anchor + p.
  std::span<const double> w_anchor;
  FeatureRange owned, update;
  double psi0 = 1.0;
  // Optional hooks; both must depend only on reduced quantities so that all
  // workers take identical branches.
  std::function<void(const SparsaIterate&)> on_accept;
  std::function<bool(const SparsaIterate&)> stop;
};

struct SparsaOptions {
  double eps1 = 1e-2;       // stop when step norm <= eps1 * first step norm
  int max_iters = 100;
  double beta = 2.0;        // psi escalation factor
  double sigma0 = 1e-2;     // sufficient decrease constant
  double psi_min = 1e-10;   // clamp for spectral estimates
  // Escalation beyond this multiple of the largest spectral seed seen in
  // the solve is treated as a numerical failure. Spectral seeds can sample
  // the bottom of the Hessian spectrum while acceptance needs psi near the
  // top, so the guard must leave room for the full condition number.
  double escalation_cap = 1e8;
};

struct SparsaResult {
  std::vector<double> p;          // over the update range
  int inner_iterations = 0;       // accepted steps
  int accept_evaluations = 0;     // sufficient-decrease checks performed
  std::vector<double> psi_seeds;  // initial psi per iteration
  std::vector<double> psi_trace;  // accepted psi per iteration
  std::vector<double> q_trace;    // Q(p)-Q(0) after 0,1,2,... steps
  double first_step_norm = 0;
  double last_step_norm = 0;
  SparsaStop reason = SparsaStop::max_iters;
};

SparsaResult sparsa_solve(const SubproblemSpec& spec,
                          const SparsaOptions& opts, Comm& comm);

}  // namespace dplbfgs
