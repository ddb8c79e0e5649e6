#include "dplbfgs/sparsa.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dplbfgs/errors.hpp"
#include "dplbfgs/vecops.hpp"

namespace dplbfgs {

void QuadraticModel::init_gradient(std::span<double> grad, Comm&) {
  std::copy(anchor_.begin(), anchor_.end(), grad.begin());
}

double QuadraticModel::eval_candidate(std::span<const double> cand,
                                      std::span<double> grad_out,
                                      bool& grad_ready, Comm& comm) {
  hp_.resize(cand.size());
  h_->apply(cand, owned_, update_, comm, hp_);
  for (std::size_t j = 0; j < cand.size(); ++j)
    grad_out[j] = anchor_[j] + hp_[j];
  // grad'p + p'Hp/2 == (grad_hat(p) + grad_anchor)'p / 2
  const std::size_t lo = static_cast<std::size_t>(owned_.begin - update_.begin);
  const std::size_t hi = lo + static_cast<std::size_t>(owned_.size());
  double piece = 0;
  for (std::size_t j = lo; j < hi; ++j)
    piece += 0.5 * (grad_out[j] + anchor_[j]) * cand[j];
  grad_ready = true;
  return piece;
}

DirectLossModel::DirectLossModel(const LabeledShard* shard,
                                 const SmoothLoss* loss,
                                 std::span<const double> w_anchor,
                                 std::span<const double> grad0)
    : shard_(shard), loss_(loss), w_anchor_(w_anchor), grad0_(grad0) {
  z_.resize(static_cast<std::size_t>(shard->size()));
  z_trial_.resize(z_.size());
  coef_.resize(z_.size());
  wbuf_.resize(w_anchor.size());
  shard_->xt_w(w_anchor_, z_);
  f0_piece_ = loss_->value_local(*shard_, z_);
}

void DirectLossModel::init_gradient(std::span<double> grad, Comm& comm) {
  if (!grad0_.empty()) {
    std::copy(grad0_.begin(), grad0_.end(), grad.begin());
    return;
  }
  loss_->gradient_coefficients(*shard_, z_, coef_);
  fill_zero(grad);
  shard_->accumulate_xc(coef_, grad);
  comm.allreduce(grad);
}

double DirectLossModel::eval_candidate(std::span<const double> cand,
                                       std::span<double>, bool& grad_ready,
                                       Comm&) {
  for (std::size_t j = 0; j < wbuf_.size(); ++j)
    wbuf_[j] = w_anchor_[j] + cand[j];
  shard_->xt_w(wbuf_, z_trial_);
  grad_ready = false;
  return loss_->value_local(*shard_, z_trial_) - f0_piece_;
}

void DirectLossModel::refresh_gradient(std::span<const double>,
                                       std::span<double> grad_out,
                                       Comm& comm) {
  loss_->gradient_coefficients(*shard_, z_, coef_);
  fill_zero(grad_out);
  shard_->accumulate_xc(coef_, grad_out);
  comm.allreduce(grad_out);
}

void DirectLossModel::accept_candidate() { z_.swap(z_trial_); }

SparsaResult sparsa_solve(const SubproblemSpec& spec,
                          const SparsaOptions& opts, Comm& comm) {
  const std::size_t len = static_cast<std::size_t>(spec.update.size());
  const std::size_t lo =
      static_cast<std::size_t>(spec.owned.begin - spec.update.begin);
  const std::size_t olen = static_cast<std::size_t>(spec.owned.size());
  const bool separable = spec.reg->separable();

  SparsaResult res;
  res.p.assign(len, 0.0);
  res.q_trace.push_back(0.0);
  if (opts.max_iters == 0) {
    res.reason = SparsaStop::max_iters;
    return res;
  }

  std::vector<double> grad(len), prev_p(len, 0.0), prev_grad(len);
  std::vector<double> u(len), cand(len), grad_cand(len);
  spec.smooth->init_gradient(grad, comm);

  // ghat(point) - ghat(0) = g(w+point) - g(w), formed coordinatewise so the
  // error scales with the point and not with w
  auto gdiff_owned = [&](std::span<const double> point) {
    return spec.reg->value_diff(spec.w_anchor.subspan(lo, olen),
                                point.subspan(lo, olen));
  };
  auto gdiff_full = [&](std::span<const double> point) {
    return spec.reg->value_diff(spec.w_anchor, point);
  };

  double q_cur = 0;
  double last_step_sq = 0;
  double max_seed = 0;
  bool noise_floor_hit = false;

  for (int i = 0;; ++i) {
    double psi;
    if (i == 0) {
      psi = spec.psi0;
    } else {
      // spectral estimate; the denominator reuses the reduced norm of the
      // last accepted step
      double num_piece = 0;
      for (std::size_t j = lo; j < lo + olen; ++j)
        num_piece += (res.p[j] - prev_p[j]) * (grad[j] - prev_grad[j]);
      double num = comm.allreduce_scalar(num_piece);
      psi = num / last_step_sq;
    }
    if (!(psi >= opts.psi_min)) psi = opts.psi_min;
    res.psi_seeds.push_back(psi);
    max_seed = std::max(max_seed, psi);

    double q_cand = 0, step_sq = 0;
    bool grad_ready = false;
    for (;;) {
      for (std::size_t j = 0; j < len; ++j)
        u[j] = res.p[j] - grad[j] / psi;
      spec.reg->prox_step(u, spec.w_anchor, psi, cand);

      grad_ready = false;
      double piece = spec.smooth->eval_candidate(cand, grad_cand, grad_ready,
                                                 comm);
      double norm_piece = 0;
      for (std::size_t j = lo; j < lo + olen; ++j) {
        double dj = cand[j] - res.p[j];
        norm_piece += dj * dj;
      }
      double payload[2];
      payload[0] = piece + (separable ? gdiff_owned(cand) : 0.0);
      payload[1] = norm_piece;
      comm.allreduce(std::span<double>(payload, 2));
      q_cand = payload[0];
      if (!separable) q_cand += gdiff_full(cand);
      step_sq = payload[1];
      ++res.accept_evaluations;

      const double required = 0.5 * psi * opts.sigma0 * step_sq;
      if (q_cand <= q_cur - required) break;
      // A demanded decrease below the resolution of the Q accounting means
      // the iterate is a fixed point at working precision.
      if (required <=
          4 * std::numeric_limits<double>::epsilon() *
              (std::fabs(q_cur) + std::fabs(q_cand))) {
        noise_floor_hit = true;
        break;
      }
      psi *= opts.beta;
      // The escalation guard is sized by the largest spectral seed seen in
      // this solve: a single iteration's seed can sit near the bottom of
      // the spectrum while acceptance needs psi near the top.
      if (psi > opts.escalation_cap * max_seed)
        throw SolverError(
            "sparsa: sufficient decrease unreachable after psi escalation");
    }
    if (noise_floor_hit) {
      res.reason = SparsaStop::stationary;
      break;
    }

    spec.smooth->accept_candidate();
    if (!grad_ready)
      spec.smooth->refresh_gradient(cand, grad_cand, comm);
    prev_p.swap(res.p);
    res.p.swap(cand);
    prev_grad.swap(grad);
    grad.swap(grad_cand);
    q_cur = q_cand;
    last_step_sq = step_sq;
    const double step_norm = std::sqrt(step_sq);

    ++res.inner_iterations;
    res.psi_trace.push_back(psi);
    res.q_trace.push_back(q_cur);
    res.last_step_norm = step_norm;
    if (i == 0) res.first_step_norm = step_norm;

    SparsaIterate view{res.inner_iterations, q_cur, psi, step_norm, res.p,
                       grad};
    if (spec.on_accept) spec.on_accept(view);

    if (step_sq == 0) {
      res.reason = SparsaStop::stationary;
      break;
    }
    if (spec.stop && spec.stop(view)) {
      res.reason = SparsaStop::external;
      break;
    }
    if (step_norm <= opts.eps1 * res.first_step_norm) {
      res.reason = SparsaStop::step_ratio;
      break;
    }
    if (res.inner_iterations >= opts.max_iters) {
      res.reason = SparsaStop::max_iters;
      break;
    }
  }
  return res;
}

}  // namespace dplbfgs
