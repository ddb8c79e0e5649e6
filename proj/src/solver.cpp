#include "dplbfgs/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "dplbfgs/errors.hpp"
#include "dplbfgs/lbfgs.hpp"
#include "dplbfgs/sparsa.hpp"
#include "dplbfgs/vecops.hpp"

namespace dplbfgs {

namespace {

std::span<const double> slice(std::span<const double> v, FeatureRange r) {
  return v.subspan(static_cast<std::size_t>(r.begin),
                   static_cast<std::size_t>(r.size()));
}

double wall_seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

}  // namespace

double prox_grad_norm(std::span<const double> w, std::span<const double> grad,
                      const Regularizer& reg) {
  std::vector<double> u(grad.size()), p(grad.size());
  for (std::size_t j = 0; j < grad.size(); ++j) u[j] = -grad[j];
  reg.prox_step(u, w, 1.0, p);
  return nrm2(p);
}

double eval_objective_trial(const SmoothLoss& loss, const LabeledShard& shard,
                            LossCache& cache, double alpha,
                            std::span<const double> w,
                            std::span<const double> p, FeatureRange owned,
                            const Regularizer& reg, Comm& comm) {
  auto z_trial = cache.trial(alpha);
  double piece = loss.value_local(shard, z_trial);
  std::vector<double> wt(static_cast<std::size_t>(owned.size()));
  for (std::int64_t j = owned.begin; j < owned.end; ++j)
    wt[static_cast<std::size_t>(j - owned.begin)] =
        w[static_cast<std::size_t>(j)] +
        alpha * p[static_cast<std::size_t>(j)];
  piece += reg.value(wt);
  return comm.allreduce_scalar(piece);
}

double compute_delta(std::span<const double> grad, std::span<const double> p,
                     std::span<const double> w, const Regularizer& reg,
                     FeatureRange owned, Comm& comm) {
  double piece = 0;
  for (std::int64_t j = owned.begin; j < owned.end; ++j)
    piece += grad[static_cast<std::size_t>(j)] *
             p[static_cast<std::size_t>(j)];
  if (reg.separable()) {
    piece += reg.value_diff(slice(w, owned), slice(p, owned));
    return comm.allreduce_scalar(piece);
  }
  double reduced = comm.allreduce_scalar(piece);
  return reduced + reg.value_diff(w, p);
}

LineSearchResult armijo_line_search(const SmoothLoss& loss,
                                    const LabeledShard& shard,
                                    LossCache& cache,
                                    std::span<const double> w,
                                    std::span<const double> p,
                                    FeatureRange owned, const Regularizer& reg,
                                    double f_cur, double delta, double sigma1,
                                    double theta, int max_backtracks,
                                    Comm& comm) {
  LineSearchResult res;
  double alpha = 1.0;
  for (int i = 0;; ++i) {
    double f_trial = eval_objective_trial(loss, shard, cache, alpha, w, p,
                                          owned, reg, comm);
    ++res.probes;
    if (f_trial <= f_cur + alpha * sigma1 * delta) {
      cache.accept_trial();
      res.alpha = alpha;
      res.f_new = f_trial;
      return res;
    }
    if (i >= max_backtracks)
      throw SolverError(
          "line search exceeded backtrack cap; oracles are inconsistent");
    alpha *= theta;
  }
}

namespace {

struct WorkerShared {
  SolveResult* result;
  std::chrono::steady_clock::time_point t0;
};

// Per-worker driver running in lockstep with its peers through the
// collectives. All branch decisions depend on reduced quantities only, so
// every worker performs the same number of collective calls per iteration.
class WorkerSolver {
 public:
  WorkerSolver(const LabeledDataset& data, const SolverConfig& cfg,
               const LabeledShard& shard, FeaturePartition fpart, Comm& comm,
               WorkerShared& shared)
      : cfg_(cfg),
        loss_(cfg.c),
        shard_(shard),
        owned_(fpart.range(comm.worker_id())),
        full_{0, data.d},
        comm_(comm),
        shared_(shared),
        memory_(cfg.m, cfg.delta),
        d_(data.d) {}

  void run() {
    const bool lead = comm_.worker_id() == 0;
    w_.assign(static_cast<std::size_t>(d_), 0.0);
    cache_.init(shard_, w_);
    f_ = eval_objective_trial(loss_, shard_, cache_, 0.0, w_, w_, owned_,
                              reg_, comm_);
    cache_.accept_trial();
    grad_.resize(static_cast<std::size_t>(d_));
    refresh_gradient();
    init_scaling();

    SolveResult* out = shared_.result;
    if (lead) {
      out->initial_f = f_;
      out->initial_bytes = comm_.ledger().bytes();
      out->initial_rounds = comm_.ledger().rounds();
      out->initial_modeled_s = comm_.ledger().modeled_time();
      if (cfg_.on_iterate) cfg_.on_iterate(0, w_);
    }

    SolveStatus status = SolveStatus::max_iters;
    std::vector<double> p_full(static_cast<std::size_t>(d_));
    std::vector<double> s_pending(static_cast<std::size_t>(d_));
    std::vector<double> y_pending(static_cast<std::size_t>(d_));
    std::vector<double> f_history;
    bool have_pending = false;

    for (int t = 0;; ++t) {
      if (target_met()) {
        status = SolveStatus::target_met;
        break;
      }
      if (t >= cfg_.max_outer_iters) {
        status = SolveStatus::max_iters;
        break;
      }
      if (cfg_.stall_window > 0) {
        f_history.push_back(f_);
        std::size_t window = static_cast<std::size_t>(cfg_.stall_window);
        if (f_history.size() > window &&
            f_history[f_history.size() - 1 - window] - f_ <=
                cfg_.stall_rel_tol * std::fabs(f_)) {
          status = SolveStatus::stationary;
          break;
        }
      }

      int m_pre = memory_.pair_count();
      bool admitted = false;
      if (have_pending)
        admitted =
            memory_.try_push_pair(s_pending, y_pending, owned_, comm_)
                .admitted;

      SparsaResult sub;
      if (memory_.pair_count() == 0) {
        // H = a0*I: Eq-10 has the closed-form prox solution
        std::vector<double> u(static_cast<std::size_t>(d_));
        for (std::size_t j = 0; j < u.size(); ++j)
          u[j] = -grad_[j] / a0_;
        reg_.prox_step(u, w_, a0_, p_full);
      } else {
        LbfgsHessian hessian(&memory_);
        QuadraticModel smooth(slice(grad_, update_range()), &hessian, owned_,
                              update_range());
        SubproblemSpec spec;
        spec.smooth = &smooth;
        spec.reg = &reg_;
        spec.w_anchor = slice(w_, update_range());
        spec.owned = owned_;
        spec.update = update_range();
        spec.psi0 = memory_.gamma();
        SparsaOptions opts;
        opts.eps1 = cfg_.eps1;
        opts.max_iters = cfg_.sparsa_max_iters;
        opts.beta = cfg_.beta;
        opts.sigma0 = cfg_.sigma0;
        opts.psi_min = cfg_.delta;
        sub = sparsa_solve(spec, opts, comm_);
        if (cfg_.mode == SubproblemMode::partitioned) {
          // gather the update direction: zero-padded allreduce keeps the
          // equal-payload collective contract and costs one d-length round
          fill_zero(p_full);
          std::copy(sub.p.begin(), sub.p.end(),
                    p_full.begin() + owned_.begin);
          comm_.allreduce(p_full);
        } else {
          std::copy(sub.p.begin(), sub.p.end(), p_full.begin());
        }
      }

      if (nrm2_sq(p_full) == 0) {
        status = SolveStatus::stationary;
        break;
      }

      double delta_pred =
          compute_delta(grad_, p_full, w_, reg_, owned_, comm_);
      if (delta_pred >= 0)
        throw SolverError(
            "predicted decrease is nonnegative for a nonzero step; "
            "subproblem solution is broken");

      cache_.set_direction(shard_, p_full);
      LineSearchResult ls = armijo_line_search(
          loss_, shard_, cache_, w_, p_full, owned_, reg_, f_, delta_pred,
          cfg_.sigma1, cfg_.theta, cfg_.max_backtracks, comm_);

      for (std::size_t j = 0; j < w_.size(); ++j) {
        double nw = w_[j] + ls.alpha * p_full[j];
        s_pending[j] = nw - w_[j];
        w_[j] = nw;
      }
      f_ = ls.f_new;
      y_pending.swap(grad_);  // y holds the old gradient for now
      refresh_gradient();
      for (std::size_t j = 0; j < y_pending.size(); ++j)
        y_pending[j] = grad_[j] - y_pending[j];
      have_pending = true;

      if (lead) {
        TraceRow row;
        row.iter = t + 1;
        row.f = f_;
        row.delta = delta_pred;
        row.alpha = ls.alpha;
        row.inner_iters = sub.inner_iterations;
        row.accept_evals = sub.accept_evaluations;
        row.probes = ls.probes;
        row.m_pre = m_pre;
        row.m_post = memory_.pair_count();
        row.pair_admitted = admitted;
        row.bytes = comm_.ledger().bytes();
        row.rounds = comm_.ledger().rounds();
        row.modeled_s = comm_.ledger().modeled_time();
        row.wall_s = wall_seconds_since(shared_.t0);
        out->trace.push_back(row);
        if (cfg_.on_trace) cfg_.on_trace(row);
        if (cfg_.on_iterate) cfg_.on_iterate(t + 1, w_);
      }
    }

    if (lead) {
      out->w = w_;
      out->final_f = f_;
      out->final_prox_grad_norm = prox_grad_norm(w_, grad_, reg_);
      out->status = status;
      out->bytes = comm_.ledger().bytes();
      out->rounds = comm_.ledger().rounds();
      out->modeled_s = comm_.ledger().modeled_time();
      out->wall_s = wall_seconds_since(shared_.t0);
    }
  }

 private:
  FeatureRange update_range() const {
    return cfg_.mode == SubproblemMode::partitioned ? owned_ : full_;
  }

  void refresh_gradient() {
    std::vector<double> coef(static_cast<std::size_t>(shard_.size()));
    loss_.gradient_coefficients(shard_, cache_.z(), coef);
    fill_zero(grad_);
    shard_.accumulate_xc(coef, grad_);
    comm_.allreduce(grad_);
  }

  void init_scaling() {
    std::vector<double> zv(static_cast<std::size_t>(shard_.size()));
    shard_.xt_w(grad_, zv);
    double qf =
        comm_.allreduce_scalar(loss_.quadform_local(shard_, cache_.z(), zv));
    a0_ = compute_a0(qf, nrm2_sq(grad_)).value;
  }

  bool target_met() const {
    if (cfg_.fstar) return f_ - *cfg_.fstar <= cfg_.rel_tol * *cfg_.fstar;
    if (cfg_.prox_grad_tol > 0)
      return prox_grad_norm(w_, grad_, reg_) <= cfg_.prox_grad_tol;
    return false;
  }

  const SolverConfig& cfg_;
  LogisticLoss loss_;
  L1Regularizer reg_;
  const LabeledShard& shard_;
  FeatureRange owned_, full_;
  Comm& comm_;
  WorkerShared& shared_;
  LbfgsMemory memory_;
  std::int64_t d_;
  double a0_ = 1.0;
  double f_ = 0;
  std::vector<double> w_, grad_;
  LossCache cache_;
};

}  // namespace

SolveResult solve(const LabeledDataset& data, const SolverConfig& cfg, int K,
                  CostParams cost) {
  auto shards = partition_instances(data, K);
  auto fpart = partition_features(data.d, K);
  SolveResult result;
  WorkerShared shared{&result, std::chrono::steady_clock::now()};
  SimWorld world(K, cost);
  world.run([&](Comm& comm) {
    WorkerSolver solver(data, cfg, shards[static_cast<std::size_t>(
                                      comm.worker_id())],
                        fpart, comm, shared);
    solver.run();
  });
  return result;
}

SolveResult solve_direct_sparsa(const LabeledDataset& data,
                                const DirectSparsaConfig& cfg, int K,
                                CostParams cost) {
  auto shards = partition_instances(data, K);
  auto fpart = partition_features(data.d, K);
  SolveResult result;
  auto t0 = std::chrono::steady_clock::now();
  SimWorld world(K, cost);
  world.run([&](Comm& comm) {
    const bool lead = comm.worker_id() == 0;
    const LabeledShard& shard =
        shards[static_cast<std::size_t>(comm.worker_id())];
    FeatureRange owned = fpart.range(comm.worker_id());
    FeatureRange full{0, data.d};
    LogisticLoss loss(cfg.c);
    L1Regularizer reg;

    std::vector<double> w0(static_cast<std::size_t>(data.d), 0.0);
    LossCache cache;
    cache.init(shard, w0);
    double f0 = eval_objective_trial(loss, shard, cache, 0.0, w0, w0, owned,
                                     reg, comm);
    cache.accept_trial();

    std::vector<double> grad0(static_cast<std::size_t>(data.d), 0.0);
    std::vector<double> coef(static_cast<std::size_t>(shard.size()));
    loss.gradient_coefficients(shard, cache.z(), coef);
    shard.accumulate_xc(coef, grad0);
    comm.allreduce(grad0);

    std::vector<double> zv(static_cast<std::size_t>(shard.size()));
    shard.xt_w(grad0, zv);
    double qf =
        comm.allreduce_scalar(loss.quadform_local(shard, cache.z(), zv));
    double a0 = compute_a0(qf, nrm2_sq(grad0)).value;

    if (lead) {
      result.initial_f = f0;
      result.initial_bytes = comm.ledger().bytes();
      result.initial_rounds = comm.ledger().rounds();
      result.initial_modeled_s = comm.ledger().modeled_time();
    }

    DirectLossModel smooth(&shard, &loss, w0, grad0);
    std::vector<double> wcur(static_cast<std::size_t>(data.d));

    auto target_met = [&](double f, std::span<const double> p,
                          std::span<const double> grad) {
      if (cfg.fstar) return f - *cfg.fstar <= cfg.rel_tol * *cfg.fstar;
      if (cfg.prox_grad_tol > 0) {
        for (std::size_t j = 0; j < wcur.size(); ++j) wcur[j] = w0[j] + p[j];
        return prox_grad_norm(wcur, grad, reg) <= cfg.prox_grad_tol;
      }
      return false;
    };

    SubproblemSpec spec;
    spec.smooth = &smooth;
    spec.reg = &reg;
    spec.w_anchor = w0;
    spec.owned = owned;
    spec.update = full;
    spec.psi0 = a0;
    spec.stop = [&](const SparsaIterate& it) {
      return target_met(f0 + it.q_rel, it.p, it.grad);
    };
    if (lead) {
      spec.on_accept = [&](const SparsaIterate& it) {
        TraceRow row;
        row.iter = it.iteration;
        row.f = f0 + it.q_rel;
        row.alpha = 1.0;
        row.inner_iters = 1;
        row.bytes = comm.ledger().bytes();
        row.rounds = comm.ledger().rounds();
        row.modeled_s = comm.ledger().modeled_time();
        row.wall_s = wall_seconds_since(t0);
        result.trace.push_back(row);
        if (cfg.on_trace) cfg.on_trace(row);
      };
    }

    SparsaOptions opts;
    opts.eps1 = 0.0;  // the outer target is the only adaptive stop
    opts.max_iters = cfg.max_iters;
    opts.beta = cfg.beta;
    opts.sigma0 = cfg.sigma0;

    SolveStatus status = SolveStatus::max_iters;
    SparsaResult sres;
    if (target_met(f0, w0, grad0)) {
      status = SolveStatus::target_met;
      sres.p.assign(static_cast<std::size_t>(data.d), 0.0);
    } else {
      sres = sparsa_solve(spec, opts, comm);
      switch (sres.reason) {
        case SparsaStop::external:
          status = SolveStatus::target_met;
          break;
        case SparsaStop::stationary:
          status = SolveStatus::stationary;
          break;
        default:
          status = SolveStatus::max_iters;
          break;
      }
    }

    // final stationarity diagnostic; one last gradient aggregation
    std::vector<double> gfin(static_cast<std::size_t>(data.d), 0.0);
    loss.gradient_coefficients(shard, smooth.z_accepted(), coef);
    shard.accumulate_xc(coef, gfin);
    comm.allreduce(gfin);
    for (std::size_t j = 0; j < wcur.size(); ++j) wcur[j] = w0[j] + sres.p[j];

    if (lead) {
      result.w = wcur;
      result.final_f = f0 + (sres.q_trace.empty() ? 0 : sres.q_trace.back());
      result.final_prox_grad_norm = prox_grad_norm(wcur, gfin, reg);
      result.status = status;
      result.bytes = comm.ledger().bytes();
      result.rounds = comm.ledger().rounds();
      result.modeled_s = comm.ledger().modeled_time();
      result.wall_s = wall_seconds_since(t0);
    }
  });
  return result;
}

}  // namespace dplbfgs
