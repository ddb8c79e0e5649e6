#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "dplbfgs/comm.hpp"
#include "dplbfgs/data.hpp"
#include "dplbfgs/objective.hpp"

namespace dplbfgs {

enum class SubproblemMode { partitioned, replicated };

// One completed outer iteration. f is the objective after the step; the
// communication counters are cumulative snapshots taken right after the
// iteration finished.
struct TraceRow {
  int iter = 0;  // 1-based step index
  double f = 0;
  double delta = 0;  // predicted decrease used by the line search
  double alpha = 0;
  int inner_iters = 0;    // SpaRSA iterations (0 for the closed-form step)
  int accept_evals = 0;   // sufficient-decrease checks inside SpaRSA
  int probes = 0;         // line-search objective evaluations
  int m_pre = 0;          // pairs held before this iteration's admission
  int m_post = 0;         // pairs held after it
  bool pair_admitted = false;
  std::uint64_t bytes = 0;
  std::uint64_t rounds = 0;
  double modeled_s = 0;
  double wall_s = 0;
};

enum class SolveStatus { target_met, stationary, max_iters };

struct SolveResult {
  std::vector<double> w;
  std::vector<TraceRow> trace;
  double initial_f = 0;
  double final_f = 0;
  double final_prox_grad_norm = 0;
  SolveStatus status = SolveStatus::max_iters;
  // counters spent before the first step (initial F/gradient/scaling)
  std::uint64_t initial_bytes = 0;
  std::uint64_t initial_rounds = 0;
  double initial_modeled_s = 0;
  // totals
  std::uint64_t bytes = 0;
  std::uint64_t rounds = 0;
  double modeled_s = 0;
  double wall_s = 0;
};

struct SolverConfig {
  double theta = 0.5;    // line-search backtracking factor
  double beta = 2.0;     // SpaRSA psi escalation factor
  double sigma0 = 1e-2;  // SpaRSA sufficient decrease
  double sigma1 = 1e-4;  // line-search sufficient decrease
  int m = 10;            // LBFGS history cap
  double delta = 1e-10;  // curvature safeguard threshold
  double eps1 = 1e-2;    // SpaRSA relative step stopping rule
  double c = 1.0;        // loss weight of Eq-17
  int max_outer_iters = 1000;
  int max_backtracks = 50;
  int sparsa_max_iters = 100;
  SubproblemMode mode = SubproblemMode::partitioned;

  // Termination: relative objective error against fstar when provided,
  // otherwise the proximal-gradient norm when the tolerance is positive;
  // max_outer_iters always applies.
  std::optional<double> fstar;
  double rel_tol = 1e-3;
  double prox_grad_tol = 0.0;
  // Optional stall exit (status stationary): stop when stall_window
  // consecutive steps shrink F by less than stall_rel_tol * |F| in total.
  // Used by reference runs whose gradient-norm target can sit below the
  // evaluation noise floor.
  int stall_window = 0;
  double stall_rel_tol = 0.0;

  // Observers, invoked on worker 0 only. on_iterate fires for the initial
  // point (t = 0) and after every accepted step.
  std::function<void(const TraceRow&)> on_trace;
  std::function<void(int t, std::span<const double> w)> on_iterate;
};

// Norm of the proximal-gradient step at w: zero exactly at stationary
// points. Inputs are replicated, so no communication is needed.
double prox_grad_norm(std::span<const double> w, std::span<const double> grad,
                      const Regularizer& reg);

// Objective evaluation F(w + alpha*p) from cached z products: one scalar
// allreduce of the local loss piece plus the owned regularizer piece.
double eval_objective_trial(const SmoothLoss& loss, const LabeledShard& shard,
                            LossCache& cache, double alpha,
                            std::span<const double> w,
                            std::span<const double> p, FeatureRange owned,
                            const Regularizer& reg, Comm& comm);

// Predicted decrease grad'p + g(w+p) - g(w); one scalar allreduce.
double compute_delta(std::span<const double> grad, std::span<const double> p,
                     std::span<const double> w, const Regularizer& reg,
                     FeatureRange owned, Comm& comm);

struct LineSearchResult {
  double alpha = 1.0;
  int probes = 0;
  double f_new = 0;
};

// Backtracking over alpha = theta^0, theta^1, ... until
// F(w + alpha p) <= F(w) + alpha*sigma1*delta. Each probe costs one scalar
// allreduce; the accepted trial is committed into the cache.
LineSearchResult armijo_line_search(const SmoothLoss& loss,
                                    const LabeledShard& shard,
                                    LossCache& cache,
                                    std::span<const double> w,
                                    std::span<const double> p,
                                    FeatureRange owned, const Regularizer& reg,
                                    double f_cur, double delta, double sigma1,
                                    double theta, int max_backtracks,
                                    Comm& comm);

// Full solve of C*logistic(X'w) + ||w||_1 on K simulated workers.
SolveResult solve(const LabeledDataset& data, const SolverConfig& cfg, int K,
                  CostParams cost = {});

// Plain SpaRSA applied directly to the same objective (the baseline).
struct DirectSparsaConfig {
  double c = 1.0;
  double beta = 2.0;
  double sigma0 = 1e-2;
  int max_iters = 100000;
  std::optional<double> fstar;
  double rel_tol = 1e-3;
  double prox_grad_tol = 0.0;
  std::function<void(const TraceRow&)> on_trace;
};

SolveResult solve_direct_sparsa(const LabeledDataset& data,
                                const DirectSparsaConfig& cfg, int K,
                                CostParams cost = {});

}  // namespace dplbfgs
