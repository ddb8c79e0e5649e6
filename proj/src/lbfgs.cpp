#include "dplbfgs/lbfgs.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "dplbfgs/errors.hpp"

namespace dplbfgs {

namespace {

double partial_dot(std::span<const double> a, std::span<const double> b,
                   FeatureRange owned) {
  double s = 0;
  for (std::int64_t j = owned.begin; j < owned.end; ++j)
    s += a[static_cast<std::size_t>(j)] * b[static_cast<std::size_t>(j)];
  return s;
}

}  // namespace

LbfgsMemory::LbfgsMemory(int capacity, double delta)
    : capacity_(capacity), delta_(delta) {
  if (capacity < 1) throw Error("lbfgs memory needs capacity >= 1");
  if (delta <= 0) throw Error("safeguard delta must be positive");
}

double LbfgsMemory::gamma() const {
  if (pairs_.empty()) throw Error("gamma undefined on empty memory");
  return gamma_;
}

LbfgsMemory::Admission LbfgsMemory::try_push_pair(std::span<const double> s,
                                                  std::span<const double> y,
                                                  FeatureRange owned,
                                                  Comm& comm) {
  const int m0 = pair_count();
  std::vector<double> buf(static_cast<std::size_t>(2 * m0 + 2));
  buf[0] = partial_dot(s, y, owned);
  buf[1] = partial_dot(s, s, owned);
  for (int i = 0; i < m0; ++i) {
    buf[static_cast<std::size_t>(2 + i)] =
        partial_dot(pairs_[static_cast<std::size_t>(i)].s, s, owned);
    buf[static_cast<std::size_t>(2 + m0 + i)] =
        partial_dot(pairs_[static_cast<std::size_t>(i)].y, s, owned);
  }
  comm.allreduce(buf);

  const double sy = buf[0];
  const double ss = buf[1];
  if (ss == 0.0 || sy < delta_ * ss) return {false, sy, ss};
  // y'y comes from the replicated pair vector: every worker forms the same
  // full-range sum, so no extra payload is needed
  const double yy = partial_dot(y, y, FeatureRange{0, static_cast<std::int64_t>(y.size())});

  int shift = 0;
  if (m0 == capacity_) {
    drop_oldest();
    shift = 1;  // partials of the evicted pair are discarded
  }
  pairs_.push_back({std::vector<double>(s.begin(), s.end()),
                    std::vector<double>(y.begin(), y.end())});
  const int m = pair_count();
  const int last = m - 1;
  std::vector<double> sts(static_cast<std::size_t>(m * m), 0.0);
  std::vector<double> sty(static_cast<std::size_t>(m * m), 0.0);
  for (int i = 0; i + 1 < m; ++i)
    for (int j = 0; j + 1 < m; ++j) {
      sts[static_cast<std::size_t>(i * m + j)] =
          sts_[static_cast<std::size_t>(i * (m - 1) + j)];
      sty[static_cast<std::size_t>(i * m + j)] =
          sty_[static_cast<std::size_t>(i * (m - 1) + j)];
    }
  for (int i = 0; i < last; ++i) {
    double si_s = buf[static_cast<std::size_t>(2 + shift + i)];
    sts[static_cast<std::size_t>(last * m + i)] = si_s;
    sts[static_cast<std::size_t>(i * m + last)] = si_s;
    // s_new' y_i fills the new row of the lower triangle of S'Y
    sty[static_cast<std::size_t>(last * m + i)] =
        buf[static_cast<std::size_t>(2 + m0 + shift + i)];
  }
  sts[static_cast<std::size_t>(last * m + last)] = ss;
  sty[static_cast<std::size_t>(last * m + last)] = sy;
  sts_.swap(sts);
  sty_.swap(sty);
  gamma_ = yy / sy;

  while (!refactor()) drop_oldest();
  if (pairs_.empty())
    throw SolverError("lbfgs middle matrix singular even with one pair");
  return {true, sy, ss};
}

void LbfgsMemory::drop_oldest() {
  const int m = pair_count();
  if (m == 0) return;
  pairs_.erase(pairs_.begin());
  const int m1 = m - 1;
  std::vector<double> sts(static_cast<std::size_t>(m1 * m1), 0.0);
  std::vector<double> sty(static_cast<std::size_t>(m1 * m1), 0.0);
  for (int i = 0; i < m1; ++i)
    for (int j = 0; j < m1; ++j) {
      sts[static_cast<std::size_t>(i * m1 + j)] =
          sts_[static_cast<std::size_t>((i + 1) * m + j + 1)];
      sty[static_cast<std::size_t>(i * m1 + j)] =
          sty_[static_cast<std::size_t>((i + 1) * m + j + 1)];
    }
  sts_.swap(sts);
  sty_.swap(sty);
}

bool LbfgsMemory::refactor() {
  const int m = pair_count();
  if (m == 0) return false;
  const std::size_t mm = static_cast<std::size_t>(m);

  dinv_.assign(mm, 0.0);
  double norm_m = 0;
  for (int i = 0; i < m; ++i) {
    double dii = sty_[static_cast<std::size_t>(i * m + i)];
    dinv_[static_cast<std::size_t>(i)] = 1.0 / dii;
    norm_m = std::max(norm_m, std::fabs(dii));
    for (int j = 0; j < m; ++j)
      norm_m = std::max(norm_m,
                        std::fabs(gamma_ * sts_[static_cast<std::size_t>(
                                               i * m + j)]));
    for (int j = 0; j < i; ++j)
      norm_m =
          std::max(norm_m, std::fabs(sty_[static_cast<std::size_t>(i * m + j)]));
  }

  // Q = gamma*S'S + L D^{-1} L'
  std::vector<double> q(mm * mm, 0.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j <= i; ++j) {
      double v = gamma_ * sts_[static_cast<std::size_t>(i * m + j)];
      for (int k = 0; k < std::min(i, j); ++k)
        v += sty_[static_cast<std::size_t>(i * m + k)] *
             dinv_[static_cast<std::size_t>(k)] *
             sty_[static_cast<std::size_t>(j * m + k)];
      q[static_cast<std::size_t>(i * m + j)] = v;
    }

  const double pivot_tol = 1e-12 * norm_m;
  chol_.assign(mm * mm, 0.0);
  for (int j = 0; j < m; ++j) {
    double pivot = q[static_cast<std::size_t>(j * m + j)];
    for (int k = 0; k < j; ++k) {
      double l = chol_[static_cast<std::size_t>(j * m + k)];
      pivot -= l * l;
    }
    if (!(pivot > pivot_tol)) return false;
    double diag = std::sqrt(pivot);
    chol_[static_cast<std::size_t>(j * m + j)] = diag;
    for (int i = j + 1; i < m; ++i) {
      double v = q[static_cast<std::size_t>(i * m + j)];
      for (int k = 0; k < j; ++k)
        v -= chol_[static_cast<std::size_t>(i * m + k)] *
             chol_[static_cast<std::size_t>(j * m + k)];
      chol_[static_cast<std::size_t>(i * m + j)] = v / diag;
    }
  }
  return true;
}

std::vector<double> LbfgsMemory::reduce_utp(std::span<const double> p,
                                            FeatureRange owned,
                                            FeatureRange update, Comm& comm)
    const {
  const int m = pair_count();
  if (m == 0) throw Error("apply requires at least one pair");
  std::vector<double> buf(static_cast<std::size_t>(2 * m), 0.0);
  const std::int64_t off = update.begin;
  for (int i = 0; i < m; ++i) {
    const auto& pr = pairs_[static_cast<std::size_t>(i)];
    double ds = 0, dy = 0;
    for (std::int64_t j = owned.begin; j < owned.end; ++j) {
      double pj = p[static_cast<std::size_t>(j - off)];
      ds += pr.s[static_cast<std::size_t>(j)] * pj;
      dy += pr.y[static_cast<std::size_t>(j)] * pj;
    }
    buf[static_cast<std::size_t>(i)] = ds;
    buf[static_cast<std::size_t>(m + i)] = dy;
  }
  comm.allreduce(buf);
  // U = [gamma*S, Y]; scaling after the reduction is replicated arithmetic.
  for (int i = 0; i < m; ++i) buf[static_cast<std::size_t>(i)] *= gamma_;
  return buf;
}

std::vector<double> LbfgsMemory::solve_middle(
    std::span<const double> utp) const {
  const int m = pair_count();
  const std::size_t mm = static_cast<std::size_t>(m);
  // Block elimination of the -D block: with r = [r1; r2],
  //   Q z1 = r1 + L D^{-1} r2,   z2 = D^{-1} (L' z1 - r2).
  std::vector<double> t(mm);
  for (int i = 0; i < m; ++i) {
    double v = utp[static_cast<std::size_t>(i)];
    for (int j = 0; j < i; ++j)
      v += sty_[static_cast<std::size_t>(i * m + j)] *
           dinv_[static_cast<std::size_t>(j)] *
           utp[static_cast<std::size_t>(m + j)];
    t[static_cast<std::size_t>(i)] = v;
  }
  // forward/backward substitution with chol_
  for (int i = 0; i < m; ++i) {
    double v = t[static_cast<std::size_t>(i)];
    for (int k = 0; k < i; ++k)
      v -= chol_[static_cast<std::size_t>(i * m + k)] *
           t[static_cast<std::size_t>(k)];
    t[static_cast<std::size_t>(i)] = v / chol_[static_cast<std::size_t>(i * m + i)];
  }
  for (int i = m - 1; i >= 0; --i) {
    double v = t[static_cast<std::size_t>(i)];
    for (int k = i + 1; k < m; ++k)
      v -= chol_[static_cast<std::size_t>(k * m + i)] *
           t[static_cast<std::size_t>(k)];
    t[static_cast<std::size_t>(i)] = v / chol_[static_cast<std::size_t>(i * m + i)];
  }
  std::vector<double> z(2 * mm);
  for (int i = 0; i < m; ++i) z[static_cast<std::size_t>(i)] = t[static_cast<std::size_t>(i)];
  for (int j = 0; j < m; ++j) {
    double v = -utp[static_cast<std::size_t>(m + j)];
    for (int i = j + 1; i < m; ++i)
      v += sty_[static_cast<std::size_t>(i * m + j)] *
           t[static_cast<std::size_t>(i)];
    z[static_cast<std::size_t>(m + j)] = v * dinv_[static_cast<std::size_t>(j)];
  }
  return z;
}

void LbfgsMemory::combine(std::span<const double> p,
                          std::span<const double> z, FeatureRange update,
                          std::span<double> hp) const {
  const int m = pair_count();
  const std::int64_t off = update.begin;
  const std::size_t len = static_cast<std::size_t>(update.size());
  for (std::size_t j = 0; j < len; ++j) hp[j] = gamma_ * p[j];
  for (int i = 0; i < m; ++i) {
    const auto& pr = pairs_[static_cast<std::size_t>(i)];
    const double cs = gamma_ * z[static_cast<std::size_t>(i)];
    const double cy = z[static_cast<std::size_t>(m + i)];
    for (std::size_t j = 0; j < len; ++j) {
      std::size_t g = static_cast<std::size_t>(off) + j;
      hp[j] -= cs * pr.s[g] + cy * pr.y[g];
    }
  }
}

void LbfgsMemory::apply(std::span<const double> p, FeatureRange owned,
                        FeatureRange update, Comm& comm,
                        std::span<double> hp) const {
  std::vector<double> utp = reduce_utp(p, owned, update, comm);
  std::vector<double> z = solve_middle(utp);
  combine(p, z, update, hp);
}

}  // namespace dplbfgs
