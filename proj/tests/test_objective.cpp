#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "dplbfgs/comm.hpp"
#include "dplbfgs/data.hpp"
#include "dplbfgs/errors.hpp"
#include "dplbfgs/objective.hpp"
#include "dplbfgs/vecops.hpp"
#include "support/oracles.hpp"
#include "support/testers.hpp"

using namespace dplbfgs;

namespace {

LabeledShard whole(const LabeledDataset& data) {
  return LabeledShard(&data, 0, 0, data.n);
}

}  // namespace

TEST_CASE("logistic loss values") {
  LogisticLoss loss(1.0);
  SUBCASE("w=0 on two instances gives 2 log 2") {
    auto data = testers::dataset_from_dense({{1.0}, {1.0}}, {1, -1});
    auto shard = whole(data);
    std::vector<double> z{0.0, 0.0};
    CHECK(loss.value_local(shard, z) ==
          doctest::Approx(2 * std::log(2.0)).epsilon(1e-14));
  }
  SUBCASE("well-classified instance contributes about zero") {
    auto data = testers::dataset_from_dense({{1.0}}, {1});
    auto shard = whole(data);
    std::vector<double> z{40.0};
    CHECK(loss.value_local(shard, z) < 1e-15);
  }
  SUBCASE("softplus asymptote avoids overflow") {
    auto data = testers::dataset_from_dense({{1.0}}, {1});
    auto shard = whole(data);
    std::vector<double> z{-800.0};
    double v = loss.value_local(shard, z);
    CHECK(std::isfinite(v));
    CHECK(v == doctest::Approx(800.0).epsilon(1e-12));
  }
}

TEST_CASE("logistic gradient coefficients at w=0") {
  LogisticLoss loss(1.0);
  SUBCASE("single instance x=e1, y=1: share is -0.5 e1") {
    auto data = testers::dataset_from_dense({{1.0, 0.0}}, {1});
    auto shard = whole(data);
    std::vector<double> z{0.0}, coef(1);
    loss.gradient_coefficients(shard, z, coef);
    std::vector<double> g(2, 0.0);
    shard.accumulate_xc(coef, g);
    CHECK(g[0] == doctest::Approx(-0.5).epsilon(1e-15));
    CHECK(g[1] == 0.0);
  }
  SUBCASE("empty shard contributes a zero vector") {
    auto data = testers::dataset_from_dense({{1.0}}, {1});
    LabeledShard empty(&data, 0, 0, 0);
    std::vector<double> z, coef;
    std::vector<double> g(1, 0.0);
    loss.gradient_coefficients(empty, z, coef);
    empty.accumulate_xc(coef, g);
    CHECK(g[0] == 0.0);
  }
  SUBCASE("w=0 share is -(C/2) sum of y_i x_i") {
    double c = 3.0;
    LogisticLoss lc(c);
    auto data =
        testers::dataset_from_dense({{1.0, 2.0}, {0.5, -1.0}}, {1, -1});
    auto shard = whole(data);
    std::vector<double> z{0.0, 0.0}, coef(2), g(2, 0.0);
    lc.gradient_coefficients(shard, z, coef);
    shard.accumulate_xc(coef, g);
    CHECK(g[0] == doctest::Approx(-c / 2 * (1.0 - 0.5)).epsilon(1e-14));
    CHECK(g[1] == doctest::Approx(-c / 2 * (2.0 + 1.0)).epsilon(1e-14));
  }
}

TEST_CASE("aggregated gradient matches central finite differences") {
  std::mt19937_64 rng(31);
  for (int rep = 0; rep < 8; ++rep) {
    std::int64_t n = 5 + static_cast<std::int64_t>(oracles::uniform01(rng) * 45);
    std::int64_t d = 2 + static_cast<std::int64_t>(oracles::uniform01(rng) * 18);
    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    auto data = testers::random_dense_dataset(n, d, rng, &rows, &labels);
    double c = 0.5 + oracles::uniform01(rng);
    LogisticLoss loss(c);

    std::vector<double> w(static_cast<std::size_t>(d));
    for (auto& v : w) v = 2 * oracles::uniform01(rng) - 1;

    auto loss_at = [&](std::span<const double> point) {
      double total = 0;
      for (std::size_t i = 0; i < rows.size(); ++i) {
        double z = 0;
        for (std::size_t j = 0; j < rows[i].size(); ++j)
          z += rows[i][j] * point[j];
        total += c * softplus(-labels[i] * z);
      }
      return total;
    };
    auto fd = oracles::fd_gradient(loss_at, w, 1e-6);

    // aggregate across two workers
    std::vector<double> g(static_cast<std::size_t>(d), 0.0);
    auto shards = partition_instances(data, 2);
    SimWorld world(2);
    std::vector<std::vector<double>> per_worker(2);
    std::mutex mu;
    world.run([&](Comm& comm) {
      const auto& shard = shards[static_cast<std::size_t>(comm.worker_id())];
      std::vector<double> z(static_cast<std::size_t>(shard.size()));
      shard.xt_w(w, z);
      std::vector<double> coef(z.size());
      loss.gradient_coefficients(shard, z, coef);
      std::vector<double> part(static_cast<std::size_t>(d), 0.0);
      shard.accumulate_xc(coef, part);
      comm.allreduce(part);
      std::lock_guard lk(mu);
      per_worker[static_cast<std::size_t>(comm.worker_id())] = part;
    });
    CHECK(per_worker[0] == per_worker[1]);
    g = per_worker[0];

    for (std::int64_t j = 0; j < d; ++j) {
      double ref = fd[static_cast<std::size_t>(j)];
      double scale = std::max(1.0, std::fabs(ref));
      CHECK(std::fabs(g[static_cast<std::size_t>(j)] - ref) / scale <= 1e-5);
    }
  }
}

TEST_CASE("hessian quadratic form") {
  LogisticLoss loss(1.0);
  SUBCASE("single instance worked example") {
    auto data = testers::dataset_from_dense({{1.0, 0.0}}, {1});
    auto shard = whole(data);
    std::vector<double> z{0.0};
    std::vector<double> v{-0.5, 0.0};
    std::vector<double> vx(1);
    shard.xt_w(v, vx);
    double share = loss.quadform_local(shard, z, vx);
    CHECK(share == doctest::Approx(0.0625).epsilon(1e-14));
  }
  SUBCASE("probe orthogonal to the data gives zero") {
    auto data = testers::dataset_from_dense({{1.0, 0.0}}, {1});
    auto shard = whole(data);
    std::vector<double> z{0.0}, v{0.0, 3.0}, vx(1);
    shard.xt_w(v, vx);
    CHECK(loss.quadform_local(shard, z, vx) == 0.0);
  }
  SUBCASE("saturated instances contribute nothing") {
    auto data = testers::dataset_from_dense({{1.0}}, {1});
    auto shard = whole(data);
    std::vector<double> z{700.0}, v{1.0}, vx(1);
    shard.xt_w(v, vx);
    CHECK(loss.quadform_local(shard, z, vx) < 1e-250);
  }
  SUBCASE("matches the finite-difference hessian-vector product") {
    std::mt19937_64 rng(77);
    for (int rep = 0; rep < 8; ++rep) {
      std::int64_t n =
          5 + static_cast<std::int64_t>(oracles::uniform01(rng) * 30);
      std::int64_t d =
          2 + static_cast<std::int64_t>(oracles::uniform01(rng) * 10);
      std::vector<std::vector<double>> rows;
      std::vector<int> labels;
      auto data = testers::random_dense_dataset(n, d, rng, &rows, &labels);
      auto shard = whole(data);
      double c = 0.5 + oracles::uniform01(rng);
      LogisticLoss lc(c);
      std::vector<double> w(static_cast<std::size_t>(d)),
          v(static_cast<std::size_t>(d));
      for (auto& x : w) x = oracles::uniform01(rng) - 0.5;
      for (auto& x : v) x = oracles::uniform01(rng) - 0.5;

      std::vector<double> z(static_cast<std::size_t>(n));
      shard.xt_w(w, z);
      std::vector<double> vx(static_cast<std::size_t>(n));
      shard.xt_w(v, vx);
      double qf = lc.quadform_local(shard, z, vx);

      auto grad_at = [&](std::span<const double> point) {
        std::vector<double> zz(static_cast<std::size_t>(n));
        shard.xt_w(point, zz);
        std::vector<double> coef(zz.size());
        lc.gradient_coefficients(shard, zz, coef);
        std::vector<double> g(static_cast<std::size_t>(d), 0.0);
        shard.accumulate_xc(coef, g);
        return g;
      };
      double ref = oracles::fd_quadform(grad_at, w, v, 1e-6);
      CHECK(std::fabs(qf - ref) / std::max(1.0, std::fabs(ref)) <= 1e-5);
      CHECK(qf >= 0.0);  // logistic is convex
    }
  }
}

TEST_CASE("L1 prox step") {
  L1Regularizer reg;
  SUBCASE("w=0 soft thresholds at 1/psi") {
    std::vector<double> u{3.0, -0.5, 0.0}, w{0.0, 0.0, 0.0}, p(3);
    reg.prox_step(u, w, 1.0, p);
    CHECK(p[0] == 2.0);
    CHECK(p[1] == 0.0);
    CHECK(p[2] == 0.0);
  }
  SUBCASE("anchored at w the step can zero a coordinate out") {
    std::vector<double> u{-0.2, 0.3}, w{1.0, 0.0}, p(2);
    reg.prox_step(u, w, 1.0, p);
    CHECK(p[0] == -1.0);
    CHECK(p[1] == 0.0);
  }
  SUBCASE("psi scales the threshold") {
    std::vector<double> u{3.0, -0.5, 0.0}, w{0.0, 0.0, 0.0}, p(3);
    reg.prox_step(u, w, 2.0, p);
    CHECK(p[0] == 2.5);
    CHECK(p[1] == 0.0);
    CHECK(p[2] == 0.0);
  }
  SUBCASE("nonpositive psi is a domain error") {
    std::vector<double> u{1.0}, w{0.0}, p(1);
    CHECK_THROWS_AS(reg.prox_step(u, w, 0.0, p), Error);
    CHECK_THROWS_AS(reg.prox_step(u, w, -1.0, p), Error);
  }
  SUBCASE("prox optimality against a perturbation grid") {
    std::mt19937_64 rng(13);
    L1Regularizer r;
    for (int rep = 0; rep < 40; ++rep) {
      const std::size_t d = 4;
      std::vector<double> u(d), w(d), p(d);
      for (auto& v : u) v = 4 * oracles::uniform01(rng) - 2;
      for (auto& v : w) v = 4 * oracles::uniform01(rng) - 2;
      double psi = 0.25 + 4 * oracles::uniform01(rng);
      r.prox_step(u, w, psi, p);
      auto objective = [&](std::span<const double> q) {
        double val = 0;
        for (std::size_t j = 0; j < d; ++j) {
          double diff = q[j] - u[j];
          val += 0.5 * diff * diff + std::fabs(w[j] + q[j]) / psi;
        }
        return val;
      };
      double base = objective(p);
      for (std::size_t j = 0; j < d; ++j) {
        for (double eps : {1e-6, -1e-6}) {
          std::vector<double> q(p);
          q[j] += eps;
          CHECK(objective(q) >= base - 1e-15);
        }
      }
    }
  }
}

TEST_CASE("L1 value_diff equals the naive difference but without the large "
          "cancellation") {
  std::mt19937_64 rng(23);
  L1Regularizer reg;
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t d = 6;
    std::vector<double> w(d), s(d);
    for (auto& v : w) v = 10 * (oracles::uniform01(rng) - 0.5);
    for (auto& v : s) v = 0.2 * (oracles::uniform01(rng) - 0.5);
    if (rep % 3 == 0) s[0] = -2 * w[0];  // force sign flips
    double stable = reg.value_diff(w, s);
    std::vector<double> ws(d);
    for (std::size_t j = 0; j < d; ++j) ws[j] = w[j] + s[j];
    double naive = reg.value(ws) - reg.value(w);
    CHECK(stable == doctest::Approx(naive).epsilon(1e-12));
  }
}

TEST_CASE("delta term") {
  SUBCASE("direct substitution") {
    CHECK(delta_term(-3.0, 2.0, 1.0) == -2.0);
  }
  SUBCASE("zero step gives zero") { CHECK(delta_term(0.0, 5.0, 5.0) == 0.0); }
  SUBCASE("regularizer growth can dominate") {
    // grad=(0.5,0.5), w=0, p=(1,-1): grad'p = 0, g grows by 2
    CHECK(delta_term(0.0, 2.0, 0.0) == 2.0);
  }
}

TEST_CASE("loss cache stays coherent under accepted axpy updates") {
  std::mt19937_64 rng(41);
  auto data = testers::random_dense_dataset(30, 8, rng);
  auto shard = whole(data);
  std::vector<double> w(8, 0.0);
  LossCache cache;
  cache.init(shard, w);
  for (int step = 0; step < 25; ++step) {
    std::vector<double> p(8);
    for (auto& v : p) v = oracles::uniform01(rng) - 0.5;
    double alpha = oracles::uniform01(rng);
    cache.set_direction(shard, p);
    cache.trial(alpha);
    cache.accept_trial();
    for (std::size_t j = 0; j < w.size(); ++j) w[j] += alpha * p[j];
  }
  std::vector<double> fresh(static_cast<std::size_t>(shard.size()));
  shard.xt_w(w, fresh);
  auto cached = cache.z();
  for (std::size_t i = 0; i < fresh.size(); ++i) {
    double scale = std::max(1.0, std::fabs(fresh[i]));
    CHECK(std::fabs(cached[i] - fresh[i]) / scale <= 1e-10);
  }
}

TEST_CASE("zero regularizer prox is the identity") {
  ZeroRegularizer reg;
  std::vector<double> u{1.0, -2.0}, w{5.0, 5.0}, p(2);
  reg.prox_step(u, w, 3.0, p);
  CHECK(p[0] == 1.0);
  CHECK(p[1] == -2.0);
  CHECK(reg.value(w) == 0.0);
}
