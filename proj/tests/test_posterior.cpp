#include "doctest.h"

#include <cmath>
#include <numbers>

#include "afec/errors.hpp"
#include "afec/posterior.hpp"
#include "afec/rng.hpp"
#include "afec/tasks.hpp"
#include "helpers.hpp"

using namespace afec;
using namespace testing;

namespace {

DiagGaussian gauss(std::vector<double> mean, std::vector<double> var) {
  DiagGaussian g;
  g.mean = std::move(mean);
  for (double v : var) g.precision.push_back(1.0 / v);
  return g;
}

// Closed form written with variances, independent of the precision form used
// by the library.
struct Oracle {
  double v2, m, log_z;
};

Oracle variance_form(double mu1, double s1, double mu2, double s2, double beta) {
  const double den = beta * s1 + (1.0 - beta) * s2;
  const double v2 = s1 * s2 / den;
  const double m = ((1.0 - beta) * s2 * mu1 + beta * s1 * mu2) / den;
  const double k = ((1.0 - beta) * s2 * mu1 * mu1 + beta * s1 * mu2 * mu2) / den;
  const double log_z =
      0.5 * std::log(v2 / (std::pow(s1, 1.0 - beta) * std::pow(s2, beta))) - (k - m * m) / (2.0 * v2);
  return {v2, m, log_z};
}

double normal_pdf(double x, double mu, double var) {
  return std::exp(-(x - mu) * (x - mu) / (2.0 * var)) / std::sqrt(2.0 * std::numbers::pi * var);
}

}  // namespace

TEST_CASE("fisher: coordinates the output ignores get zero") {
  Network net(NetworkSpec{3, {4}, Activation::tanh, {{0, 2}, {1, 2}}}, 2);
  Batch b = random_batch(10, 3, 2, LossKind::mse, 3);
  const ParamVector f = estimate_diag_fisher(net, b.view(), LossKind::mse);
  const DenseLayer& other = net.head(1);
  for (std::size_t i = other.offset; i < other.end(); ++i) CHECK(f[i] == 0.0);
}

TEST_CASE("fisher: 1-parameter linear Gaussian model") {
  // nll = 0.5 (w x - y)^2, d nll / dw = (w x - y) x; F = ((w x - y) x)^2.
  Network exact = scalar_linear(2.0);
  Batch fit = scalar_batch({3.0}, {6.0});
  CHECK(estimate_diag_fisher(exact, fit.view(), LossKind::mse)[0] == 0.0);
  for (double r : {0.5, -1.25, 2.0}) {
    Batch b = scalar_batch({3.0}, {6.0 - r});
    const double f = estimate_diag_fisher(exact, b.view(), LossKind::mse)[0];
    CHECK(f == doctest::Approx((r * 3.0) * (r * 3.0)).epsilon(1e-14));
  }
}

TEST_CASE("fisher: duplicating every sample leaves F unchanged") {
  Network net(NetworkSpec{4, {6}, Activation::tanh, {{0, 2}}}, 5);
  Batch b = random_batch(12, 4, 2, LossKind::angular_mse, 6);
  Batch dup = b;
  dup.inputs = Matrix(24, 4);
  dup.targets = Matrix(24, 2);
  dup.labels.resize(24);
  for (std::size_t i = 0; i < 24; ++i) {
    for (std::size_t j = 0; j < 4; ++j) dup.inputs(i, j) = b.inputs(i % 12, j);
    for (std::size_t j = 0; j < 2; ++j) dup.targets(i, j) = b.targets(i % 12, j);
    dup.labels[i] = b.labels[i % 12];
  }
  const ParamVector f1 = estimate_diag_fisher(net, b.view(), LossKind::angular_mse);
  const ParamVector f2 = estimate_diag_fisher(net, dup.view(), LossKind::angular_mse);
  for (std::size_t i = 0; i < f1.size(); ++i)
    CHECK(f2[i] == doctest::Approx(f1[i]).epsilon(1e-12));
}

TEST_CASE("fisher: empty dataset is an input error") {
  Network net(NetworkSpec{2, {}, Activation::identity, {{0, 1}}}, 0);
  Batch b = scalar_batch({}, {});
  b.inputs = Matrix(0, 2);
  CHECK_THROWS_AS(estimate_diag_fisher(net, b.view(), LossKind::mse), InputError);
}

TEST_CASE("property: fisher is non-negative and exactly permutation invariant") {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    for (LossKind k : {LossKind::mse, LossKind::cross_entropy, LossKind::angular_mse}) {
      const std::size_t out = k == LossKind::cross_entropy ? 3 : 2;
      Network net(NetworkSpec{5, {7, 4}, Activation::relu, {{0, out}}}, seed);
      Batch b = random_batch(60, 5, out, k, 10 + seed);
      const ParamVector f = estimate_diag_fisher(net, b.view(), k);
      for (double x : f) CHECK((x >= 0.0 && std::isfinite(x)));

      CounterRng rng(seed);
      std::vector<std::size_t> perm(60);
      for (std::size_t i = 0; i < 60; ++i) perm[i] = i;
      shuffle(perm.begin(), perm.end(), rng);
      Batch p = b;
      for (std::size_t i = 0; i < 60; ++i) {
        for (std::size_t j = 0; j < 5; ++j) p.inputs(i, j) = b.inputs(perm[i], j);
        if (k != LossKind::cross_entropy)
          for (std::size_t j = 0; j < out; ++j) p.targets(i, j) = b.targets(perm[i], j);
        p.labels[i] = b.labels[perm[i]];
      }
      CHECK(estimate_diag_fisher(net, p.view(), k) == f);
    }
  }
}

TEST_CASE("running average: examples") {
  const std::vector<double> f1{0.3, 0.7};
  CHECK(fisher_running_average(std::vector<double>{9.0, 9.0}, f1, 1) == f1);
  const ParamVector r = fisher_running_average(std::vector<double>{0.2, 0.4},
                                               std::vector<double>{0.6, 0.0}, 2);
  CHECK(r[0] == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(r[1] == doctest::Approx(0.2).epsilon(1e-15));
  for (int t : {2, 3, 7}) CHECK(fisher_running_average(f1, f1, t) == f1);
  CHECK_THROWS_AS(fisher_running_average(f1, f1, 0), InputError);
  CHECK_THROWS_AS(fisher_running_average(f1, std::vector<double>{1.0}, 2), ShapeError);
}

TEST_CASE("property: running average fold equals the batch mean") {
  for (std::uint64_t seq = 0; seq < 10; ++seq) {
    CounterRng rng(1000 + seq);
    const std::size_t n = 8, T = 2 + seq;
    std::vector<std::vector<double>> fs(T, std::vector<double>(n));
    for (auto& f : fs)
      for (double& x : f) x = rng.uniform() * std::pow(10.0, rng.uniform(-4.0, 2.0));
    ParamVector fold(n, 0.0);
    for (std::size_t t = 0; t < T; ++t) fold = fisher_running_average(fold, fs[t], static_cast<int>(t + 1));
    for (std::size_t i = 0; i < n; ++i) {
      double mean = 0.0;
      for (std::size_t t = 0; t < T; ++t) mean += fs[t][i];
      mean /= static_cast<double>(T);
      CHECK(std::abs(fold[i] - mean) <= 1e-12 * std::max(1.0, std::abs(mean)));
    }
  }
}

TEST_CASE("weighted product: endpoints return the inputs exactly") {
  const DiagGaussian g1 = gauss({0.3, -1.0}, {0.5, 2.0});
  const DiagGaussian g2 = gauss({1.7, 4.0}, {3.0, 0.25});
  const auto r0 = gaussian_weighted_product(g1, g2, 0.0);
  CHECK(r0.mixture == g1);
  CHECK(r0.log_norm == 0.0);
  const auto r1 = gaussian_weighted_product(g1, g2, 1.0);
  CHECK(r1.mixture == g2);
  CHECK(r1.log_norm == 0.0);
}

TEST_CASE("weighted product: equal variances halfway between 0 and 2") {
  const auto r = gaussian_weighted_product(gauss({0.0}, {1.0}), gauss({2.0}, {1.0}), 0.5);
  CHECK(r.mixture.mean[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(1.0 / r.mixture.precision[0] == doctest::Approx(1.0).epsilon(1e-15));
  const Oracle o = variance_form(0.0, 1.0, 2.0, 1.0, 0.5);
  CHECK(r.log_norm == doctest::Approx(o.log_z).epsilon(1e-13));
}

TEST_CASE("weighted product: invalid inputs") {
  const DiagGaussian g = gauss({0.0}, {1.0});
  CHECK_THROWS_AS(gaussian_weighted_product(g, g, -0.1), InputError);
  CHECK_THROWS_AS(gaussian_weighted_product(g, g, 1.5), InputError);
  DiagGaussian z = g;
  z.precision[0] = 0.0;
  CHECK_THROWS_AS(gaussian_weighted_product(g, z, 0.5), InputError);
}

TEST_CASE("property: weighted product agrees with the variance-form oracle") {
  CounterRng rng(77);
  for (int c = 0; c < 200; ++c) {
    const double mu1 = rng.uniform(-5, 5), mu2 = rng.uniform(-5, 5);
    const double s1 = std::exp(rng.uniform(-3, 3)), s2 = std::exp(rng.uniform(-3, 3));
    const double beta = rng.uniform();
    const auto r = gaussian_weighted_product(gauss({mu1}, {s1}), gauss({mu2}, {s2}), beta);
    const Oracle o = variance_form(mu1, s1, mu2, s2, beta);
    CHECK(r.mixture.mean[0] == doctest::Approx(o.m).epsilon(1e-10));
    CHECK(1.0 / r.mixture.precision[0] == doctest::Approx(o.v2).epsilon(1e-10));
    CHECK(std::abs(r.log_norm - o.log_z) <= 1e-9 * std::max(1.0, std::abs(o.log_z)));
  }
}

TEST_CASE("property: exchange symmetry, bounds on m and v") {
  CounterRng rng(5);
  for (int c = 0; c < 200; ++c) {
    const double mu1 = rng.uniform(-3, 3), mu2 = mu1 + rng.uniform(0.1, 4);
    const double s1 = std::exp(rng.uniform(-2, 2)), s2 = std::exp(rng.uniform(-2, 2));
    const double beta = rng.uniform(0.01, 0.99);
    const DiagGaussian g1 = gauss({mu1}, {s1}), g2 = gauss({mu2}, {s2});
    const auto a = gaussian_weighted_product(g1, g2, beta);
    const auto b = gaussian_weighted_product(g2, g1, 1.0 - beta);
    CHECK(std::abs(a.mixture.mean[0] - b.mixture.mean[0]) <= 1e-12 * std::max(1.0, std::abs(a.mixture.mean[0])));
    CHECK(std::abs(a.mixture.precision[0] - b.mixture.precision[0]) <= 1e-12 * a.mixture.precision[0]);
    CHECK(std::abs(a.log_norm - b.log_norm) <= 1e-12 * std::max(1.0, std::abs(a.log_norm)));
    CHECK(a.mixture.mean[0] > mu1);
    CHECK(a.mixture.mean[0] < mu2);
    CHECK(1.0 / a.mixture.precision[0] <= std::max(s1, s2) * (1 + 1e-12));
  }
}

TEST_CASE("property: log Z matches numerical integration") {
  CounterRng rng(2024);
  for (int c = 0; c < 100; ++c) {
    const double mu1 = rng.uniform(-3, 3), mu2 = rng.uniform(-3, 3);
    const double s1 = std::exp(rng.uniform(-1.5, 1.5)), s2 = std::exp(rng.uniform(-1.5, 1.5));
    const double beta = rng.uniform(0.05, 0.95);
    const auto r = gaussian_weighted_product(gauss({mu1}, {s1}), gauss({mu2}, {s2}), beta);
    // Z = integral of p1^(1-b) p2^b; trapezoid rule on +/- 10 combined std devs.
    const double sd = std::sqrt(s1) + std::sqrt(s2);
    const double lo = std::min(mu1, mu2) - 10 * sd, hi = std::max(mu1, mu2) + 10 * sd;
    const int n = 200000;
    const double h = (hi - lo) / n;
    double z = 0.0;
    for (int i = 0; i <= n; ++i) {
      const double x = lo + h * i;
      const double f = std::pow(normal_pdf(x, mu1, s1), 1.0 - beta) * std::pow(normal_pdf(x, mu2, s2), beta);
      z += (i == 0 || i == n) ? 0.5 * f : f;
    }
    z *= h;
    CHECK(std::exp(r.log_norm) == doctest::Approx(z).epsilon(1e-4));
  }
}

TEST_CASE("snapshot anchor copies parameters and Fisher") {
  AngularTaskSpec spec;
  spec.samples_per_class = 5;
  spec.seed = 3;
  const TaskDataset task = gen_angular_task(AngularLayout::identity(4), spec);
  Network net(NetworkSpec{spec.input_dim, {8}, Activation::tanh, {task.head_spec()}}, 1);
  const DiagGaussian a = snapshot_anchor(net, task);
  CHECK(a.mean == net.flatten());
  CHECK(a.precision == estimate_diag_fisher(net, task));
  CHECK(snapshot_anchor(net, task) == a);
  a.validate();
}
