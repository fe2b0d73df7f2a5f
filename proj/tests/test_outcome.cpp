#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>

#include "oracles.hpp"
#include "pcedtr/outcome.hpp"

using namespace pcedtr;

namespace {

OutcomeDpmParams make_params(const std::vector<MvnParams>& comps,
                             const Eigen::VectorXd& sticks_v) {
  OutcomeDpmParams p;
  p.k = 1;
  p.alpha = 1.0;
  p.comps = comps;
  p.sticks = stick_break(sticks_v);
  return p;
}

MvnParams comp_at(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov) {
  return MvnParams{mean, cov};
}

}  // namespace

TEST_CASE("local weights") {
  // single component
  OutcomeModel one(make_params(
      {comp_at(Eigen::VectorXd::Zero(3), Eigen::MatrixXd::Identity(3, 3))},
      Eigen::VectorXd::Constant(1, 0.5)));
  Eigen::VectorXd z(2);
  z << 0.4, -1.0;
  CHECK(one.local_weights(z)[0] == 1.0);

  // equal z-blocks: weights reduce to the sticks
  Eigen::VectorXd mean_a(3), mean_b(3);
  mean_a << 1.0, 0.2, -0.3;
  mean_b << -2.0, 0.2, -0.3;  // only the y-coordinate differs
  Eigen::MatrixXd cov = Eigen::MatrixXd::Identity(3, 3);
  Eigen::VectorXd v(2);
  v << 0.3, 1.0;
  OutcomeModel two(make_params({comp_at(mean_a, cov), comp_at(mean_b, cov)}, v));
  const auto psi = two.local_weights(z);
  CHECK(psi[0] == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(psi[1] == doctest::Approx(0.7).epsilon(1e-12));

  // far-separated components: the near one takes all the weight
  Eigen::VectorXd mean_c(3), mean_d(3);
  mean_c << 0.0, 0.0, 0.0;
  mean_d << 0.0, 30.0, 0.0;
  OutcomeModel far(make_params({comp_at(mean_c, cov), comp_at(mean_d, cov)}, v));
  Eigen::VectorXd z0(2);
  z0 << 0.0, 0.0;
  const auto psi2 = far.local_weights(z0);
  CHECK(psi2[0] > 0.999);
  // two-component hand oracle
  const double na = 0.3 * oracle::phi(0.0) * oracle::phi(0.0);
  const double nb = 0.7 * oracle::phi(30.0) * oracle::phi(0.0);
  CHECK(psi2[0] == doctest::Approx(na / (na + nb)).epsilon(1e-10));
  CHECK_THROWS(far.local_weights(Eigen::VectorXd(3)));
}

TEST_CASE("conditional mean of y") {
  // identity covariance: conditional mean ignores z
  Eigen::VectorXd mu(3);
  mu << 2.5, 0.3, -0.1;
  OutcomeModel one(
      make_params({comp_at(mu, Eigen::MatrixXd::Identity(3, 3))},
                  Eigen::VectorXd::Constant(1, 0.5)));
  for (double zz : {-2.0, 0.0, 3.0}) {
    Eigen::VectorXd z(2);
    z << zz, zz;
    CHECK(one.conditional_mean_y(z) == doctest::Approx(2.5).epsilon(1e-12));
  }

  // bivariate (y, h) with correlation rho: E[y | h] = rho h
  const double rho = 0.6;
  Eigen::MatrixXd cov2(2, 2);
  cov2 << 1.0, rho, rho, 1.0;
  OutcomeModel biv(make_params({comp_at(Eigen::VectorXd::Zero(2), cov2)},
                               Eigen::VectorXd::Constant(1, 0.5)));
  for (double h : {-1.5, 0.2, 2.0}) {
    Eigen::VectorXd z(1);
    z << h;
    CHECK(biv.conditional_mean_y(z) == doctest::Approx(rho * h).epsilon(1e-12));
  }

  // three components against numeric integration of the mixture conditional
  RngStream rng(3, 0);
  std::vector<MvnParams> comps;
  for (int c = 0; c < 3; ++c) {
    Eigen::MatrixXd a(3, 3);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) a(i, j) = 0.5 * rng.normal();
    MvnParams p;
    p.cov = a * a.transpose() + Eigen::MatrixXd::Identity(3, 3);
    p.mean.resize(3);
    for (int i = 0; i < 3; ++i) p.mean[i] = rng.normal();
    comps.push_back(p);
  }
  Eigen::VectorXd v3(3);
  v3 << 0.3, 0.4, 1.0;
  OutcomeModel mix(make_params(comps, v3));
  Eigen::VectorXd z(2);
  z << 0.7, -0.4;
  const double num = oracle::integrate(
      [&](double y) {
        return y * std::exp(mix.conditional_logpdf_y(y, z));
      },
      -30.0, 30.0, 1e-10);
  CHECK(mix.conditional_mean_y(z) == doctest::Approx(num).epsilon(1e-6));
}

TEST_CASE("mixture conditional density integrates to one") {
  RngStream rng(5, 0);
  std::vector<MvnParams> comps;
  for (int c = 0; c < 2; ++c) {
    Eigen::MatrixXd a(4, 4);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) a(i, j) = 0.4 * rng.normal();
    MvnParams p;
    p.cov = a * a.transpose() + Eigen::MatrixXd::Identity(4, 4);
    p.mean.resize(4);
    for (int i = 0; i < 4; ++i) p.mean[i] = rng.normal();
    comps.push_back(p);
  }
  Eigen::VectorXd v(2);
  v << 0.4, 1.0;
  OutcomeModel mix(make_params(comps, v));
  for (int pt = 0; pt < 5; ++pt) {
    Eigen::VectorXd z(3);
    for (int i = 0; i < 3; ++i) z[i] = rng.normal();
    const double total = oracle::integrate(
        [&](double y) { return std::exp(mix.conditional_logpdf_y(y, z)); },
        -40.0, 40.0, 1e-9);
    CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("one-component gibbs recovers the conjugate posterior mean") {
  RngStream gen(7, 0);
  const int n = 300;
  Eigen::MatrixXd w(n, 2);
  for (int i = 0; i < n; ++i) {
    w(i, 0) = 1.4 + 0.5 * gen.normal();
    w(i, 1) = -0.7 + 0.8 * gen.normal();
  }
  RngStream rng(8, 0);
  OutcomeModel om(1, w, 1, rng);
  std::vector<double> mu0, mu1;
  for (int it = 0; it < 4000; ++it) {
    om.sweep(rng);
    if (it >= 500) {
      mu0.push_back(om.params().comps[0].mean[0]);
      mu1.push_back(om.params().comps[0].mean[1]);
    }
  }
  // NIW posterior mean of mu: (kappa0 mu0 + n wbar) / (kappa0 + n)
  const Eigen::VectorXd wbar = w.colwise().mean();
  const Eigen::VectorXd base = wbar;  // base measure centered at the data
  const Eigen::VectorXd want = (1.0 * base + n * wbar) / (1.0 + n);
  const double se0 = oracle::sd(mu0) / std::sqrt(mu0.size() / 10.0);
  const double se1 = oracle::sd(mu1) / std::sqrt(mu1.size() / 10.0);
  CHECK(std::fabs(oracle::mean(mu0) - want[0]) < 3.0 * se0 + 1e-3);
  CHECK(std::fabs(oracle::mean(mu1) - want[1]) < 3.0 * se1 + 1e-3);
}

TEST_CASE("two separated blobs are recovered by the labels") {
  RngStream gen(9, 0);
  const int n = 200;
  Eigen::MatrixXd w(n, 2);
  for (int i = 0; i < n; ++i) {
    const bool second = i >= n / 2;
    w(i, 0) = (second ? 8.0 : 0.0) + 0.3 * gen.normal();
    w(i, 1) = (second ? -6.0 : 0.0) + 0.3 * gen.normal();
  }
  RngStream rng(10, 0);
  OutcomeModel om(1, w, 5, rng);
  for (int it = 0; it < 300; ++it) om.sweep(rng);
  // majority label per blob
  std::map<int, int> first_counts, second_counts;
  for (int i = 0; i < n / 2; ++i) ++first_counts[om.params().labels[static_cast<std::size_t>(i)]];
  for (int i = n / 2; i < n; ++i) ++second_counts[om.params().labels[static_cast<std::size_t>(i)]];
  auto majority = [](const std::map<int, int>& m) {
    int best = -1, cnt = 0;
    for (const auto& [k, v] : m)
      if (v > cnt) {
        best = k;
        cnt = v;
      }
    return std::make_pair(best, cnt);
  };
  const auto [l1, c1] = majority(first_counts);
  const auto [l2, c2] = majority(second_counts);
  CHECK(l1 != l2);
  CHECK(c1 + c2 >= static_cast<int>(0.99 * n));
}

TEST_CASE("row order does not change the likelihood") {
  RngStream gen(11, 0);
  Eigen::MatrixXd w(40, 3);
  for (int i = 0; i < 40; ++i)
    for (int j = 0; j < 3; ++j) w(i, j) = gen.normal();
  RngStream rng(12, 0);
  OutcomeModel om(1, w, 3, rng);
  const double base = om.data_loglik();
  Eigen::MatrixXd wp = w;
  for (int i = 0; i < 40; ++i) wp.row(i) = w.row(39 - i);
  om.set_data(wp);
  CHECK(om.data_loglik() == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("sweep keeps component covariances positive definite") {
  RngStream gen(13, 0);
  Eigen::MatrixXd w(30, 3);
  for (int i = 0; i < 30; ++i)
    for (int j = 0; j < 3; ++j) w(i, j) = gen.normal();
  RngStream rng(14, 0);
  OutcomeModel om(1, w, 6, rng);
  for (int it = 0; it < 200; ++it) {
    om.sweep(rng);
    for (const auto& c : om.params().comps) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c.cov);
      REQUIRE(es.eigenvalues().minCoeff() > 0.0);
    }
    CHECK(om.params().sticks.w.sum() == doctest::Approx(1.0).epsilon(1e-14));
  }
}
