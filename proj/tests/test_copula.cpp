#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "pcedtr/copula.hpp"
#include "pcedtr/kernels.hpp"

using namespace pcedtr;

namespace {

Eigen::Matrix4d constant_corr(double r) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Constant(r);
  m.diagonal().setOnes();
  return m;
}

}  // namespace

TEST_CASE("gaussian copula log likelihood") {
  // identity correlation: zero for any scores
  Eigen::MatrixXd h(5, 3);
  h.setRandom();
  CHECK(gauss_copula_loglik(h, Eigen::MatrixXd::Identity(3, 3)) ==
        doctest::Approx(0.0).epsilon(1e-12));

  // 2x2 with r = 0.2 at h = (1,1): direct matrix arithmetic oracle
  Eigen::MatrixXd h2(1, 2);
  h2 << 1.0, 1.0;
  Eigen::MatrixXd r2(2, 2);
  r2 << 1.0, 0.2, 0.2, 1.0;
  const double det = 1.0 - 0.2 * 0.2;
  const double q11 = 1.0 / det - 1.0;
  const double q12 = -0.2 / det;
  const double want = -0.5 * std::log(det) - 0.5 * (2.0 * q11 + 2.0 * q12);
  CHECK(gauss_copula_loglik(h2, r2) == doctest::Approx(want).epsilon(1e-12));

  // permuting coordinates together with R leaves the value unchanged
  Eigen::MatrixXd h3(4, 3);
  h3.setRandom();
  Eigen::MatrixXd r3(3, 3);
  r3 << 1.0, 0.3, -0.1, 0.3, 1.0, 0.25, -0.1, 0.25, 1.0;
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(3);
  perm.indices() << 2, 0, 1;
  const Eigen::MatrixXd hp = h3 * perm;
  const Eigen::MatrixXd rp = perm.transpose() * r3 * perm;
  CHECK(gauss_copula_loglik(hp, rp) ==
        doctest::Approx(gauss_copula_loglik(h3, r3)).epsilon(1e-12));
}

TEST_CASE("subjects contribute their active submatrix only") {
  // sequences: responder (pattern {0,1}), one from each stage-2 pattern
  CopulaModel cm({1, 2, 5});
  cm.H().row(0) << 0.5, -0.3, 0.0, 0.0;
  cm.H().row(1) << 1.0, 0.2, -0.7, 0.0;
  cm.H().row(2) << -0.4, 0.9, 0.0, 1.1;
  cm.set_R(constant_corr(0.2));
  cm.refresh_scatter();

  Eigen::MatrixXd h01(1, 2), h012(1, 3), h013(1, 3);
  h01 << 0.5, -0.3;
  h012 << 1.0, 0.2, -0.7;
  h013 << -0.4, 0.9, 1.1;
  Eigen::MatrixXd r2(2, 2), r3(3, 3);
  r2 << 1, 0.2, 0.2, 1;
  r3 = Eigen::MatrixXd::Constant(3, 3, 0.2);
  r3.diagonal().setOnes();
  const double want = gauss_copula_loglik(h01, r2) +
                      gauss_copula_loglik(h012, r3) +
                      gauss_copula_loglik(h013, r3);
  CHECK(cm.loglik() == doctest::Approx(want).epsilon(1e-12));
  CHECK(cm.subject_loglik(0) ==
        doctest::Approx(gauss_copula_loglik(h01, r2)).epsilon(1e-12));
}

TEST_CASE("coupling matches the conditional-likelihood coefficients") {
  CopulaModel cm({2, 2});
  cm.H().row(0) << 0.3, -0.2, 0.8, 0.0;
  cm.H().row(1) << -1.0, 0.4, 0.1, 0.0;
  Eigen::Matrix4d r = Eigen::Matrix4d::Identity();
  r(0, 1) = r(1, 0) = 0.3;
  r(0, 2) = r(2, 0) = 0.1;
  r(1, 2) = r(2, 1) = -0.2;
  cm.set_R(r);
  const auto cpl = cm.coupling(1, {0, 1});
  Eigen::Matrix3d sub = r.topLeftCorner(3, 3);
  const Eigen::Matrix3d inv = sub.inverse();
  for (int i = 0; i < 2; ++i) {
    CHECK(cpl.ajj[i] == doctest::Approx(inv(0, 0)).epsilon(1e-12));
    const double cross =
        inv(0, 1) * cm.H()(i, 1) + inv(0, 2) * cm.H()(i, 2);
    CHECK(cpl.cross[i] == doctest::Approx(cross).epsilon(1e-12));
  }
}

TEST_CASE("positive-definite intervals") {
  // identity: det = 1 - r^2, so the interval is the whole (-1, 1)
  CopulaModel cm({1});
  const auto iv = cm.pd_interval(0, 1);
  CHECK(iv.first == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(iv.second == doctest::Approx(1.0).epsilon(1e-12));

  // 3x3 block with (0,1)=0 and (1,2)=0.2 fixed, solving for (0,2):
  // det = 0.96 - r^2 (the fourth coordinate stays decoupled)
  Eigen::Matrix4d r = Eigen::Matrix4d::Identity();
  r(1, 2) = r(2, 1) = 0.2;
  cm.set_R(r);
  const auto iv2 = cm.pd_interval(0, 2);
  const double root = std::sqrt(0.96);
  CHECK(iv2.first == doctest::Approx(-root).epsilon(1e-9));
  CHECK(iv2.second == doctest::Approx(root).epsilon(1e-9));

  // endpoints are genuine roots of the determinant
  Eigen::Matrix4d at = r;
  at(0, 2) = at(2, 0) = iv2.second;
  CHECK(std::fabs(at.determinant()) < 1e-10);
  at(0, 2) = at(2, 0) = iv2.first;
  CHECK(std::fabs(at.determinant()) < 1e-10);

  // the current value always lies strictly inside
  cm.set_R(constant_corr(0.35));
  for (int a = 0; a < 4; ++a)
    for (int b = a + 1; b < 4; ++b) {
      const auto v = cm.pd_interval(a, b);
      CHECK(v.first < cm.R()(a, b));
      CHECK(v.second > cm.R()(a, b));
    }
}

TEST_CASE("R update: acceptance ratio behavior") {
  CopulaModel cm({2, 5, 1, 3, 6});
  cm.H().setRandom();
  cm.set_R(constant_corr(0.15));
  cm.refresh_scatter();
  // proposal equal to current: ratio 1
  CHECK(cm.entry_log_ratio(0, 1, cm.R()(0, 1)) ==
        doctest::Approx(0.0).epsilon(1e-12));

  // no data: the ratio reduces to the interval-length correction, which is
  // identically one because the other entries do not move
  CopulaModel empty(std::vector<int>{});
  empty.set_R(constant_corr(0.3));
  empty.refresh_scatter();
  const auto fwd = empty.pd_interval(0, 1);
  CHECK(empty.entry_log_ratio(0, 1, 0.5 * (fwd.first + fwd.second)) ==
        doctest::Approx(0.0).epsilon(1e-12));
  // hand check that forward and reverse intervals coincide
  CopulaModel moved(std::vector<int>{});
  Eigen::Matrix4d r = constant_corr(0.3);
  r(0, 1) = r(1, 0) = -0.1;
  moved.set_R(r);
  const auto rev = moved.pd_interval(0, 1);
  CHECK(rev.first == doctest::Approx(fwd.first).epsilon(1e-12));
  CHECK(rev.second == doctest::Approx(fwd.second).epsilon(1e-12));
}

TEST_CASE("R stays positive definite across a long sweep") {
  RngStream rng(3, 0);
  std::vector<int> seqs;
  for (int i = 0; i < 40; ++i) seqs.push_back(1 + i % 6);
  CopulaModel cm(seqs);
  for (int i = 0; i < 40; ++i)
    for (int j = 0; j < 4; ++j) cm.H()(i, j) = rng.normal();
  cm.refresh_scatter();
  MhCounters acc;
  for (int it = 0; it < 1000; ++it) {
    cm.sweep_R(rng, acc);
    REQUIRE(cm.min_eigenvalue() > 1e-12);
  }
  CHECK(acc.proposed == 6000);
  CHECK(acc.accepted > 0);
}
