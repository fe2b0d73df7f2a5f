#include "pcedtr/stats.hpp"

#include <cmath>

#include "pcedtr/errors.hpp"
#include "pcedtr/kernels.hpp"

namespace pcedtr {

namespace {
constexpr double kLogSqrt2Pi = 0.91893853320467274178;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
}  // namespace

double TruncNormal::pdf(double d) const {
  if (d < lo || d > hi) return 0.0;
  const double lp = logpdf(d);
  return std::isfinite(lp) ? kern::exp1(lp) : 0.0;
}

double TruncNormal::logpdf(double d) const {
  if (!(sigma2 > 0.0) || d < lo || d > hi)
    return -std::numeric_limits<double>::infinity();
  const double s = 1.0 / std::sqrt(sigma2);
  const double zd = (d - mu) * s;
  const double lmass = kern::log_normal_mass((lo - mu) * s, (hi - mu) * s);
  return -0.5 * zd * zd - 0.5 * std::log(sigma2) - kLogSqrt2Pi - lmass;
}

double TruncNormal::cdf(double d) const {
  if (!(sigma2 > 0.0)) throw NumericError("TruncNormal::cdf: sigma2 <= 0");
  if (d < lo || d > hi)
    throw NumericError("TruncNormal::cdf: point outside [lo, hi]");
  const double s = 1.0 / std::sqrt(sigma2);
  const double plo = kern::ndtr1((lo - mu) * s);
  const double mass = kern::ndtr1((hi - mu) * s) - plo;
  if (mass < 1e-300)
    throw NumericError("TruncNormal::cdf: normalizer underflow");
  double u = (kern::ndtr1((d - mu) * s) - plo) / mass;
  return u < 0.0 ? 0.0 : (u > 1.0 ? 1.0 : u);
}

double TruncNormal::quantile(double u) const {
  if (!(sigma2 > 0.0)) throw NumericError("TruncNormal::quantile: sigma2 <= 0");
  if (u <= 0.0) return lo;
  if (u >= 1.0) return hi;
  const double s = std::sqrt(sigma2);
  const double zlo = (lo - mu) / s;
  const double zhi = (hi - mu) / s;
  const double plo = kern::ndtr1(zlo);
  const double mass = kern::ndtr1(zhi) - plo;
  double x;
  if (mass >= 1e-290) {
    x = mu + s * kern::ndtri1(plo + u * mass);
  } else {
    // Both bounds deep in one tail. Interpolate the target probability in log
    // space; mirror the upper-tail case onto the lower tail first.
    const bool upper = zlo > 0.0;
    const double za = upper ? -zhi : zlo;   // outer bound, lower tail
    const double zb = upper ? -zlo : zhi;   // inner bound
    const double uu = upper ? 1.0 - u : u;
    const double la = kern::log_ndtr1(za);
    const double lb = kern::log_ndtr1(zb);
    const double lp = la + std::log1p(uu * std::expm1(lb - la));
    double z;
    if (lp >= std::log(5e-300)) {
      z = kern::ndtri1(kern::exp1(lp));
    } else {
      const double t = std::sqrt(-2.0 * lp);
      z = -(t - (2.30753 + 0.27061 * t) / (1.0 + t * (0.99229 + 0.04481 * t)));
    }
    if (upper) z = -z;
    x = mu + s * z;
  }
  return x < lo ? lo : (x > hi ? hi : x);
}

double TruncNormal::mean() const {
  const double s = std::sqrt(sigma2);
  const double a = (lo - mu) / s;
  const double b = (hi - mu) / s;
  const double mass = kern::ndtr1(b) - kern::ndtr1(a);
  if (mass < 1e-300) return 0.5 * (lo + hi);
  const double pa = kInvSqrt2Pi * kern::exp1(-0.5 * a * a);
  const double pb = kInvSqrt2Pi * kern::exp1(-0.5 * b * b);
  return mu + s * (pa - pb) / mass;
}

StickWeights stick_break(const Eigen::VectorXd& v) {
  const int b = static_cast<int>(v.size());
  if (b == 0) throw ValidationError("stick_break: empty stick vector");
  StickWeights sw;
  sw.v = v;
  sw.w.resize(b);
  double remain = 1.0;
  double partial = 0.0;
  for (int i = 0; i < b - 1; ++i) {
    sw.w[i] = v[i] * remain;
    remain *= 1.0 - v[i];
    partial += sw.w[i];
  }
  sw.w[b - 1] = std::max(0.0, 1.0 - partial);
  // closure: make the sequential sum exactly one
  for (int pass = 0; pass < 3; ++pass) {
    double total = 0.0;
    for (int i = 0; i < b; ++i) total += sw.w[i];
    if (total == 1.0) break;
    const double adj = sw.w[b - 1] + (1.0 - total);
    if (adj >= 0.0) {
      sw.w[b - 1] = adj;
    } else {
      for (int i = 0; i < b; ++i) sw.w[i] /= total;
    }
  }
  return sw;
}

Eigen::LLT<Eigen::MatrixXd> chol_jitter(const Eigen::MatrixXd& m) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() == Eigen::Success) return llt;
  Eigen::MatrixXd mj = m;
  mj.diagonal().array() += 1e-12;
  llt.compute(mj);
  if (llt.info() != Eigen::Success)
    throw NumericError("cholesky failed (matrix not positive definite)");
  return llt;
}

MvnParams mvn_condition(const MvnParams& p, const std::vector<int>& idx,
                        const Eigen::VectorXd& z) {
  const int q = static_cast<int>(p.mean.size());
  const int k = static_cast<int>(idx.size());
  if (k == 0 || k >= q)
    throw ValidationError("mvn_condition: idx must be a strict nonempty subset");
  std::vector<char> given(static_cast<std::size_t>(q), 0);
  for (int j : idx) {
    if (j < 0 || j >= q) throw ValidationError("mvn_condition: index out of range");
    given[static_cast<std::size_t>(j)] = 1;
  }
  std::vector<int> rest;
  rest.reserve(static_cast<std::size_t>(q - k));
  for (int j = 0; j < q; ++j)
    if (!given[static_cast<std::size_t>(j)]) rest.push_back(j);

  const int r = static_cast<int>(rest.size());
  Eigen::MatrixXd s_gg(k, k), s_rg(r, k), s_rr(r, r);
  Eigen::VectorXd m_g(k), m_r(r);
  for (int a = 0; a < k; ++a) {
    m_g[a] = p.mean[idx[static_cast<std::size_t>(a)]];
    for (int b = 0; b < k; ++b)
      s_gg(a, b) = p.cov(idx[static_cast<std::size_t>(a)],
                         idx[static_cast<std::size_t>(b)]);
  }
  for (int a = 0; a < r; ++a) {
    m_r[a] = p.mean[rest[static_cast<std::size_t>(a)]];
    for (int b = 0; b < k; ++b)
      s_rg(a, b) = p.cov(rest[static_cast<std::size_t>(a)],
                         idx[static_cast<std::size_t>(b)]);
    for (int b = 0; b < r; ++b)
      s_rr(a, b) = p.cov(rest[static_cast<std::size_t>(a)],
                         rest[static_cast<std::size_t>(b)]);
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s_gg);
  const double emin = es.eigenvalues().minCoeff();
  const double emax = es.eigenvalues().maxCoeff();
  if (!(emin > 0.0) || emax / emin > 1e12)
    throw NumericError("mvn_condition: conditioning submatrix ill-conditioned");

  const Eigen::MatrixXd gain = s_rg * s_gg.inverse();
  MvnParams out;
  out.mean = m_r + gain * (z - m_g);
  out.cov = s_rr - gain * s_rg.transpose();
  out.cov = 0.5 * (out.cov + out.cov.transpose());
  return out;
}

double mvn_logpdf(const Eigen::VectorXd& z, const MvnParams& p) {
  const int q = static_cast<int>(p.mean.size());
  if (z.size() != q) throw ValidationError("mvn_logpdf: dimension mismatch");
  const auto llt = chol_jitter(p.cov);
  const Eigen::VectorXd y = llt.matrixL().solve(z - p.mean);
  double logdet = 0.0;
  for (int i = 0; i < q; ++i) logdet += std::log(llt.matrixL()(i, i));
  return -0.5 * y.squaredNorm() - logdet - 0.5 * q * std::log(2.0 * M_PI);
}

}  // namespace pcedtr
