#include "pcedtr/marginals.hpp"

#include <cmath>

#include "pcedtr/errors.hpp"
#include "pcedtr/kernels.hpp"

namespace pcedtr {

namespace {
constexpr double kLogSqrt2Pi = 0.91893853320467274178;

double log_normal_pdf(double x, double mu, double var) {
  const double z = x - mu;
  return -0.5 * z * z / var - 0.5 * std::log(var) - kLogSqrt2Pi;
}

double log_gamma_pdf(double x, double shape, double rate) {
  if (!(x > 0.0)) return -std::numeric_limits<double>::infinity();
  return shape * std::log(rate) - std::lgamma(shape) +
         (shape - 1.0) * std::log(x) - rate * x;
}

double log_invgamma_pdf(double x, double shape, double scale) {
  if (!(x > 0.0)) return -std::numeric_limits<double>::infinity();
  return shape * std::log(scale) - std::lgamma(shape) -
         (shape + 1.0) * std::log(x) - scale / x;
}

}  // namespace

bool MarginalDpmParams::invariants_ok() const {
  const int b = truncation();
  if (sticks.size() != b || sigma2.size() != b) return false;
  if (std::abs(sticks.w.sum() - 1.0) > 1e-12) return false;
  if ((sticks.w.array() < -1e-15).any()) return false;
  if ((sigma2.array() <= 0.0).any()) return false;
  if (!(base_astar >= 1.0 && base_astar <= 5.0)) return false;
  if (!(base_s > 0.0)) return false;
  return true;
}

CopulaCoupling identity_coupling(int n) {
  CopulaCoupling c;
  c.ajj = Eigen::VectorXd::Ones(n);
  c.cross = Eigen::VectorXd::Zero(n);
  return c;
}

MarginalModel::MarginalModel(int j, Eigen::MatrixXd X, Eigen::VectorXd d, int B,
                             RngStream& rng, double mu_star,
                             MarginalProposals prop)
    : j_(j), X_(std::move(X)), d_(std::move(d)), prop_(prop) {
  const int n = rows();
  const int p = static_cast<int>(X_.cols());
  if (X_.rows() != n) throw ValidationError("marginal: X/d row mismatch");
  if (n < 1) throw ValidationError("marginal: empty data slice");

  const double dbar = d_.mean();
  double dvar = (d_.array() - dbar).square().sum() / std::max(1, n - 1);
  dvar = std::max(dvar, 1e-4);

  p_.j = j;
  p_.beta0.resize(B);
  p_.sigma2.resize(B);
  for (int b = 0; b < B; ++b) {
    p_.beta0[b] = dbar + 0.1 * rng.normal();
    p_.sigma2[b] = dvar;
  }
  p_.sticks = stick_break(Eigen::VectorXd::Constant(B, 0.5));
  p_.conc = 1.0;
  p_.base_mu = dbar;
  p_.base_s = 0.1;
  p_.base_astar = 3.0;
  p_.labels.assign(static_cast<std::size_t>(n), 0);
  mu_star_ = std::isnan(mu_star) ? dbar : mu_star;

  // OLS of d on [1, X]: shared-coefficient start and the frozen proposal
  // covariance Sigma_hat + I.
  p_.coeffs = Eigen::VectorXd::Zero(p);
  Eigen::MatrixXd prop_cov = Eigen::MatrixXd::Identity(p, p);
  if (p > 0 && n > p + 1) {
    Eigen::MatrixXd Xt(n, p + 1);
    Xt.col(0).setOnes();
    Xt.rightCols(p) = X_;
    const Eigen::MatrixXd xtx = Xt.transpose() * Xt;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(xtx);
    if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
      const Eigen::VectorXd bhat = ldlt.solve(Xt.transpose() * d_);
      const double rss = (d_ - Xt * bhat).squaredNorm();
      const double s2 = rss / std::max(1, n - p - 1);
      const Eigen::MatrixXd cov_full =
          s2 * ldlt.solve(Eigen::MatrixXd::Identity(p + 1, p + 1));
      p_.coeffs = bhat.tail(p);
      prop_cov += cov_full.bottomRightCorner(p, p);
    }
  }
  coeff_prop_chol_ = chol_jitter(prop_cov).matrixL();

  pdf_cols_.resize(n, B);
  cdf_cols_.resize(n, B);
  refresh_all();
}

void MarginalModel::refresh_all() {
  const int n = rows();
  const int B = p_.truncation();
  lin_ = X_.cols() > 0 ? Eigen::VectorXd(X_ * p_.coeffs)
                       : Eigen::VectorXd::Zero(n);
  const auto& k = kern::ops();
  for (int b = 0; b < B; ++b) {
    k.tn01_pdf(d_.data(), lin_.data(), p_.beta0[b], p_.sigma2[b],
               pdf_cols_.col(b).data(), static_cast<std::size_t>(n));
    k.tn01_cdf(d_.data(), lin_.data(), p_.beta0[b], p_.sigma2[b],
               cdf_cols_.col(b).data(), static_cast<std::size_t>(n));
  }
  refresh_mixes();
}

void MarginalModel::refresh_mixes() {
  const auto& k = kern::ops();
  const int n = rows();
  mix_pdf_ = pdf_cols_ * p_.sticks.w;
  mix_cdf_ = cdf_cols_ * p_.sticks.w;
  h_.resize(n);
  Eigen::VectorXd clamped =
      mix_cdf_.cwiseMax(kHClampLo).cwiseMin(1.0 - kHClampLo);
  k.ndtri(clamped.data(), h_.data(), static_cast<std::size_t>(n));
  loglik_ = k.sum_log(mix_pdf_.data(), static_cast<std::size_t>(n));
}

void MarginalModel::refresh_row(int i) {
  const int B = p_.truncation();
  double mp = 0.0, mc = 0.0;
  for (int b = 0; b < B; ++b) {
    // same kernel semantics as the batch path (underflowed normalizer -> 0)
    double pd, cd;
    kern::scalar_ops().tn01_pdf(&d_[i], &lin_[i], p_.beta0[b], p_.sigma2[b],
                                &pd, 1);
    kern::scalar_ops().tn01_cdf(&d_[i], &lin_[i], p_.beta0[b], p_.sigma2[b],
                                &cd, 1);
    pdf_cols_(i, b) = pd;
    cdf_cols_(i, b) = cd;
    mp += p_.sticks.w[b] * pd;
    mc += p_.sticks.w[b] * cd;
  }
  const double old = mix_pdf_[i];
  mix_pdf_[i] = mp;
  mix_cdf_[i] = mc;
  h_[i] = kern::ndtri1(std::clamp(mc, kHClampLo, 1.0 - kHClampLo));
  loglik_ += kern::log1(mp) - kern::log1(old);
}

void MarginalModel::set_value(int row, double dv) {
  d_[row] = dv;
  refresh_row(row);
}

void MarginalModel::set_params(const MarginalDpmParams& p) {
  p_ = p;
  pdf_cols_.resize(rows(), p_.truncation());
  cdf_cols_.resize(rows(), p_.truncation());
  if (p_.labels.size() != static_cast<std::size_t>(rows()))
    p_.labels.assign(static_cast<std::size_t>(rows()), 0);
  refresh_all();
}

double MarginalModel::density(double dv, const Eigen::VectorXd& covs) const {
  const double lp = log_density(dv, covs);
  return std::isfinite(lp) ? kern::exp1(lp) : 0.0;
}

double MarginalModel::log_density(double dv, const Eigen::VectorXd& covs) const {
  if (covs.size() != X_.cols())
    throw ValidationError("marginal density: wrong covariate arity");
  const double lin = X_.cols() > 0 ? covs.dot(p_.coeffs) : 0.0;
  double acc = 0.0;
  for (int b = 0; b < p_.truncation(); ++b) {
    TruncNormal tn{lin + p_.beta0[b], p_.sigma2[b], 0.0, 1.0};
    acc += p_.sticks.w[b] * tn.pdf(dv);
  }
  return kern::log1(acc);
}

double MarginalModel::cdf(double dv, const Eigen::VectorXd& covs) const {
  if (covs.size() != X_.cols())
    throw ValidationError("marginal cdf: wrong covariate arity");
  const double lin = X_.cols() > 0 ? covs.dot(p_.coeffs) : 0.0;
  double acc = 0.0;
  for (int b = 0; b < p_.truncation(); ++b) {
    TruncNormal tn{lin + p_.beta0[b], p_.sigma2[b], 0.0, 1.0};
    double cd;
    try {
      cd = tn.cdf(std::clamp(dv, 0.0, 1.0));
    } catch (const NumericError&) {
      cd = 0.5;
    }
    acc += p_.sticks.w[b] * cd;
  }
  return std::clamp(acc, 0.0, 1.0);
}

double MarginalModel::h_transform(double dv, const Eigen::VectorXd& covs) const {
  return kern::ndtri1(std::clamp(cdf(dv, covs), kHClampLo, 1.0 - kHClampLo));
}

double MarginalModel::log_density_row(int row, double dv) const {
  double acc = 0.0;
  for (int b = 0; b < p_.truncation(); ++b) {
    double pd;
    kern::scalar_ops().tn01_pdf(&dv, &lin_[row], p_.beta0[b], p_.sigma2[b],
                                &pd, 1);
    acc += p_.sticks.w[b] * pd;
  }
  return kern::log1(acc);
}

double MarginalModel::h_row(int row, double dv) const {
  double acc = 0.0;
  for (int b = 0; b < p_.truncation(); ++b) {
    double cd;
    kern::scalar_ops().tn01_cdf(&dv, &lin_[row], p_.beta0[b], p_.sigma2[b],
                                &cd, 1);
    acc += p_.sticks.w[b] * cd;
  }
  return kern::ndtri1(std::clamp(acc, kHClampLo, 1.0 - kHClampLo));
}

double MarginalModel::log_mix_pdf_row(int row) const {
  return kern::log1(mix_pdf_[row]);
}

double MarginalModel::copula_term(const Eigen::VectorXd& h,
                                  const CopulaCoupling& cpl) const {
  return (0.5 * (1.0 - cpl.ajj.array()) * h.array().square() -
          h.array() * cpl.cross.array())
      .sum();
}

double MarginalModel::conditional_loglik(const CopulaCoupling& cpl) const {
  return loglik_ + copula_term(h_, cpl) + log_prior();
}

double MarginalModel::log_prior_beta0(double b0) const {
  return log_normal_pdf(b0, p_.base_mu, p_.base_s);
}

double MarginalModel::log_prior_sigma2(double s2) const {
  return log_invgamma_pdf(s2, 1.0, 1.0);
}

double MarginalModel::log_prior() const {
  double lp = 0.0;
  for (int b = 0; b < p_.truncation(); ++b) {
    lp += log_prior_beta0(p_.beta0[b]);
    lp += log_prior_sigma2(p_.sigma2[b]);
  }
  lp += -0.5 * p_.coeffs.squaredNorm() -
        0.5 * p_.coeffs.size() * std::log(2.0 * M_PI);  // N(0, I)
  lp += log_normal_pdf(p_.base_mu, mu_star_, s_star_);
  lp += log_gamma_pdf(p_.base_s, p_.base_astar, 100.0 * p_.base_astar);
  lp += (p_.base_astar >= 1.0 && p_.base_astar <= 5.0)
            ? -std::log(4.0)
            : -std::numeric_limits<double>::infinity();
  return lp;
}

void MarginalModel::eval_column_change(int b, double beta0_cand,
                                       double sigma2_cand, Eval& ev) const {
  const auto& k = kern::ops();
  const int n = rows();
  ev.pdf_col.resize(n);
  ev.cdf_col.resize(n);
  k.tn01_pdf(d_.data(), lin_.data(), beta0_cand, sigma2_cand,
             ev.pdf_col.data(), static_cast<std::size_t>(n));
  k.tn01_cdf(d_.data(), lin_.data(), beta0_cand, sigma2_cand,
             ev.cdf_col.data(), static_cast<std::size_t>(n));
  const double w = p_.sticks.w[b];
  ev.mix_pdf =
      (mix_pdf_ + w * (ev.pdf_col - pdf_cols_.col(b))).cwiseMax(0.0);
  ev.mix_cdf = mix_cdf_ + w * (ev.cdf_col - cdf_cols_.col(b));
  ev.h.resize(n);
  Eigen::VectorXd clamped =
      ev.mix_cdf.cwiseMax(kHClampLo).cwiseMin(1.0 - kHClampLo);
  k.ndtri(clamped.data(), ev.h.data(), static_cast<std::size_t>(n));
  ev.loglik = k.sum_log(ev.mix_pdf.data(), static_cast<std::size_t>(n));
}

double MarginalModel::block_log_ratio_beta0(int b, double cand,
                                            const CopulaCoupling& cpl) const {
  eval_column_change(b, cand, p_.sigma2[b], ws_);
  ws_.copterm = copula_term(ws_.h, cpl);
  const double cur = loglik_ + copula_term(h_, cpl) + log_prior_beta0(p_.beta0[b]);
  const double prop = ws_.loglik + ws_.copterm + log_prior_beta0(cand);
  return prop - cur;
}

double MarginalModel::gamma_sigma2_log_q(double to_s2, double from_s2,
                                         double c) {
  // proposal density of sigma^2=to, generated as 1/tau with
  // tau ~ Gamma(c, c * from): mean 1/from, cv 1/sqrt(c), so the proposal
  // concentrates around the current precision; includes the d tau / d
  // sigma^2 Jacobian
  return log_gamma_pdf(1.0 / to_s2, c, c * from_s2) - 2.0 * std::log(to_s2);
}

double MarginalModel::block_log_ratio_sigma2(int b, double cand,
                                             const CopulaCoupling& cpl) const {
  if (!(cand > 0.0)) return -std::numeric_limits<double>::infinity();
  eval_column_change(b, p_.beta0[b], cand, ws_);
  ws_.copterm = copula_term(ws_.h, cpl);
  const double cur =
      loglik_ + copula_term(h_, cpl) + log_prior_sigma2(p_.sigma2[b]);
  const double prop = ws_.loglik + ws_.copterm + log_prior_sigma2(cand);
  const double q_fwd = gamma_sigma2_log_q(cand, p_.sigma2[b], prop_.c_gamma);
  const double q_rev = gamma_sigma2_log_q(p_.sigma2[b], cand, prop_.c_gamma);
  return (prop - cur) + (q_rev - q_fwd);
}

void MarginalModel::sweep_clusters(RngStream& rng) {
  const int n = rows();
  const int B = p_.truncation();
  // labels
  std::vector<double> wts(static_cast<std::size_t>(B));
  std::vector<int> counts(static_cast<std::size_t>(B), 0);
  for (int i = 0; i < n; ++i) {
    double total = 0.0;
    for (int b = 0; b < B; ++b) {
      wts[static_cast<std::size_t>(b)] = p_.sticks.w[b] * pdf_cols_(i, b);
      total += wts[static_cast<std::size_t>(b)];
    }
    if (total > 0.0) p_.labels[static_cast<std::size_t>(i)] = rng.categorical(wts);
    ++counts[static_cast<std::size_t>(p_.labels[static_cast<std::size_t>(i)])];
  }
  // sticks: v_b ~ Beta(1 + m_b, conc + sum_{q > b} m_q); last stick closes
  Eigen::VectorXd v(B);
  double log1mv_sum = 0.0;
  for (int b = 0; b < B - 1; ++b) {
    const auto [a, beta_b] = stick_posterior_params(p_.labels, b, B, p_.conc);
    v[b] = rng.beta(a, beta_b);
    log1mv_sum += std::log1p(-v[b]);
  }
  v[B - 1] = 1.0;
  p_.sticks = stick_break(v);
  // concentration
  p_.conc = rng.gamma(static_cast<double>(B), 1.0 - log1mv_sum);
  refresh_mixes();
}

std::pair<double, double> MarginalModel::stick_posterior_params(
    const std::vector<int>& labels, int b, int B, double conc) {
  int m_b = 0;
  int m_gt = 0;
  for (int z : labels) {
    if (z == b) ++m_b;
    if (z > b) ++m_gt;
  }
  (void)B;
  return {1.0 + m_b, conc + m_gt};
}

void MarginalModel::sweep_atoms(RngStream& rng, const CopulaCoupling& cpl,
                                MhCounters& acc) {
  const int B = p_.truncation();
  // hyperparameter block (a*, mu, S): no data terms, atom priors only
  {
    const double astar_c = p_.base_astar, mu_c = p_.base_mu, s_c = p_.base_s;
    const double astar_p = rng.uniform(1.0, 5.0);
    const double mu_p = mu_c + std::sqrt(prop_.mu_var) * rng.normal();
    const double s_p = rng.uniform(s_c - prop_.s_halfwidth, s_c + prop_.s_halfwidth);
    double lr = -std::numeric_limits<double>::infinity();
    if (s_p > 0.0) {
      double cur = 0.0, prop = 0.0;
      for (int b = 0; b < B; ++b) {
        cur += log_normal_pdf(p_.beta0[b], mu_c, s_c);
        prop += log_normal_pdf(p_.beta0[b], mu_p, s_p);
      }
      cur += log_normal_pdf(mu_c, mu_star_, s_star_) +
             log_gamma_pdf(s_c, astar_c, 100.0 * astar_c);
      prop += log_normal_pdf(mu_p, mu_star_, s_star_) +
              log_gamma_pdf(s_p, astar_p, 100.0 * astar_p);
      lr = prop - cur;
    }
    const bool ok = std::log(rng.uniform()) < lr;
    acc.tally(ok);
    if (ok) {
      p_.base_astar = astar_p;
      p_.base_mu = mu_p;
      p_.base_s = s_p;
    }
  }
  // cluster intercepts
  for (int b = 0; b < B; ++b) {
    const double cand = p_.beta0[b] + std::sqrt(prop_.beta0_var) * rng.normal();
    const double lr = block_log_ratio_beta0(b, cand, cpl);
    const bool ok = std::log(rng.uniform()) < lr;
    acc.tally(ok);
    if (ok) {
      p_.beta0[b] = cand;
      pdf_cols_.col(b) = ws_.pdf_col;
      cdf_cols_.col(b) = ws_.cdf_col;
      mix_pdf_ = ws_.mix_pdf;
      mix_cdf_ = ws_.mix_cdf;
      h_ = ws_.h;
      loglik_ = ws_.loglik;
    }
  }
  // cluster variances via the gamma precision proposal
  for (int b = 0; b < B; ++b) {
    const double tau = rng.gamma(prop_.c_gamma, prop_.c_gamma * p_.sigma2[b]);
    const double cand = 1.0 / tau;
    bool ok = false;
    if (cand >= prop_.sigma2_floor) {
      const double lr = block_log_ratio_sigma2(b, cand, cpl);
      ok = std::log(rng.uniform()) < lr;
    }
    acc.tally(ok);
    if (ok) {
      p_.sigma2[b] = cand;
      pdf_cols_.col(b) = ws_.pdf_col;
      cdf_cols_.col(b) = ws_.cdf_col;
      mix_pdf_ = ws_.mix_pdf;
      mix_cdf_ = ws_.mix_cdf;
      h_ = ws_.h;
      loglik_ = ws_.loglik;
    }
  }
  // shared coefficients, one joint gaussian random-walk block
  if (p_.coeffs.size() > 0) {
    const int p = static_cast<int>(p_.coeffs.size());
    Eigen::VectorXd z(p);
    for (int i = 0; i < p; ++i) z[i] = rng.normal();
    const Eigen::VectorXd cand = p_.coeffs + coeff_prop_chol_ * z;
    // full recompute with the candidate linear predictor
    const auto& k = kern::ops();
    const int n = rows();
    Eigen::VectorXd lin_cand = X_ * cand;
    Eigen::MatrixXd pdf_cand(n, B), cdf_cand(n, B);
    for (int b = 0; b < B; ++b) {
      k.tn01_pdf(d_.data(), lin_cand.data(), p_.beta0[b], p_.sigma2[b],
                 pdf_cand.col(b).data(), static_cast<std::size_t>(n));
      k.tn01_cdf(d_.data(), lin_cand.data(), p_.beta0[b], p_.sigma2[b],
                 cdf_cand.col(b).data(), static_cast<std::size_t>(n));
    }
    Eigen::VectorXd mixp = pdf_cand * p_.sticks.w;
    Eigen::VectorXd mixc = cdf_cand * p_.sticks.w;
    Eigen::VectorXd hc(n);
    Eigen::VectorXd clamped = mixc.cwiseMax(kHClampLo).cwiseMin(1.0 - kHClampLo);
    k.ndtri(clamped.data(), hc.data(), static_cast<std::size_t>(n));
    const double ll = k.sum_log(mixp.data(), static_cast<std::size_t>(n));
    const double lr = (ll + copula_term(hc, cpl) -
                       0.5 * cand.squaredNorm()) -
                      (loglik_ + copula_term(h_, cpl) -
                       0.5 * p_.coeffs.squaredNorm());
    const bool ok = std::log(rng.uniform()) < lr;
    acc.tally(ok);
    if (ok) {
      p_.coeffs = cand;
      lin_ = std::move(lin_cand);
      pdf_cols_ = std::move(pdf_cand);
      cdf_cols_ = std::move(cdf_cand);
      mix_pdf_ = std::move(mixp);
      mix_cdf_ = std::move(mixc);
      h_ = std::move(hc);
      loglik_ = ll;
    }
  }
}

}  // namespace pcedtr
