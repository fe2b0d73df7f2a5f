#include "pcedtr/outcome.hpp"

#include <cmath>
#include <iostream>

#include "pcedtr/errors.hpp"
#include "pcedtr/kernels.hpp"

namespace pcedtr {

namespace {
constexpr double kLog2Pi = 1.83787706640934548356;

double logsumexp(const Eigen::VectorXd& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  double acc = 0.0;
  for (int i = 0; i < v.size(); ++i) acc += kern::exp1(v[i] - m);
  return m + std::log(acc);
}
}  // namespace

OutcomeModel::OutcomeModel(int k, const Eigen::MatrixXd& W0, int B_y,
                           RngStream& rng)
    : k_(k), q_(static_cast<int>(W0.cols())), W_(W0) {
  const int m = static_cast<int>(W0.rows());
  if (m < 1 || q_ < 2) throw ValidationError("outcome model: bad feature matrix");

  base_mean_ = W0.colwise().mean();
  Eigen::MatrixXd centered = W0.rowwise() - base_mean_.transpose();
  base_psi_ = centered.transpose() * centered / std::max(1, m - 1);
  base_psi_.diagonal().array() += 1e-3;  // keep Psi0 proper for small slices
  base_kappa_ = 1.0;
  base_nu_ = q_ + 2.0;

  p_.k = k;
  p_.alpha = 1.0;
  p_.sticks = stick_break(Eigen::VectorXd::Constant(B_y, 0.5));
  p_.comps.assign(static_cast<std::size_t>(B_y),
                  MvnParams{base_mean_, base_psi_});
  p_.labels.assign(static_cast<std::size_t>(m), 0);
  cache_.resize(static_cast<std::size_t>(B_y));
  for (int b = 0; b < B_y; ++b) {
    // overdispersed start: draw components from the base measure
    draw_comp_from_posterior(b, {}, rng);
  }
}

OutcomeModel::OutcomeModel(const OutcomeDpmParams& p)
    : k_(p.k), q_(p.dim()), W_(0, p.dim()) {
  base_mean_ = Eigen::VectorXd::Zero(q_);
  base_psi_ = Eigen::MatrixXd::Identity(q_, q_);
  base_nu_ = q_ + 2.0;
  set_params(p);
}

void OutcomeModel::set_params(const OutcomeDpmParams& p) {
  p_ = p;
  q_ = p_.dim();
  cache_.resize(p_.comps.size());
  for (int b = 0; b < p_.truncation(); ++b) refresh_comp(b);
  if (p_.labels.size() != static_cast<std::size_t>(W_.rows()))
    p_.labels.assign(static_cast<std::size_t>(W_.rows()), 0);
}

void OutcomeModel::set_data(const Eigen::MatrixXd& W) {
  if (W.cols() != q_) throw ValidationError("outcome set_data: dim mismatch");
  W_ = W;
  if (p_.labels.size() != static_cast<std::size_t>(W_.rows()))
    p_.labels.assign(static_cast<std::size_t>(W_.rows()), 0);
}

void OutcomeModel::refresh_comp(int b) {
  auto& c = cache_[static_cast<std::size_t>(b)];
  const auto& comp = p_.comps[static_cast<std::size_t>(b)];
  const auto llt = chol_jitter(comp.cov);
  c.full_l = llt.matrixL();
  c.full_logdet = 0.0;
  for (int i = 0; i < q_; ++i) c.full_logdet += 2.0 * std::log(c.full_l(i, i));
  const Eigen::MatrixXd szz = comp.cov.bottomRightCorner(q_ - 1, q_ - 1);
  const Eigen::VectorXd szy = comp.cov.block(1, 0, q_ - 1, 1);
  const auto lltz = chol_jitter(szz);
  c.z_l = lltz.matrixL();
  c.z_logdet = 0.0;
  for (int i = 0; i < q_ - 1; ++i) c.z_logdet += 2.0 * std::log(c.z_l(i, i));
  c.gain = lltz.solve(szy);
}

double OutcomeModel::comp_logpdf(int b, const Eigen::VectorXd& w) const {
  const auto& c = cache_[static_cast<std::size_t>(b)];
  const auto& comp = p_.comps[static_cast<std::size_t>(b)];
  const Eigen::VectorXd y =
      c.full_l.triangularView<Eigen::Lower>().solve(w - comp.mean);
  return -0.5 * y.squaredNorm() - 0.5 * c.full_logdet - 0.5 * q_ * kLog2Pi;
}

double OutcomeModel::comp_logpdf_z(int b, const Eigen::VectorXd& z) const {
  const auto& c = cache_[static_cast<std::size_t>(b)];
  const auto& comp = p_.comps[static_cast<std::size_t>(b)];
  const Eigen::VectorXd y = c.z_l.triangularView<Eigen::Lower>().solve(
      z - comp.mean.tail(q_ - 1));
  return -0.5 * y.squaredNorm() - 0.5 * c.z_logdet - 0.5 * (q_ - 1) * kLog2Pi;
}

Eigen::VectorXd OutcomeModel::local_weights(const Eigen::VectorXd& z) const {
  if (z.size() != q_ - 1)
    throw ValidationError("local_weights: expected dim q-1");
  const int B = p_.truncation();
  Eigen::VectorXd lw(B);
  for (int b = 0; b < B; ++b)
    lw[b] = kern::log1(p_.sticks.w[b]) + comp_logpdf_z(b, z);
  const double total = logsumexp(lw);
  if (!std::isfinite(total)) {
    static bool warned = false;
    if (!warned) {
      std::cerr << "pcedtr: local weights underflow, using uniform weights\n";
      warned = true;
    }
    return Eigen::VectorXd::Constant(B, 1.0 / B);
  }
  Eigen::VectorXd psi(B);
  for (int b = 0; b < B; ++b) psi[b] = kern::exp1(lw[b] - total);
  return psi;
}

double OutcomeModel::conditional_mean_y(const Eigen::VectorXd& z) const {
  const Eigen::VectorXd psi = local_weights(z);
  double acc = 0.0;
  for (int b = 0; b < p_.truncation(); ++b) {
    const auto& comp = p_.comps[static_cast<std::size_t>(b)];
    const auto& c = cache_[static_cast<std::size_t>(b)];
    acc += psi[b] * (comp.mean[0] + c.gain.dot(z - comp.mean.tail(q_ - 1)));
  }
  return acc;
}

double OutcomeModel::mixture_logpdf(const Eigen::VectorXd& w) const {
  const int B = p_.truncation();
  Eigen::VectorXd lw(B);
  for (int b = 0; b < B; ++b)
    lw[b] = kern::log1(p_.sticks.w[b]) + comp_logpdf(b, w);
  return logsumexp(lw);
}

double OutcomeModel::data_loglik() const {
  double acc = 0.0;
  for (int i = 0; i < rows(); ++i) acc += mixture_logpdf(W_.row(i));
  return acc;
}

double OutcomeModel::conditional_logpdf_y(double y,
                                          const Eigen::VectorXd& z) const {
  const int B = p_.truncation();
  Eigen::VectorXd num(B), den(B);
  Eigen::VectorXd w(q_);
  w[0] = y;
  w.tail(q_ - 1) = z;
  for (int b = 0; b < B; ++b) {
    num[b] = kern::log1(p_.sticks.w[b]) + comp_logpdf(b, w);
    den[b] = kern::log1(p_.sticks.w[b]) + comp_logpdf_z(b, z);
  }
  return logsumexp(num) - logsumexp(den);
}

void OutcomeModel::draw_comp_from_posterior(int b,
                                            const std::vector<int>& members,
                                            RngStream& rng) {
  const int m = static_cast<int>(members.size());
  Eigen::VectorXd mu_n = base_mean_;
  Eigen::MatrixXd psi_n = base_psi_;
  double kappa_n = base_kappa_;
  double nu_n = base_nu_;
  if (m > 0) {
    Eigen::VectorXd wbar = Eigen::VectorXd::Zero(q_);
    for (int i : members) wbar += W_.row(i).transpose();
    wbar /= m;
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(q_, q_);
    for (int i : members) {
      const Eigen::VectorXd dv = W_.row(i).transpose() - wbar;
      s += dv * dv.transpose();
    }
    const Eigen::VectorXd dm = wbar - base_mean_;
    psi_n += s + (base_kappa_ * m / (base_kappa_ + m)) * (dm * dm.transpose());
    mu_n = (base_kappa_ * base_mean_ + m * wbar) / (base_kappa_ + m);
    kappa_n += m;
    nu_n += m;
  }
  // Sigma ~ IW(nu_n, psi_n) via a Bartlett-decomposed Wishart draw
  const Eigen::MatrixXd psi_inv_l =
      chol_jitter(psi_n.inverse()).matrixL();
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(q_, q_);
  for (int i = 0; i < q_; ++i) {
    a(i, i) = std::sqrt(rng.gamma(0.5 * (nu_n - i), 0.5));
    for (int jj = 0; jj < i; ++jj) a(i, jj) = rng.normal();
  }
  const Eigen::MatrixXd la = psi_inv_l * a;
  const Eigen::MatrixXd wish = la * la.transpose();
  Eigen::MatrixXd sigma = wish.inverse();
  sigma = 0.5 * (sigma + sigma.transpose());

  // mu | Sigma ~ N(mu_n, Sigma / kappa_n)
  const Eigen::MatrixXd sig_l = chol_jitter(sigma).matrixL();
  Eigen::VectorXd zvec(q_);
  for (int i = 0; i < q_; ++i) zvec[i] = rng.normal();
  auto& comp = p_.comps[static_cast<std::size_t>(b)];
  comp.cov = sigma;
  comp.mean = mu_n + sig_l * zvec / std::sqrt(kappa_n);
  refresh_comp(b);
}

void OutcomeModel::sweep(RngStream& rng) {
  const int n = rows();
  const int B = p_.truncation();
  // labels
  std::vector<double> wts(static_cast<std::size_t>(B));
  Eigen::VectorXd lw(B);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd w = W_.row(i);
    for (int b = 0; b < B; ++b)
      lw[b] = kern::log1(p_.sticks.w[b]) + comp_logpdf(b, w);
    const double m = lw.maxCoeff();
    if (std::isfinite(m)) {
      for (int b = 0; b < B; ++b)
        wts[static_cast<std::size_t>(b)] = kern::exp1(lw[b] - m);
      p_.labels[static_cast<std::size_t>(i)] = rng.categorical(wts);
    }
  }
  // sticks and concentration
  Eigen::VectorXd v(B);
  double log1mv = 0.0;
  for (int b = 0; b < B - 1; ++b) {
    int m_b = 0, m_gt = 0;
    for (int z : p_.labels) {
      if (z == b) ++m_b;
      if (z > b) ++m_gt;
    }
    v[b] = rng.beta(1.0 + m_b, p_.alpha + m_gt);
    log1mv += std::log1p(-v[b]);
  }
  v[B - 1] = 1.0;
  p_.sticks = stick_break(v);
  p_.alpha = rng.gamma(static_cast<double>(B), 1.0 - log1mv);
  // components from the conjugate NIW conditionals
  std::vector<std::vector<int>> members(static_cast<std::size_t>(B));
  for (int i = 0; i < n; ++i)
    members[static_cast<std::size_t>(p_.labels[static_cast<std::size_t>(i)])]
        .push_back(i);
  for (int b = 0; b < B; ++b)
    draw_comp_from_posterior(b, members[static_cast<std::size_t>(b)], rng);
}

}  // namespace pcedtr
