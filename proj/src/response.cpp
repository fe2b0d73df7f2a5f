#include "pcedtr/response.hpp"

#include <cmath>

#include "pcedtr/errors.hpp"
#include "pcedtr/kernels.hpp"

namespace pcedtr {

namespace {

double log_sigmoid(double lp) {  // log expit(lp)
  return lp >= 0.0 ? -std::log1p(kern::exp1(-lp))
                   : lp - std::log1p(kern::exp1(lp));
}

}  // namespace

double response_prob(const ResponseDpmParams& p, double d1, double d2,
                     const Eigen::VectorXd& x0) {
  double acc = 0.0;
  for (int j = 0; j < p.truncation(); ++j) {
    const double lp = p.atoms(j, 0) + p.atoms(j, 1) * d1 + p.atoms(j, 2) * d2 +
                      x0.dot(p.atoms.row(j).tail(x0.size()));
    acc += p.sticks.w[j] / (1.0 + kern::exp1(-lp));
  }
  return std::clamp(acc, 1e-12, 1.0 - 1e-12);
}

ResponseModel::ResponseModel(int arm, Eigen::MatrixXd x0, std::vector<int> s,
                             int B_s)
    : x0_(std::move(x0)), s_(std::move(s)) {
  const int n = rows();
  if (n < 1) throw ValidationError("response model: arm has no subjects");
  if (x0_.rows() != n) throw ValidationError("response model: x0/s mismatch");
  p_.arm = arm;
  p_.sticks = stick_break(Eigen::VectorXd::Constant(B_s, 0.5));
  p_.conc = 1.0;
  p_.atoms = Eigen::MatrixXd::Ones(B_s, 3 + x0_.cols());
  p_.labels.assign(static_cast<std::size_t>(n), 0);
  d1_ = Eigen::VectorXd::Constant(n, 0.5);
  d2_ = Eigen::VectorXd::Constant(n, 0.5);
}

void ResponseModel::set_compliances(Eigen::VectorXd d1, Eigen::VectorXd d2) {
  if (d1.size() != rows() || d2.size() != rows())
    throw ValidationError("response set_compliances: length mismatch");
  d1_ = std::move(d1);
  d2_ = std::move(d2);
}

double ResponseModel::cluster_loglik(int j, const Eigen::VectorXd& coef) const {
  double acc = 0.0;
  const int m1 = static_cast<int>(x0_.cols());
  for (std::size_t i = 0; i < s_.size(); ++i) {
    if (p_.labels[i] != j) continue;
    const int r = static_cast<int>(i);
    const double lp = coef[0] + coef[1] * d1_[r] + coef[2] * d2_[r] +
                      x0_.row(r).dot(coef.tail(m1));
    acc += s_[i] ? log_sigmoid(lp) : log_sigmoid(-lp);
  }
  return acc;
}

double ResponseModel::atom_log_prior(const Eigen::VectorXd& coef) const {
  // alpha, beta1, beta2 ~ N(1,1); gamma ~ N(1, I)
  return -0.5 * (coef.array() - 1.0).square().sum();
}

void ResponseModel::sweep(RngStream& rng, MhCounters& acc) {
  const int n = rows();
  const int B = p_.truncation();
  const int m1 = static_cast<int>(x0_.cols());
  // labels: w_j x Bernoulli kernel
  std::vector<double> wts(static_cast<std::size_t>(B));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < B; ++j) {
      const double lp = p_.atoms(j, 0) + p_.atoms(j, 1) * d1_[i] +
                        p_.atoms(j, 2) * d2_[i] +
                        x0_.row(i).dot(p_.atoms.row(j).tail(m1));
      const double pj = 1.0 / (1.0 + kern::exp1(-lp));
      wts[static_cast<std::size_t>(j)] =
          p_.sticks.w[j] * (s_[static_cast<std::size_t>(i)] ? pj : 1.0 - pj);
    }
    p_.labels[static_cast<std::size_t>(i)] = rng.categorical(wts);
  }
  // sticks and concentration
  Eigen::VectorXd v(B);
  double log1mv = 0.0;
  for (int j = 0; j < B - 1; ++j) {
    int m_j = 0, m_gt = 0;
    for (int z : p_.labels) {
      if (z == j) ++m_j;
      if (z > j) ++m_gt;
    }
    v[j] = rng.beta(1.0 + m_j, p_.conc + m_gt);
    log1mv += std::log1p(-v[j]);
  }
  v[B - 1] = 1.0;
  p_.sticks = stick_break(v);
  p_.conc = rng.gamma(static_cast<double>(B), 1.0 - log1mv);
  // atoms: random-walk MH per occupied cluster, prior draw for empty ones
  for (int j = 0; j < B; ++j) {
    int m_j = 0;
    for (int z : p_.labels)
      if (z == j) ++m_j;
    if (m_j == 0) {
      for (int c = 0; c < p_.atoms.cols(); ++c)
        p_.atoms(j, c) = 1.0 + rng.normal();
      continue;
    }
    Eigen::VectorXd cur = p_.atoms.row(j);
    Eigen::VectorXd cand = cur;
    for (int c = 0; c < cand.size(); ++c)
      cand[c] += std::sqrt(prop_var_) * rng.normal();
    const double lr = (cluster_loglik(j, cand) + atom_log_prior(cand)) -
                      (cluster_loglik(j, cur) + atom_log_prior(cur));
    const bool ok = std::log(rng.uniform()) < lr;
    acc.tally(ok);
    if (ok) p_.atoms.row(j) = cand;
  }
}

std::vector<ResponseDpmParams> fit_response(int arm, const Eigen::MatrixXd& x0,
                                            const std::vector<int>& s,
                                            const Eigen::VectorXd& d1,
                                            const Eigen::VectorXd& d2, int B_s,
                                            RngStream& rng, int iters,
                                            int warmup) {
  ResponseModel model(arm, x0, s, B_s);
  model.set_compliances(d1, d2);
  MhCounters acc;
  for (int it = 0; it < warmup; ++it) model.sweep(rng, acc);
  std::vector<ResponseDpmParams> draws;
  draws.reserve(static_cast<std::size_t>(iters));
  for (int it = 0; it < iters; ++it) {
    model.sweep(rng, acc);
    draws.push_back(model.params());
  }
  return draws;
}

}  // namespace pcedtr
