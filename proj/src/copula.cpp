#include "pcedtr/copula.hpp"

#include <cmath>

#include "pcedtr/data.hpp"
#include "pcedtr/errors.hpp"
#include "pcedtr/stats.hpp"

namespace pcedtr {

double gauss_copula_loglik(const Eigen::MatrixXd& H, const Eigen::MatrixXd& R) {
  const int q = static_cast<int>(R.rows());
  if (H.cols() != q) throw ValidationError("copula loglik: dimension mismatch");
  const auto llt = chol_jitter(R);
  double logdet = 0.0;
  for (int i = 0; i < q; ++i) logdet += std::log(llt.matrixL()(i, i));
  logdet *= 2.0;
  const Eigen::MatrixXd rinv_m_i =
      llt.solve(Eigen::MatrixXd::Identity(q, q)) -
      Eigen::MatrixXd::Identity(q, q);
  double acc = 0.0;
  for (int i = 0; i < H.rows(); ++i) {
    const Eigen::VectorXd h = H.row(i);
    acc += -0.5 * logdet - 0.5 * h.dot(rinv_m_i * h);
  }
  return acc;
}

CopulaModel::CopulaModel(const std::vector<int>& sequences)
    : H_(Eigen::MatrixXd::Zero(static_cast<int>(sequences.size()), 4)),
      pattern_of_(sequences.size()) {
  patterns_.resize(3);
  patterns_[0].slots = {0, 1};
  patterns_[1].slots = {0, 1, 2};
  patterns_[2].slots = {0, 1, 3};
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    const int k = sequences[i];
    const auto& act = active_slots(k);
    int pat = 0;
    if (act.size() == 3) pat = act[2] == 2 ? 1 : 2;
    pattern_of_[i] = pat;
    patterns_[static_cast<std::size_t>(pat)].members.push_back(
        static_cast<int>(i));
  }
  refresh_patterns();
  refresh_scatter();
}

void CopulaModel::refresh_patterns() {
  for (auto& p : patterns_) {
    const int m = static_cast<int>(p.slots.size());
    Eigen::MatrixXd sub(m, m);
    for (int a = 0; a < m; ++a)
      for (int b = 0; b < m; ++b) sub(a, b) = R_(p.slots[a], p.slots[b]);
    const auto llt = chol_jitter(sub);
    p.logdet = 0.0;
    for (int i = 0; i < m; ++i) p.logdet += 2.0 * std::log(llt.matrixL()(i, i));
    p.inv = llt.solve(Eigen::MatrixXd::Identity(m, m));
  }
}

void CopulaModel::set_R(const Eigen::Matrix4d& R) {
  R_ = R;
  refresh_patterns();
}

void CopulaModel::refresh_scatter() {
  for (auto& p : patterns_) {
    const int m = static_cast<int>(p.slots.size());
    p.scatter = Eigen::MatrixXd::Zero(m, m);
    for (int i : p.members) {
      Eigen::VectorXd h(m);
      for (int a = 0; a < m; ++a) h[a] = H_(i, p.slots[a]);
      p.scatter += h * h.transpose();
    }
  }
}

double CopulaModel::loglik() const {
  double acc = 0.0;
  for (const auto& p : patterns_) {
    if (p.members.empty()) continue;
    const int m = static_cast<int>(p.slots.size());
    const Eigen::MatrixXd riv =
        p.inv - Eigen::MatrixXd::Identity(m, m);
    acc += -0.5 * static_cast<double>(p.members.size()) * p.logdet -
           0.5 * (riv.cwiseProduct(p.scatter)).sum();
  }
  return acc;
}

double CopulaModel::subject_loglik(int i) const {
  Eigen::Vector4d h = H_.row(i);
  return subject_loglik_with(i, h);
}

double CopulaModel::subject_loglik_with(int i,
                                        const Eigen::Vector4d& hrow) const {
  const auto& p = patterns_[static_cast<std::size_t>(pattern_of_[i])];
  const int m = static_cast<int>(p.slots.size());
  Eigen::VectorXd h(m);
  for (int a = 0; a < m; ++a) h[a] = hrow[p.slots[a]];
  const double quad =
      h.dot(p.inv * h) - h.squaredNorm();
  return -0.5 * p.logdet - 0.5 * quad;
}

CopulaCoupling CopulaModel::coupling(int j,
                                     const std::vector<int>& subjects) const {
  const int slot = j - 1;
  CopulaCoupling c;
  const int nr = static_cast<int>(subjects.size());
  c.ajj.resize(nr);
  c.cross.resize(nr);
  for (int r = 0; r < nr; ++r) {
    const int i = subjects[static_cast<std::size_t>(r)];
    const auto& p = patterns_[static_cast<std::size_t>(pattern_of_[i])];
    int pos = -1;
    for (int a = 0; a < static_cast<int>(p.slots.size()); ++a)
      if (p.slots[a] == slot) pos = a;
    if (pos < 0)
      throw ValidationError("copula coupling: slot inert for a subject");
    c.ajj[r] = p.inv(pos, pos);
    double cr = 0.0;
    for (int a = 0; a < static_cast<int>(p.slots.size()); ++a)
      if (a != pos) cr += p.inv(pos, a) * H_(i, p.slots[a]);
    c.cross[r] = cr;
  }
  return c;
}

double CopulaModel::det_with_entry(int a, int b, double r) const {
  Eigen::Matrix4d m = R_;
  m(a, b) = r;
  m(b, a) = r;
  return m.determinant();
}

std::pair<double, double> CopulaModel::pd_interval(int a, int b) const {
  const double cur = R_(a, b);
  // det(R(r)) is exactly quadratic in r; fit it from three evaluations
  const double f0 = det_with_entry(a, b, 0.0);
  const double fp = det_with_entry(a, b, 1.0);
  const double fm = det_with_entry(a, b, -1.0);
  const double qa = 0.5 * (fp + fm) - f0;
  const double qb = 0.5 * (fp - fm);
  double lo = -1.0, hi = 1.0;
  bool solved = false;
  if (std::fabs(qa) > 1e-12) {
    const double disc = qb * qb - 4.0 * qa * f0;
    if (disc > 0.0) {
      const double sq = std::sqrt(disc);
      double r1 = (-qb - sq) / (2.0 * qa);
      double r2 = (-qb + sq) / (2.0 * qa);
      if (r1 > r2) std::swap(r1, r2);
      if (qa < 0.0) {  // positive between the roots
        lo = std::max(r1, -1.0);
        hi = std::min(r2, 1.0);
        solved = lo < cur && cur < hi;
      } else {  // positive outside the roots
        if (cur < r1) {
          hi = std::min(r1, 1.0);
          solved = cur < hi;
        } else if (cur > r2) {
          lo = std::max(r2, -1.0);
          solved = cur > lo;
        }
      }
    } else if (qa > 0.0) {
      solved = true;  // det > 0 everywhere on (-1,1)
    }
  } else if (std::fabs(qb) > 1e-12) {
    const double root = -f0 / qb;
    if (qb > 0.0) lo = std::max(-1.0, root);
    else hi = std::min(1.0, root);
    solved = lo < cur && cur < hi;
  } else {
    solved = f0 > 0.0;
  }
  if (!solved) {
    // bisection on det sign outward from the current (PD) value
    auto bisect = [&](double target) {
      double good = cur, bad = target;
      for (int it = 0; it < 80; ++it) {
        const double mid = 0.5 * (good + bad);
        if (det_with_entry(a, b, mid) > 0.0) good = mid;
        else bad = mid;
      }
      return good;
    };
    lo = det_with_entry(a, b, -1.0) > 0.0 ? -1.0 : bisect(-1.0);
    hi = det_with_entry(a, b, 1.0) > 0.0 ? 1.0 : bisect(1.0);
  }
  return {lo, hi};
}

double CopulaModel::loglik_with_R(const Eigen::Matrix4d& R) const {
  double acc = 0.0;
  for (const auto& p : patterns_) {
    if (p.members.empty()) continue;
    const int m = static_cast<int>(p.slots.size());
    Eigen::MatrixXd sub(m, m);
    for (int x = 0; x < m; ++x)
      for (int y = 0; y < m; ++y) sub(x, y) = R(p.slots[x], p.slots[y]);
    const auto llt = chol_jitter(sub);
    double logdet = 0.0;
    for (int i = 0; i < m; ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
    const Eigen::MatrixXd riv = llt.solve(Eigen::MatrixXd::Identity(m, m)) -
                                Eigen::MatrixXd::Identity(m, m);
    acc += -0.5 * static_cast<double>(p.members.size()) * logdet -
           0.5 * (riv.cwiseProduct(p.scatter)).sum();
  }
  return acc;
}

double CopulaModel::entry_log_ratio(int a, int b, double cand) const {
  Eigen::Matrix4d rp = R_;
  rp(a, b) = cand;
  rp(b, a) = cand;
  // forward interval at the current state, reverse at the proposed state;
  // only the (a,b) entry differs so the two coincide, but the correction is
  // kept explicit per the proposal's definition
  const auto fwd = pd_interval(a, b);
  CopulaModel tmp_view = *this;  // cheap: pattern scatters are small
  tmp_view.set_R(rp);
  const auto rev = tmp_view.pd_interval(a, b);
  const double log_q = std::log((fwd.second - fwd.first) /
                                (rev.second - rev.first));
  return loglik_with_R(rp) - loglik_with_R(R_) + log_q;
}

void CopulaModel::sweep_R(RngStream& rng, MhCounters& acc) {
  static const int pairs[6][2] = {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}};
  for (const auto& pr : pairs) {
    const int a = pr[0], b = pr[1];
    const auto iv = pd_interval(a, b);
    if (!(iv.second > iv.first)) {
      acc.tally(false);
      continue;
    }
    const double cand = rng.uniform(iv.first, iv.second);
    Eigen::Matrix4d rp = R_;
    rp(a, b) = cand;
    rp(b, a) = cand;
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es(rp);
    bool ok = false;
    if (es.eigenvalues().minCoeff() > 1e-12) {
      // reverse interval equals the forward one (other entries unchanged)
      const double lr = loglik_with_R(rp) - loglik_with_R(R_);
      ok = std::log(rng.uniform()) < lr;
    }
    acc.tally(ok);
    if (ok) set_R(rp);
  }
}

double CopulaModel::min_eigenvalue() const {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es(R_);
  return es.eigenvalues().minCoeff();
}

}  // namespace pcedtr
