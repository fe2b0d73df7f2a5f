#pragma once

#include <Eigen/Dense>
#include <utility>
#include <vector>

#include "pcedtr/marginals.hpp"
#include "pcedtr/rng.hpp"

namespace pcedtr {

// Gaussian-copula log likelihood sum_i [-0.5 log|R| - 0.5 h_i'(R^-1 - I) h_i]
// for score rows H (one observation per row).
double gauss_copula_loglik(const Eigen::MatrixXd& H, const Eigen::MatrixXd& R);

// Joint over the four potential-compliance scores. Each subject contributes
// only the coordinates active for its sequence ({D1,D2} for responders plus
// the relevant Stage-2 compliance), via the matching submatrix of R.
class CopulaModel {
 public:
  explicit CopulaModel(const std::vector<int>& sequences);

  int n() const { return static_cast<int>(H_.rows()); }
  const Eigen::Matrix4d& R() const { return R_; }
  void set_R(const Eigen::Matrix4d& R);  // refreshes pattern inverses
  Eigen::MatrixXd& H() { return H_; }
  const Eigen::MatrixXd& H() const { return H_; }

  // rebuild per-pattern scatter matrices from H (call after H changes)
  void refresh_scatter();

  // total copula log likelihood from the scatter matrices
  double loglik() const;
  // one subject's contribution computed from its H row
  double subject_loglik(int i) const;
  // the same with a candidate score row (augmentation proposals)
  double subject_loglik_with(int i, const Eigen::Vector4d& hrow) const;

  // coefficients of marginal j's conditional likelihood for given subjects
  CopulaCoupling coupling(int j, const std::vector<int>& subjects) const;

  // open interval for off-diagonal entry (a,b) keeping R positive definite;
  // solved from det(R(r)) = 0, which is quadratic in r, with a bisection
  // fallback when the quadratic degenerates
  std::pair<double, double> pd_interval(int a, int b) const;

  // Metropolis sweep over the six off-diagonals; uniform-on-interval
  // proposals with the interval-length Hastings correction
  void sweep_R(RngStream& rng, MhCounters& acc);

  double min_eigenvalue() const;

  // log Hastings ratio for setting entry (a,b) to cand (exposed for tests)
  double entry_log_ratio(int a, int b, double cand) const;

 private:
  struct Pattern {
    std::vector<int> slots;       // active coordinates, size 2 or 3
    std::vector<int> members;     // subject indices
    Eigen::MatrixXd inv;          // (R_A)^-1
    double logdet = 0.0;
    Eigen::MatrixXd scatter;      // sum of h_A h_A' over members
  };

  void refresh_patterns();
  double det_with_entry(int a, int b, double r) const;
  double loglik_with_R(const Eigen::Matrix4d& R) const;

  Eigen::Matrix4d R_ = Eigen::Matrix4d::Identity();
  Eigen::MatrixXd H_;
  std::vector<int> pattern_of_;     // subject -> pattern index
  std::vector<Pattern> patterns_;   // {0,1}, {0,1,2}, {0,1,3}
};

}  // namespace pcedtr
