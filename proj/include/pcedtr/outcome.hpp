#pragma once

#include <Eigen/Dense>
#include <vector>

#include "pcedtr/rng.hpp"
#include "pcedtr/stats.hpp"

namespace pcedtr {

// Per-sequence joint DPM of (Y, active scores, x0) as a Gaussian mixture with
// a Normal-Inverse-Wishart base; prediction is by locally weighted Gaussian
// conditioning. Feature rows put Y first, then scores, then x0.
struct OutcomeDpmParams {
  int k = 1;                      // sequence 1..6
  StickWeights sticks;            // length B_y
  double alpha = 1.0;             // DP concentration
  std::vector<MvnParams> comps;   // B_y components, dim q
  std::vector<int> labels;

  int truncation() const { return static_cast<int>(comps.size()); }
  int dim() const { return comps.empty() ? 0 : static_cast<int>(comps[0].mean.size()); }
};

class OutcomeModel {
 public:
  // W0: initial feature rows for the sequence, used to center the base
  // measure (kappa0 = 1, nu0 = q+2, Psi0 = sample covariance).
  OutcomeModel(int k, const Eigen::MatrixXd& W0, int B_y, RngStream& rng);
  // evaluation-only instance around an existing parameter state
  explicit OutcomeModel(const OutcomeDpmParams& p);

  int dim() const { return q_; }
  int rows() const { return static_cast<int>(W_.rows()); }
  const OutcomeDpmParams& params() const { return p_; }
  void set_params(const OutcomeDpmParams& p);

  // replace the feature matrix (scores move between iterations)
  void set_data(const Eigen::MatrixXd& W);

  void sweep(RngStream& rng);  // labels, sticks, alpha, NIW components

  // locally weighted mixture machinery; z = (scores, x0), length q-1
  Eigen::VectorXd local_weights(const Eigen::VectorXd& z) const;
  double conditional_mean_y(const Eigen::VectorXd& z) const;
  // joint mixture log density of a full feature row (y, z)
  double mixture_logpdf(const Eigen::VectorXd& w) const;
  // conditional log density of y given z
  double conditional_logpdf_y(double y, const Eigen::VectorXd& z) const;
  // mixture log density summed over the current feature rows
  double data_loglik() const;

 private:
  struct CompCache {
    Eigen::MatrixXd full_l;    // chol factor of Sigma
    double full_logdet = 0.0;
    Eigen::MatrixXd z_l;       // chol factor of Sigma_zz
    double z_logdet = 0.0;
    Eigen::VectorXd gain;      // Sigma_zz^-1 Sigma_zy
  };

  void refresh_comp(int b);
  void draw_comp_from_posterior(int b, const std::vector<int>& members,
                                RngStream& rng);
  double comp_logpdf(int b, const Eigen::VectorXd& w) const;
  double comp_logpdf_z(int b, const Eigen::VectorXd& z) const;

  int k_;
  int q_ = 0;
  Eigen::MatrixXd W_;
  OutcomeDpmParams p_;
  std::vector<CompCache> cache_;
  // NIW base measure
  Eigen::VectorXd base_mean_;
  Eigen::MatrixXd base_psi_;
  double base_kappa_ = 1.0;
  double base_nu_ = 0.0;
};

}  // namespace pcedtr
