#pragma once

#include <Eigen/Dense>
#include <vector>

#include "pcedtr/rng.hpp"
#include "pcedtr/stats.hpp"

namespace pcedtr {

// Arm-specific DPM of logistic kernels for P(S=1 | A1, D1, D2, X0).
struct ResponseDpmParams {
  int arm = 1;                 // +1 or -1
  StickWeights sticks;         // length B_s
  double conc = 1.0;
  Eigen::MatrixXd atoms;       // B_s x (3 + m1): alpha, beta1, beta2, gamma
  std::vector<int> labels;

  int truncation() const { return static_cast<int>(atoms.rows()); }
};

double response_prob(const ResponseDpmParams& p, double d1, double d2,
                     const Eigen::VectorXd& x0);

class ResponseModel {
 public:
  // x0: one row per subject in this arm; s: responder indicators.
  ResponseModel(int arm, Eigen::MatrixXd x0, std::vector<int> s, int B_s);

  int rows() const { return static_cast<int>(s_.size()); }
  const ResponseDpmParams& params() const { return p_; }
  void set_params(const ResponseDpmParams& p) { p_ = p; }

  // plug in the current (observed + imputed) compliances for this arm
  void set_compliances(Eigen::VectorXd d1, Eigen::VectorXd d2);

  void sweep(RngStream& rng, MhCounters& acc);

  double prob(double d1, double d2, const Eigen::VectorXd& x0) const {
    return response_prob(p_, d1, d2, x0);
  }

 private:
  double cluster_loglik(int j, const Eigen::VectorXd& coef) const;
  double atom_log_prior(const Eigen::VectorXd& coef) const;

  ResponseDpmParams p_;
  Eigen::MatrixXd x0_;
  std::vector<int> s_;
  Eigen::VectorXd d1_, d2_;
  double prop_var_ = 0.1;
};

// Posterior chain on one fixed imputed dataset (warm-up discarded).
std::vector<ResponseDpmParams> fit_response(int arm, const Eigen::MatrixXd& x0,
                                            const std::vector<int>& s,
                                            const Eigen::VectorXd& d1,
                                            const Eigen::VectorXd& d2, int B_s,
                                            RngStream& rng, int iters,
                                            int warmup = 200);

}  // namespace pcedtr
