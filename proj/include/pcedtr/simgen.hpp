#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "pcedtr/data.hpp"
#include "pcedtr/rng.hpp"
#include "pcedtr/stats.hpp"

namespace pcedtr {

// Generative scenarios: 1 linear/Gaussian errors, 2 linear/bimodal beta
// errors, 3 non-linear with a time-varying covariate. t_copula swaps the
// Gaussian copula for a t(nu) copula (the sensitivity variant).
struct ScenarioSpec {
  int id = 1;  // 1, 2 or 3
  bool t_copula = false;
  double nu = 3.0;
  int n = 250;
  std::uint64_t seed = 1;
  bool use_d2_in_minus_arm = false;  // substitute D2 in the A1=-1 response law

  int m1() const { return id == 3 ? 2 : 3; }
  int m2() const { return id == 3 ? 1 : 0; }
};

struct TruthTable {
  Eigen::MatrixXd d;       // n x 4 potential compliances (D4=D3 in scn 1-2)
  Eigen::MatrixXd y;       // n x 6 potential outcomes
  Eigen::MatrixXd scores;  // n x 4 latent copula scores
  Eigen::VectorXd x11;     // n, scenario 3 only (else empty)
  std::vector<int> seq;    // realized sequence per subject
};

struct SimResult {
  Dataset data;
  TruthTable truth;
};

SimResult gen_scenario(const ScenarioSpec& spec);

void write_truth_csv(const TruthTable& truth, const std::string& path,
                     const std::string& header_comment = "");

// joint compliance draw: scores from N(0,R) (or multivariate t(nu)), mapped
// through the matching cdf and the truncated-normal marginal quantiles
Eigen::VectorXd sample_copula(const std::vector<TruncNormal>& margs,
                              const Eigen::MatrixXd& chol_R, RngStream& rng,
                              Eigen::VectorXd* scores_out = nullptr);
Eigen::VectorXd sample_t_copula(const std::vector<TruncNormal>& margs,
                                const Eigen::MatrixXd& chol_R, double nu,
                                RngStream& rng,
                                Eigen::VectorXd* scores_out = nullptr);

double student_t_cdf(double t, double nu);
double reg_inc_beta(double a, double b, double x);

// EDTR l -> (responder sequence, non-responder sequence)
std::pair<int, int> edtr_sequences(int l);
int edtr_arm(int l);  // Stage-1 treatment of EDTR l

// --- ground-truth functionals of the generative law ---

// E[Y_k | D_active = d, X0 = x0]; deterministic (scenario-3 sequences with a
// time-varying term integrate X11 out by quadrature)
double true_seq_mean(const ScenarioSpec& spec, int k, const Eigen::Vector4d& d,
                     const Eigen::VectorXd& x0);
double true_response_prob(const ScenarioSpec& spec, int arm, double d1,
                          double d2, const Eigen::VectorXd& x0);
// PCE at a single compliance level applied to every relevant slot
double true_pce(const ScenarioSpec& spec, int l, double level,
                const Eigen::VectorXd& x0);
// deterministic part of the outcome equation (no eps, explicit x11)
double seq_mean_det(const ScenarioSpec& spec, int k, const Eigen::Vector4d& d,
                    const Eigen::VectorXd& x0, double x11);

struct OracleResult {
  double value = 0.0;
  double se = 0.0;
};

// brute-force Monte Carlo version of true_pce (importance sampling over X11
// where needed, fresh outcome noise per draw)
OracleResult true_pce_oracle(const ScenarioSpec& spec, int l, double level,
                             const Eigen::VectorXd& x0, int mc_size,
                             std::uint64_t seed);

Eigen::VectorXd population_x0(const ScenarioSpec& spec);

}  // namespace pcedtr
