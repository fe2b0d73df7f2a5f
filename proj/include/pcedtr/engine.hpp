#pragma once

#include <Eigen/Dense>
#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pcedtr/augmentation.hpp"
#include "pcedtr/copula.hpp"
#include "pcedtr/data.hpp"
#include "pcedtr/marginals.hpp"
#include "pcedtr/outcome.hpp"
#include "pcedtr/response.hpp"
#include "pcedtr/simgen.hpp"

namespace pcedtr {

struct ChainConfig {
  int iters = 10000;
  int burn_in = 1000;
  int thin = 5;
  std::uint64_t seed = 1;
  int B = 8;     // marginal DPM truncation
  int B_y = 15;  // outcome DPM truncation
  int B_s = 10;  // response DPM truncation
  AugTarget aug_target = AugTarget::copula_times_outcome;
  MarginalProposals marg_prop;
  int resp_inner = 2;     // response sweeps per retained draw
  int resp_warmup = 200;  // warm-up sweeps before pairing starts

  int retained() const { return (iters - burn_in) / thin; }
  void check() const;
};

// One retained posterior state; everything PCE evaluation needs.
struct ChainDraw {
  int iteration = 0;
  std::array<MarginalDpmParams, 4> marginals;
  Eigen::Matrix4d R;
  Eigen::MatrixXd H;  // n x 4 scores
  Eigen::MatrixXd d;  // n x 4 compliance values (observed + imputed)
  std::array<std::optional<OutcomeDpmParams>, 6> outcomes;
};

struct TraceRow {
  int iter = 0;
  std::string block;
  double value = 0.0;
  double accept = 1.0;
};

struct DataSummary {
  int n = 0, m1 = 0, m2 = 0;
  Eigen::VectorXd x0bar, x1bar;
  std::array<int, 6> seq_counts{};
  std::vector<int> seq;
  Eigen::MatrixXd x0rows;  // n x m1
  Eigen::VectorXd y;
};

struct FitResult {
  ChainConfig cfg;
  DataSummary summary;
  std::vector<ChainDraw> draws;
  // response-model draws paired with the retained draws; [0]=arm +1, [1]=arm -1
  std::vector<std::array<ResponseDpmParams, 2>> response;
  std::vector<TraceRow> trace;
  std::map<std::string, double> acceptance;
};

// A compliance stratum: slot values for D1..D4 (only the slots an EDTR needs
// must be set) and an optional explicit x0 profile (absent = average the PCE
// over the dataset's empirical x0).
struct Stratum {
  std::array<std::optional<double>, 4> d;
  std::optional<Eigen::VectorXd> x0;
};

Stratum level_stratum(double level);

DataSummary summarize(const Dataset& ds);

// Steps 1-5, retention, diagnostics. Throws NumericError with the iteration
// and block on numeric failure.
FitResult run_chain(const ChainConfig& cfg, const Dataset& ds);

// paired response fit (fills fit.response); called by run_chain
void fit_response_paired(FitResult& fit, const Dataset& ds);

// --- evaluation of retained draws ---

// mixture cdf / clamped score of a marginal parameter state
double marginal_mixture_cdf(const MarginalDpmParams& p, double dv,
                            const Eigen::VectorXd& covs);
double marginal_score(const MarginalDpmParams& p, double dv,
                      const Eigen::VectorXd& covs);

// lightweight conditional-mean evaluator for a draw's outcome params
class OutcomeEvaluator {
 public:
  explicit OutcomeEvaluator(const OutcomeDpmParams& p);
  double conditional_mean_y(const Eigen::VectorXd& z) const {
    return model_.conditional_mean_y(z);
  }
  Eigen::VectorXd local_weights(const Eigen::VectorXd& z) const {
    return model_.local_weights(z);
  }

 private:
  OutcomeModel model_;
};

// G-computation at a stratum with an explicit x0
double pce(int l, const Stratum& stratum, const ChainDraw& draw,
           const std::array<ResponseDpmParams, 2>& resp,
           const DataSummary& summary, const Eigen::VectorXd& x0);

// posterior samples of the EDTR mean at a stratum; averages over the
// dataset's x0 when the stratum has no explicit profile
Eigen::VectorXd edtr_posterior(const FitResult& fit, int l,
                               const Stratum& stratum);

// posterior samples of the sequence-k conditional outcome mean averaged over
// the sequence's own subjects at their imputed scores
Eigen::VectorXd seq_mean_samples(const FitResult& fit, int k);

struct McbResult {
  std::vector<bool> in_best;
  Eigen::VectorXd delta_mean, lo, hi;  // per regime: Y_l - max_{l' != l} Y_l'
};

// multiple comparisons with the best on an L x M sample matrix; direction
// maximize=false negates internally so "best" is always the maximum
McbResult mcb_best_set(const Eigen::MatrixXd& samples, double level = 0.95,
                       bool maximize = true);

// chains too short for simultaneous intervals (M < 100) fall back to the
// point ordering with degenerate intervals
McbResult point_or_mcb(const Eigen::MatrixXd& samples, double level = 0.95,
                       bool maximize = true);

// binary draws-file round trip (format documented in the README)
void save_fit(const FitResult& fit, const std::string& path,
              const std::string& config_hash);
FitResult load_fit(const std::string& path);

}  // namespace pcedtr
