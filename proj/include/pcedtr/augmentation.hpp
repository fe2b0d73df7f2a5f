#pragma once

#include <Eigen/Dense>
#include <array>
#include <vector>

#include "pcedtr/copula.hpp"
#include "pcedtr/marginals.hpp"
#include "pcedtr/outcome.hpp"
#include "pcedtr/rng.hpp"

namespace pcedtr {

enum class AugTarget { copula_only, copula_times_outcome };

struct AugmentationConfig {
  AugTarget target = AugTarget::copula_times_outcome;
  std::array<double, 4> proposal_sd{0.2, 0.2, 0.2, 0.2};  // s_{D_j}
};

// Metropolis imputation of the latent potential compliances: truncated-normal
// random walk on [0,1], targeting the subject's compliance model (marginal
// terms x copula) times, in the default mode, its outcome-model density.
class Augmenter {
 public:
  struct Subject {
    int seq = 1;                 // sequence 1..6
    double y = 0.0;
    Eigen::VectorXd x0;
    std::vector<int> latent;     // latent slot indices 0..3
    std::array<int, 4> marg_row{-1, -1, -1, -1};  // row in each marginal
  };

  Augmenter(AugmentationConfig cfg, std::array<MarginalModel*, 4> marginals,
            CopulaModel* copula, std::array<OutcomeModel*, 6> outcomes,
            std::vector<Subject> subjects);

  const AugmentationConfig& config() const { return cfg_; }

  // truncated-normal random-walk proposal (the spec's propose_missing op)
  static double propose_missing(double current, double sd, RngStream& rng);
  // log density of proposing `to` from a walk centered at `from`
  static double tn_rw_log_q(double to, double from, double sd);

  // log MH ratio for setting subject's slot to cand (target + q correction)
  double slot_log_ratio(int subject, int slot, double cand) const;

  // one Metropolis update of a single latent slot; returns accepted
  bool update_slot(int subject, int slot, RngStream& rng);

  // full sweep over subjects and their latent slots in index order
  void sweep(RngStream& rng, MhCounters& acc);

 private:
  double outcome_term(const Subject& s, const Eigen::Vector4d& hrow) const;

  AugmentationConfig cfg_;
  std::array<MarginalModel*, 4> marg_;
  CopulaModel* cop_;
  std::array<OutcomeModel*, 6> out_;
  std::vector<Subject> subjects_;
};

}  // namespace pcedtr
