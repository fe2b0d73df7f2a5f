#include "pcedtr/augmentation.hpp"

#include <cmath>

#include "pcedtr/data.hpp"
#include "pcedtr/errors.hpp"
#include "pcedtr/stats.hpp"

namespace pcedtr {

Augmenter::Augmenter(AugmentationConfig cfg,
                     std::array<MarginalModel*, 4> marginals,
                     CopulaModel* copula, std::array<OutcomeModel*, 6> outcomes,
                     std::vector<Subject> subjects)
    : cfg_(cfg),
      marg_(marginals),
      cop_(copula),
      out_(outcomes),
      subjects_(std::move(subjects)) {
  for (const auto& s : subjects_)
    for (int slot : s.latent)
      if (s.marg_row[static_cast<std::size_t>(slot)] < 0)
        throw ValidationError("augmenter: latent slot without a marginal row");
}

double Augmenter::propose_missing(double current, double sd, RngStream& rng) {
  TruncNormal tn{current, sd * sd, 0.0, 1.0};
  return tn.sample(rng);
}

double Augmenter::tn_rw_log_q(double to, double from, double sd) {
  TruncNormal tn{from, sd * sd, 0.0, 1.0};
  return tn.logpdf(to);
}

double Augmenter::outcome_term(const Subject& s,
                               const Eigen::Vector4d& hrow) const {
  // conditional density of y given (scores, x0): the score marginal itself
  // belongs to the compliance side of the target, not here
  const OutcomeModel* om = out_[static_cast<std::size_t>(s.seq - 1)];
  if (!om) return 0.0;
  const auto& act = active_slots(s.seq);
  const int ns = static_cast<int>(act.size());
  Eigen::VectorXd z(ns + s.x0.size());
  for (int a = 0; a < ns; ++a) z[a] = hrow[act[static_cast<std::size_t>(a)]];
  z.tail(s.x0.size()) = s.x0;
  return om->conditional_logpdf_y(s.y, z);
}

double Augmenter::slot_log_ratio(int subject, int slot, double cand) const {
  const auto& s = subjects_[static_cast<std::size_t>(subject)];
  MarginalModel* mm = marg_[static_cast<std::size_t>(slot)];
  const int row = s.marg_row[static_cast<std::size_t>(slot)];
  const double cur = mm->values()[row];
  const double sd = cfg_.proposal_sd[static_cast<std::size_t>(slot)];

  const Eigen::Vector4d h_cur = cop_->H().row(subject);
  Eigen::Vector4d h_cand = h_cur;
  h_cand[slot] = mm->h_row(row, cand);

  double lr = mm->log_density_row(row, cand) - mm->log_mix_pdf_row(row);
  lr += cop_->subject_loglik_with(subject, h_cand) -
        cop_->subject_loglik_with(subject, h_cur);
  if (cfg_.target == AugTarget::copula_times_outcome)
    lr += outcome_term(s, h_cand) - outcome_term(s, h_cur);
  lr += tn_rw_log_q(cur, cand, sd) - tn_rw_log_q(cand, cur, sd);
  return lr;
}

bool Augmenter::update_slot(int subject, int slot, RngStream& rng) {
  const auto& s = subjects_[static_cast<std::size_t>(subject)];
  MarginalModel* mm = marg_[static_cast<std::size_t>(slot)];
  const int row = s.marg_row[static_cast<std::size_t>(slot)];
  const double sd = cfg_.proposal_sd[static_cast<std::size_t>(slot)];
  const double cand = propose_missing(mm->values()[row], sd, rng);
  const double lr = slot_log_ratio(subject, slot, cand);
  const bool ok = std::log(rng.uniform()) < lr;
  if (ok) {
    mm->set_value(row, cand);
    cop_->H()(subject, slot) = mm->score_row(row);
  }
  return ok;
}

void Augmenter::sweep(RngStream& rng, MhCounters& acc) {
  for (std::size_t i = 0; i < subjects_.size(); ++i)
    for (int slot : subjects_[i].latent)
      acc.tally(update_slot(static_cast<int>(i), slot, rng));
}

}  // namespace pcedtr
