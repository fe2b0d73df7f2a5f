#include "pcedtr/engine.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <memory>

#include "pcedtr/errors.hpp"
#include "pcedtr/kernels.hpp"

namespace pcedtr {

void ChainConfig::check() const {
  if (iters <= burn_in) throw ValidationError("chain: iters must exceed burn_in");
  if (thin < 1) throw ValidationError("chain: thin must be >= 1");
  if (B < 1 || B_y < 1 || B_s < 1)
    throw ValidationError("chain: truncations must be >= 1");
}

Stratum level_stratum(double level) {
  Stratum s;
  for (auto& v : s.d) v = level;
  return s;
}

DataSummary summarize(const Dataset& ds) {
  validate(ds);
  DataSummary s;
  s.n = ds.n();
  s.m1 = ds.m1;
  s.m2 = ds.m2;
  s.seq.resize(static_cast<std::size_t>(s.n));
  s.x0rows.resize(s.n, s.m1);
  s.y.resize(s.n);
  s.x0bar = Eigen::VectorXd::Zero(s.m1);
  s.x1bar = Eigen::VectorXd::Zero(s.m2);
  int n_x1 = 0;
  for (int i = 0; i < s.n; ++i) {
    const auto& t = ds.trajectories[static_cast<std::size_t>(i)];
    const int k = classify_sequence(t);
    s.seq[static_cast<std::size_t>(i)] = k;
    ++s.seq_counts[static_cast<std::size_t>(k - 1)];
    s.x0rows.row(i) = t.x0.transpose();
    s.y[i] = t.y;
    s.x0bar += t.x0;
    if (t.x1 && t.x1->size() == s.m2 && s.m2 > 0) {
      s.x1bar += *t.x1;
      ++n_x1;
    }
  }
  s.x0bar /= s.n;
  if (n_x1 > 0) s.x1bar /= n_x1;
  return s;
}

namespace {

struct MarginalSlice {
  std::vector<int> subjects;    // dataset indices, in dataset order
  std::vector<int> row_of;      // subject -> local row or -1
  Eigen::MatrixXd X;
  Eigen::VectorXd d_init;
  std::vector<bool> observed;   // per local row
  double mu_star = 0.5;
  double obs_sd = 0.2;
};

// assemble the data slice for marginal j (1..4)
MarginalSlice make_slice(int j, const Dataset& ds, const DataSummary& sum) {
  MarginalSlice sl;
  const int n = ds.n();
  sl.row_of.assign(static_cast<std::size_t>(n), -1);
  for (int i = 0; i < n; ++i) {
    const int k = sum.seq[static_cast<std::size_t>(i)];
    const auto st = slot_states(k)[static_cast<std::size_t>(j - 1)];
    if (st == SlotState::inert) continue;
    sl.row_of[static_cast<std::size_t>(i)] = static_cast<int>(sl.subjects.size());
    sl.subjects.push_back(i);
  }
  const int m = static_cast<int>(sl.subjects.size());
  if (m == 0) return sl;
  const int p = j <= 2 ? sum.m1 : sum.m1 + 1 + sum.m2;
  sl.X.resize(m, p);
  sl.d_init.resize(m);
  sl.observed.resize(static_cast<std::size_t>(m));
  double obs_sum = 0.0, obs_sum2 = 0.0;
  int obs_n = 0;
  for (int r = 0; r < m; ++r) {
    const int i = sl.subjects[static_cast<std::size_t>(r)];
    const auto& t = ds.trajectories[static_cast<std::size_t>(i)];
    const int k = sum.seq[static_cast<std::size_t>(i)];
    sl.X.row(r).head(sum.m1) = t.x0.transpose();
    if (j >= 3) {
      sl.X(r, sum.m1) = t.d_obs1;  // parent Stage-1 compliance, observed here
      if (sum.m2 > 0) sl.X.row(r).tail(sum.m2) = t.x1->transpose();
    }
    const auto st = slot_states(k)[static_cast<std::size_t>(j - 1)];
    const bool obs = st == SlotState::observed;
    sl.observed[static_cast<std::size_t>(r)] = obs;
    if (obs) {
      double dv = 0.0;
      switch (j) {
        case 1:
        case 2: dv = t.d_obs1; break;
        case 3:
        case 4: dv = *t.d_obs2; break;
      }
      sl.d_init[r] = dv;
      obs_sum += dv;
      obs_sum2 += dv * dv;
      ++obs_n;
    }
  }
  if (obs_n > 0) {
    sl.mu_star = obs_sum / obs_n;
    if (obs_n > 1) {
      const double var =
          (obs_sum2 - obs_n * sl.mu_star * sl.mu_star) / (obs_n - 1);
      sl.obs_sd = std::sqrt(std::max(var, 1e-6));
    }
  }
  for (int r = 0; r < m; ++r)
    if (!sl.observed[static_cast<std::size_t>(r)]) sl.d_init[r] = sl.mu_star;
  return sl;
}

Eigen::MatrixXd build_outcome_features(int k, const std::vector<int>& members,
                                       const DataSummary& sum,
                                       const Eigen::MatrixXd& H) {
  const auto& act = active_slots(k);
  const int q = 1 + static_cast<int>(act.size()) + sum.m1;
  Eigen::MatrixXd W(static_cast<int>(members.size()), q);
  for (std::size_t r = 0; r < members.size(); ++r) {
    const int i = members[r];
    W(static_cast<int>(r), 0) = sum.y[i];
    for (std::size_t a = 0; a < act.size(); ++a)
      W(static_cast<int>(r), 1 + static_cast<int>(a)) = H(i, act[a]);
    W.row(static_cast<int>(r)).tail(sum.m1) = sum.x0rows.row(i);
  }
  return W;
}

}  // namespace

FitResult run_chain(const ChainConfig& cfg, const Dataset& ds) {
  cfg.check();
  FitResult fit;
  fit.cfg = cfg;
  fit.summary = summarize(ds);
  const DataSummary& sum = fit.summary;
  const int n = sum.n;

  RngStream rng(cfg.seed, 1);

  // marginal models over their slices
  std::array<MarginalSlice, 4> slices;
  std::array<std::unique_ptr<MarginalModel>, 4> marg;
  for (int j = 1; j <= 4; ++j) {
    slices[static_cast<std::size_t>(j - 1)] = make_slice(j, ds, sum);
    auto& sl = slices[static_cast<std::size_t>(j - 1)];
    if (!sl.subjects.empty())
      marg[static_cast<std::size_t>(j - 1)] = std::make_unique<MarginalModel>(
          j, sl.X, sl.d_init, cfg.B, rng, sl.mu_star, cfg.marg_prop);
  }

  CopulaModel copula(sum.seq);
  for (int j = 0; j < 4; ++j) {
    if (!marg[static_cast<std::size_t>(j)]) continue;
    const auto& sl = slices[static_cast<std::size_t>(j)];
    for (std::size_t r = 0; r < sl.subjects.size(); ++r)
      copula.H()(sl.subjects[r], j) =
          marg[static_cast<std::size_t>(j)]->scores()[static_cast<int>(r)];
  }
  copula.refresh_scatter();

  // outcome models per occupied sequence
  std::array<std::vector<int>, 6> members;
  for (int i = 0; i < n; ++i)
    members[static_cast<std::size_t>(sum.seq[static_cast<std::size_t>(i)] - 1)]
        .push_back(i);
  std::array<std::unique_ptr<OutcomeModel>, 6> outcome;
  for (int k = 1; k <= 6; ++k) {
    const auto& mem = members[static_cast<std::size_t>(k - 1)];
    if (mem.empty()) continue;
    outcome[static_cast<std::size_t>(k - 1)] = std::make_unique<OutcomeModel>(
        k, build_outcome_features(k, mem, sum, copula.H()), cfg.B_y, rng);
  }

  // augmenter
  AugmentationConfig acfg;
  acfg.target = cfg.aug_target;
  for (int j = 0; j < 4; ++j)
    acfg.proposal_sd[static_cast<std::size_t>(j)] =
        slices[static_cast<std::size_t>(j)].obs_sd;
  std::vector<Augmenter::Subject> asub(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    auto& s = asub[static_cast<std::size_t>(i)];
    s.seq = sum.seq[static_cast<std::size_t>(i)];
    s.y = sum.y[i];
    s.x0 = sum.x0rows.row(i);
    s.latent = latent_slots(s.seq);
    for (int j = 0; j < 4; ++j)
      s.marg_row[static_cast<std::size_t>(j)] =
          slices[static_cast<std::size_t>(j)].row_of[static_cast<std::size_t>(i)];
    // drop latent slots whose marginal has no model (degenerate datasets)
    std::erase_if(s.latent, [&](int slot) {
      return !marg[static_cast<std::size_t>(slot)];
    });
  }
  std::array<MarginalModel*, 4> mptr{};
  std::array<OutcomeModel*, 6> optr{};
  for (int j = 0; j < 4; ++j) mptr[static_cast<std::size_t>(j)] =
      marg[static_cast<std::size_t>(j)].get();
  for (int k = 0; k < 6; ++k) optr[static_cast<std::size_t>(k)] =
      outcome[static_cast<std::size_t>(k)].get();
  Augmenter aug(acfg, mptr, &copula, optr, asub);

  std::array<MhCounters, 4> cnt_m;
  MhCounters cnt_r, cnt_a;

  const int retained = cfg.retained();
  fit.draws.reserve(static_cast<std::size_t>(retained));

  for (int t = 1; t <= cfg.iters; ++t) {
    const std::string where = "iteration " + std::to_string(t);
    try {
      // Steps 1-2: compliance marginals
      for (int j = 0; j < 4; ++j) {
        auto* m = marg[static_cast<std::size_t>(j)].get();
        if (!m) continue;
        const auto& sl = slices[static_cast<std::size_t>(j)];
        const CopulaCoupling cpl = copula.coupling(j + 1, sl.subjects);
        m->sweep_clusters(rng);
        m->sweep_atoms(rng, cpl, cnt_m[static_cast<std::size_t>(j)]);
        for (std::size_t r = 0; r < sl.subjects.size(); ++r)
          copula.H()(sl.subjects[r], j) = m->scores()[static_cast<int>(r)];
      }
      // Step 3: copula correlation matrix
      copula.refresh_scatter();
      copula.sweep_R(rng, cnt_r);
      // Step 4: latent-compliance augmentation
      aug.sweep(rng, cnt_a);
      // Step 5: outcome models
      for (int k = 1; k <= 6; ++k) {
        auto* om = outcome[static_cast<std::size_t>(k - 1)].get();
        if (!om) continue;
        om->set_data(build_outcome_features(
            k, members[static_cast<std::size_t>(k - 1)], sum, copula.H()));
        om->sweep(rng);
      }
    } catch (const std::exception& e) {
      throw NumericError(where + ": " + e.what());
    }

    // traces
    for (int j = 0; j < 4; ++j) {
      if (!marg[static_cast<std::size_t>(j)]) continue;
      fit.trace.push_back(TraceRow{t, "m" + std::to_string(j + 1),
                                   marg[static_cast<std::size_t>(j)]->mixture_loglik(),
                                   cnt_m[static_cast<std::size_t>(j)].rate()});
    }
    copula.refresh_scatter();
    fit.trace.push_back(TraceRow{t, "R", copula.loglik(), cnt_r.rate()});
    double lat_mean = 0.0;
    int lat_n = 0;
    for (int j = 0; j < 4; ++j) {
      const auto* m = marg[static_cast<std::size_t>(j)].get();
      if (!m) continue;
      const auto& sl = slices[static_cast<std::size_t>(j)];
      for (int r = 0; r < m->rows(); ++r)
        if (!sl.observed[static_cast<std::size_t>(r)]) {
          lat_mean += m->values()[r];
          ++lat_n;
        }
    }
    fit.trace.push_back(
        TraceRow{t, "aug", lat_n ? lat_mean / lat_n : 0.0, cnt_a.rate()});
    for (int k = 1; k <= 6; ++k) {
      const auto* om = outcome[static_cast<std::size_t>(k - 1)].get();
      if (!om) continue;
      fit.trace.push_back(
          TraceRow{t, "y" + std::to_string(k), om->data_loglik(), 1.0});
    }

    // retention
    if (t > cfg.burn_in && (t - cfg.burn_in) % cfg.thin == 0) {
      ChainDraw dr;
      dr.iteration = t;
      for (int j = 0; j < 4; ++j)
        if (marg[static_cast<std::size_t>(j)])
          dr.marginals[static_cast<std::size_t>(j)] =
              marg[static_cast<std::size_t>(j)]->params();
      dr.R = copula.R();
      dr.H = copula.H();
      dr.d.resize(n, 4);
      dr.d.setConstant(std::numeric_limits<double>::quiet_NaN());
      for (int j = 0; j < 4; ++j) {
        const auto* m = marg[static_cast<std::size_t>(j)].get();
        if (!m) continue;
        const auto& sl = slices[static_cast<std::size_t>(j)];
        for (std::size_t r = 0; r < sl.subjects.size(); ++r)
          dr.d(sl.subjects[r], j) = m->values()[static_cast<int>(r)];
      }
      for (int k = 0; k < 6; ++k)
        if (outcome[static_cast<std::size_t>(k)])
          dr.outcomes[static_cast<std::size_t>(k)] =
              outcome[static_cast<std::size_t>(k)]->params();
      fit.draws.push_back(std::move(dr));
    }
  }

  fit.acceptance["m1"] = cnt_m[0].rate();
  fit.acceptance["m2"] = cnt_m[1].rate();
  fit.acceptance["m3"] = cnt_m[2].rate();
  fit.acceptance["m4"] = cnt_m[3].rate();
  fit.acceptance["R"] = cnt_r.rate();
  fit.acceptance["aug"] = cnt_a.rate();

  fit_response_paired(fit, ds);
  return fit;
}

void fit_response_paired(FitResult& fit, const Dataset& ds) {
  const DataSummary& sum = fit.summary;
  fit.response.assign(fit.draws.size(), {});
  for (int arm_idx = 0; arm_idx < 2; ++arm_idx) {
    const int arm = arm_idx == 0 ? 1 : -1;
    std::vector<int> subj;
    for (int i = 0; i < sum.n; ++i) {
      const int k = sum.seq[static_cast<std::size_t>(i)];
      if ((arm == 1 && k <= 3) || (arm == -1 && k >= 4)) subj.push_back(i);
    }
    if (subj.empty() || fit.draws.empty()) continue;
    Eigen::MatrixXd x0(static_cast<int>(subj.size()), sum.m1);
    std::vector<int> s(subj.size());
    for (std::size_t r = 0; r < subj.size(); ++r) {
      x0.row(static_cast<int>(r)) = sum.x0rows.row(subj[r]);
      s[r] = sum.seq[static_cast<std::size_t>(subj[r])] == 1 ||
                     sum.seq[static_cast<std::size_t>(subj[r])] == 4
                 ? 1
                 : 0;
    }
    ResponseModel model(arm, x0, s, fit.cfg.B_s);
    RngStream rng(fit.cfg.seed, arm_idx == 0 ? 2 : 3);
    MhCounters acc;
    auto compliances_of = [&](const ChainDraw& dr) {
      Eigen::VectorXd d1(static_cast<int>(subj.size())),
          d2(static_cast<int>(subj.size()));
      for (std::size_t r = 0; r < subj.size(); ++r) {
        d1[static_cast<int>(r)] = dr.d(subj[r], 0);
        d2[static_cast<int>(r)] = dr.d(subj[r], 1);
      }
      return std::make_pair(d1, d2);
    };
    {
      const auto [d1, d2] = compliances_of(fit.draws.front());
      model.set_compliances(d1, d2);
      for (int w = 0; w < fit.cfg.resp_warmup; ++w) model.sweep(rng, acc);
    }
    for (std::size_t r = 0; r < fit.draws.size(); ++r) {
      const auto [d1, d2] = compliances_of(fit.draws[r]);
      model.set_compliances(d1, d2);
      for (int w = 0; w < fit.cfg.resp_inner; ++w) model.sweep(rng, acc);
      fit.response[r][static_cast<std::size_t>(arm_idx)] = model.params();
    }
  }
}

double marginal_mixture_cdf(const MarginalDpmParams& p, double dv,
                            const Eigen::VectorXd& covs) {
  if (p.truncation() == 0)
    throw NumericError("marginal params missing (empty slice)");
  if (covs.size() != p.coeffs.size())
    throw ValidationError("marginal cdf: wrong covariate arity");
  const double lin = p.coeffs.size() > 0 ? covs.dot(p.coeffs) : 0.0;
  const double dd = std::clamp(dv, 0.0, 1.0);
  double acc = 0.0;
  for (int b = 0; b < p.truncation(); ++b) {
    double cd;
    kern::scalar_ops().tn01_cdf(&dd, &lin, p.beta0[b], p.sigma2[b], &cd, 1);
    acc += p.sticks.w[b] * cd;
  }
  return std::clamp(acc, 0.0, 1.0);
}

double marginal_score(const MarginalDpmParams& p, double dv,
                      const Eigen::VectorXd& covs) {
  const double u = std::clamp(marginal_mixture_cdf(p, dv, covs),
                              MarginalModel::kHClampLo,
                              1.0 - MarginalModel::kHClampLo);
  return kern::ndtri1(u);
}

OutcomeEvaluator::OutcomeEvaluator(const OutcomeDpmParams& p) : model_(p) {}

namespace {

double pce_with_evals(int l, const Stratum& stratum, const ChainDraw& draw,
                      const OutcomeEvaluator& eval_resp,
                      const OutcomeEvaluator& eval_nonresp,
                      const std::array<ResponseDpmParams, 2>& resp,
                      const DataSummary& sum, const Eigen::VectorXd& x0) {
  const int arm = edtr_arm(l);
  const int slot2 = l <= 2 ? 2 : 3;
  if (!stratum.d[0] || !stratum.d[1] ||
      !stratum.d[static_cast<std::size_t>(slot2)])
    throw ValidationError("stratum missing a required compliance slot");
  const double d1 = *stratum.d[0];
  const double d2 = *stratum.d[1];
  const double dst2 = *stratum.d[static_cast<std::size_t>(slot2)];

  const double h1 = marginal_score(draw.marginals[0], d1, x0);
  const double h2 = marginal_score(draw.marginals[1], d2, x0);
  Eigen::VectorXd covs2(x0.size() + 1 + sum.x1bar.size());
  covs2.head(x0.size()) = x0;
  covs2[x0.size()] = slot2 == 2 ? d1 : d2;
  if (sum.x1bar.size() > 0) covs2.tail(sum.x1bar.size()) = sum.x1bar;
  const double h_st2 =
      marginal_score(draw.marginals[static_cast<std::size_t>(slot2)], dst2,
                     covs2);

  Eigen::VectorXd z_resp(2 + x0.size());
  z_resp << h1, h2, x0;
  Eigen::VectorXd z_non(3 + x0.size());
  z_non << h1, h2, h_st2, x0;

  const auto& rp = resp[arm == 1 ? 0 : 1];
  if (rp.truncation() == 0)
    throw NumericError("response params missing for this arm");
  const double p = response_prob(rp, d1, d2, x0);
  return p * eval_resp.conditional_mean_y(z_resp) +
         (1.0 - p) * eval_nonresp.conditional_mean_y(z_non);
}

}  // namespace

double pce(int l, const Stratum& stratum, const ChainDraw& draw,
           const std::array<ResponseDpmParams, 2>& resp,
           const DataSummary& summary, const Eigen::VectorXd& x0) {
  const auto [kr, kn] = edtr_sequences(l);
  if (!draw.outcomes[static_cast<std::size_t>(kr - 1)] ||
      !draw.outcomes[static_cast<std::size_t>(kn - 1)])
    throw NumericError("outcome params missing for EDTR " + std::to_string(l));
  const OutcomeEvaluator er(*draw.outcomes[static_cast<std::size_t>(kr - 1)]);
  const OutcomeEvaluator en(*draw.outcomes[static_cast<std::size_t>(kn - 1)]);
  return pce_with_evals(l, stratum, draw, er, en, resp, summary, x0);
}

Eigen::VectorXd edtr_posterior(const FitResult& fit, int l,
                               const Stratum& stratum) {
  if (fit.draws.empty()) throw ValidationError("edtr_posterior: empty chain");
  const auto [kr, kn] = edtr_sequences(l);
  Eigen::VectorXd out(static_cast<int>(fit.draws.size()));
  for (std::size_t r = 0; r < fit.draws.size(); ++r) {
    const auto& draw = fit.draws[r];
    if (!draw.outcomes[static_cast<std::size_t>(kr - 1)] ||
        !draw.outcomes[static_cast<std::size_t>(kn - 1)])
      throw NumericError("outcome params missing for EDTR " + std::to_string(l));
    const OutcomeEvaluator er(*draw.outcomes[static_cast<std::size_t>(kr - 1)]);
    const OutcomeEvaluator en(*draw.outcomes[static_cast<std::size_t>(kn - 1)]);
    double v;
    if (stratum.x0) {
      v = pce_with_evals(l, stratum, draw, er, en, fit.response[r],
                         fit.summary, *stratum.x0);
    } else {
      double acc = 0.0;
      for (int i = 0; i < fit.summary.n; ++i)
        acc += pce_with_evals(l, stratum, draw, er, en, fit.response[r],
                              fit.summary, fit.summary.x0rows.row(i));
      v = acc / fit.summary.n;
    }
    out[static_cast<int>(r)] = v;
  }
  return out;
}

Eigen::VectorXd seq_mean_samples(const FitResult& fit, int k) {
  if (fit.draws.empty()) throw ValidationError("seq_mean_samples: empty chain");
  const auto& act = active_slots(k);
  std::vector<int> mem;
  for (int i = 0; i < fit.summary.n; ++i)
    if (fit.summary.seq[static_cast<std::size_t>(i)] == k) mem.push_back(i);
  if (mem.empty())
    throw ValidationError("seq_mean_samples: no subjects in sequence " +
                          std::to_string(k));
  Eigen::VectorXd out(static_cast<int>(fit.draws.size()));
  Eigen::VectorXd z(static_cast<int>(act.size()) + fit.summary.m1);
  for (std::size_t r = 0; r < fit.draws.size(); ++r) {
    const auto& draw = fit.draws[r];
    if (!draw.outcomes[static_cast<std::size_t>(k - 1)])
      throw NumericError("outcome params missing for sequence " +
                         std::to_string(k));
    const OutcomeEvaluator ev(*draw.outcomes[static_cast<std::size_t>(k - 1)]);
    double acc = 0.0;
    for (int i : mem) {
      for (std::size_t a = 0; a < act.size(); ++a)
        z[static_cast<int>(a)] = draw.H(i, act[a]);
      z.tail(fit.summary.m1) = fit.summary.x0rows.row(i);
      acc += ev.conditional_mean_y(z);
    }
    out[static_cast<int>(r)] = acc / static_cast<double>(mem.size());
  }
  return out;
}

McbResult mcb_best_set(const Eigen::MatrixXd& samples, double level,
                       bool maximize) {
  const int L = static_cast<int>(samples.rows());
  const int M = static_cast<int>(samples.cols());
  if (L < 2) throw ValidationError("mcb: need at least two regimes");
  if (M < 100) throw ValidationError("mcb: need at least 100 posterior draws");
  if (!(level > 0.0 && level < 1.0))
    throw ValidationError("mcb: level must be in (0,1)");
  const Eigen::MatrixXd S = maximize ? samples : Eigen::MatrixXd(-samples);

  Eigen::MatrixXd delta(L, M);
  for (int m = 0; m < M; ++m) {
    // top two values give every Y_l - max_{l' != l} Y_l' in O(L)
    int arg = 0;
    for (int l = 1; l < L; ++l)
      if (S(l, m) > S(arg, m)) arg = l;
    double second = -std::numeric_limits<double>::infinity();
    for (int l = 0; l < L; ++l)
      if (l != arg) second = std::max(second, S(l, m));
    for (int l = 0; l < L; ++l)
      delta(l, m) = l == arg ? S(l, m) - second : S(l, m) - S(arg, m);
  }

  McbResult res;
  res.delta_mean.resize(L);
  res.lo.resize(L);
  res.hi.resize(L);
  Eigen::VectorXd sd(L);
  for (int l = 0; l < L; ++l) {
    res.delta_mean[l] = delta.row(l).mean();
    const double var =
        (delta.row(l).array() - res.delta_mean[l]).square().sum() /
        std::max(1, M - 1);
    sd[l] = std::max(std::sqrt(var), 1e-12);
  }
  // max-modulus studentized statistic over the regimes
  std::vector<double> tstat(static_cast<std::size_t>(M));
  for (int m = 0; m < M; ++m) {
    double t = 0.0;
    for (int l = 0; l < L; ++l)
      t = std::max(t, std::fabs(delta(l, m) - res.delta_mean[l]) / sd[l]);
    tstat[static_cast<std::size_t>(m)] = t;
  }
  std::sort(tstat.begin(), tstat.end());
  const int idx = std::min(
      M - 1, static_cast<int>(std::ceil(level * M)) - 1);
  const double tq = tstat[static_cast<std::size_t>(std::max(0, idx))];

  int best_point = 0;
  for (int l = 1; l < L; ++l)
    if (res.delta_mean[l] > res.delta_mean[best_point]) best_point = l;

  res.in_best.assign(static_cast<std::size_t>(L), false);
  for (int l = 0; l < L; ++l) {
    res.lo[l] = res.delta_mean[l] - tq * sd[l];
    res.hi[l] = res.delta_mean[l] + tq * sd[l];
    res.in_best[static_cast<std::size_t>(l)] =
        (res.lo[l] <= 0.0 && res.hi[l] >= 0.0) || l == best_point;
  }
  return res;
}

McbResult point_or_mcb(const Eigen::MatrixXd& samples, double level,
                       bool maximize) {
  if (samples.cols() >= 100) return mcb_best_set(samples, level, maximize);
  const int L = static_cast<int>(samples.rows());
  Eigen::VectorXd mean(L);
  for (int l = 0; l < L; ++l) {
    mean[l] = samples.row(l).mean();
    if (!maximize) mean[l] = -mean[l];
  }
  McbResult res;
  res.delta_mean.resize(L);
  res.lo.resize(L);
  res.hi.resize(L);
  res.in_best.assign(static_cast<std::size_t>(L), false);
  int best = 0;
  for (int l = 1; l < L; ++l)
    if (mean[l] > mean[best]) best = l;
  for (int l = 0; l < L; ++l) {
    double other = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < L; ++k)
      if (k != l) other = std::max(other, mean[k]);
    res.delta_mean[l] = mean[l] - other;
    res.lo[l] = res.hi[l] = res.delta_mean[l];
    res.in_best[static_cast<std::size_t>(l)] = l == best;
  }
  return res;
}

// ---------------- binary draws file ----------------

namespace {

struct BinWriter {
  std::ofstream f;
  explicit BinWriter(const std::string& path)
      : f(path, std::ios::binary) {
    if (!f) throw ValidationError("cannot open for writing: " + path);
  }
  void u32(std::uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); }
  void u64(std::uint64_t v) { f.write(reinterpret_cast<const char*>(&v), 8); }
  void i32(std::int32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); }
  void f64(double v) { f.write(reinterpret_cast<const char*>(&v), 8); }
  void str(const std::string& s) {
    u64(s.size());
    f.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void vec(const Eigen::VectorXd& v) {
    u64(static_cast<std::uint64_t>(v.size()));
    f.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * 8));
  }
  void mat(const Eigen::MatrixXd& m) {
    u64(static_cast<std::uint64_t>(m.rows()));
    u64(static_cast<std::uint64_t>(m.cols()));
    f.write(reinterpret_cast<const char*>(m.data()),
            static_cast<std::streamsize>(m.size() * 8));
  }
  void ivec(const std::vector<int>& v) {
    u64(v.size());
    f.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * 4));
  }
};

struct BinReader {
  std::ifstream f;
  explicit BinReader(const std::string& path)
      : f(path, std::ios::binary) {
    if (!f) throw ValidationError("cannot open for reading: " + path);
  }
  std::uint32_t u32() {
    std::uint32_t v;
    f.read(reinterpret_cast<char*>(&v), 4);
    check();
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    f.read(reinterpret_cast<char*>(&v), 8);
    check();
    return v;
  }
  std::int32_t i32() {
    std::int32_t v;
    f.read(reinterpret_cast<char*>(&v), 4);
    check();
    return v;
  }
  double f64() {
    double v;
    f.read(reinterpret_cast<char*>(&v), 8);
    check();
    return v;
  }
  std::string str() {
    const auto len = u64();
    std::string s(len, '\0');
    f.read(s.data(), static_cast<std::streamsize>(len));
    check();
    return s;
  }
  Eigen::VectorXd vec() {
    const auto len = u64();
    Eigen::VectorXd v(static_cast<int>(len));
    f.read(reinterpret_cast<char*>(v.data()),
           static_cast<std::streamsize>(len * 8));
    check();
    return v;
  }
  Eigen::MatrixXd mat() {
    const auto r = u64();
    const auto c = u64();
    Eigen::MatrixXd m(static_cast<int>(r), static_cast<int>(c));
    f.read(reinterpret_cast<char*>(m.data()),
           static_cast<std::streamsize>(r * c * 8));
    check();
    return m;
  }
  std::vector<int> ivec() {
    const auto len = u64();
    std::vector<int> v(len);
    f.read(reinterpret_cast<char*>(v.data()),
           static_cast<std::streamsize>(len * 4));
    check();
    return v;
  }
  void check() {
    if (!f) throw ValidationError("draws file truncated or unreadable");
  }
};

void put_sticks(BinWriter& w, const StickWeights& s) {
  w.vec(s.v);
  w.vec(s.w);
}

StickWeights get_sticks(BinReader& r) {
  StickWeights s;
  s.v = r.vec();
  s.w = r.vec();
  return s;
}

void put_marginal(BinWriter& w, const MarginalDpmParams& p) {
  w.i32(p.j);
  put_sticks(w, p.sticks);
  w.vec(p.beta0);
  w.vec(p.sigma2);
  w.vec(p.coeffs);
  w.f64(p.conc);
  w.f64(p.base_mu);
  w.f64(p.base_s);
  w.f64(p.base_astar);
  w.ivec(p.labels);
}

MarginalDpmParams get_marginal(BinReader& r) {
  MarginalDpmParams p;
  p.j = r.i32();
  p.sticks = get_sticks(r);
  p.beta0 = r.vec();
  p.sigma2 = r.vec();
  p.coeffs = r.vec();
  p.conc = r.f64();
  p.base_mu = r.f64();
  p.base_s = r.f64();
  p.base_astar = r.f64();
  p.labels = r.ivec();
  return p;
}

void put_response(BinWriter& w, const ResponseDpmParams& p) {
  w.i32(p.arm);
  put_sticks(w, p.sticks);
  w.f64(p.conc);
  w.mat(p.atoms);
  w.ivec(p.labels);
}

ResponseDpmParams get_response(BinReader& r) {
  ResponseDpmParams p;
  p.arm = r.i32();
  p.sticks = get_sticks(r);
  p.conc = r.f64();
  p.atoms = r.mat();
  p.labels = r.ivec();
  return p;
}

constexpr std::uint32_t kDrawsMagic = 0x50434446;  // "PCDF"
constexpr std::uint32_t kDrawsVersion = 1;

}  // namespace

void save_fit(const FitResult& fit, const std::string& path,
              const std::string& config_hash) {
  BinWriter w(path);
  w.u32(kDrawsMagic);
  w.u32(kDrawsVersion);
  w.str(config_hash);
  // config
  w.i32(fit.cfg.iters);
  w.i32(fit.cfg.burn_in);
  w.i32(fit.cfg.thin);
  w.u64(fit.cfg.seed);
  w.i32(fit.cfg.B);
  w.i32(fit.cfg.B_y);
  w.i32(fit.cfg.B_s);
  w.i32(fit.cfg.aug_target == AugTarget::copula_times_outcome ? 1 : 0);
  // summary
  w.i32(fit.summary.n);
  w.i32(fit.summary.m1);
  w.i32(fit.summary.m2);
  w.vec(fit.summary.x0bar);
  w.vec(fit.summary.x1bar);
  w.ivec(fit.summary.seq);
  w.mat(fit.summary.x0rows);
  w.vec(fit.summary.y);
  // draws
  w.u64(fit.draws.size());
  for (const auto& dr : fit.draws) {
    w.i32(dr.iteration);
    for (const auto& mp : dr.marginals) put_marginal(w, mp);
    Eigen::MatrixXd rmat = dr.R;
    w.mat(rmat);
    w.mat(dr.H);
    w.mat(dr.d);
    for (const auto& op : dr.outcomes) {
      w.i32(op ? 1 : 0);
      if (!op) continue;
      w.i32(op->k);
      put_sticks(w, op->sticks);
      w.f64(op->alpha);
      w.u64(op->comps.size());
      for (const auto& c : op->comps) {
        w.vec(c.mean);
        w.mat(c.cov);
      }
      w.ivec(op->labels);
    }
  }
  // response draws
  w.u64(fit.response.size());
  for (const auto& pr : fit.response) {
    put_response(w, pr[0]);
    put_response(w, pr[1]);
  }
  // acceptance
  w.u64(fit.acceptance.size());
  for (const auto& [k, v] : fit.acceptance) {
    w.str(k);
    w.f64(v);
  }
}

FitResult load_fit(const std::string& path) {
  BinReader r(path);
  if (r.u32() != kDrawsMagic) throw ValidationError("not a draws file: " + path);
  if (r.u32() != kDrawsVersion)
    throw ValidationError("unsupported draws-file version");
  FitResult fit;
  r.str();  // config hash, informational
  fit.cfg.iters = r.i32();
  fit.cfg.burn_in = r.i32();
  fit.cfg.thin = r.i32();
  fit.cfg.seed = r.u64();
  fit.cfg.B = r.i32();
  fit.cfg.B_y = r.i32();
  fit.cfg.B_s = r.i32();
  fit.cfg.aug_target = r.i32() == 1 ? AugTarget::copula_times_outcome
                                    : AugTarget::copula_only;
  fit.summary.n = r.i32();
  fit.summary.m1 = r.i32();
  fit.summary.m2 = r.i32();
  fit.summary.x0bar = r.vec();
  fit.summary.x1bar = r.vec();
  fit.summary.seq = r.ivec();
  fit.summary.x0rows = r.mat();
  fit.summary.y = r.vec();
  for (std::size_t i = 0; i < fit.summary.seq.size(); ++i)
    ++fit.summary.seq_counts[static_cast<std::size_t>(
        fit.summary.seq[i] - 1)];
  const auto ndraws = r.u64();
  fit.draws.resize(ndraws);
  for (auto& dr : fit.draws) {
    dr.iteration = r.i32();
    for (auto& mp : dr.marginals) mp = get_marginal(r);
    dr.R = r.mat();
    dr.H = r.mat();
    dr.d = r.mat();
    for (auto& op : dr.outcomes) {
      if (r.i32() == 0) continue;
      OutcomeDpmParams p;
      p.k = r.i32();
      p.sticks = get_sticks(r);
      p.alpha = r.f64();
      const auto nc = r.u64();
      p.comps.resize(nc);
      for (auto& c : p.comps) {
        c.mean = r.vec();
        c.cov = r.mat();
      }
      p.labels = r.ivec();
      op = std::move(p);
    }
  }
  const auto nresp = r.u64();
  fit.response.resize(nresp);
  for (auto& pr : fit.response) {
    pr[0] = get_response(r);
    pr[1] = get_response(r);
  }
  const auto nacc = r.u64();
  for (std::size_t i = 0; i < nacc; ++i) {
    const std::string k = r.str();
    fit.acceptance[k] = r.f64();
  }
  return fit;
}

}  // namespace pcedtr
