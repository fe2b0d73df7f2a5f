#include "pcedtr/replicate.hpp"

#include <cmath>
#include <future>
#include <thread>

#include "pcedtr/errors.hpp"

namespace pcedtr {

std::uint64_t rep_seed(std::uint64_t base, int rep, int salt) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL *
                               (static_cast<std::uint64_t>(rep) * 4 +
                                static_cast<std::uint64_t>(salt) + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

RepOutcome run_one_rep(const ReplicateConfig& cfg, int rep) {
  RepOutcome out;
  const std::size_t nlev = cfg.levels.size();
  out.edtr_est.resize(nlev);
  out.edtr_truth.resize(nlev);
  out.edtr_sd.resize(nlev);
  out.edtr_in_best.resize(nlev);
  try {
    ScenarioSpec spec = cfg.scenario;
    spec.seed = rep_seed(cfg.scenario.seed, rep, 0);
    const SimResult sim = gen_scenario(spec);

    ChainConfig chain = cfg.chain;
    chain.seed = rep_seed(cfg.scenario.seed, rep, 1);
    const FitResult fit = run_chain(chain, sim.data);

    // per-sequence: model-conditional means vs the generative equations,
    // both averaged over the rep's own sequence-k subjects
    for (int k = 1; k <= 6; ++k) {
      double truth = 0.0;
      int m = 0;
      for (int i = 0; i < fit.summary.n; ++i) {
        if (sim.truth.seq[static_cast<std::size_t>(i)] != k) continue;
        const double x11 = spec.id == 3 ? sim.truth.x11[i] : 0.0;
        const Eigen::Vector4d dtrue = sim.truth.d.row(i).transpose();
        truth += seq_mean_det(
            spec, k, dtrue,
            sim.data.trajectories[static_cast<std::size_t>(i)].x0, x11);
        ++m;
      }
      if (m == 0) throw ValidationError("replicate: empty sequence " +
                                        std::to_string(k));
      truth /= m;
      const Eigen::VectorXd samples = seq_mean_samples(fit, k);
      out.seq_truth[static_cast<std::size_t>(k - 1)] = truth;
      out.seq_est[static_cast<std::size_t>(k - 1)] = samples.mean();
      out.seq_sd[static_cast<std::size_t>(k - 1)] = std::sqrt(
          (samples.array() - samples.mean()).square().sum() /
          std::max<int>(1, static_cast<int>(samples.size()) - 1));
    }

    // per-EDTR at the compliance levels, x0 averaged over the dataset
    for (std::size_t lv = 0; lv < nlev; ++lv) {
      const double level = cfg.levels[lv];
      Eigen::MatrixXd samples(4, static_cast<int>(fit.draws.size()));
      for (int l = 1; l <= 4; ++l) {
        const Stratum st = level_stratum(level);
        const Eigen::VectorXd s = edtr_posterior(fit, l, st);
        samples.row(l - 1) = s.transpose();
        double truth = 0.0;
        for (int i = 0; i < fit.summary.n; ++i)
          truth += true_pce(spec, l, level, fit.summary.x0rows.row(i));
        truth /= fit.summary.n;
        out.edtr_truth[lv][static_cast<std::size_t>(l - 1)] = truth;
        out.edtr_est[lv][static_cast<std::size_t>(l - 1)] = s.mean();
        out.edtr_sd[lv][static_cast<std::size_t>(l - 1)] = std::sqrt(
            (s.array() - s.mean()).square().sum() /
            std::max<int>(1, static_cast<int>(s.size()) - 1));
      }
      const McbResult mcb = point_or_mcb(samples, cfg.mcb_level, cfg.maximize);
      for (int l = 0; l < 4; ++l)
        out.edtr_in_best[lv][static_cast<std::size_t>(l)] =
            mcb.in_best[static_cast<std::size_t>(l)];
    }
    out.ok = true;
  } catch (const std::exception& e) {
    out.ok = false;
    out.error = e.what();
  }
  return out;
}

ReplicateResult replicate(const ReplicateConfig& cfg) {
  if (cfg.reps < 1) throw ValidationError("replicate: reps must be >= 1");
  ReplicateResult res;
  res.cfg = cfg;
  res.reps.resize(static_cast<std::size_t>(cfg.reps));

  int threads = cfg.threads > 0
                    ? cfg.threads
                    : static_cast<int>(std::thread::hardware_concurrency());
  if (threads < 1) threads = 1;

  for (int start = 0; start < cfg.reps; start += threads) {
    const int stop = std::min(cfg.reps, start + threads);
    std::vector<std::future<RepOutcome>> futs;
    for (int r = start; r < stop; ++r)
      futs.push_back(std::async(std::launch::async,
                                [&cfg, r] { return run_one_rep(cfg, r); }));
    for (int r = start; r < stop; ++r)
      res.reps[static_cast<std::size_t>(r)] = futs[static_cast<std::size_t>(
          r - start)].get();
  }

  const std::size_t nlev = cfg.levels.size();
  res.edtr_bias.assign(nlev, {});
  res.edtr_rep_sd.assign(nlev, {});
  res.edtr_post_sd.assign(nlev, {});
  res.mcb_inclusion_pct.assign(nlev, {});

  int ok = 0;
  for (const auto& rep : res.reps) {
    if (!rep.ok) {
      ++res.failures;
      continue;
    }
    ++ok;
  }
  if (ok == 0) return res;

  for (int k = 0; k < 6; ++k) {
    double sum = 0.0, sum2 = 0.0, psd = 0.0;
    for (const auto& rep : res.reps) {
      if (!rep.ok) continue;
      const double e = rep.seq_est[static_cast<std::size_t>(k)] -
                       rep.seq_truth[static_cast<std::size_t>(k)];
      sum += e;
      sum2 += e * e;
      psd += rep.seq_sd[static_cast<std::size_t>(k)];
    }
    const double bias = sum / ok;
    res.seq_bias[static_cast<std::size_t>(k)] = bias;
    res.seq_rep_sd[static_cast<std::size_t>(k)] =
        ok > 1 ? std::sqrt(std::max(0.0, (sum2 - ok * bias * bias) / (ok - 1)))
               : 0.0;
    res.seq_post_sd[static_cast<std::size_t>(k)] = psd / ok;
  }

  for (std::size_t lv = 0; lv < nlev; ++lv) {
    for (int l = 0; l < 4; ++l) {
      double sum = 0.0, sum2 = 0.0, psd = 0.0;
      int inbest = 0;
      for (const auto& rep : res.reps) {
        if (!rep.ok) continue;
        const double e = rep.edtr_est[lv][static_cast<std::size_t>(l)] -
                         rep.edtr_truth[lv][static_cast<std::size_t>(l)];
        sum += e;
        sum2 += e * e;
        psd += rep.edtr_sd[lv][static_cast<std::size_t>(l)];
        if (rep.edtr_in_best[lv][static_cast<std::size_t>(l)]) ++inbest;
      }
      const double bias = sum / ok;
      res.edtr_bias[lv][static_cast<std::size_t>(l)] = bias;
      res.edtr_rep_sd[lv][static_cast<std::size_t>(l)] =
          ok > 1 ? std::sqrt(std::max(0.0, (sum2 - ok * bias * bias) / (ok - 1)))
                 : 0.0;
      res.edtr_post_sd[lv][static_cast<std::size_t>(l)] = psd / ok;
      res.mcb_inclusion_pct[lv][static_cast<std::size_t>(l)] =
          100.0 * inbest / ok;
    }
  }
  return res;
}

}  // namespace pcedtr
