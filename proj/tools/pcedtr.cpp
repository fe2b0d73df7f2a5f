#include <CLI11.hpp>
#include <json.hpp>

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "pcedtr/engine.hpp"
#include "pcedtr/errors.hpp"
#include "pcedtr/replicate.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace pcedtr;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitPartial = 4;

std::string fmt(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string fnv1a_hex(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

// flat JSON config; CLI flags override
struct Config {
  json j = json::object();
  void load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ValidationError("cannot open config file: " + path);
    f >> j;
    if (!j.is_object()) throw ValidationError("config must be a JSON object");
  }
  template <typename T>
  T get(const std::string& key, T fallback) const {
    if (j.contains(key)) return j.at(key).get<T>();
    return fallback;
  }
};

std::string canonical_config(const std::vector<std::pair<std::string, std::string>>& kv) {
  std::string s;
  for (const auto& [k, v] : kv) s += k + "=" + v + ";";
  return s;
}

ScenarioSpec parse_scenario(const std::string& name) {
  ScenarioSpec spec;
  if (name == "1") spec.id = 1;
  else if (name == "2") spec.id = 2;
  else if (name == "3") spec.id = 3;
  else if (name == "3t") {
    spec.id = 3;
    spec.t_copula = true;
  } else {
    throw CLI::ValidationError("--scenario must be one of 1, 2, 3, 3t");
  }
  return spec;
}

std::vector<double> parse_levels(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    out.push_back(std::stod(tok));
  }
  if (out.empty()) throw ValidationError("empty --levels list");
  for (double v : out)
    if (v < 0.0 || v > 1.0)
      throw ValidationError("compliance levels must lie in [0,1]");
  return out;
}

void write_yhist(const Eigen::VectorXd& y, const std::string& path,
                 const std::string& meta) {
  const int bins = 30;
  const double lo = y.minCoeff(), hi = y.maxCoeff();
  const double w = (hi - lo) / bins > 0 ? (hi - lo) / bins : 1.0;
  std::vector<int> count(bins, 0);
  for (int i = 0; i < y.size(); ++i) {
    int b = static_cast<int>((y[i] - lo) / w);
    if (b >= bins) b = bins - 1;
    if (b < 0) b = 0;
    ++count[static_cast<std::size_t>(b)];
  }
  std::ofstream f(path);
  f << "# " << meta << "\n" << "bin_lo,bin_hi,count\n";
  for (int b = 0; b < bins; ++b)
    f << fmt(lo + b * w) << ',' << fmt(lo + (b + 1) * w) << ','
      << count[static_cast<std::size_t>(b)] << "\n";
}

struct PceRow {
  std::string stratum;
  int edtr;
  double mean, sd, lo, hi;
  bool in_best;
};

void write_pce_report(const std::vector<PceRow>& rows, const std::string& path,
                      const std::string& meta) {
  std::ofstream f(path);
  f << "# " << meta << "\n"
    << "edtr,stratum,mean,sd,lo,hi,in_best_set\n";
  for (const auto& r : rows)
    f << r.edtr << ',' << r.stratum << ',' << fmt(r.mean) << ',' << fmt(r.sd)
      << ',' << fmt(r.lo) << ',' << fmt(r.hi) << ',' << (r.in_best ? 1 : 0)
      << "\n";
}

int cmd_simulate(const ScenarioSpec& spec, const std::string& out_dir,
                 const std::string& meta) {
  fs::create_directories(out_dir);
  const SimResult sim = gen_scenario(spec);
  write_csv_file(sim.data, out_dir + "/data.csv", meta);
  write_truth_csv(sim.truth, out_dir + "/truth.csv", meta);
  const DataSummary sum = summarize(sim.data);
  write_yhist(sum.y, out_dir + "/yhist.csv", meta);
  std::cout << "n=" << sim.data.n() << " m1=" << sim.data.m1
            << " m2=" << sim.data.m2 << "\n";
  for (int k = 1; k <= 6; ++k)
    std::cout << "sequence " << k << ": "
              << sum.seq_counts[static_cast<std::size_t>(k - 1)] << "\n";
  return kExitOk;
}

int cmd_fit(const std::string& data_path, const ChainConfig& cfg,
            const std::string& out_dir, const std::string& meta,
            const std::string& hash) {
  fs::create_directories(out_dir);
  const Dataset ds = read_csv_file(data_path);
  const FitResult fit = run_chain(cfg, ds);
  save_fit(fit, out_dir + "/draws.bin", hash);
  {
    std::ofstream f(out_dir + "/trace.csv");
    f << "# " << meta << "\n" << "iter,block,value,accept_rate\n";
    for (const auto& r : fit.trace)
      f << r.iter << ',' << r.block << ',' << fmt(r.value) << ','
        << fmt(r.accept) << "\n";
  }
  {
    std::ofstream f(out_dir + "/acceptance.csv");
    f << "# " << meta << "\n" << "block,accept_rate\n";
    for (const auto& [k, v] : fit.acceptance) f << k << ',' << fmt(v) << "\n";
  }
  write_yhist(fit.summary.y, out_dir + "/yhist.csv", meta);
  std::cout << "retained draws: " << fit.draws.size() << "\n";
  for (const auto& [k, v] : fit.acceptance)
    std::cout << "acceptance " << k << ": " << v << "\n";
  return kExitOk;
}

int cmd_pce(const std::string& draws_path, const std::vector<double>& levels,
            const std::string& x0_mode, double mcb_level, bool maximize,
            const std::string& out_dir, const std::string& meta) {
  fs::create_directories(out_dir);
  const FitResult fit = load_fit(draws_path);
  std::optional<Eigen::VectorXd> x0;
  if (x0_mode != "avg") {
    std::vector<double> vals = parse_levels(x0_mode);  // reuse the list parser
    Eigen::VectorXd v(static_cast<int>(vals.size()));
    for (std::size_t i = 0; i < vals.size(); ++i)
      v[static_cast<int>(i)] = vals[i];
    if (v.size() != fit.summary.m1)
      throw ValidationError("--x0 must have m1 entries");
    x0 = v;
  }

  std::ofstream fs_samples(out_dir + "/pce_samples.csv");
  fs_samples << "# " << meta << "\n" << "stratum,edtr,draw,value\n";
  std::vector<PceRow> rows;
  for (double level : levels) {
    Stratum st = level_stratum(level);
    st.x0 = x0;
    Eigen::MatrixXd samples(4, static_cast<int>(fit.draws.size()));
    for (int l = 1; l <= 4; ++l) {
      const Eigen::VectorXd s = edtr_posterior(fit, l, st);
      samples.row(l - 1) = s.transpose();
      for (int m = 0; m < s.size(); ++m)
        fs_samples << fmt(level) << ',' << l << ',' << m << ',' << fmt(s[m])
                   << "\n";
    }
    const McbResult mcb = point_or_mcb(samples, mcb_level, maximize);
    for (int l = 0; l < 4; ++l) {
      PceRow r;
      r.stratum = fmt(level);
      r.edtr = l + 1;
      r.mean = samples.row(l).mean();
      r.sd = std::sqrt((samples.row(l).array() - r.mean).square().sum() /
                       std::max<int>(1, static_cast<int>(samples.cols()) - 1));
      r.lo = mcb.lo[l];
      r.hi = mcb.hi[l];
      r.in_best = mcb.in_best[static_cast<std::size_t>(l)];
      rows.push_back(r);
    }
  }
  write_pce_report(rows, out_dir + "/pce_report.csv", meta);
  std::cout << "strata: " << levels.size() << ", draws: " << fit.draws.size()
            << "\n";
  return kExitOk;
}

int cmd_mcb(const std::string& samples_path, double level, bool maximize,
            const std::string& out_dir, const std::string& meta) {
  fs::create_directories(out_dir);
  std::ifstream f(samples_path);
  if (!f) throw ValidationError("cannot open samples file: " + samples_path);
  std::string line;
  std::map<std::string, std::map<int, std::vector<double>>> by_stratum;
  bool header_seen = false;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    std::stringstream ss(line);
    std::string stratum, edtr, draw, value;
    std::getline(ss, stratum, ',');
    std::getline(ss, edtr, ',');
    std::getline(ss, draw, ',');
    std::getline(ss, value, ',');
    by_stratum[stratum][std::stoi(edtr)].push_back(std::stod(value));
  }
  if (by_stratum.empty()) throw ValidationError("samples file has no rows");
  std::vector<PceRow> rows;
  for (const auto& [stratum, per_edtr] : by_stratum) {
    const int L = static_cast<int>(per_edtr.size());
    const int M = static_cast<int>(per_edtr.begin()->second.size());
    Eigen::MatrixXd samples(L, M);
    int l = 0;
    for (const auto& [edtr, vals] : per_edtr) {
      if (static_cast<int>(vals.size()) != M)
        throw ValidationError("ragged samples file");
      for (int m = 0; m < M; ++m) samples(l, m) = vals[static_cast<std::size_t>(m)];
      ++l;
    }
    const McbResult mcb = point_or_mcb(samples, level, maximize);
    l = 0;
    for (const auto& [edtr, vals] : per_edtr) {
      PceRow r;
      r.stratum = stratum;
      r.edtr = edtr;
      r.mean = samples.row(l).mean();
      r.sd = std::sqrt((samples.row(l).array() - r.mean).square().sum() /
                       std::max(1, M - 1));
      r.lo = mcb.lo[l];
      r.hi = mcb.hi[l];
      r.in_best = mcb.in_best[static_cast<std::size_t>(l)];
      rows.push_back(r);
      ++l;
    }
  }
  write_pce_report(rows, out_dir + "/mcb_report.csv", meta);
  std::cout << "strata: " << by_stratum.size() << "\n";
  return kExitOk;
}

int cmd_replicate(const ReplicateConfig& rcfg, const std::string& out_dir,
                  const std::string& meta) {
  fs::create_directories(out_dir);
  const ReplicateResult res = replicate(rcfg);
  {
    std::ofstream f(out_dir + "/seq_bias.csv");
    f << "# " << meta << "\n" << "sequence,bias,rep_sd,post_sd\n";
    for (int k = 0; k < 6; ++k)
      f << (k + 1) << ',' << fmt(res.seq_bias[static_cast<std::size_t>(k)])
        << ',' << fmt(res.seq_rep_sd[static_cast<std::size_t>(k)]) << ','
        << fmt(res.seq_post_sd[static_cast<std::size_t>(k)]) << "\n";
  }
  {
    std::ofstream f(out_dir + "/edtr_bias.csv");
    f << "# " << meta << "\n" << "level,edtr,bias,rep_sd,post_sd\n";
    for (std::size_t lv = 0; lv < rcfg.levels.size(); ++lv)
      for (int l = 0; l < 4; ++l)
        f << fmt(rcfg.levels[lv]) << ',' << (l + 1) << ','
          << fmt(res.edtr_bias[lv][static_cast<std::size_t>(l)]) << ','
          << fmt(res.edtr_rep_sd[lv][static_cast<std::size_t>(l)]) << ','
          << fmt(res.edtr_post_sd[lv][static_cast<std::size_t>(l)]) << "\n";
  }
  {
    std::ofstream f(out_dir + "/mcb_inclusion.csv");
    f << "# " << meta << "\n" << "level,edtr,inclusion_pct\n";
    for (std::size_t lv = 0; lv < rcfg.levels.size(); ++lv)
      for (int l = 0; l < 4; ++l)
        f << fmt(rcfg.levels[lv]) << ',' << (l + 1) << ','
          << fmt(res.mcb_inclusion_pct[lv][static_cast<std::size_t>(l)])
          << "\n";
  }
  {
    std::ofstream f(out_dir + "/failures.csv");
    f << "# " << meta << "\n" << "rep,error\n";
    for (std::size_t r = 0; r < res.reps.size(); ++r)
      if (!res.reps[r].ok) f << r << ",\"" << res.reps[r].error << "\"\n";
  }
  std::cout << "reps: " << rcfg.reps << ", failures: " << res.failures << "\n";
  for (int k = 0; k < 6; ++k)
    std::cout << "sequence " << (k + 1) << " bias "
              << res.seq_bias[static_cast<std::size_t>(k)] << " post_sd "
              << res.seq_post_sd[static_cast<std::size_t>(k)] << "\n";
  return res.failures > 0 ? kExitPartial : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"principal causal effects for two-stage regimes under partial compliance"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out", data_path, draws_path,
              samples_path;
  std::string scenario_name = "1", direction = "maximize", x0_mode = "avg",
              levels_str = "1,0.75,0.5,0.25";
  std::uint64_t seed = 1;
  int n = 250, reps = 20, iters = 10000, burn = 1000, thin = 5;
  double mcb_level = 0.95;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "flat JSON config file");
    sub->add_option("--seed", seed, "base seed");
    sub->add_option("--out", out_dir, "output directory");
  };

  auto* sim = app.add_subcommand("simulate", "generate a scenario dataset");
  add_common(sim);
  sim->add_option("--scenario", scenario_name, "1|2|3|3t");
  sim->add_option("--n", n, "sample size");

  auto* fitc = app.add_subcommand("fit", "run the posterior sampler");
  add_common(fitc);
  fitc->add_option("--data", data_path, "input CSV");
  fitc->add_option("--iters", iters, "iterations");
  fitc->add_option("--burn", burn, "burn-in iterations");
  fitc->add_option("--thin", thin, "thinning interval");

  auto* pcec = app.add_subcommand("pce", "evaluate EDTR means at strata");
  add_common(pcec);
  pcec->add_option("--draws", draws_path, "draws.bin from fit");
  pcec->add_option("--levels", levels_str, "comma-separated compliance levels");
  pcec->add_option("--x0", x0_mode, "'avg' or comma-separated x0 profile");
  pcec->add_option("--direction", direction, "maximize|minimize");
  pcec->add_option("--mcb-level", mcb_level, "simultaneous credible level");

  auto* mcbc = app.add_subcommand("mcb", "best-EDTR set from pce samples");
  add_common(mcbc);
  mcbc->add_option("--pce", samples_path, "pce_samples.csv from pce");
  mcbc->add_option("--level", mcb_level, "simultaneous credible level");
  mcbc->add_option("--direction", direction, "maximize|minimize");

  auto* repc = app.add_subcommand("replicate", "simulate+fit+evaluate repeatedly");
  add_common(repc);
  repc->add_option("--scenario", scenario_name, "1|2|3|3t");
  repc->add_option("--n", n, "sample size per rep");
  repc->add_option("--reps", reps, "number of replications");
  repc->add_option("--iters", iters, "iterations");
  repc->add_option("--burn", burn, "burn-in iterations");
  repc->add_option("--thin", thin, "thinning interval");
  repc->add_option("--levels", levels_str, "compliance levels");
  repc->add_option("--direction", direction, "maximize|minimize");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    Config cfg;
    if (!config_path.empty()) cfg.load(config_path);
    // config supplies defaults for anything not set on the command line
    auto maybe = [&](const char* flag, auto& var, CLI::App* sub) {
      using T = std::decay_t<decltype(var)>;
      const CLI::Option* opt = sub->get_option_no_throw(flag);
      const bool set_on_cli = opt && opt->count() > 0;
      if (!set_on_cli && cfg.j.contains(flag + 2))
        var = cfg.j.at(flag + 2).get<T>();
    };
    CLI::App* active = app.get_subcommands().front();
    maybe("--seed", seed, active);
    maybe("--out", out_dir, active);
    maybe("--scenario", scenario_name, active);
    maybe("--n", n, active);
    maybe("--reps", reps, active);
    maybe("--iters", iters, active);
    maybe("--burn", burn, active);
    maybe("--thin", thin, active);
    maybe("--data", data_path, active);
    maybe("--draws", draws_path, active);
    maybe("--levels", levels_str, active);
    maybe("--direction", direction, active);
    maybe("--x0", x0_mode, active);

    if (direction != "maximize" && direction != "minimize") {
      std::cerr << "--direction must be maximize or minimize\n";
      return kExitUsage;
    }
    const bool maximize = direction == "maximize";

    ChainConfig chain;
    chain.iters = iters;
    chain.burn_in = burn;
    chain.thin = thin;
    chain.seed = seed;
    chain.B = cfg.get<int>("B", chain.B);
    chain.B_y = cfg.get<int>("B_y", chain.B_y);
    chain.B_s = cfg.get<int>("B_s", chain.B_s);
    if (cfg.get<std::string>("aug_target", "copula_times_outcome") ==
        "copula_only")
      chain.aug_target = AugTarget::copula_only;

    std::vector<std::pair<std::string, std::string>> kv{
        {"cmd", active->get_name()},   {"scenario", scenario_name},
        {"n", std::to_string(n)},      {"seed", std::to_string(seed)},
        {"iters", std::to_string(iters)}, {"burn", std::to_string(burn)},
        {"thin", std::to_string(thin)},   {"reps", std::to_string(reps)},
        {"levels", levels_str},        {"direction", direction},
    };
    const std::string hash = fnv1a_hex(canonical_config(kv));
    const std::string meta =
        "config_hash=" + hash + " seed=" + std::to_string(seed);

    if (sim->parsed()) {
      ScenarioSpec spec = parse_scenario(scenario_name);
      spec.n = n;
      spec.seed = seed;
      spec.nu = cfg.get<double>("nu", spec.nu);
      spec.use_d2_in_minus_arm = cfg.get<bool>("use_d2_in_minus_arm", false);
      return cmd_simulate(spec, out_dir, meta);
    }
    if (fitc->parsed()) {
      if (data_path.empty()) {
        std::cerr << "fit: --data is required\n";
        return kExitUsage;
      }
      return cmd_fit(data_path, chain, out_dir, meta, hash);
    }
    if (pcec->parsed()) {
      if (draws_path.empty()) {
        std::cerr << "pce: --draws is required\n";
        return kExitUsage;
      }
      return cmd_pce(draws_path, parse_levels(levels_str), x0_mode, mcb_level,
                     maximize, out_dir, meta);
    }
    if (mcbc->parsed()) {
      if (samples_path.empty()) {
        std::cerr << "mcb: --pce is required\n";
        return kExitUsage;
      }
      return cmd_mcb(samples_path, mcb_level, maximize, out_dir, meta);
    }
    if (repc->parsed()) {
      ReplicateConfig rcfg;
      rcfg.scenario = parse_scenario(scenario_name);
      rcfg.scenario.n = n;
      rcfg.scenario.seed = seed;
      rcfg.scenario.nu = cfg.get<double>("nu", rcfg.scenario.nu);
      rcfg.reps = reps;
      rcfg.chain = chain;
      rcfg.levels = parse_levels(levels_str);
      rcfg.mcb_level = cfg.get<double>("mcb_level", 0.95);
      rcfg.maximize = maximize;
      rcfg.threads = cfg.get<int>("threads", 0);
      return cmd_replicate(rcfg, out_dir, meta);
    }
    return kExitUsage;
  } catch (const ValidationError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
}
