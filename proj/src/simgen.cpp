#include "pcedtr/simgen.hpp"

#include <cmath>
#include <fstream>

#include "pcedtr/errors.hpp"
#include "pcedtr/kernels.hpp"

namespace pcedtr {

namespace {

constexpr double kComplianceVar = 0.25;
constexpr double kScoreClamp = 1e-10;

double expit(double x) { return 1.0 / (1.0 + kern::exp1(-x)); }

double beta_cf(double a, double b, double x) {
  // continued fraction for the regularized incomplete beta (Lentz)
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0, d = 1.0 - qab * x / qap;
  if (std::fabs(d) < 1e-300) d = 1e-300;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 300; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < 1e-300) d = 1e-300;
    c = 1.0 + aa / c;
    if (std::fabs(c) < 1e-300) c = 1e-300;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < 1e-300) d = 1e-300;
    c = 1.0 + aa / c;
    if (std::fabs(c) < 1e-300) c = 1e-300;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < 3e-14) break;
  }
  return h;
}

// Stage-1/Stage-2 compliance means per scenario.
double marg_mean(const ScenarioSpec& spec, int slot, const Eigen::VectorXd& x0,
                 double x11) {
  if (spec.id == 3) {
    switch (slot) {
      case 0: return 0.5 * x0[0] + 0.5 * x0[1];
      case 1: return 0.5 * x0[1];
      case 2: return 1.5 * x11 - 0.5 * x0[0];
      case 3: return 1.5 * x11 - 0.5 * x0[1];
    }
  } else {
    switch (slot) {
      case 0: return 0.5 * x0[0] + 0.5 * x0[1];
      case 1: return 0.5 * x0[1];
      case 2:
      case 3: return 0.5 * x0[2] - 0.5 * x0[0];
    }
  }
  throw ValidationError("marg_mean: bad slot");
}

Eigen::MatrixXd scenario_R(const ScenarioSpec& spec) {
  const int q = spec.id == 3 ? 4 : 3;
  Eigen::MatrixXd r = Eigen::MatrixXd::Constant(q, q, 0.2);
  r.diagonal().setOnes();
  return r;
}

double x11_mean(const Eigen::VectorXd& x0, int a1) {
  return 0.5 + 0.3 * x0[0] + 0.7 * x0[1] + 0.1 * a1;
}

// density weight of the fixed compliance values as a function of x11
struct X11Conditioner {
  const ScenarioSpec& spec;
  std::vector<int> slots;     // active compliance slots
  Eigen::Vector4d d;
  Eigen::VectorXd x0;
  int a1;
  Eigen::MatrixXd rinv_m_i;   // (R_A)^-1 - I

  X11Conditioner(const ScenarioSpec& sp, const std::vector<int>& act,
                 const Eigen::Vector4d& dv, const Eigen::VectorXd& x0v, int a1v)
      : spec(sp), slots(act), d(dv), x0(x0v), a1(a1v) {
    const Eigen::MatrixXd rfull = scenario_R(spec);
    const int m = static_cast<int>(slots.size());
    Eigen::MatrixXd sub(m, m);
    for (int a = 0; a < m; ++a)
      for (int b = 0; b < m; ++b) sub(a, b) = rfull(slots[a], slots[b]);
    rinv_m_i = sub.inverse() - Eigen::MatrixXd::Identity(m, m);
  }

  double weight(double x11) const {
    const int m = static_cast<int>(slots.size());
    Eigen::VectorXd z(m);
    double dens = 1.0;
    for (int a = 0; a < m; ++a) {
      const int slot = slots[a];
      TruncNormal tn{marg_mean(spec, slot, x0, x11), kComplianceVar, 0.0, 1.0};
      dens *= tn.pdf(d[slot]);
      double u;
      try {
        u = tn.cdf(d[slot]);
      } catch (const NumericError&) {
        u = 0.5;
      }
      z[a] = kern::ndtri1(std::clamp(u, kScoreClamp, 1.0 - kScoreClamp));
    }
    const double quad = z.dot(rinv_m_i * z);
    return dens * kern::exp1(-0.5 * quad);
  }
};

// E[X11 | D_active = d, X0 = x0, A1 = a1] by Simpson quadrature over the
// X11 law N(x11_mean, 0.1^2)
double cond_x11_mean(const ScenarioSpec& spec, const std::vector<int>& act,
                     const Eigen::Vector4d& d, const Eigen::VectorXd& x0,
                     int a1) {
  const double m = x11_mean(x0, a1);
  const double sd = 0.1;
  const int nstep = 800;
  const double lo = m - 8.0 * sd, hi = m + 8.0 * sd;
  const double h = (hi - lo) / nstep;
  const X11Conditioner cond(spec, act, d, x0, a1);
  double num = 0.0, den = 0.0;
  for (int i = 0; i <= nstep; ++i) {
    const double x = lo + i * h;
    const double zz = (x - m) / sd;
    double w = kern::exp1(-0.5 * zz * zz) * cond.weight(x);
    const double simp = (i == 0 || i == nstep) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    num += simp * w * x;
    den += simp * w;
  }
  if (!(den > 0.0)) return m;
  return num / den;
}

double eps_draw(const ScenarioSpec& spec, RngStream& rng) {
  if (spec.id == 2) return rng.beta(0.5, 0.5) - 0.5;
  return 0.1 * rng.normal();
}

}  // namespace

double reg_inc_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double lfront = a * std::log(x) + b * std::log1p(-x) -
                        (std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b));
  if (x < (a + 1.0) / (a + b + 2.0))
    return kern::exp1(lfront) * beta_cf(a, b, x) / a;
  return 1.0 - kern::exp1(lfront) * beta_cf(b, a, 1.0 - x) / b;
}

double student_t_cdf(double t, double nu) {
  const double x = nu / (nu + t * t);
  const double tail = 0.5 * reg_inc_beta(0.5 * nu, 0.5, x);
  return t >= 0.0 ? 1.0 - tail : tail;
}

Eigen::VectorXd sample_copula(const std::vector<TruncNormal>& margs,
                              const Eigen::MatrixXd& chol_R, RngStream& rng,
                              Eigen::VectorXd* scores_out) {
  const int q = static_cast<int>(margs.size());
  Eigen::VectorXd g(q);
  for (int i = 0; i < q; ++i) g[i] = rng.normal();
  const Eigen::VectorXd z = chol_R * g;
  Eigen::VectorXd d(q);
  for (int i = 0; i < q; ++i) d[i] = margs[i].quantile(kern::ndtr1(z[i]));
  if (scores_out) *scores_out = z;
  return d;
}

Eigen::VectorXd sample_t_copula(const std::vector<TruncNormal>& margs,
                                const Eigen::MatrixXd& chol_R, double nu,
                                RngStream& rng, Eigen::VectorXd* scores_out) {
  const int q = static_cast<int>(margs.size());
  Eigen::VectorXd g(q);
  for (int i = 0; i < q; ++i) g[i] = rng.normal();
  const Eigen::VectorXd z = chol_R * g;
  const double w = rng.gamma(0.5 * nu, 0.5);  // chi-square(nu)
  const double scale = std::sqrt(nu / w);
  Eigen::VectorXd d(q);
  for (int i = 0; i < q; ++i)
    d[i] = margs[i].quantile(student_t_cdf(z[i] * scale, nu));
  if (scores_out) *scores_out = z * scale;
  return d;
}

std::pair<int, int> edtr_sequences(int l) {
  switch (l) {
    case 1: return {1, 2};
    case 2: return {1, 3};
    case 3: return {4, 5};
    case 4: return {4, 6};
    default: throw ValidationError("EDTR index must be in 1..4");
  }
}

int edtr_arm(int l) { return l <= 2 ? 1 : -1; }

Eigen::VectorXd population_x0(const ScenarioSpec& spec) {
  if (spec.id == 3) {
    Eigen::VectorXd x(2);
    x << -0.5, 0.0;
    return x;
  }
  Eigen::VectorXd x(3);
  x << -0.5, 0.0, 0.5;
  return x;
}

double true_response_prob(const ScenarioSpec& spec, int arm, double d1,
                          double d2, const Eigen::VectorXd& x0) {
  if (arm == 1) return expit(d1 - 1.5 + 0.2 * x0[1]);
  const double dr = spec.use_d2_in_minus_arm ? d2 : d1;
  const double x3 = spec.id == 3 ? x0[1] : x0[2];
  return expit(dr - 1.5 + 0.3 * x3);
}

double seq_mean_det(const ScenarioSpec& spec, int k, const Eigen::Vector4d& d,
                    const Eigen::VectorXd& x0, double x11) {
  const double d1 = d[0], d2 = d[1], d3 = d[2], d4 = d[3];
  if (spec.id == 3) {
    switch (k) {
      case 1: return 0.7 + 0.6 * kern::exp1(1.0 + d1) + 0.8 * x0[0] - 0.2 * x0[1];
      case 2: return 0.2 + 0.7 * d1 + 0.7 * d2 + 0.9 * d3 - 0.9 * x0[0] +
                     0.3 * x0[1] + 0.7 * x11;
      case 3: return 0.2 + 0.6 * d1 + 0.7 * d2 + 0.8 * d3 + 0.9 * x0[0] +
                     0.2 * x0[1] + 0.6 * x11;
      case 4: return 0.7 + 0.6 * d1 + 0.6 * d2 + 0.8 * x0[0] - 0.2 * x0[1];
      case 5: return 0.3 + 0.5 * d1 + 0.6 * d2 + 0.7 * std::log1p(d4) -
                     0.5 * x0[1] + x11;
      case 6: return 0.3 + 0.8 * d1 + 0.7 * d2 + 0.3 * d4 - 0.5 * x0[1] +
                     0.9 * x11;
    }
  } else {
    switch (k) {
      case 1: return 0.7 + 0.6 * d1 + 0.8 * x0[0] - 0.2 * x0[1];
      case 2: return 0.2 + 0.7 * d1 + 0.9 * d3 + 0.4 * d1 * d3 - 0.9 * x0[0] +
                     0.6 * x0[2];
      case 3: return 0.2 + 0.6 * d1 + 0.9 * d3 + 0.4 * d1 * d3 - 0.9 * x0[0] +
                     0.6 * x0[2];
      case 4: return 0.7 + 0.6 * d1 + 0.6 * d2 + 0.8 * x0[0] - 0.2 * x0[1];
      case 5: return 0.3 + 0.6 * d2 + 0.7 * d4 + 0.7 * d2 * d4 - 0.5 * x0[1];
      case 6: return 0.3 + 0.8 * d2 + 0.7 * d4 + 0.7 * d2 * d4 - 0.5 * x0[1];
    }
  }
  throw ValidationError("seq_mean_det: sequence must be in 1..6");
}

double true_seq_mean(const ScenarioSpec& spec, int k, const Eigen::Vector4d& d,
                     const Eigen::VectorXd& x0) {
  if (spec.id != 3 || k == 1 || k == 4) return seq_mean_det(spec, k, d, x0, 0.0);
  static const double x11_coef[7] = {0, 0, 0.7, 0.6, 0, 1.0, 0.9};
  const int a1 = k <= 3 ? 1 : -1;
  const double ex11 = cond_x11_mean(spec, active_slots(k), d, x0, a1);
  return seq_mean_det(spec, k, d, x0, 0.0) + x11_coef[k] * ex11;
}

double true_pce(const ScenarioSpec& spec, int l, double level,
                const Eigen::VectorXd& x0) {
  const auto [k_resp, k_nonresp] = edtr_sequences(l);
  Eigen::Vector4d d = Eigen::Vector4d::Constant(level);
  const double p = true_response_prob(spec, edtr_arm(l), level, level, x0);
  return p * true_seq_mean(spec, k_resp, d, x0) +
         (1.0 - p) * true_seq_mean(spec, k_nonresp, d, x0);
}

OracleResult true_pce_oracle(const ScenarioSpec& spec, int l, double level,
                             const Eigen::VectorXd& x0, int mc_size,
                             std::uint64_t seed) {
  if (mc_size < 2) throw ValidationError("true_pce_oracle: mc_size too small");
  RngStream rng(seed, 9001);
  const auto [k_resp, k_nonresp] = edtr_sequences(l);
  const int a1 = edtr_arm(l);
  Eigen::Vector4d d = Eigen::Vector4d::Constant(level);
  const double p = true_response_prob(spec, a1, level, level, x0);

  auto seq_mc = [&](int k) -> OracleResult {
    // responder sequences and scenarios 1-2 have no X11 term; only outcome
    // noise is sampled there
    const bool needs_x11 = spec.id == 3 && k != 1 && k != 4;
    static const double x11_coef[7] = {0, 0, 0.7, 0.6, 0, 1.0, 0.9};
    const double det = seq_mean_det(spec, k, d, x0, 0.0);
    if (!needs_x11) {
      double sum = 0.0, sum2 = 0.0;
      for (int m = 0; m < mc_size; ++m) {
        const double v = det + eps_draw(spec, rng);
        sum += v;
        sum2 += v * v;
      }
      const double mean = sum / mc_size;
      const double var = (sum2 - mc_size * mean * mean) / (mc_size - 1);
      return {mean, std::sqrt(std::max(0.0, var) / mc_size)};
    }
    // self-normalized importance sampling over X11 ~ prior
    const X11Conditioner cond(spec, active_slots(k), d, x0, a1);
    const double m_x11 = x11_mean(x0, a1);
    std::vector<double> w(static_cast<std::size_t>(mc_size));
    std::vector<double> g(static_cast<std::size_t>(mc_size));
    double wsum = 0.0;
    for (int m = 0; m < mc_size; ++m) {
      const double x11 = m_x11 + 0.1 * rng.normal();
      w[static_cast<std::size_t>(m)] = cond.weight(x11);
      g[static_cast<std::size_t>(m)] =
          det + x11_coef[k] * x11 + eps_draw(spec, rng);
      wsum += w[static_cast<std::size_t>(m)];
    }
    if (!(wsum > 0.0)) return {det + x11_coef[k] * m_x11, 1e9};
    double mean = 0.0;
    for (int m = 0; m < mc_size; ++m)
      mean += w[static_cast<std::size_t>(m)] * g[static_cast<std::size_t>(m)];
    mean /= wsum;
    double se2 = 0.0;
    for (int m = 0; m < mc_size; ++m) {
      const double t = w[static_cast<std::size_t>(m)] / wsum *
                       (g[static_cast<std::size_t>(m)] - mean);
      se2 += t * t;
    }
    return {mean, std::sqrt(se2)};
  };

  const auto resp = seq_mc(k_resp);
  const auto nonresp = seq_mc(k_nonresp);
  OracleResult out;
  out.value = p * resp.value + (1.0 - p) * nonresp.value;
  out.se = std::sqrt(p * p * resp.se * resp.se +
                     (1.0 - p) * (1.0 - p) * nonresp.se * nonresp.se);
  return out;
}

SimResult gen_scenario(const ScenarioSpec& spec) {
  if (spec.n < 1) throw ValidationError("scenario: n must be >= 1");
  if (spec.t_copula && !(spec.nu >= 1.0))
    throw ValidationError("scenario: t-copula needs nu >= 1");
  RngStream rng(spec.seed, 0);
  const int n = spec.n;
  const int m1 = spec.m1(), m2 = spec.m2();
  const int qc = spec.id == 3 ? 4 : 3;  // generated copula dimension
  const Eigen::MatrixXd chol_R =
      Eigen::LLT<Eigen::MatrixXd>(scenario_R(spec)).matrixL();

  SimResult out;
  out.data.m1 = m1;
  out.data.m2 = m2;
  out.truth.d.resize(n, 4);
  out.truth.y.resize(n, 6);
  out.truth.scores.resize(n, 4);
  out.truth.x11.resize(spec.id == 3 ? n : 0);
  out.truth.seq.resize(static_cast<std::size_t>(n));

  for (int i = 0; i < n; ++i) {
    Trajectory t;
    t.id = std::to_string(i + 1);
    t.x0.resize(m1);
    if (spec.id == 3) {
      t.x0[0] = -0.5 + 0.3 * rng.normal();
      t.x0[1] = 0.1 * rng.normal();
    } else {
      t.x0[0] = -0.5 + 0.3 * rng.normal();
      t.x0[1] = 0.1 * rng.normal();
      t.x0[2] = 0.5 + 0.3 * rng.normal();
    }
    t.a1 = rng.uniform() < 0.5 ? 1 : -1;
    double x11 = 0.0;
    if (spec.id == 3) {
      x11 = x11_mean(t.x0, t.a1) + 0.1 * rng.normal();
      out.truth.x11[i] = x11;
    }

    std::vector<TruncNormal> margs;
    for (int slot = 0; slot < qc; ++slot)
      margs.push_back(
          TruncNormal{marg_mean(spec, slot, t.x0, x11), kComplianceVar, 0.0, 1.0});
    Eigen::VectorXd z;
    const Eigen::VectorXd dgen =
        spec.t_copula ? sample_t_copula(margs, chol_R, spec.nu, rng, &z)
                      : sample_copula(margs, chol_R, rng, &z);
    Eigen::Vector4d d;
    if (spec.id == 3) {
      d = dgen;
      out.truth.scores.row(i) = z.transpose();
    } else {
      d << dgen[0], dgen[1], dgen[2], dgen[2];  // D4 = D3
      out.truth.scores.row(i) << z[0], z[1], z[2], z[2];
    }
    out.truth.d.row(i) = d.transpose();

    const double presp =
        true_response_prob(spec, t.a1, d[0], d[1], t.x0);
    t.s = rng.uniform() < presp ? 1 : 0;
    const int a2_draw = rng.uniform() < 0.5 ? 1 : -1;

    for (int k = 1; k <= 6; ++k)
      out.truth.y(i, k - 1) =
          seq_mean_det(spec, k, d, t.x0, x11) + eps_draw(spec, rng);

    t.d_obs1 = t.a1 == 1 ? d[0] : d[1];
    if (t.s == 0) {
      t.a2 = a2_draw;
      if (m2 > 0) {
        Eigen::VectorXd x1v(1);
        x1v << x11;
        t.x1 = x1v;
      } else {
        t.x1 = Eigen::VectorXd(0);
      }
      if (a2_draw == 1) t.d_obs2 = t.a1 == 1 ? d[2] : d[3];
    }
    const int k = classify_sequence(t);
    out.truth.seq[static_cast<std::size_t>(i)] = k;
    t.y = out.truth.y(i, k - 1);
    out.data.trajectories.push_back(std::move(t));
  }
  return out;
}

void write_truth_csv(const TruthTable& truth, const std::string& path,
                     const std::string& header_comment) {
  std::ofstream f(path);
  if (!f) throw ValidationError("cannot open file for writing: " + path);
  if (!header_comment.empty()) f << "# " << header_comment << "\n";
  f << "id,d1,d2,d3,d4,y1,y2,y3,y4,y5,y6\n";
  char buf[400];
  for (int i = 0; i < truth.d.rows(); ++i) {
    std::snprintf(buf, sizeof(buf),
                  "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,"
                  "%.17g\n",
                  i + 1, truth.d(i, 0), truth.d(i, 1), truth.d(i, 2),
                  truth.d(i, 3), truth.y(i, 0), truth.y(i, 1), truth.y(i, 2),
                  truth.y(i, 3), truth.y(i, 4), truth.y(i, 5));
    f << buf;
  }
}

}  // namespace pcedtr
