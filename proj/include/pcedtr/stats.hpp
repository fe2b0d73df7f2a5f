#pragma once

#include <Eigen/Dense>
#include <vector>

#include "pcedtr/rng.hpp"

namespace pcedtr {

// Normal distribution truncated to [lo, hi]; the samplers fix the support to
// [0,1]. Sampling is inverse-CDF so the seed contract carries through, with
// log-space guards when both truncation bounds sit deep in one tail.
struct TruncNormal {
  double mu = 0.0;
  double sigma2 = 1.0;
  double lo = 0.0;
  double hi = 1.0;

  double pdf(double d) const;
  double logpdf(double d) const;  // -inf outside [lo, hi]; never throws
  double cdf(double d) const;     // throws NumericError on degenerate setups
  double quantile(double u) const;
  double sample(RngStream& rng) const { return quantile(rng.uniform()); }
  double mean() const;
};

// Truncated stick-breaking weights. The last weight is the closure remainder,
// so w always sums to 1 exactly.
struct StickWeights {
  Eigen::VectorXd v;  // sticks in (0,1]; v[B-1] conceptually 1
  Eigen::VectorXd w;  // simplex of the same length
  int size() const { return static_cast<int>(w.size()); }
};

StickWeights stick_break(const Eigen::VectorXd& v);

struct MvnParams {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

// Gaussian conditional of the coordinates not in idx given coords idx = z.
MvnParams mvn_condition(const MvnParams& p, const std::vector<int>& idx,
                        const Eigen::VectorXd& z);

double mvn_logpdf(const Eigen::VectorXd& z, const MvnParams& p);

// Cholesky with the 1e-12 jitter retry used throughout; throws NumericError
// if the matrix still is not positive definite.
Eigen::LLT<Eigen::MatrixXd> chol_jitter(const Eigen::MatrixXd& m);

struct MhCounters {
  long proposed = 0;
  long accepted = 0;
  void tally(bool a) {
    ++proposed;
    if (a) ++accepted;
  }
  double rate() const {
    return proposed ? static_cast<double>(accepted) / proposed : 0.0;
  }
};

}  // namespace pcedtr
