#include "pcedtr/kernels.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>

// Scalar reference kernels. The approximations are built from exact series
// and continued fractions so the SIMD variants can replicate them operation
// for operation:
//   exp : argument reduction against split ln2, degree-13 Taylor core
//   log : exponent extraction, atanh series in (m-1)/(m+1) on [sqrt(1/2), sqrt(2))
//   erf : Maclaurin series for |x| < 2, Laplace continued fraction for x >= 2
//   ndtri : A&S 26.2.22 first guess + Halley refinements on ndtr
// Accuracy is validated against libm and quadrature in tests/test_kernels.cpp.

namespace pcedtr::kern {

namespace {

constexpr double kLn2Hi = 6.93147180369123816490e-01;
constexpr double kLn2Lo = 1.90821492927058770002e-10;
constexpr double kInvLn2 = 1.44269504088896340736;
constexpr double kSqrt1_2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
constexpr double kInvSqrtPi = 0.56418958354775628695;
constexpr double kLogSqrt2Pi = 0.91893853320467274178;
constexpr double kInf = std::numeric_limits<double>::infinity();

constexpr int kErfTerms = 32;
constexpr std::array<double, kErfTerms> kErfCoef = [] {
  std::array<double, kErfTerms> c{};
  double kfact = 1.0;
  for (int k = 0; k < kErfTerms; ++k) {
    if (k > 0) kfact *= k;
    c[static_cast<std::size_t>(k)] =
        ((k % 2) ? -1.0 : 1.0) / (kfact * (2 * k + 1));
  }
  return c;
}();

constexpr int kErfcCfDepth = 72;

constexpr int kExpTerms = 14;  // 1/0! .. 1/13!
constexpr std::array<double, kExpTerms> kExpCoef = [] {
  std::array<double, kExpTerms> c{};
  double kfact = 1.0;
  for (int k = 0; k < kExpTerms; ++k) {
    if (k > 0) kfact *= k;
    c[static_cast<std::size_t>(k)] = 1.0 / kfact;
  }
  return c;
}();

constexpr int kLogTerms = 11;  // 1/1, 1/3, ..., 1/21

// erf on |x| < 2 by Maclaurin series.
double erf_series(double x) {
  const double u = x * x;
  double s = kErfCoef[kErfTerms - 1];
  for (int k = kErfTerms - 2; k >= 0; --k)
    s = kErfCoef[static_cast<std::size_t>(k)] + u * s;
  return 1.1283791670955125739 * x * s;  // 2/sqrt(pi)
}

// erfc on x >= 2 by the Laplace continued fraction, division-free recurrence.
double erfc_cf(double x) {
  if (x >= 27.25) return 0.0;  // exp(-x^2) underflows
  double p = x, q = 1.0;
  for (int k = kErfcCfDepth; k >= 1; --k) {
    const double pn = x * p + 0.5 * k * q;
    q = p;
    p = pn;
  }
  return exp1(-x * x) * kInvSqrtPi * q / p;
}

}  // namespace

double exp1(double x) {
  if (x > 709.78) return kInf;
  if (x < -745.0) return 0.0;
  const double kd = std::nearbyint(x * kInvLn2);
  const int k = static_cast<int>(kd);
  const double r = (x - kd * kLn2Hi) - kd * kLn2Lo;
  double y = kExpCoef[kExpTerms - 1];
  for (int i = kExpTerms - 2; i >= 0; --i)
    y = kExpCoef[static_cast<std::size_t>(i)] + r * y;
  return std::ldexp(y, k);
}

double log1(double x) {
  if (std::isnan(x) || x < 0.0) return std::numeric_limits<double>::quiet_NaN();
  if (x == 0.0) return -kInf;
  if (std::isinf(x)) return kInf;
  std::uint64_t bits;
  std::memcpy(&bits, &x, 8);
  int e = 0;
  if ((bits >> 52) == 0) {  // subnormal
    x *= 0x1p54;
    e = -54;
    std::memcpy(&bits, &x, 8);
  }
  e += static_cast<int>(bits >> 52) - 1022;
  bits = (bits & 0x000FFFFFFFFFFFFFULL) | 0x3FE0000000000000ULL;
  double m;
  std::memcpy(&m, &bits, 8);
  if (m < kSqrt1_2) {
    m *= 2.0;
    e -= 1;
  }
  const double s = (m - 1.0) / (m + 1.0);
  const double z = s * s;
  double p = 1.0 / (2 * kLogTerms - 1);
  for (int k = kLogTerms - 2; k >= 0; --k) p = 1.0 / (2 * k + 1) + z * p;
  p *= 2.0 * s;
  return static_cast<double>(e) * kLn2Hi +
         (p + static_cast<double>(e) * kLn2Lo);
}

double erf1(double x) {
  const double a = std::fabs(x);
  if (a < 2.0) return erf_series(x);
  const double y = 1.0 - erfc_cf(a);
  return x < 0 ? -y : y;
}

double erfc1(double x) {
  const double a = std::fabs(x);
  const double y = a < 2.0 ? 1.0 - erf_series(a) : erfc_cf(a);
  return x < 0 ? 2.0 - y : y;
}

double ndtr1(double x) { return 0.5 * erfc1(-x * kSqrt1_2); }

double log_ndtr1(double x) {
  if (x > 5.0) return std::log1p(-ndtr1(-x));
  if (x >= -26.0) return log1(ndtr1(x));
  // Asymptotic lower tail: log Phi(x) = -x^2/2 - log(-x) - log sqrt(2 pi)
  //                                     + log1p(sum_k (-1)^k (2k-1)!!/x^2k)
  const double w = 1.0 / (x * x);
  double series = 0.0, dfact = 1.0, wp = 1.0;
  for (int k = 1; k <= 10; ++k) {
    dfact *= 2 * k - 1;
    wp *= -w;
    series += dfact * wp;
  }
  return -0.5 * x * x - log1(-x) - kLogSqrt2Pi + std::log1p(series);
}

double ndtri1(double p) {
  if (p <= 0.0) return -kInf;
  if (p >= 1.0) return kInf;
  const bool flip = p > 0.5;
  const double q = flip ? 1.0 - p : p;
  const double t = std::sqrt(-2.0 * log1(q));
  double x = -(t - (2.30753 + 0.27061 * t) /
                       (1.0 + t * (0.99229 + 0.04481 * t)));
  if (q >= 1e-280) {
    for (int it = 0; it < 3; ++it) {
      const double e = ndtr1(x) - q;
      const double u = e / (kInvSqrt2Pi * exp1(-0.5 * x * x));
      x -= u / (1.0 + 0.5 * x * u);
    }
  } else {
    const double lq = log1(q);
    for (int it = 0; it < 4; ++it) {
      const double lp = log_ndtr1(x);
      const double ratio = exp1(lp + 0.5 * x * x + kLogSqrt2Pi);  // Phi/phi
      x -= (lp - lq) * ratio;
    }
  }
  return flip ? -x : x;
}

double log_normal_mass(double lo_z, double hi_z) {
  const double mass = ndtr1(hi_z) - ndtr1(lo_z);
  if (mass > 1e-290) return log1(mass);
  // Both bounds deep in one tail; work in log space there.
  double la, lb;  // log masses with la for the endpoint nearer the center
  if (hi_z < 0) {
    la = log_ndtr1(hi_z);
    lb = log_ndtr1(lo_z);
  } else {
    la = log_ndtr1(-lo_z);
    lb = log_ndtr1(-hi_z);
  }
  const double d = lb - la;
  if (d >= 0.0) return -kInf;
  return la + std::log1p(-exp1(d));
}

namespace {

void s_ndtr(const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = ndtr1(x[i]);
}

void s_ndtri(const double* p, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = ndtri1(p[i]);
}

void s_vexp(const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = exp1(x[i]);
}

void s_vlog(const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = log1(x[i]);
}

void s_tn01_pdf(const double* d, const double* lin, double beta0, double sigma2,
                double* out, std::size_t n) {
  const double s = 1.0 / std::sqrt(sigma2);
  for (std::size_t i = 0; i < n; ++i) {
    const double mu = lin[i] + beta0;
    const double zl = -mu * s;
    const double zh = (1.0 - mu) * s;
    const double mass = ndtr1(zh) - ndtr1(zl);
    if (mass < 5e-302) {
      out[i] = 0.0;
      continue;
    }
    const double zd = (d[i] - mu) * s;
    out[i] = exp1(-0.5 * zd * zd) * kInvSqrt2Pi * s / mass;
  }
}

void s_tn01_cdf(const double* d, const double* lin, double beta0, double sigma2,
                double* out, std::size_t n) {
  const double s = 1.0 / std::sqrt(sigma2);
  for (std::size_t i = 0; i < n; ++i) {
    const double mu = lin[i] + beta0;
    const double lo = ndtr1(-mu * s);
    const double mass = ndtr1((1.0 - mu) * s) - lo;
    if (mass < 5e-302) {
      out[i] = 0.5;  // component carries no in-support mass; pdf path rejects
      continue;
    }
    const double dd = d[i] < 0.0 ? 0.0 : (d[i] > 1.0 ? 1.0 : d[i]);
    double u = (ndtr1((dd - mu) * s) - lo) / mass;
    out[i] = u < 0.0 ? 0.0 : (u > 1.0 ? 1.0 : u);
  }
}

double s_sum_log(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += log1(x[i]);
  return acc;
}

}  // namespace

const Ops& scalar_ops() {
  static const Ops table{s_ndtr,    s_ndtri,    s_vexp,    s_vlog,
                         s_tn01_pdf, s_tn01_cdf, s_sum_log, "scalar"};
  return table;
}

}  // namespace pcedtr::kern
