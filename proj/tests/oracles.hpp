#pragma once

// Test-only numeric oracles, independent of the library's kernel path:
// adaptive Simpson quadrature, libm-based normal functions, and a one-sample
// Kolmogorov-Smirnov statistic. Everything here deliberately uses std::erfc /
// std::exp so expected values never share code with what they check.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace oracle {

inline double phi(double x) {
  return 0.39894228040143267794 * std::exp(-0.5 * x * x);
}

inline double Phi(double x) {
  return 0.5 * std::erfc(-x * 0.70710678118654752440);
}

inline double simpson_rec(const std::function<double(double)>& f, double a,
                          double b, double fa, double fm, double fb,
                          double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  if (depth <= 0 || std::fabs(left + right - whole) < 15.0 * tol)
    return left + right + (left + right - whole) / 15.0;
  return simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

inline double integrate(const std::function<double(double)>& f, double a,
                        double b, double tol = 1e-10) {
  // pre-split so narrow features away from the midpoint are not missed
  const int panels = 24;
  const double h = (b - a) / panels;
  double total = 0.0;
  for (int p = 0; p < panels; ++p) {
    const double pa = a + p * h, pb = pa + h;
    const double fa = f(pa), fb = f(pb), fm = f(0.5 * (pa + pb));
    const double whole = h / 6.0 * (fa + 4.0 * fm + fb);
    total += simpson_rec(f, pa, pb, fa, fm, fb, whole, tol / panels, 40);
  }
  return total;
}

// truncated-normal pdf on [0,1], direct libm formulas
inline double tn_pdf(double d, double mu, double sigma2) {
  if (d < 0.0 || d > 1.0) return 0.0;
  const double s = std::sqrt(sigma2);
  const double mass = Phi((1.0 - mu) / s) - Phi((0.0 - mu) / s);
  return phi((d - mu) / s) / (s * mass);
}

inline double tn_cdf(double d, double mu, double sigma2) {
  const double s = std::sqrt(sigma2);
  const double lo = Phi((0.0 - mu) / s);
  const double mass = Phi((1.0 - mu) / s) - lo;
  return (Phi((d - mu) / s) - lo) / mass;
}

// one-sample KS distance of samples against cdf
inline double ks_statistic(std::vector<double> x,
                           const std::function<double(double)>& cdf) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double u = cdf(x[i]);
    d = std::max(d, std::fabs(u - static_cast<double>(i) / n));
    d = std::max(d, std::fabs(u - static_cast<double>(i + 1) / n));
  }
  return d;
}

inline double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double sd(const std::vector<double>& v) {
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace oracle
