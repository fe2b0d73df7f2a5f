#pragma once

#include <cstddef>

// Batch numeric kernels used by the samplers' inner loops. Every operation has
// a scalar reference implementation and may have SIMD variants; the table
// returned by ops() is chosen once at startup from CPU features (override with
// the PCEDTR_ISA environment variable or force_isa()). Scalar single-point
// helpers live here too so all transcendental approximations sit in one place.
//
// Truncated-normal kernels fix the support to [0,1]; per-element means are
// lin[i] + beta0 so mixture columns can be evaluated without forming a
// temporary mean array.

namespace pcedtr::kern {

enum class Isa { scalar, avx2 };

struct Ops {
  // y[i] = Phi(x[i])
  void (*ndtr)(const double* x, double* y, std::size_t n);
  // y[i] = Phi^-1(p[i]); p must lie in [1e-300, 1 - 1e-16]
  void (*ndtri)(const double* p, double* y, std::size_t n);
  void (*vexp)(const double* x, double* y, std::size_t n);
  void (*vlog)(const double* x, double* y, std::size_t n);
  // out[i] = pdf of N(lin[i]+beta0, sigma2) truncated to [0,1], at d[i].
  // Underflowing normalizers give 0.
  void (*tn01_pdf)(const double* d, const double* lin, double beta0,
                   double sigma2, double* out, std::size_t n);
  // out[i] = cdf of the same truncated normal at d[i] (d clamped to [0,1]).
  void (*tn01_cdf)(const double* d, const double* lin, double beta0,
                   double sigma2, double* out, std::size_t n);
  // sum_i log x[i]; x[i] <= 0 yields -inf.
  double (*sum_log)(const double* x, std::size_t n);
  const char* name;
};

const Ops& ops();         // active (dispatched) table
const Ops& scalar_ops();  // reference table
Isa active_isa();
void force_isa(Isa isa);  // for tests; also set via PCEDTR_ISA=scalar|avx2
bool have_avx2();

// --- scalar single-point helpers ---
double erf1(double x);
double erfc1(double x);
double ndtr1(double x);       // Phi
double log_ndtr1(double x);   // log Phi, stable in the lower tail
double ndtri1(double p);      // Phi^-1, full open-domain (0,1)
double exp1(double x);
double log1(double x);

// log(Phi(hi_z) - Phi(lo_z)) for standardized truncation bounds lo_z < hi_z;
// stays finite when both bounds sit deep in one tail.
double log_normal_mass(double lo_z, double hi_z);

}  // namespace pcedtr::kern
