#include <immintrin.h>

#include <cmath>
#include <cstdint>
#include <limits>

#include "pcedtr/kernels.hpp"

// AVX2 variants of the batch kernels. Same series/continued-fraction
// algorithms as the scalar reference; lanes diverge only through fma
// contraction and vectorized reductions. Equivalence against the scalar
// table is asserted in tests/test_kernels.cpp.

namespace pcedtr::kern {

namespace {

const __m256d kOne = _mm256_set1_pd(1.0);
const __m256d kHalf = _mm256_set1_pd(0.5);
const __m256d kZero = _mm256_setzero_pd();

inline __m256d vabs(__m256d x) {
  return _mm256_andnot_pd(_mm256_set1_pd(-0.0), x);
}

inline __m256d blend(__m256d mask, __m256d a, __m256d b) {
  // mask ? a : b
  return _mm256_blendv_pd(b, a, mask);
}

// ---- exp ----

inline __m256d vexp_core(__m256d x) {
  const __m256d inv_ln2 = _mm256_set1_pd(1.44269504088896340736);
  const __m256d ln2_hi = _mm256_set1_pd(6.93147180369123816490e-01);
  const __m256d ln2_lo = _mm256_set1_pd(1.90821492927058770002e-10);

  __m256d xc = _mm256_min_pd(x, _mm256_set1_pd(709.78));
  const __m256d kd = _mm256_round_pd(_mm256_mul_pd(xc, inv_ln2),
                                     _MM_FROUND_TO_NEAREST_INT);
  __m256d r = _mm256_fnmadd_pd(kd, ln2_hi, xc);
  r = _mm256_fnmadd_pd(kd, ln2_lo, r);

  // Taylor 1/13! .. 1/0!
  __m256d y = _mm256_set1_pd(1.6059043836821614599e-10);
  y = _mm256_fmadd_pd(y, r, _mm256_set1_pd(2.0876756987868098979e-09));
  y = _mm256_fmadd_pd(y, r, _mm256_set1_pd(2.5052108385441718775e-08));
  y = _mm256_fmadd_pd(y, r, _mm256_set1_pd(2.7557319223985890653e-07));
  y = _mm256_fmadd_pd(y, r, _mm256_set1_pd(2.7557319223985892511e-06));
  y = _mm256_fmadd_pd(y, r, _mm256_set1_pd(2.4801587301587301566e-05));
  y = _mm256_fmadd_pd(y, r, _mm256_set1_pd(1.9841269841269841253e-04));
  y = _mm256_fmadd_pd(y, r, _mm256_set1_pd(1.3888888888888889419e-03));
  y = _mm256_fmadd_pd(y, r, _mm256_set1_pd(8.3333333333333332177e-03));
  y = _mm256_fmadd_pd(y, r, _mm256_set1_pd(4.1666666666666664354e-02));
  y = _mm256_fmadd_pd(y, r, _mm256_set1_pd(1.6666666666666665741e-01));
  y = _mm256_fmadd_pd(y, r, kHalf);
  y = _mm256_fmadd_pd(y, r, kOne);
  y = _mm256_fmadd_pd(y, r, kOne);

  // scale by 2^k; k in [-1022, 1024) after the underflow clamp below
  __m128i ki32 = _mm256_cvtpd_epi32(kd);
  __m256i ki = _mm256_cvtepi32_epi64(ki32);
  ki = _mm256_add_epi64(ki, _mm256_set1_epi64x(1023));
  ki = _mm256_max_epi32(ki, _mm256_setzero_si256());  // k <= -1023 -> scale 0
  const __m256d scale = _mm256_castsi256_pd(_mm256_slli_epi64(ki, 52));
  y = _mm256_mul_pd(y, scale);

  // flush the subnormal zone to zero; clamp the overflow side to +inf
  y = _mm256_and_pd(
      y, _mm256_cmp_pd(x, _mm256_set1_pd(-708.0), _CMP_GT_OQ));
  y = blend(_mm256_cmp_pd(x, _mm256_set1_pd(709.78), _CMP_GT_OQ),
            _mm256_set1_pd(HUGE_VAL), y);
  return y;
}

// ---- log ----

inline __m256d vlog_core(__m256d x) {
  const __m256d ln2_hi = _mm256_set1_pd(6.93147180369123816490e-01);
  const __m256d ln2_lo = _mm256_set1_pd(1.90821492927058770002e-10);

  const __m256d sub_mask =
      _mm256_cmp_pd(x, _mm256_set1_pd(2.2250738585072014e-308), _CMP_LT_OQ);
  const __m256d xs = blend(sub_mask, _mm256_mul_pd(x, _mm256_set1_pd(0x1p54)), x);
  const __m256d e_adj = _mm256_and_pd(sub_mask, _mm256_set1_pd(-54.0));

  __m256i bits = _mm256_castpd_si256(xs);
  __m256i e_raw = _mm256_srli_epi64(bits, 52);
  e_raw = _mm256_and_si256(e_raw, _mm256_set1_epi64x(0x7FF));
  e_raw = _mm256_sub_epi64(e_raw, _mm256_set1_epi64x(1022));
  // int64 lanes are small; narrow to int32 and convert
  const __m256i shuf = _mm256_setr_epi32(0, 2, 4, 6, 0, 0, 0, 0);
  const __m128i e32 = _mm256_castsi256_si128(
      _mm256_permutevar8x32_epi32(e_raw, shuf));
  __m256d e = _mm256_cvtepi32_pd(e32);
  e = _mm256_add_pd(e, e_adj);

  bits = _mm256_and_si256(bits, _mm256_set1_epi64x(0x000FFFFFFFFFFFFFLL));
  bits = _mm256_or_si256(bits, _mm256_set1_epi64x(0x3FE0000000000000LL));
  __m256d m = _mm256_castsi256_pd(bits);

  const __m256d lt = _mm256_cmp_pd(
      m, _mm256_set1_pd(0.70710678118654752440), _CMP_LT_OQ);
  m = blend(lt, _mm256_add_pd(m, m), m);
  e = _mm256_sub_pd(e, _mm256_and_pd(lt, kOne));

  const __m256d s = _mm256_div_pd(_mm256_sub_pd(m, kOne), _mm256_add_pd(m, kOne));
  const __m256d z = _mm256_mul_pd(s, s);
  __m256d p = _mm256_set1_pd(1.0 / 21.0);
  p = _mm256_fmadd_pd(p, z, _mm256_set1_pd(1.0 / 19.0));
  p = _mm256_fmadd_pd(p, z, _mm256_set1_pd(1.0 / 17.0));
  p = _mm256_fmadd_pd(p, z, _mm256_set1_pd(1.0 / 15.0));
  p = _mm256_fmadd_pd(p, z, _mm256_set1_pd(1.0 / 13.0));
  p = _mm256_fmadd_pd(p, z, _mm256_set1_pd(1.0 / 11.0));
  p = _mm256_fmadd_pd(p, z, _mm256_set1_pd(1.0 / 9.0));
  p = _mm256_fmadd_pd(p, z, _mm256_set1_pd(1.0 / 7.0));
  p = _mm256_fmadd_pd(p, z, _mm256_set1_pd(1.0 / 5.0));
  p = _mm256_fmadd_pd(p, z, _mm256_set1_pd(1.0 / 3.0));
  p = _mm256_fmadd_pd(p, z, kOne);
  p = _mm256_mul_pd(p, _mm256_add_pd(s, s));

  __m256d y = _mm256_fmadd_pd(e, ln2_lo, p);
  y = _mm256_fmadd_pd(e, ln2_hi, y);

  // x == 0 -> -inf, x < 0 -> NaN
  y = blend(_mm256_cmp_pd(x, kZero, _CMP_EQ_OQ), _mm256_set1_pd(-HUGE_VAL), y);
  y = blend(_mm256_cmp_pd(x, kZero, _CMP_LT_OQ),
            _mm256_set1_pd(std::numeric_limits<double>::quiet_NaN()), y);
  return y;
}

// ---- erfc (x >= 0 lanes), series for x < 2 blended with CF for x >= 2 ----

inline __m256d verfc_nonneg(__m256d a) {
  // series branch; Maclaurin coefficients (-1)^k / (k! (2k+1)) generated once,
  // matching the scalar table bit for bit
  static const auto kc = [] {
    struct T { double c[32]; } t{};
    double kfact = 1.0;
    for (int k = 0; k < 32; ++k) {
      if (k > 0) kfact *= k;
      t.c[k] = ((k % 2) ? -1.0 : 1.0) / (kfact * (2 * k + 1));
    }
    return t;
  }();
  const __m256d u = _mm256_mul_pd(a, a);
  __m256d s = _mm256_set1_pd(kc.c[31]);
  for (int k = 30; k >= 0; --k)
    s = _mm256_fmadd_pd(s, u, _mm256_set1_pd(kc.c[k]));
  const __m256d two_rsqrtpi = _mm256_set1_pd(1.1283791670955125739);
  const __m256d erf_small =
      _mm256_mul_pd(_mm256_mul_pd(two_rsqrtpi, a), s);
  const __m256d series = _mm256_sub_pd(kOne, erf_small);

  // continued-fraction branch (division-free recurrence)
  __m256d p = a, q = kOne;
  for (int k = 72; k >= 1; --k) {
    const __m256d pn = _mm256_fmadd_pd(a, p, _mm256_mul_pd(
        _mm256_set1_pd(0.5 * k), q));
    q = p;
    p = pn;
  }
  const __m256d inv_sqrtpi = _mm256_set1_pd(0.56418958354775628695);
  __m256d cf = _mm256_mul_pd(
      vexp_core(_mm256_mul_pd(_mm256_sub_pd(kZero, a), a)),
      _mm256_mul_pd(inv_sqrtpi, _mm256_div_pd(q, p)));
  cf = _mm256_and_pd(cf, _mm256_cmp_pd(a, _mm256_set1_pd(27.25), _CMP_LT_OQ));

  return blend(_mm256_cmp_pd(a, _mm256_set1_pd(2.0), _CMP_LT_OQ), series, cf);
}

inline __m256d verfc(__m256d x) {
  const __m256d a = vabs(x);
  const __m256d y = verfc_nonneg(a);
  const __m256d refl = _mm256_sub_pd(_mm256_set1_pd(2.0), y);
  return blend(_mm256_cmp_pd(x, kZero, _CMP_LT_OQ), refl, y);
}

inline __m256d vndtr_core(__m256d x) {
  const __m256d z = _mm256_mul_pd(x, _mm256_set1_pd(-0.70710678118654752440));
  return _mm256_mul_pd(kHalf, verfc(z));
}

inline __m256d vndtri_core(__m256d p) {
  const __m256d flip = _mm256_cmp_pd(p, kHalf, _CMP_GT_OQ);
  const __m256d q = blend(flip, _mm256_sub_pd(kOne, p), p);
  const __m256d t = _mm256_sqrt_pd(
      _mm256_mul_pd(_mm256_set1_pd(-2.0), vlog_core(q)));
  __m256d num = _mm256_fmadd_pd(_mm256_set1_pd(0.27061), t,
                                _mm256_set1_pd(2.30753));
  __m256d den = _mm256_fmadd_pd(_mm256_set1_pd(0.04481), t,
                                _mm256_set1_pd(0.99229));
  den = _mm256_fmadd_pd(den, t, kOne);
  __m256d x = _mm256_sub_pd(_mm256_div_pd(num, den), t);  // lower tail (< 0)

  const __m256d inv_sqrt2pi = _mm256_set1_pd(0.39894228040143267794);
  for (int it = 0; it < 3; ++it) {
    const __m256d e = _mm256_sub_pd(vndtr_core(x), q);
    const __m256d pdf = _mm256_mul_pd(
        inv_sqrt2pi,
        vexp_core(_mm256_mul_pd(_mm256_set1_pd(-0.5), _mm256_mul_pd(x, x))));
    const __m256d u = _mm256_div_pd(e, pdf);
    const __m256d corr = _mm256_fmadd_pd(_mm256_mul_pd(kHalf, x), u, kOne);
    x = _mm256_sub_pd(x, _mm256_div_pd(u, corr));
  }
  return blend(flip, _mm256_sub_pd(kZero, x), x);
}

// ---- exported batch loops ----

void a_ndtr(const double* x, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, vndtr_core(_mm256_loadu_pd(x + i)));
  for (; i < n; ++i) y[i] = ndtr1(x[i]);
}

void a_ndtri(const double* p, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, vndtri_core(_mm256_loadu_pd(p + i)));
  for (; i < n; ++i) y[i] = ndtri1(p[i]);
}

void a_vexp(const double* x, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, vexp_core(_mm256_loadu_pd(x + i)));
  for (; i < n; ++i) y[i] = exp1(x[i]);
}

void a_vlog(const double* x, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, vlog_core(_mm256_loadu_pd(x + i)));
  for (; i < n; ++i) y[i] = log1(x[i]);
}

void a_tn01_pdf(const double* d, const double* lin, double beta0, double sigma2,
                double* out, std::size_t n) {
  const double sd = 1.0 / std::sqrt(sigma2);
  const __m256d s = _mm256_set1_pd(sd);
  const __m256d b0 = _mm256_set1_pd(beta0);
  const __m256d inv_sqrt2pi = _mm256_set1_pd(0.39894228040143267794);
  const __m256d tiny = _mm256_set1_pd(5e-302);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d mu = _mm256_add_pd(_mm256_loadu_pd(lin + i), b0);
    const __m256d zl = _mm256_mul_pd(_mm256_sub_pd(kZero, mu), s);
    const __m256d zh = _mm256_mul_pd(_mm256_sub_pd(kOne, mu), s);
    const __m256d mass = _mm256_sub_pd(vndtr_core(zh), vndtr_core(zl));
    const __m256d zd =
        _mm256_mul_pd(_mm256_sub_pd(_mm256_loadu_pd(d + i), mu), s);
    const __m256d num = _mm256_mul_pd(
        vexp_core(_mm256_mul_pd(_mm256_set1_pd(-0.5), _mm256_mul_pd(zd, zd))),
        _mm256_mul_pd(inv_sqrt2pi, s));
    __m256d r = _mm256_div_pd(num, mass);
    r = _mm256_and_pd(r, _mm256_cmp_pd(mass, tiny, _CMP_GE_OQ));
    _mm256_storeu_pd(out + i, r);
  }
  if (i < n) scalar_ops().tn01_pdf(d + i, lin + i, beta0, sigma2, out + i, n - i);
}

void a_tn01_cdf(const double* d, const double* lin, double beta0, double sigma2,
                double* out, std::size_t n) {
  const double sd = 1.0 / std::sqrt(sigma2);
  const __m256d s = _mm256_set1_pd(sd);
  const __m256d b0 = _mm256_set1_pd(beta0);
  const __m256d tiny = _mm256_set1_pd(5e-302);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d mu = _mm256_add_pd(_mm256_loadu_pd(lin + i), b0);
    const __m256d lo = vndtr_core(_mm256_mul_pd(_mm256_sub_pd(kZero, mu), s));
    const __m256d mass = _mm256_sub_pd(
        vndtr_core(_mm256_mul_pd(_mm256_sub_pd(kOne, mu), s)), lo);
    __m256d dd = _mm256_loadu_pd(d + i);
    dd = _mm256_min_pd(_mm256_max_pd(dd, kZero), kOne);
    const __m256d zd = _mm256_mul_pd(_mm256_sub_pd(dd, mu), s);
    __m256d u = _mm256_div_pd(_mm256_sub_pd(vndtr_core(zd), lo), mass);
    u = _mm256_min_pd(_mm256_max_pd(u, kZero), kOne);
    u = blend(_mm256_cmp_pd(mass, tiny, _CMP_LT_OQ), kHalf, u);
    _mm256_storeu_pd(out + i, u);
  }
  if (i < n) scalar_ops().tn01_cdf(d + i, lin + i, beta0, sigma2, out + i, n - i);
}

double a_sum_log(const double* x, std::size_t n) {
  __m256d acc = kZero;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    acc = _mm256_add_pd(acc, vlog_core(_mm256_loadu_pd(x + i)));
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, acc);
  double total = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
  for (; i < n; ++i) total += log1(x[i]);
  return total;
}

}  // namespace

const Ops& avx2_ops() {
  static const Ops table{a_ndtr,    a_ndtri,    a_vexp,    a_vlog,
                         a_tn01_pdf, a_tn01_cdf, a_sum_log, "avx2"};
  return table;
}

}  // namespace pcedtr::kern
