// SPDX-License-Identifier: Apache-2.0
//
// AVX2 + FMA backend, 4 doubles per lane. This translation unit is the only
// one compiled with -mavx2 -mfma; it is reached through the dispatch table
// after a runtime CPU check, never called directly.
#include "backends.hpp"

#if defined(EVA_HAVE_AVX2)

#include <immintrin.h>

#include <cmath>
#include <limits>

namespace eva::kernels {
namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

inline double hmax(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d m = _mm_max_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_max_sd(m, _mm_unpackhi_pd(m, m)));
}

// exp(x) by Cody-Waite reduction x = k ln2 + r, |r| <= ln2/2, and a degree-13
// Taylor polynomial (truncation < 5e-18 relative). Inputs below -708.39 give 0.
inline __m256d exp_pd(__m256d x) {
  const __m256d kMaxArg = _mm256_set1_pd(709.0);
  const __m256d kMinArg = _mm256_set1_pd(-708.39);
  const __m256d underflow = _mm256_cmp_pd(x, kMinArg, _CMP_LT_OQ);
  x = _mm256_min_pd(_mm256_max_pd(x, kMinArg), kMaxArg);

  const __m256d k = _mm256_round_pd(_mm256_mul_pd(x, _mm256_set1_pd(1.4426950408889634)),
                                    _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fnmadd_pd(k, _mm256_set1_pd(6.93147180369123816490e-01), x);
  r = _mm256_fnmadd_pd(k, _mm256_set1_pd(1.90821492927058770002e-10), r);

  __m256d p = _mm256_set1_pd(1.0 / 6227020800.0);  // 1/13!
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 479001600.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 39916800.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 3628800.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 362880.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 40320.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 5040.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 720.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 120.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 24.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 6.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(0.5));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0));

  // 2^k assembled in the exponent field; k is in [-1022, 1023] after clamping.
  const __m128i k32 = _mm256_cvtpd_epi32(k);
  __m256i bits = _mm256_add_epi64(_mm256_cvtepi32_epi64(k32), _mm256_set1_epi64x(1023));
  bits = _mm256_slli_epi64(bits, 52);
  const __m256d result = _mm256_mul_pd(p, _mm256_castsi256_pd(bits));
  return _mm256_andnot_pd(underflow, result);
}

// ln(x) for x > 0 (subnormals included): x = m 2^e with m in [sqrt(1/2), sqrt(2)),
// ln m = 2 atanh(s), s = (m-1)/(m+1), |s| <= 0.1716, series through s^23.
inline __m256d log_pd(__m256d x) {
  const __m256d kTiny = _mm256_set1_pd(std::numeric_limits<double>::min());
  const __m256d subnormal = _mm256_cmp_pd(x, kTiny, _CMP_LT_OQ);
  x = _mm256_blendv_pd(x, _mm256_mul_pd(x, _mm256_set1_pd(4503599627370496.0)), subnormal);
  const __m256d e_adjust = _mm256_and_pd(subnormal, _mm256_set1_pd(-52.0));

  const __m256i xi = _mm256_castpd_si256(x);
  // Biased exponent as a double, via the 2^52 magic constant.
  const __m256i biased = _mm256_srli_epi64(xi, 52);
  const __m256d magic = _mm256_set1_pd(4503599627370496.0);
  __m256d e = _mm256_sub_pd(
      _mm256_castsi256_pd(_mm256_or_si256(biased, _mm256_castpd_si256(magic))), magic);
  e = _mm256_add_pd(_mm256_sub_pd(e, _mm256_set1_pd(1023.0)), e_adjust);

  const __m256i mant_mask = _mm256_set1_epi64x(0x000FFFFFFFFFFFFFLL);
  const __m256i one_bits = _mm256_set1_epi64x(0x3FF0000000000000LL);
  __m256d m = _mm256_castsi256_pd(_mm256_or_si256(_mm256_and_si256(xi, mant_mask), one_bits));

  const __m256d big = _mm256_cmp_pd(m, _mm256_set1_pd(1.4142135623730951), _CMP_GT_OQ);
  m = _mm256_blendv_pd(m, _mm256_mul_pd(m, _mm256_set1_pd(0.5)), big);
  e = _mm256_add_pd(e, _mm256_and_pd(big, _mm256_set1_pd(1.0)));

  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d s = _mm256_div_pd(_mm256_sub_pd(m, one), _mm256_add_pd(m, one));
  const __m256d z = _mm256_mul_pd(s, s);
  __m256d p = _mm256_set1_pd(1.0 / 23.0);
  p = _mm256_fmadd_pd(p, z, _mm256_set1_pd(1.0 / 21.0));
  p = _mm256_fmadd_pd(p, z, _mm256_set1_pd(1.0 / 19.0));
  p = _mm256_fmadd_pd(p, z, _mm256_set1_pd(1.0 / 17.0));
  p = _mm256_fmadd_pd(p, z, _mm256_set1_pd(1.0 / 15.0));
  p = _mm256_fmadd_pd(p, z, _mm256_set1_pd(1.0 / 13.0));
  p = _mm256_fmadd_pd(p, z, _mm256_set1_pd(1.0 / 11.0));
  p = _mm256_fmadd_pd(p, z, _mm256_set1_pd(1.0 / 9.0));
  p = _mm256_fmadd_pd(p, z, _mm256_set1_pd(1.0 / 7.0));
  p = _mm256_fmadd_pd(p, z, _mm256_set1_pd(1.0 / 5.0));
  p = _mm256_fmadd_pd(p, z, _mm256_set1_pd(1.0 / 3.0));
  // ln m = 2s + 2s z p(z)
  const __m256d two_s = _mm256_add_pd(s, s);
  const __m256d log_m = _mm256_fmadd_pd(_mm256_mul_pd(two_s, z), p, two_s);

  const __m256d ln2_hi = _mm256_set1_pd(6.93147180369123816490e-01);
  const __m256d ln2_lo = _mm256_set1_pd(1.90821492927058770002e-10);
  return _mm256_fmadd_pd(e, ln2_hi, _mm256_fmadd_pd(e, ln2_lo, log_m));
}

double max_avx2(const double* x, std::size_t n) {
  __m256d m = _mm256_set1_pd(-std::numeric_limits<double>::infinity());
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) m = _mm256_max_pd(m, _mm256_loadu_pd(x + i));
  double r = hmax(m);
  for (; i < n; ++i) r = x[i] > r ? x[i] : r;
  return r;
}

double sum_avx2(const double* x, std::size_t n) {
  __m256d s = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) s = _mm256_add_pd(s, _mm256_loadu_pd(x + i));
  double r = hsum(s);
  for (; i < n; ++i) r += x[i];
  return r;
}

double exp_shift_avx2(const double* x, double shift, double scale, double* out,
                      std::size_t n) {
  const __m256d vshift = _mm256_set1_pd(shift);
  const __m256d vscale = _mm256_set1_pd(scale);
  __m256d s = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d arg = _mm256_mul_pd(_mm256_sub_pd(_mm256_loadu_pd(x + i), vshift), vscale);
    const __m256d e = exp_pd(arg);
    _mm256_storeu_pd(out + i, e);
    s = _mm256_add_pd(s, e);
  }
  double r = hsum(s);
  for (; i < n; ++i) {
    out[i] = std::exp((x[i] - shift) * scale);
    r += out[i];
  }
  return r;
}

double jsd_avx2(const double* p, const double* q, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  const __m256d half = _mm256_set1_pd(0.5);
  const __m256d one = _mm256_set1_pd(1.0);
  __m256d acc = zero;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d vp = _mm256_loadu_pd(p + i);
    const __m256d vq = _mm256_loadu_pd(q + i);
    const __m256d m = _mm256_mul_pd(half, _mm256_add_pd(vp, vq));
    const __m256d p_pos = _mm256_cmp_pd(vp, zero, _CMP_GT_OQ);
    const __m256d q_pos = _mm256_cmp_pd(vq, zero, _CMP_GT_OQ);
    // Masked lanes take ratio 1 so the log stays finite and contributes 0.
    const __m256d rp = _mm256_blendv_pd(one, _mm256_div_pd(vp, m), p_pos);
    const __m256d rq = _mm256_blendv_pd(one, _mm256_div_pd(vq, m), q_pos);
    const __m256d tp = _mm256_and_pd(p_pos, _mm256_mul_pd(vp, log_pd(rp)));
    const __m256d tq = _mm256_and_pd(q_pos, _mm256_mul_pd(vq, log_pd(rq)));
    acc = _mm256_add_pd(acc, _mm256_add_pd(tp, tq));
  }
  double r = hsum(acc);
  for (; i < n; ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    if (p[i] > 0.0) r += p[i] * std::log(p[i] / m);
    if (q[i] > 0.0) r += q[i] * std::log(q[i] / m);
  }
  return 0.5 * r;
}

void sub_avx2(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] - b[i];
}

void blend_avx2(const double* base, const double* layer, const double* diff, double scale,
                double coef, double* out, std::size_t n) {
  const __m256d vs = _mm256_set1_pd(scale);
  const __m256d vc = _mm256_set1_pd(coef);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d inner =
        _mm256_add_pd(_mm256_loadu_pd(layer + i), _mm256_mul_pd(vc, _mm256_loadu_pd(diff + i)));
    _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(base + i), _mm256_mul_pd(vs, inner)));
  }
  for (; i < n; ++i) out[i] = base[i] + scale * (layer[i] + coef * diff[i]);
}

void scale_avx2(double* x, double factor, std::size_t n) {
  const __m256d f = _mm256_set1_pd(factor);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(x + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), f));
  for (; i < n; ++i) x[i] *= factor;
}

constexpr KernelTable kAvx2{
    Backend::kAvx2, "avx2",   max_avx2,   sum_avx2,  exp_shift_avx2,
    jsd_avx2,       sub_avx2, blend_avx2, scale_avx2,
};

}  // namespace

const KernelTable* detail::avx2_table() { return &kAvx2; }

}  // namespace eva::kernels

#else

const eva::kernels::KernelTable* eva::kernels::detail::avx2_table() { return nullptr; }

#endif
