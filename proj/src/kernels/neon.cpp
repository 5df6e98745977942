// SPDX-License-Identifier: Apache-2.0
//
// AArch64 NEON backend, 2 doubles per lane. Same polynomials as the AVX2
// backend so the two agree to rounding.
#include "backends.hpp"

#if defined(EVA_HAVE_NEON)

#include <arm_neon.h>

#include <cmath>
#include <limits>

namespace eva::kernels {
namespace {

inline float64x2_t exp_pd(float64x2_t x) {
  const float64x2_t kMinArg = vdupq_n_f64(-708.39);
  const uint64x2_t underflow = vcltq_f64(x, kMinArg);
  x = vminq_f64(vmaxq_f64(x, kMinArg), vdupq_n_f64(709.0));

  const float64x2_t k = vrndnq_f64(vmulq_f64(x, vdupq_n_f64(1.4426950408889634)));
  float64x2_t r = vfmsq_f64(x, k, vdupq_n_f64(6.93147180369123816490e-01));
  r = vfmsq_f64(r, k, vdupq_n_f64(1.90821492927058770002e-10));

  float64x2_t p = vdupq_n_f64(1.0 / 6227020800.0);
  p = vfmaq_f64(vdupq_n_f64(1.0 / 479001600.0), p, r);
  p = vfmaq_f64(vdupq_n_f64(1.0 / 39916800.0), p, r);
  p = vfmaq_f64(vdupq_n_f64(1.0 / 3628800.0), p, r);
  p = vfmaq_f64(vdupq_n_f64(1.0 / 362880.0), p, r);
  p = vfmaq_f64(vdupq_n_f64(1.0 / 40320.0), p, r);
  p = vfmaq_f64(vdupq_n_f64(1.0 / 5040.0), p, r);
  p = vfmaq_f64(vdupq_n_f64(1.0 / 720.0), p, r);
  p = vfmaq_f64(vdupq_n_f64(1.0 / 120.0), p, r);
  p = vfmaq_f64(vdupq_n_f64(1.0 / 24.0), p, r);
  p = vfmaq_f64(vdupq_n_f64(1.0 / 6.0), p, r);
  p = vfmaq_f64(vdupq_n_f64(0.5), p, r);
  p = vfmaq_f64(vdupq_n_f64(1.0), p, r);
  p = vfmaq_f64(vdupq_n_f64(1.0), p, r);

  const int64x2_t bits = vshlq_n_s64(vaddq_s64(vcvtq_s64_f64(k), vdupq_n_s64(1023)), 52);
  const float64x2_t result = vmulq_f64(p, vreinterpretq_f64_s64(bits));
  return vreinterpretq_f64_u64(vbicq_u64(vreinterpretq_u64_f64(result), underflow));
}

inline float64x2_t log_pd(float64x2_t x) {
  const uint64x2_t subnormal = vcltq_f64(x, vdupq_n_f64(std::numeric_limits<double>::min()));
  x = vbslq_f64(subnormal, vmulq_f64(x, vdupq_n_f64(4503599627370496.0)), x);
  float64x2_t e_adjust = vbslq_f64(subnormal, vdupq_n_f64(-52.0), vdupq_n_f64(0.0));

  const uint64x2_t xi = vreinterpretq_u64_f64(x);
  float64x2_t e = vcvtq_f64_s64(
      vsubq_s64(vreinterpretq_s64_u64(vshrq_n_u64(xi, 52)), vdupq_n_s64(1023)));
  e = vaddq_f64(e, e_adjust);

  float64x2_t m = vreinterpretq_f64_u64(
      vorrq_u64(vandq_u64(xi, vdupq_n_u64(0x000FFFFFFFFFFFFFULL)),
                vdupq_n_u64(0x3FF0000000000000ULL)));
  const uint64x2_t big = vcgtq_f64(m, vdupq_n_f64(1.4142135623730951));
  m = vbslq_f64(big, vmulq_f64(m, vdupq_n_f64(0.5)), m);
  e = vaddq_f64(e, vbslq_f64(big, vdupq_n_f64(1.0), vdupq_n_f64(0.0)));

  const float64x2_t one = vdupq_n_f64(1.0);
  const float64x2_t s = vdivq_f64(vsubq_f64(m, one), vaddq_f64(m, one));
  const float64x2_t z = vmulq_f64(s, s);
  float64x2_t p = vdupq_n_f64(1.0 / 23.0);
  p = vfmaq_f64(vdupq_n_f64(1.0 / 21.0), p, z);
  p = vfmaq_f64(vdupq_n_f64(1.0 / 19.0), p, z);
  p = vfmaq_f64(vdupq_n_f64(1.0 / 17.0), p, z);
  p = vfmaq_f64(vdupq_n_f64(1.0 / 15.0), p, z);
  p = vfmaq_f64(vdupq_n_f64(1.0 / 13.0), p, z);
  p = vfmaq_f64(vdupq_n_f64(1.0 / 11.0), p, z);
  p = vfmaq_f64(vdupq_n_f64(1.0 / 9.0), p, z);
  p = vfmaq_f64(vdupq_n_f64(1.0 / 7.0), p, z);
  p = vfmaq_f64(vdupq_n_f64(1.0 / 5.0), p, z);
  p = vfmaq_f64(vdupq_n_f64(1.0 / 3.0), p, z);
  const float64x2_t two_s = vaddq_f64(s, s);
  const float64x2_t log_m = vfmaq_f64(two_s, vmulq_f64(two_s, z), p);

  const float64x2_t lo = vfmaq_f64(log_m, e, vdupq_n_f64(1.90821492927058770002e-10));
  return vfmaq_f64(lo, e, vdupq_n_f64(6.93147180369123816490e-01));
}

double max_neon(const double* x, std::size_t n) {
  float64x2_t m = vdupq_n_f64(-std::numeric_limits<double>::infinity());
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) m = vmaxq_f64(m, vld1q_f64(x + i));
  double r = vmaxvq_f64(m);
  for (; i < n; ++i) r = x[i] > r ? x[i] : r;
  return r;
}

double sum_neon(const double* x, std::size_t n) {
  float64x2_t s = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) s = vaddq_f64(s, vld1q_f64(x + i));
  double r = vaddvq_f64(s);
  for (; i < n; ++i) r += x[i];
  return r;
}

double exp_shift_neon(const double* x, double shift, double scale, double* out,
                      std::size_t n) {
  const float64x2_t vshift = vdupq_n_f64(shift);
  const float64x2_t vscale = vdupq_n_f64(scale);
  float64x2_t s = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t e = exp_pd(vmulq_f64(vsubq_f64(vld1q_f64(x + i), vshift), vscale));
    vst1q_f64(out + i, e);
    s = vaddq_f64(s, e);
  }
  double r = vaddvq_f64(s);
  for (; i < n; ++i) {
    out[i] = std::exp((x[i] - shift) * scale);
    r += out[i];
  }
  return r;
}

double jsd_neon(const double* p, const double* q, std::size_t n) {
  const float64x2_t zero = vdupq_n_f64(0.0);
  const float64x2_t half = vdupq_n_f64(0.5);
  const float64x2_t one = vdupq_n_f64(1.0);
  float64x2_t acc = zero;
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t vp = vld1q_f64(p + i);
    const float64x2_t vq = vld1q_f64(q + i);
    const float64x2_t m = vmulq_f64(half, vaddq_f64(vp, vq));
    const uint64x2_t p_pos = vcgtq_f64(vp, zero);
    const uint64x2_t q_pos = vcgtq_f64(vq, zero);
    const float64x2_t rp = vbslq_f64(p_pos, vdivq_f64(vp, m), one);
    const float64x2_t rq = vbslq_f64(q_pos, vdivq_f64(vq, m), one);
    const float64x2_t tp = vbslq_f64(p_pos, vmulq_f64(vp, log_pd(rp)), zero);
    const float64x2_t tq = vbslq_f64(q_pos, vmulq_f64(vq, log_pd(rq)), zero);
    acc = vaddq_f64(acc, vaddq_f64(tp, tq));
  }
  double r = vaddvq_f64(acc);
  for (; i < n; ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    if (p[i] > 0.0) r += p[i] * std::log(p[i] / m);
    if (q[i] > 0.0) r += q[i] * std::log(q[i] / m);
  }
  return 0.5 * r;
}

void sub_neon(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vsubq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  for (; i < n; ++i) out[i] = a[i] - b[i];
}

void blend_neon(const double* base, const double* layer, const double* diff, double scale,
                double coef, double* out, std::size_t n) {
  const float64x2_t vs = vdupq_n_f64(scale);
  const float64x2_t vc = vdupq_n_f64(coef);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t inner = vaddq_f64(vld1q_f64(layer + i), vmulq_f64(vc, vld1q_f64(diff + i)));
    vst1q_f64(out + i, vaddq_f64(vld1q_f64(base + i), vmulq_f64(vs, inner)));
  }
  for (; i < n; ++i) out[i] = base[i] + scale * (layer[i] + coef * diff[i]);
}

void scale_neon(double* x, double factor, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(x + i, vmulq_f64(vld1q_f64(x + i), vdupq_n_f64(factor)));
  for (; i < n; ++i) x[i] *= factor;
}

constexpr KernelTable kNeon{
    Backend::kNeon, "neon",   max_neon,   sum_neon,  exp_shift_neon,
    jsd_neon,       sub_neon, blend_neon, scale_neon,
};

}  // namespace

const KernelTable* detail::neon_table() { return &kNeon; }

}  // namespace eva::kernels

#else

const eva::kernels::KernelTable* eva::kernels::detail::neon_table() { return nullptr; }

#endif
