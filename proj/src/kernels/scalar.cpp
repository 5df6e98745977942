// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <limits>

#include "backends.hpp"

namespace eva::kernels {
namespace {

double max_scalar(const double* x, std::size_t n) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) m = x[i] > m ? x[i] : m;
  return m;
}

double sum_scalar(const double* x, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i];
  return s;
}

double exp_shift_scalar(const double* x, double shift, double scale, double* out,
                        std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = std::exp((x[i] - shift) * scale);
    s += out[i];
  }
  return s;
}

double jsd_scalar(const double* p, const double* q, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    if (p[i] > 0.0) acc += p[i] * std::log(p[i] / m);
    if (q[i] > 0.0) acc += q[i] * std::log(q[i] / m);
  }
  return 0.5 * acc;
}

void sub_scalar(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void blend_scalar(const double* base, const double* layer, const double* diff, double scale,
                  double coef, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = base[i] + scale * (layer[i] + coef * diff[i]);
}

void scale_scalar(double* x, double factor, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= factor;
}

constexpr KernelTable kScalar{
    Backend::kScalar, "scalar",  max_scalar,   sum_scalar,  exp_shift_scalar,
    jsd_scalar,       sub_scalar, blend_scalar, scale_scalar,
};

}  // namespace

const KernelTable& scalar_table() { return kScalar; }

}  // namespace eva::kernels
