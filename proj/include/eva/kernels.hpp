// SPDX-License-Identifier: Apache-2.0
//
// Vocabulary-length inner loops. Each backend implements the same table; the
// scalar backend is the reference and the SIMD backends are tested against it.
#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace eva::kernels {

enum class Backend { kScalar, kAvx2, kNeon };

struct KernelTable {
  Backend backend;
  const char* name;
  double (*max)(const double* x, std::size_t n);
  double (*sum)(const double* x, std::size_t n);
  // out[i] = exp((x[i] - shift) * scale); returns the sum of out.
  double (*exp_shift)(const double* x, double shift, double scale, double* out,
                      std::size_t n);
  // sum_i 1/2 [p_i ln(p_i/m_i) + q_i ln(q_i/m_i)], m = (p + q)/2, 0 ln 0 = 0.
  double (*jsd)(const double* p, const double* q, std::size_t n);
  // out[i] = a[i] - b[i]
  void (*sub)(const double* a, const double* b, double* out, std::size_t n);
  // out[i] = base[i] + scale * (layer[i] + coef * diff[i])
  void (*blend)(const double* base, const double* layer, const double* diff,
                double scale, double coef, double* out, std::size_t n);
  // x[i] *= factor
  void (*scale)(double* x, double factor, std::size_t n);
};

const KernelTable& scalar_table();

/// Backends usable on this CPU, scalar first.
std::vector<Backend> available_backends();
const KernelTable& table(Backend b);

/// The table used by the wrappers below. Chosen once from CPU features; the
/// EVA_SIMD environment variable (scalar|avx2|neon|auto) overrides it.
const KernelTable& active();
/// Returns false (and changes nothing) if b is unavailable on this CPU.
bool set_backend(Backend b);

const char* to_string(Backend b);
Backend parse_backend(const std::string& name);

double max(std::span<const double> x);
double sum(std::span<const double> x);
double exp_shift(std::span<const double> x, double shift, double scale, std::span<double> out);
double jsd(std::span<const double> p, std::span<const double> q);
void sub(std::span<const double> a, std::span<const double> b, std::span<double> out);
void blend(std::span<const double> base, std::span<const double> layer,
           std::span<const double> diff, double scale, double coef, std::span<double> out);
void scale(std::span<double> x, double factor);

}  // namespace eva::kernels
