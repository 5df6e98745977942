// SPDX-License-Identifier: Apache-2.0
#include <atomic>
#include <cstdlib>
#include <string>

#include "backends.hpp"
#include "eva/core.hpp"

namespace eva::kernels {
namespace {

bool cpu_has_avx2() {
#if defined(EVA_HAVE_AVX2) && (defined(__x86_64__) || defined(__i386__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* lookup(Backend b) {
  switch (b) {
    case Backend::kScalar:
      return &scalar_table();
    case Backend::kAvx2:
      return cpu_has_avx2() ? detail::avx2_table() : nullptr;
    case Backend::kNeon:
      // NEON is architecturally mandatory on AArch64.
      return detail::neon_table();
  }
  return nullptr;
}

const KernelTable* pick_default() {
  if (const char* env = std::getenv("EVA_SIMD"); env != nullptr && std::string(env) != "auto") {
    const std::string name(env);
    for (Backend b : {Backend::kScalar, Backend::kAvx2, Backend::kNeon})
      if (name == to_string(b))
        if (const KernelTable* t = lookup(b)) return t;
  }
  if (const KernelTable* t = lookup(Backend::kAvx2)) return t;
  if (const KernelTable* t = lookup(Backend::kNeon)) return t;
  return &scalar_table();
}

std::atomic<const KernelTable*>& active_slot() {
  static std::atomic<const KernelTable*> slot{pick_default()};
  return slot;
}

}  // namespace

std::vector<Backend> available_backends() {
  std::vector<Backend> out{Backend::kScalar};
  for (Backend b : {Backend::kAvx2, Backend::kNeon})
    if (lookup(b) != nullptr) out.push_back(b);
  return out;
}

const KernelTable& table(Backend b) {
  const KernelTable* t = lookup(b);
  if (t == nullptr) raise(ErrorKind::kConfig, std::string("kernel backend unavailable: ") + to_string(b));
  return *t;
}

const KernelTable& active() { return *active_slot().load(std::memory_order_acquire); }

bool set_backend(Backend b) {
  const KernelTable* t = lookup(b);
  if (t == nullptr) return false;
  active_slot().store(t, std::memory_order_release);
  return true;
}

const char* to_string(Backend b) {
  switch (b) {
    case Backend::kScalar: return "scalar";
    case Backend::kAvx2: return "avx2";
    case Backend::kNeon: return "neon";
  }
  return "?";
}

Backend parse_backend(const std::string& name) {
  if (name == "scalar") return Backend::kScalar;
  if (name == "avx2") return Backend::kAvx2;
  if (name == "neon") return Backend::kNeon;
  raise(ErrorKind::kConfig, "unknown kernel backend: " + name);
}

double max(std::span<const double> x) { return active().max(x.data(), x.size()); }
double sum(std::span<const double> x) { return active().sum(x.data(), x.size()); }

double exp_shift(std::span<const double> x, double shift, double scale, std::span<double> out) {
  return active().exp_shift(x.data(), shift, scale, out.data(), x.size());
}

double jsd(std::span<const double> p, std::span<const double> q) {
  return active().jsd(p.data(), q.data(), p.size());
}

void sub(std::span<const double> a, std::span<const double> b, std::span<double> out) {
  active().sub(a.data(), b.data(), out.data(), a.size());
}

void blend(std::span<const double> base, std::span<const double> layer,
           std::span<const double> diff, double scale, double coef, std::span<double> out) {
  active().blend(base.data(), layer.data(), diff.data(), scale, coef, out.data(), base.size());
}

void scale(std::span<double> x, double factor) { active().scale(x.data(), factor, x.size()); }

}  // namespace eva::kernels
