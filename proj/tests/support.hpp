// SPDX-License-Identifier: Apache-2.0
//
// Test helpers: random traces, a branching scripted source, and reference
// implementations written from the formulas directly in 50-digit arithmetic.
// Nothing here calls into the library's numeric code.
#pragma once

#include <algorithm>
#include <boost/multiprecision/cpp_bin_float.hpp>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "eva/core.hpp"
#include "eva/decoder.hpp"

namespace eva::test {

using Real = boost::multiprecision::cpp_bin_float_50;

// ---------------------------------------------------------------------------
// Generators

inline std::vector<double> random_logits(std::mt19937_64& g, std::size_t v, double scale = 2.0) {
  std::normal_distribution<double> n(0.0, scale);
  std::vector<double> out(v);
  for (double& x : out) x = n(g);
  return out;
}

/// Independent normal logits per layer; streams share nothing.
inline StepTrace random_trace(std::mt19937_64& g, std::size_t layers, std::size_t vocab,
                              double scale = 2.0) {
  StepTrace t;
  for (std::size_t j = 0; j < layers; ++j) {
    t.original_logits.emplace_back(random_logits(g, vocab, scale));
    t.prior_logits.emplace_back(random_logits(g, vocab, scale));
  }
  return t;
}

/// Prior = original plus small noise, which is closer to real dual streams.
inline StepTrace correlated_trace(std::mt19937_64& g, std::size_t layers, std::size_t vocab) {
  std::normal_distribution<double> n(0.0, 1.0);
  StepTrace t;
  std::vector<double> base(vocab);
  for (std::size_t j = 0; j < layers; ++j) {
    for (double& x : base) x += 0.5 * n(g);
    std::vector<double> prior = base;
    for (double& x : prior) x += 0.7 * n(g);
    t.original_logits.emplace_back(base);
    t.prior_logits.emplace_back(std::move(prior));
  }
  return t;
}

inline std::vector<double> random_distribution(std::mt19937_64& g, std::size_t v) {
  std::exponential_distribution<double> e(1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> p(v);
  for (double& x : p) x = u(g) < 0.15 ? 0.0 : e(g);
  if (std::all_of(p.begin(), p.end(), [](double x) { return x == 0.0; })) p[0] = 1.0;
  const double s = std::accumulate(p.begin(), p.end(), 0.0);
  for (double& x : p) x /= s;
  return p;
}

/// Live source whose trace at a prefix is random but a pure function of it.
class ScriptedSource final : public LogitSource {
 public:
  ScriptedSource(std::uint64_t seed, std::size_t layers, std::size_t vocab, std::size_t length,
                 double scale = 2.0)
      : seed_(seed), layers_(layers), vocab_(vocab), length_(length), scale_(scale) {}

  std::optional<StepTrace> step(std::span<const TokenId> prefix) const override {
    if (prefix.size() >= length_) return std::nullopt;
    std::uint64_t h = seed_ * 0x9E3779B97F4A7C15ULL + prefix.size();
    for (TokenId t : prefix) h = (h ^ static_cast<std::uint64_t>(t + 1)) * 0x100000001B3ULL;
    std::mt19937_64 g(h);
    StepTrace t = random_trace(g, layers_, vocab_, scale_);
    t.step_index = prefix.size();
    return t;
  }
  bool supports_branching() const override { return true; }

 private:
  std::uint64_t seed_;
  std::size_t layers_, vocab_, length_;
  double scale_;
};

// ---------------------------------------------------------------------------
// Reference formulas

inline std::vector<Real> softmax_ref(std::span<const double> logits) {
  Real m = logits[0];
  for (double x : logits) m = std::max<Real>(m, Real(x));
  std::vector<Real> e(logits.size());
  Real s = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    e[i] = exp(Real(logits[i]) - m);
    s += e[i];
  }
  for (Real& x : e) x /= s;
  return e;
}

inline std::vector<Real> to_real(std::span<const double> p) { return {p.begin(), p.end()}; }

/// Smallest highest-probability prefix reaching mass p; ties go to the lower
/// id. Returned ascending.
inline std::vector<int> top_p_ref(const std::vector<Real>& probs, double p) {
  std::vector<int> ids(probs.size());
  std::iota(ids.begin(), ids.end(), 0);
  std::sort(ids.begin(), ids.end(), [&](int a, int b) {
    if (probs[a] != probs[b]) return probs[a] > probs[b];
    return a < b;
  });
  std::vector<int> out;
  Real mass = 0;
  for (int id : ids) {
    out.push_back(id);
    mass += probs[id];
    if (mass >= Real(p) - Real(1e-12)) break;
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// JSD in nats by direct summation, 0 ln 0 = 0.
inline Real jsd_ref(const std::vector<Real>& p, const std::vector<Real>& q) {
  Real d = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const Real m = (p[i] + q[i]) / 2;
    if (p[i] > 0) d += p[i] * log(p[i] / m);
    if (q[i] > 0) d += q[i] * log(q[i] / m);
  }
  return d / 2;
}

inline std::vector<Real> restrict_ref(const std::vector<Real>& p, const std::vector<int>& ids) {
  std::vector<Real> out;
  Real s = 0;
  for (int id : ids) s += p[id];
  for (int id : ids) out.push_back(s > 0 ? p[id] / s : Real(1) / Real(ids.size()));
  return out;
}

inline std::vector<Real> remainder_ref(const std::vector<Real>& p, const std::vector<int>& ids) {
  std::vector<Real> out;
  Real s = 0;
  for (int id : ids) {
    out.push_back(p[id]);
    s += p[id];
  }
  out.push_back(std::max<Real>(Real(0), 1 - s));
  return out;
}

inline Real candidate_jsd_ref(std::span<const double> orig_logits,
                              std::span<const double> prior_logits, const std::vector<int>& ids,
                              bool renormalize = true) {
  const auto p = softmax_ref(orig_logits);
  const auto q = softmax_ref(prior_logits);
  if (renormalize) return jsd_ref(restrict_ref(p, ids), restrict_ref(q, ids));
  return jsd_ref(remainder_ref(p, ids), remainder_ref(q, ids));
}

struct LayerPick {
  int layer = -1;
  std::vector<Real> scores;  // per window layer
  std::vector<int> candidates;
};

inline std::vector<int> final_candidates_ref(const StepTrace& t, double top_p) {
  return top_p_ref(softmax_ref(t.original_logits.back().values()), top_p);
}

inline LayerPick eva_layer_ref(const StepTrace& t, int lo, int hi, double top_p,
                               bool per_layer = false, bool renormalize = true) {
  LayerPick pick;
  const std::vector<int> final_ids = final_candidates_ref(t, top_p);
  Real best = -1;
  for (int j = lo; j <= hi; ++j) {
    const std::vector<int> ids =
        per_layer ? top_p_ref(softmax_ref(t.original_logits[j].values()), top_p) : final_ids;
    const Real d = candidate_jsd_ref(t.original_logits[j].values(), t.prior_logits[j].values(), ids,
                                     renormalize);
    pick.scores.push_back(d);
    if (d > best) {
      best = d;
      pick.layer = j;
      pick.candidates = ids;
    }
  }
  return pick;
}

inline LayerPick deco_layer_ref(const StepTrace& t, int lo, int hi, double top_p) {
  LayerPick pick;
  const std::vector<int> ids = final_candidates_ref(t, top_p);
  Real best = -1;
  for (int j = lo; j <= hi; ++j) {
    const auto p = softmax_ref(t.original_logits[j].values());
    Real m = 0;
    for (int id : ids) m = std::max(m, p[id]);
    pick.scores.push_back(m);
    if (m > best) {
      best = m;
      pick.layer = j;
      pick.candidates = ids;
    }
  }
  return pick;
}

struct CorrectionRef {
  int layer = -1;
  Real max_prob, max_jsd;
  std::vector<Real> logits;
};

/// logits = final + alpha * max_prob * (orig[M] + max_JSD * (orig[M] - prior[M])),
/// each coefficient replaced by 1 when its flag is off.
inline CorrectionRef correction_ref(const StepTrace& t, int lo, int hi, double top_p, double alpha,
                                    bool use_prob = true, bool use_jsd = true) {
  CorrectionRef r;
  const LayerPick pick = eva_layer_ref(t, lo, hi, top_p);
  r.layer = pick.layer;
  const auto pm = softmax_ref(t.original_logits[r.layer].values());
  r.max_prob = *std::max_element(pm.begin(), pm.end());
  r.max_jsd = pick.scores[static_cast<std::size_t>(r.layer - lo)];
  const Real cp = use_prob ? r.max_prob : Real(1);
  const Real cj = use_jsd ? r.max_jsd : Real(1);
  const auto& fin = t.original_logits.back();
  const auto& om = t.original_logits[r.layer];
  const auto& qm = t.prior_logits[r.layer];
  for (std::size_t i = 0; i < fin.size(); ++i) {
    const Real visual = Real(om[i]) - Real(qm[i]);
    r.logits.push_back(Real(fin[i]) + Real(alpha) * cp * (Real(om[i]) + cj * visual));
  }
  return r;
}

inline double max_abs_diff(std::span<const double> a, const std::vector<Real>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, static_cast<double>(abs(Real(a[i]) - b[i])));
  return m;
}

/// Highest-scoring token sequence by brute force over every path of length
/// `steps`; score is the sum of log-probabilities of the raw final logits.
/// Ties go to the lexicographically smaller sequence.
inline std::pair<std::vector<TokenId>, Real> exhaustive_best(const LogitSource& src,
                                                             std::size_t vocab, std::size_t steps) {
  std::vector<TokenId> best;
  Real best_score = 0;
  bool have = false;
  std::vector<TokenId> seq(steps, 0);
  const std::size_t total = static_cast<std::size_t>(std::pow(vocab, steps));
  for (std::size_t code = 0; code < total; ++code) {
    std::size_t c = code;
    for (std::size_t k = steps; k-- > 0;) {
      seq[k] = static_cast<TokenId>(c % vocab);
      c /= vocab;
    }
    Real score = 0;
    for (std::size_t k = 0; k < steps; ++k) {
      const auto t = src.step(std::span<const TokenId>(seq.data(), k));
      const auto p = softmax_ref(t->original_logits.back().values());
      score += log(p[seq[k]]);
    }
    if (!have || score > best_score) {
      best = seq;
      best_score = score;
      have = true;
    }
  }
  return {best, best_score};
}

}  // namespace eva::test
