// SPDX-License-Identifier: Apache-2.0
#include "eva/probkit.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "eva/kernels.hpp"

namespace eva {
namespace {

// Absorbs accumulated rounding so that p = 1 stops at the last nonzero token.
constexpr double kMassSlack = 1e-12;

void check_candidates(const Distribution& dist, const CandidateSet& cand) {
  if (cand.token_ids.empty()) raise(ErrorKind::kInvalidInput, "empty candidate set");
  for (TokenId t : cand.token_ids)
    if (t < 0 || static_cast<std::size_t>(t) >= dist.size())
      raise(ErrorKind::kInvalidInput, "candidate token " + std::to_string(t) + " out of vocabulary");
}

}  // namespace

bool CandidateSet::contains(TokenId id) const {
  return std::binary_search(token_ids.begin(), token_ids.end(), id);
}

std::vector<TokenId> rank_tokens(const Distribution& dist) {
  std::vector<TokenId> order(dist.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](TokenId a, TokenId b) { return dist[a] > dist[b]; });
  return order;
}

CandidateSet top_p_candidates(const Distribution& dist, double p, LayerIndex source_layer) {
  if (!(p > 0.0 && p <= 1.0)) raise(ErrorKind::kInvalidInput, "top-p threshold must be in (0, 1]");
  if (dist.size() == 0) raise(ErrorKind::kInvalidInput, "empty distribution");
  const std::vector<TokenId> order = rank_tokens(dist);
  CandidateSet out{{}, source_layer, p};
  double mass = 0.0;
  for (TokenId t : order) {
    out.token_ids.push_back(t);
    mass += dist[t];
    if (mass >= p - kMassSlack) break;
  }
  std::sort(out.token_ids.begin(), out.token_ids.end());
  return out;
}

Distribution restrict_and_renormalize(const Distribution& dist, const CandidateSet& cand) {
  check_candidates(dist, cand);
  std::vector<double> out(dist.size(), 0.0);
  double mass = 0.0;
  for (TokenId t : cand.token_ids) mass += dist[t];
  if (mass > 0.0) {
    for (TokenId t : cand.token_ids) out[t] = dist[t] / mass;
  } else {
    const double u = 1.0 / static_cast<double>(cand.size());
    for (TokenId t : cand.token_ids) out[t] = u;
  }
  return Distribution::trusted(std::move(out));
}

Distribution restrict_with_remainder(const Distribution& dist, const CandidateSet& cand) {
  check_candidates(dist, cand);
  std::vector<double> out;
  out.reserve(cand.size() + 1);
  double mass = 0.0;
  for (TokenId t : cand.token_ids) {
    out.push_back(dist[t]);
    mass += dist[t];
  }
  out.push_back(std::max(0.0, 1.0 - mass));
  return Distribution::trusted(std::move(out));
}

double js_divergence(const Distribution& p, const Distribution& q) {
  if (p.size() != q.size())
    raise(ErrorKind::kInvalidInput, "js_divergence length mismatch: " + std::to_string(p.size()) +
                                        " vs " + std::to_string(q.size()));
  const double d = kernels::jsd(p.probs(), q.probs());
  return std::clamp(d, 0.0, std::numbers::ln2);
}

double candidate_jsd(const Distribution& orig, const Distribution& prior, const CandidateSet& cand,
                     bool renormalize) {
  if (orig.size() != prior.size())
    raise(ErrorKind::kInvalidInput, "candidate_jsd over different vocabularies");
  if (renormalize)
    return js_divergence(restrict_and_renormalize(orig, cand), restrict_and_renormalize(prior, cand));
  return js_divergence(restrict_with_remainder(orig, cand), restrict_with_remainder(prior, cand));
}

}  // namespace eva
