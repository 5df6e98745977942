// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "eva/core.hpp"

namespace eva {

/// Tokens kept by top-p truncation of one layer's distribution.
struct CandidateSet {
  std::vector<TokenId> token_ids;  // ascending
  LayerIndex source_layer = 0;
  double p_threshold = 1.0;

  std::size_t size() const noexcept { return token_ids.size(); }
  bool contains(TokenId id) const;
  friend bool operator==(const CandidateSet&, const CandidateSet&) = default;
};

/// Smallest set of most-probable tokens whose mass reaches p. Probability
/// ties are broken by ascending token id; the top-1 token is always included.
CandidateSet top_p_candidates(const Distribution& dist, double p, LayerIndex source_layer = 0);

/// Tokens sorted by descending probability, ascending id on ties.
std::vector<TokenId> rank_tokens(const Distribution& dist);

/// Full-vocabulary distribution with mass only on the candidates, rescaled to 1.
/// Zero on-candidate mass yields the uniform distribution over the candidates.
Distribution restrict_and_renormalize(const Distribution& dist, const CandidateSet& cand);

/// Candidate probabilities plus one trailing entry for the mass the
/// candidates do not cover. Length = |cand| + 1.
Distribution restrict_with_remainder(const Distribution& dist, const CandidateSet& cand);

/// Jensen-Shannon divergence in nats, clamped to [0, ln 2].
double js_divergence(const Distribution& p, const Distribution& q);

/// JSD of the two distributions after restricting both to the candidates.
/// With renormalize = false the uncovered mass becomes one extra outcome.
double candidate_jsd(const Distribution& orig, const Distribution& prior, const CandidateSet& cand,
                     bool renormalize = true);

}  // namespace eva
