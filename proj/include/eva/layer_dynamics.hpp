// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "eva/core.hpp"
#include "eva/probkit.hpp"

namespace eva {

enum class Stream { kOriginal, kPrior };
enum class SelectionMethod { kEvaMaxJsd, kDecoMaxProb };

const char* to_string(SelectionMethod m);

/// Outcome of choosing the intermediate layer that feeds the correction.
///
/// Per-layer scores are indexed by (layer - window.lo). EVA fills jsd_by_layer;
/// DeCo fills candidate_prob_by_layer (the largest candidate-token probability
/// of the original stream at that layer).
struct LayerSelection {
  LayerIndex target_layer = 0;
  LayerWindow window;
  std::vector<double> jsd_by_layer;
  std::vector<double> candidate_prob_by_layer;
  CandidateSet candidate_set;
  SelectionMethod method = SelectionMethod::kEvaMaxJsd;

  double jsd_at(LayerIndex layer) const;
  double target_jsd() const { return jsd_at(target_layer); }
};

struct LayerRecord {
  LayerIndex layer = 0;
  std::vector<double> original_probs;  // parallel to tracked_tokens
  std::vector<double> prior_probs;
  double candidate_jsd = 0.0;
};

/// Probability trajectories of the final layer's top-k tokens through every
/// layer of both streams, plus the candidate JSD at each layer.
struct LayerEvolutionReport {
  std::size_t step_index = 0;
  std::vector<TokenId> tracked_tokens;
  CandidateSet candidate_set;
  std::vector<LayerRecord> layers;
};

std::vector<Distribution> layer_distributions(const StepTrace& trace, Stream stream,
                                              double temperature = 1.0);

/// Candidate set from the final-layer original-stream distribution, then the
/// window layer with maximal candidate JSD between streams (lowest on ties).
LayerSelection select_layer_eva(const StepTrace& trace, const DecodeConfig& cfg);

/// Window layer whose original stream puts the most probability on a single
/// candidate token (lowest on ties).
LayerSelection select_layer_deco(const StepTrace& trace, const DecodeConfig& cfg);

LayerEvolutionReport evolution_report(const StepTrace& trace, const DecodeConfig& cfg,
                                      std::size_t top_k);

}  // namespace eva
