// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "eva/core.hpp"
#include "eva/layer_dynamics.hpp"

namespace eva {

/// Scaling factors taken from the selected layer.
struct ModulationState {
  double max_prob = 1.0;  // max of full-vocabulary softmax of original logits at the target
  double max_jsd = 0.0;   // candidate JSD at the target
  LayerIndex target_layer = 0;
};

struct CorrectionResult {
  LogitVector visual_fact_logits;  // original[M] - prior[M]
  LogitVector corrected_logits;
  Distribution corrected_dist;
  ModulationState modulation;
  LayerSelection selection;
};

/// Elementwise original - prior at the selected layer.
LogitVector extract_visual_facts(const StepTrace& trace, const LayerSelection& selection);

ModulationState modulation_state(const StepTrace& trace, const LayerSelection& selection);

/// final + alpha * c_p * (original[M] + c_j * visual_facts), where c_p is
/// max_prob and c_j is max_jsd, each replaced by 1 when its modulation flag is
/// off. Applied over the full vocabulary; throws kNumeric on overflow.
CorrectionResult correct_logits(const StepTrace& trace, const LayerSelection& selection,
                                const DecodeConfig& cfg);

/// Layer blend without a prior stream: final + alpha * max_prob * original[A].
LogitVector deco_blend(const StepTrace& trace, const LayerSelection& selection,
                       const DecodeConfig& cfg);

}  // namespace eva
