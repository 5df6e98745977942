// SPDX-License-Identifier: Apache-2.0
#include "eva/eva_corrector.hpp"

#include <cmath>

#include "eva/kernels.hpp"

namespace eva {
namespace {

void check_target(const StepTrace& trace, const LayerSelection& selection) {
  trace.validate();
  if (selection.target_layer < 0 || selection.target_layer >= trace.final_layer())
    raise(ErrorKind::kInvalidInput,
          "target layer " + std::to_string(selection.target_layer) + " not an intermediate layer");
}

LogitVector checked_logits(std::vector<double> values, const StepTrace& trace) {
  for (double v : values)
    if (!std::isfinite(v))
      raise(ErrorKind::kNumeric,
            "corrected logits overflowed at step " + std::to_string(trace.step_index));
  return LogitVector(std::move(values));
}

}  // namespace

LogitVector extract_visual_facts(const StepTrace& trace, const LayerSelection& selection) {
  check_target(trace, selection);
  const auto m = static_cast<std::size_t>(selection.target_layer);
  std::vector<double> out(trace.vocab_size());
  kernels::sub(trace.original_logits[m].values(), trace.prior_logits[m].values(), out);
  return checked_logits(std::move(out), trace);
}

ModulationState modulation_state(const StepTrace& trace, const LayerSelection& selection) {
  check_target(trace, selection);
  const Distribution at_target = softmax(trace.original_logits[selection.target_layer]);
  ModulationState state;
  state.target_layer = selection.target_layer;
  state.max_prob = kernels::max(at_target.probs());
  state.max_jsd = selection.jsd_by_layer.empty() ? 0.0 : selection.target_jsd();
  return state;
}

CorrectionResult correct_logits(const StepTrace& trace, const LayerSelection& selection,
                                const DecodeConfig& cfg) {
  if (!(cfg.alpha >= 0.0)) raise(ErrorKind::kConfig, "alpha must be >= 0");
  CorrectionResult result;
  result.visual_fact_logits = extract_visual_facts(trace, selection);
  result.modulation = modulation_state(trace, selection);
  result.selection = selection;

  const double c_p = cfg.modulation.use_max_prob ? result.modulation.max_prob : 1.0;
  const double c_j = cfg.modulation.use_max_jsd ? result.modulation.max_jsd : 1.0;
  std::vector<double> out(trace.vocab_size());
  kernels::blend(trace.original_logits[trace.final_layer()].values(),
                 trace.original_logits[selection.target_layer].values(),
                 result.visual_fact_logits.values(), cfg.alpha * c_p, c_j, out);
  result.corrected_logits = checked_logits(std::move(out), trace);
  result.corrected_dist = softmax(result.corrected_logits);
  return result;
}

LogitVector deco_blend(const StepTrace& trace, const LayerSelection& selection,
                       const DecodeConfig& cfg) {
  check_target(trace, selection);
  const double max_prob = kernels::max(softmax(trace.original_logits[selection.target_layer]).probs());
  const std::vector<double> zeros(trace.vocab_size(), 0.0);
  std::vector<double> out(trace.vocab_size());
  kernels::blend(trace.original_logits[trace.final_layer()].values(),
                 trace.original_logits[selection.target_layer].values(), zeros,
                 cfg.alpha * max_prob, 0.0, out);
  return checked_logits(std::move(out), trace);
}

}  // namespace eva
