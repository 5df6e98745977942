// SPDX-License-Identifier: Apache-2.0
#include "eva/layer_dynamics.hpp"

#include <algorithm>

namespace eva {
namespace {

const std::vector<LogitVector>& stream_logits(const StepTrace& trace, Stream stream) {
  return stream == Stream::kOriginal ? trace.original_logits : trace.prior_logits;
}

std::size_t argmax_index(const std::vector<double>& scores) {
  return static_cast<std::size_t>(argmax(scores));
}

// Selection is an analysis step: always at temperature 1.
CandidateSet candidates_for(const StepTrace& trace, const DecodeConfig& cfg, LayerIndex layer,
                            const Distribution& final_original) {
  if (cfg.candidate_source == CandidateSource::kFinalLayer)
    return top_p_candidates(final_original, cfg.top_p, trace.final_layer());
  return top_p_candidates(softmax(trace.original_logits[layer]), cfg.top_p, layer);
}

}  // namespace

const char* to_string(SelectionMethod m) {
  return m == SelectionMethod::kEvaMaxJsd ? "eva_max_jsd" : "deco_max_prob";
}

double LayerSelection::jsd_at(LayerIndex layer) const {
  if (!window.contains(layer) || jsd_by_layer.empty())
    raise(ErrorKind::kInvalidInput, "no JSD recorded for layer " + std::to_string(layer));
  return jsd_by_layer[static_cast<std::size_t>(layer - window.lo)];
}

std::vector<Distribution> layer_distributions(const StepTrace& trace, Stream stream,
                                              double temperature) {
  trace.validate();
  std::vector<Distribution> out;
  out.reserve(trace.num_layers());
  for (const LogitVector& logits : stream_logits(trace, stream))
    out.push_back(softmax(logits, temperature));
  return out;
}

LayerSelection select_layer_eva(const StepTrace& trace, const DecodeConfig& cfg) {
  trace.validate();
  LayerSelection sel;
  sel.method = SelectionMethod::kEvaMaxJsd;
  sel.window = cfg.resolve_window(trace.num_layers());

  const Distribution final_original = softmax(trace.original_logits[trace.final_layer()]);
  std::vector<CandidateSet> per_layer;
  for (LayerIndex j = sel.window.lo; j <= sel.window.hi; ++j) {
    CandidateSet cand = candidates_for(trace, cfg, j, final_original);
    sel.jsd_by_layer.push_back(candidate_jsd(softmax(trace.original_logits[j]),
                                             softmax(trace.prior_logits[j]), cand,
                                             cfg.renormalize_candidates));
    per_layer.push_back(std::move(cand));
  }
  const std::size_t best = argmax_index(sel.jsd_by_layer);
  sel.target_layer = sel.window.lo + static_cast<LayerIndex>(best);
  sel.candidate_set = std::move(per_layer[best]);
  return sel;
}

LayerSelection select_layer_deco(const StepTrace& trace, const DecodeConfig& cfg) {
  trace.validate();
  LayerSelection sel;
  sel.method = SelectionMethod::kDecoMaxProb;
  sel.window = cfg.resolve_window(trace.num_layers());

  const Distribution final_original = softmax(trace.original_logits[trace.final_layer()]);
  std::vector<CandidateSet> per_layer;
  for (LayerIndex j = sel.window.lo; j <= sel.window.hi; ++j) {
    CandidateSet cand = candidates_for(trace, cfg, j, final_original);
    const Distribution dist = softmax(trace.original_logits[j]);
    double best = 0.0;
    for (TokenId t : cand.token_ids) best = std::max(best, dist[t]);
    sel.candidate_prob_by_layer.push_back(best);
    per_layer.push_back(std::move(cand));
  }
  const std::size_t best = argmax_index(sel.candidate_prob_by_layer);
  sel.target_layer = sel.window.lo + static_cast<LayerIndex>(best);
  sel.candidate_set = std::move(per_layer[best]);
  return sel;
}

LayerEvolutionReport evolution_report(const StepTrace& trace, const DecodeConfig& cfg,
                                      std::size_t top_k) {
  trace.validate();
  if (top_k == 0 || top_k > trace.vocab_size())
    raise(ErrorKind::kInvalidInput, "top_k must be in [1, vocab_size]");

  const std::vector<Distribution> original = layer_distributions(trace, Stream::kOriginal);
  const std::vector<Distribution> prior = layer_distributions(trace, Stream::kPrior);
  const Distribution& final_original = original.back();

  LayerEvolutionReport report;
  report.step_index = trace.step_index;
  const std::vector<TokenId> ranked = rank_tokens(final_original);
  report.tracked_tokens.assign(ranked.begin(), ranked.begin() + static_cast<long>(top_k));
  report.candidate_set = top_p_candidates(final_original, cfg.top_p, trace.final_layer());

  for (std::size_t j = 0; j < original.size(); ++j) {
    LayerRecord rec;
    rec.layer = static_cast<LayerIndex>(j);
    for (TokenId t : report.tracked_tokens) {
      rec.original_probs.push_back(original[j][t]);
      rec.prior_probs.push_back(prior[j][t]);
    }
    const CandidateSet cand = cfg.candidate_source == CandidateSource::kFinalLayer
                                  ? report.candidate_set
                                  : top_p_candidates(original[j], cfg.top_p, rec.layer);
    rec.candidate_jsd = candidate_jsd(original[j], prior[j], cand, cfg.renormalize_candidates);
    report.layers.push_back(std::move(rec));
  }
  return report;
}

}  // namespace eva
