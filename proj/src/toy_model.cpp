// SPDX-License-Identifier: Apache-2.0
#include "eva/toy_model.hpp"

#include <cstdio>

#include "eva/eva_corrector.hpp"
#include "eva/layer_dynamics.hpp"
#include "eva/parallel.hpp"
#include "eva/probkit.hpp"

namespace eva {
namespace {

constexpr std::uint64_t kCorpusStream = 0xA0761D6478BD642FULL;
constexpr std::size_t kContextLength = 3;

std::uint64_t prefix_key(std::span<const TokenId> prefix) {
  std::uint64_t h = rng::mix(prefix.size());
  for (TokenId t : prefix) h = rng::mix(h ^ static_cast<std::uint64_t>(static_cast<std::uint32_t>(t)));
  return h;
}

void check_plant(const PlantSpec& p, std::size_t num_layers, std::size_t vocab_size) {
  auto in_vocab = [&](TokenId t) { return t >= 0 && static_cast<std::size_t>(t) < vocab_size; };
  if (!in_vocab(p.fact_token) || !in_vocab(p.halluc_token))
    raise(ErrorKind::kConfig, "planted tokens must lie in the vocabulary");
  if (p.fact_token == p.halluc_token)
    raise(ErrorKind::kConfig, "fact_token and halluc_token must differ");
  const LayerWindow window = default_layer_window(num_layers);
  if (!window.contains(p.fact_layer))
    raise(ErrorKind::kConfig, "fact_layer " + std::to_string(p.fact_layer) +
                                  " outside the default layer window");
  if (p.prior_layer && (!window.contains(*p.prior_layer) || *p.prior_layer == p.fact_layer))
    raise(ErrorKind::kConfig, "prior_layer must be a window layer other than fact_layer");
  if (!(p.fact_boost > 0.0) || !(p.suppression > 0.0) || !(p.prior_boost > 0.0))
    raise(ErrorKind::kConfig, "plant boosts must be positive");
}

}  // namespace

void ToySpec::validate() const {
  if (num_layers < 2) raise(ErrorKind::kConfig, "toy model needs >= 2 layers");
  if (vocab_size < 2) raise(ErrorKind::kConfig, "toy model needs vocab_size >= 2");
  if (!(noise_scale >= 0.0) || !(salience >= 0.0))
    raise(ErrorKind::kConfig, "noise_scale and salience must be >= 0");
  if (plant) {
    if (vocab_size < 4) raise(ErrorKind::kConfig, "a planted toy model needs vocab_size >= 4");
    check_plant(*plant, num_layers, vocab_size);
  }
}

DecodeConfig toy_check_config() { return DecodeConfig{}; }

std::string check_planted(const StepTrace& trace, const PlantSpec& plant) {
  const DecodeConfig cfg = toy_check_config();
  const LogitVector& final_logits = trace.original_logits[trace.final_layer()];
  if (argmax(final_logits.values()) != plant.halluc_token)
    return "final-layer argmax is not the hallucinated token";
  if (!top_p_candidates(softmax(final_logits), cfg.top_p).contains(plant.fact_token))
    return "fact token not among the final-layer candidates";

  const LayerSelection sel = select_layer_eva(trace, cfg);
  if (sel.target_layer != plant.fact_layer) return "fact layer is not the max-JSD layer";
  const double top = sel.target_jsd();
  for (LayerIndex j = sel.window.lo; j <= sel.window.hi; ++j)
    if (j != plant.fact_layer && sel.jsd_at(j) >= top) return "max-JSD layer is not unique";

  const CorrectionResult corr = correct_logits(trace, sel, cfg);
  if (argmax(corr.corrected_logits.values()) != plant.fact_token)
    return "correction does not recover the fact token";
  return {};
}

ToyModel::ToyModel(ToySpec spec) : spec_(std::move(spec)) { spec_.validate(); }

TraceHeader ToyModel::header() const {
  std::string model = "toy-seed" + std::to_string(spec_.seed);
  return make_header(spec_.vocab_size, spec_.num_layers, std::move(model), 0, 1);
}

StepTrace ToyModel::build(std::uint64_t seed, std::size_t step_index) const {
  const std::size_t n = spec_.num_layers;
  const std::size_t v = spec_.vocab_size;
  rng::Engine g(seed);

  std::vector<std::vector<double>> base(n, std::vector<double>(v));
  for (std::size_t i = 0; i < v; ++i) base[0][i] = spec_.noise_scale * rng::normal(g);
  for (std::size_t j = 1; j < n; ++j)
    for (std::size_t i = 0; i < v; ++i) base[j][i] = base[j - 1][i] + spec_.noise_scale * rng::normal(g);

  std::vector<std::vector<double>> original = base;
  std::vector<std::vector<double>> prior = base;
  if (spec_.plant) {
    const PlantSpec& p = *spec_.plant;
    for (std::size_t j = 0; j < n; ++j)
      for (auto* s : {&original, &prior}) {
        (*s)[j][p.fact_token] += spec_.salience;
        (*s)[j][p.halluc_token] += spec_.salience;
      }
    original[p.fact_layer][p.fact_token] += p.fact_boost;
    for (auto* s : {&original, &prior}) {
      (*s)[n - 1][p.halluc_token] += p.suppression;
      if (p.prior_layer) (*s)[*p.prior_layer][p.halluc_token] += p.prior_boost;
    }
  }

  StepTrace trace;
  trace.step_index = step_index;
  for (std::size_t j = 0; j < n; ++j) {
    trace.original_logits.emplace_back(std::move(original[j]));
    trace.prior_logits.emplace_back(std::move(prior[j]));
  }
  // Stored at f32 precision so in-memory and on-disk traces are identical.
  return quantize_f32(trace);
}

StepTrace ToyModel::trace_for(std::span<const TokenId> prefix, std::size_t step_index) const {
  const std::uint64_t seed = rng::derive(spec_.seed, prefix_key(prefix));
  std::string last_failure;
  for (int attempt = 0; attempt < kToyMaxAttempts; ++attempt) {
    StepTrace trace = build(seed + static_cast<std::uint64_t>(attempt), step_index);
    if (!spec_.plant) return trace;
    last_failure = check_planted(trace, *spec_.plant);
    if (last_failure.empty()) return trace;
  }
  raise(ErrorKind::kGeneration, "toy construction failed " + std::to_string(kToyMaxAttempts) +
                                    " times (last: " + last_failure + ")");
}

std::optional<StepTrace> ToyModel::step(std::span<const TokenId> prefix) const {
  return trace_for(prefix, prefix.size());
}

std::vector<StepTrace> generate_trace(const ToySpec& spec, std::size_t num_steps) {
  const ToyModel model(spec);
  std::vector<StepTrace> out;
  std::vector<TokenId> prefix;
  for (std::size_t s = 0; s < num_steps; ++s) {
    StepTrace trace = model.trace_for(prefix, s);
    const TokenId token = argmax(trace.original_logits[trace.final_layer()].values());
    trace.emitted_token = token;
    out.push_back(std::move(trace));
    prefix.push_back(token);
  }
  return out;
}

AnnotatedCorpus generate_annotated_corpus(const ToySpec& spec, std::size_t n_examples,
                                          unsigned jobs) {
  if (!spec.plant) raise(ErrorKind::kConfig, "an annotated corpus needs a plant specification");
  spec.validate();
  const LayerWindow window = default_layer_window(spec.num_layers);
  const auto vocab = static_cast<std::uint64_t>(spec.vocab_size);

  AnnotatedCorpus corpus;
  corpus.header = ToyModel(spec).header();
  corpus.traces.resize(n_examples);
  corpus.annotations.resize(n_examples);
  corpus.plants.resize(n_examples);

  parallel_for(n_examples, jobs, [&](std::size_t i) {
    rng::Engine g(rng::derive(spec.seed, kCorpusStream + i));
    PlantSpec plant = *spec.plant;
    plant.halluc_token = static_cast<TokenId>(rng::below(g, vocab));
    plant.fact_token = static_cast<TokenId>(rng::below(g, vocab - 1));
    if (plant.fact_token >= plant.halluc_token) ++plant.fact_token;
    plant.fact_layer = window.lo + static_cast<LayerIndex>(rng::below(g, window.size()));
    plant.prior_layer.reset();
    if (rng::uniform(g) < 0.5 && window.size() > 1) {
      LayerIndex layer = window.lo + static_cast<LayerIndex>(rng::below(g, window.size() - 1));
      if (layer >= plant.fact_layer) ++layer;
      plant.prior_layer = layer;
    }
    std::vector<TokenId> context(kContextLength);
    for (TokenId& t : context) t = static_cast<TokenId>(rng::below(g, vocab));

    ToySpec example = spec;
    example.seed = rng::derive(spec.seed, i);
    example.plant = plant;
    corpus.traces[i] = ToyModel(example).trace_for(context, i);

    char id[32];
    std::snprintf(id, sizeof id, "toy-%05zu", i);
    corpus.annotations[i] = HallucAnnotation{id, context, {plant.fact_token}, plant.halluc_token};
    corpus.plants[i] = plant;
  });
  return corpus;
}

}  // namespace eva
