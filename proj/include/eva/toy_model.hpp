// SPDX-License-Identifier: Apache-2.0
//
// Seeded synthetic dual-stream logit source. Streams are identical except for
// a planted visual fact (original stream only, one intermediate layer) and
// hallucination pressure (both streams, final layer and optionally one
// intermediate "prior" layer).
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "eva/core.hpp"
#include "eva/decoder.hpp"
#include "eva/trace_io.hpp"

namespace eva {

struct PlantSpec {
  TokenId fact_token = 0;
  TokenId halluc_token = 1;
  LayerIndex fact_layer = 24;
  double fact_boost = 4.0;
  double suppression = 2.0;
  /// Intermediate layer where both streams favour halluc_token; lures
  /// probability-based layer selection onto a layer with no visual signal.
  std::optional<LayerIndex> prior_layer;
  double prior_boost = 5.0;

  friend bool operator==(const PlantSpec&, const PlantSpec&) = default;
};

struct ToySpec {
  std::size_t num_layers = 32;
  std::size_t vocab_size = 64;
  std::uint64_t seed = 0;
  std::optional<PlantSpec> plant;
  double noise_scale = 0.1;
  /// Offset given to fact_token and halluc_token at every layer of both
  /// streams, so they sit at the top of the vocabulary.
  double salience = 2.0;

  void validate() const;
  friend bool operator==(const ToySpec&, const ToySpec&) = default;
};

inline constexpr int kToyMaxAttempts = 16;

/// Settings the construction checks run under: alpha 1, top-p 0.9, default
/// window, both modulation coefficients.
DecodeConfig toy_check_config();

/// Returns an empty string if the planted trace meets every construction
/// condition, otherwise the first violated condition.
std::string check_planted(const StepTrace& trace, const PlantSpec& plant);

/// Live source: the trace for a prefix is a pure function of (spec, prefix).
class ToyModel final : public LogitSource {
 public:
  explicit ToyModel(ToySpec spec);

  std::optional<StepTrace> step(std::span<const TokenId> prefix) const override;
  bool supports_branching() const override { return true; }

  /// Trace for a prefix, recorded as step `step_index`; throws kGeneration
  /// after kToyMaxAttempts failed constructions.
  StepTrace trace_for(std::span<const TokenId> prefix, std::size_t step_index) const;

  const ToySpec& spec() const noexcept { return spec_; }
  TraceHeader header() const;

 private:
  StepTrace build(std::uint64_t seed, std::size_t step_index) const;
  ToySpec spec_;
};

/// Records num_steps along the vanilla greedy path; emitted_token holds each
/// step's vanilla choice.
std::vector<StepTrace> generate_trace(const ToySpec& spec, std::size_t num_steps);

struct AnnotatedCorpus {
  TraceHeader header;
  std::vector<StepTrace> traces;  // one single-step example each
  std::vector<HallucAnnotation> annotations;
  std::vector<PlantSpec> plants;
};

/// n independent planted examples with randomized token ids and layers.
/// Half of the examples (chosen per seed) also carry a prior layer. jobs > 1
/// generates in parallel; output is identical for any job count.
AnnotatedCorpus generate_annotated_corpus(const ToySpec& spec, std::size_t n_examples,
                                          unsigned jobs = 1);

}  // namespace eva
