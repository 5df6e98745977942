// SPDX-License-Identifier: Apache-2.0
#include "eva/core.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "eva/kernels.hpp"

namespace eva {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidInput: return "invalid-input";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kSchema: return "schema";
    case ErrorKind::kVersion: return "version";
    case ErrorKind::kDimension: return "dimension";
    case ErrorKind::kFiniteness: return "finiteness";
    case ErrorKind::kChecksum: return "checksum";
    case ErrorKind::kNumeric: return "numeric";
    case ErrorKind::kData: return "data";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kGeneration: return "generation";
  }
  return "unknown";
}

Error::Error(ErrorKind kind, const std::string& what)
    : std::runtime_error(std::string(to_string(kind)) + " error: " + what), kind_(kind) {}

void raise(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

Vocabulary::Vocabulary(std::size_t size) : size_(size) {
  if (size < 2) raise(ErrorKind::kInvalidInput, "vocabulary needs at least 2 tokens");
}

Vocabulary::Vocabulary(std::size_t size, std::vector<std::string> token_strings)
    : Vocabulary(size) {
  if (token_strings.size() != size)
    raise(ErrorKind::kInvalidInput, "token_strings length does not match vocabulary size");
  std::unordered_set<std::string> seen(token_strings.begin(), token_strings.end());
  if (seen.size() != token_strings.size())
    raise(ErrorKind::kInvalidInput, "token_strings must be unique");
  token_strings_ = std::move(token_strings);
}

const std::string& Vocabulary::token_string(TokenId id) const {
  if (!has_strings() || !contains(id))
    raise(ErrorKind::kInvalidInput, "no display string for token " + std::to_string(id));
  return token_strings_[static_cast<std::size_t>(id)];
}

LogitVector::LogitVector(std::vector<double> values) : values_(std::move(values)) {
  for (std::size_t i = 0; i < values_.size(); ++i)
    if (!std::isfinite(values_[i]))
      raise(ErrorKind::kInvalidInput, "non-finite logit at index " + std::to_string(i));
}

Distribution::Distribution(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.empty()) raise(ErrorKind::kInvalidInput, "empty distribution");
  double total = 0.0;
  for (double p : probs_) {
    if (!(p >= 0.0 && p <= 1.0)) raise(ErrorKind::kInvalidInput, "probability outside [0, 1]");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9)
    raise(ErrorKind::kInvalidInput, "probabilities sum to " + std::to_string(total));
}

Distribution Distribution::trusted(std::vector<double> probs) {
  return Distribution(Unchecked{}, std::move(probs));
}

void TraceHeader::validate() const {
  if (vocab_size < 2) raise(ErrorKind::kSchema, "vocab_size must be >= 2");
  if (num_layers < 2) raise(ErrorKind::kSchema, "num_layers must be >= 2");
  if (visual_token_count + text_token_count < 1)
    raise(ErrorKind::kSchema, "empty input sequence (P + Q = 0)");
}

void StepTrace::validate() const {
  if (original_logits.size() < 2) raise(ErrorKind::kSchema, "step trace needs >= 2 layers");
  if (prior_logits.size() != original_logits.size())
    raise(ErrorKind::kSchema, "original and prior streams have different layer counts");
  const std::size_t v = original_logits.front().size();
  if (v < 2) raise(ErrorKind::kSchema, "step trace vocabulary must be >= 2");
  for (std::size_t j = 0; j < original_logits.size(); ++j)
    if (original_logits[j].size() != v || prior_logits[j].size() != v)
      raise(ErrorKind::kSchema, "layer " + std::to_string(j) + " has inconsistent vocabulary length");
  if (emitted_token && (*emitted_token < 0 || static_cast<std::size_t>(*emitted_token) >= v))
    raise(ErrorKind::kSchema, "emitted token out of vocabulary");
}

void StepTrace::validate(const TraceHeader& header) const {
  validate();
  if (num_layers() != header.num_layers || vocab_size() != header.vocab_size)
    raise(ErrorKind::kDimension, "step " + std::to_string(step_index) +
                                     " does not match header dimensions");
}

LayerWindow default_layer_window(std::size_t num_layers) {
  if (num_layers < 2) raise(ErrorKind::kConfig, "need at least 2 layers for a layer window");
  const auto n = static_cast<double>(num_layers);
  const auto last_candidate = static_cast<LayerIndex>(num_layers) - 2;
  LayerIndex hi = static_cast<LayerIndex>(std::lround(28.0 * n / 32.0));
  LayerIndex lo = static_cast<LayerIndex>(std::lround(20.0 * n / 32.0));
  hi = std::min(hi, last_candidate);
  lo = std::min(lo, hi);
  return {lo, hi};
}

void DecodeConfig::validate() const {
  if (!(std::isfinite(alpha) && alpha >= 0.0)) raise(ErrorKind::kConfig, "alpha must be >= 0");
  if (!(top_p > 0.0 && top_p <= 1.0)) raise(ErrorKind::kConfig, "top_p must be in (0, 1]");
  if (!(nucleus_p > 0.0 && nucleus_p <= 1.0))
    raise(ErrorKind::kConfig, "nucleus_p must be in (0, 1]");
  if (!(std::isfinite(temperature) && temperature > 0.0))
    raise(ErrorKind::kConfig, "temperature must be > 0");
  if (beam_width < 1) raise(ErrorKind::kConfig, "beam_width must be >= 1");
  if (max_new_tokens < 1) raise(ErrorKind::kConfig, "max_new_tokens must be >= 1");
  if (eos_token && *eos_token < 0) raise(ErrorKind::kConfig, "eos_token must be >= 0");
}

LayerWindow DecodeConfig::resolve_window(std::size_t num_layers) const {
  if (!layer_window) return default_layer_window(num_layers);
  const LayerWindow w = *layer_window;
  if (num_layers < 2 || w.lo < 0 || w.lo > w.hi ||
      w.hi >= static_cast<LayerIndex>(num_layers) - 1)
    raise(ErrorKind::kConfig, "layer window [" + std::to_string(w.lo) + ", " +
                                  std::to_string(w.hi) + "] invalid for " +
                                  std::to_string(num_layers) + " layers");
  return w;
}

const char* to_string(Strategy s) {
  switch (s) {
    case Strategy::kGreedy: return "greedy";
    case Strategy::kNucleus: return "nucleus";
    case Strategy::kBeam: return "beam";
  }
  return "?";
}

const char* to_string(CandidateSource s) {
  return s == CandidateSource::kFinalLayer ? "final_layer" : "per_layer";
}

Strategy parse_strategy(const std::string& s) {
  if (s == "greedy") return Strategy::kGreedy;
  if (s == "nucleus") return Strategy::kNucleus;
  if (s == "beam") return Strategy::kBeam;
  raise(ErrorKind::kConfig, "unknown strategy: " + s);
}

CandidateSource parse_candidate_source(const std::string& s) {
  if (s == "final_layer") return CandidateSource::kFinalLayer;
  if (s == "per_layer") return CandidateSource::kPerLayer;
  raise(ErrorKind::kConfig, "unknown candidate source: " + s);
}

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) raise(ErrorKind::kInvalidInput, "log_sum_exp of empty vector");
  for (double v : values)
    if (!std::isfinite(v)) raise(ErrorKind::kInvalidInput, "log_sum_exp of non-finite value");
  const double m = kernels::max(values);
  std::vector<double> scratch(values.size());
  return m + std::log(kernels::exp_shift(values, m, 1.0, scratch));
}

double log_sum_exp(const LogitVector& logits) { return log_sum_exp(logits.values()); }

Distribution softmax(std::span<const double> logits, double temperature) {
  if (logits.empty()) raise(ErrorKind::kInvalidInput, "softmax of empty vector");
  if (!(std::isfinite(temperature) && temperature > 0.0))
    raise(ErrorKind::kInvalidInput, "temperature must be positive");
  for (double v : logits)
    if (!std::isfinite(v)) raise(ErrorKind::kInvalidInput, "softmax of non-finite logit");
  const double m = kernels::max(logits);
  std::vector<double> probs(logits.size());
  const double total = kernels::exp_shift(logits, m, 1.0 / temperature, probs);
  kernels::scale(probs, 1.0 / total);
  return Distribution::trusted(std::move(probs));
}

Distribution softmax(const LogitVector& logits, double temperature) {
  return softmax(logits.values(), temperature);
}

TokenId argmax(std::span<const double> values) {
  if (values.empty()) raise(ErrorKind::kInvalidInput, "argmax of empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return static_cast<TokenId>(best);
}

}  // namespace eva
