// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace eva {

using TokenId = std::int32_t;
using LayerIndex = int;

enum class ErrorKind {
  kInvalidInput,
  kConfig,
  kSchema,
  kVersion,
  kDimension,
  kFiniteness,
  kChecksum,
  kNumeric,
  kData,
  kIo,
  kGeneration,
};

const char* to_string(ErrorKind kind);

/// Every failure raised by the library carries a kind, so callers (the CLI in
/// particular) can map it to an exit code without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what);
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void raise(ErrorKind kind, const std::string& what);

class Vocabulary {
 public:
  explicit Vocabulary(std::size_t size);
  Vocabulary(std::size_t size, std::vector<std::string> token_strings);

  std::size_t size() const noexcept { return size_; }
  bool has_strings() const noexcept { return !token_strings_.empty(); }
  const std::string& token_string(TokenId id) const;
  bool contains(TokenId id) const noexcept {
    return id >= 0 && static_cast<std::size_t>(id) < size_;
  }

 private:
  std::size_t size_;
  std::vector<std::string> token_strings_;
};

/// Unnormalized scores over the vocabulary. Always finite.
class LogitVector {
 public:
  LogitVector() = default;
  explicit LogitVector(std::vector<double> values);

  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  std::span<const double> values() const noexcept { return values_; }
  const double* data() const noexcept { return values_.data(); }

  friend bool operator==(const LogitVector&, const LogitVector&) = default;

 private:
  std::vector<double> values_;
};

/// Normalized probability vector over the vocabulary.
class Distribution {
 public:
  Distribution() = default;
  /// Validates that entries lie in [0, 1] and sum to 1 within 1e-9.
  explicit Distribution(std::vector<double> probs);

  /// Skips validation; for kernels whose output is normalized by construction.
  static Distribution trusted(std::vector<double> probs);

  std::size_t size() const noexcept { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }
  std::span<const double> probs() const noexcept { return probs_; }
  const double* data() const noexcept { return probs_.data(); }

  friend bool operator==(const Distribution&, const Distribution&) = default;

 private:
  struct Unchecked {};
  Distribution(Unchecked, std::vector<double> probs) : probs_(std::move(probs)) {}
  std::vector<double> probs_;
};

struct TraceHeader {
  std::size_t vocab_size = 0;
  std::size_t num_layers = 0;
  std::string model_id;
  std::size_t visual_token_count = 0;
  std::size_t text_token_count = 1;
  std::string schema_version;

  /// Throws kSchema when the dimensions cannot describe a usable trace.
  void validate() const;
  friend bool operator==(const TraceHeader&, const TraceHeader&) = default;
};

/// Per-layer logits for one decoding step, for the multimodal (original) and
/// text-only (prior) inputs. The last layer is the one vanilla decoding uses.
struct StepTrace {
  std::size_t step_index = 0;
  std::vector<LogitVector> original_logits;
  std::vector<LogitVector> prior_logits;
  std::optional<TokenId> emitted_token;

  std::size_t num_layers() const noexcept { return original_logits.size(); }
  std::size_t vocab_size() const noexcept {
    return original_logits.empty() ? 0 : original_logits.front().size();
  }
  LayerIndex final_layer() const noexcept {
    return static_cast<LayerIndex>(original_logits.size()) - 1;
  }

  /// Throws kSchema if the two streams disagree in shape or have < 2 layers.
  void validate() const;
  /// As validate(), and additionally checks against header dimensions.
  void validate(const TraceHeader& header) const;

  friend bool operator==(const StepTrace&, const StepTrace&) = default;
};

struct LayerWindow {
  LayerIndex lo = 0;
  LayerIndex hi = 0;
  std::size_t size() const noexcept { return static_cast<std::size_t>(hi - lo + 1); }
  bool contains(LayerIndex j) const noexcept { return j >= lo && j <= hi; }
  friend bool operator==(const LayerWindow&, const LayerWindow&) = default;
};

/// [round(20N/32), round(28N/32)], clamped so the final layer is excluded.
LayerWindow default_layer_window(std::size_t num_layers);

enum class Strategy { kGreedy, kNucleus, kBeam };
enum class CandidateSource { kFinalLayer, kPerLayer };

struct Modulation {
  bool use_max_prob = true;
  bool use_max_jsd = true;
  friend bool operator==(const Modulation&, const Modulation&) = default;
};

struct DecodeConfig {
  double alpha = 1.0;
  double top_p = 0.9;
  std::optional<LayerWindow> layer_window;
  Strategy strategy = Strategy::kGreedy;
  int beam_width = 3;
  double nucleus_p = 0.9;
  double temperature = 1.0;
  std::uint64_t seed = 0;
  Modulation modulation;
  int max_new_tokens = 16;
  std::optional<TokenId> eos_token;
  bool renormalize_candidates = true;
  CandidateSource candidate_source = CandidateSource::kFinalLayer;

  /// Checks the scalar fields; throws kConfig.
  void validate() const;
  /// Window actually used for a trace with num_layers layers; throws kConfig
  /// if an explicit window is out of range.
  LayerWindow resolve_window(std::size_t num_layers) const;

  friend bool operator==(const DecodeConfig&, const DecodeConfig&) = default;
};

const char* to_string(Strategy s);
const char* to_string(CandidateSource s);
Strategy parse_strategy(const std::string& s);
CandidateSource parse_candidate_source(const std::string& s);

double log_sum_exp(std::span<const double> values);
double log_sum_exp(const LogitVector& logits);

/// Stable softmax of logits / temperature.
Distribution softmax(const LogitVector& logits, double temperature = 1.0);
Distribution softmax(std::span<const double> logits, double temperature = 1.0);

/// Index of the largest entry; the lowest index wins ties.
TokenId argmax(std::span<const double> values);

}  // namespace eva
