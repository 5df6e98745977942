// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <span>
#include <vector>

#include "eva/core.hpp"
#include "eva/eva_corrector.hpp"
#include "eva/layer_dynamics.hpp"
#include "eva/rng.hpp"

namespace eva {

/// Supplies the dual-stream trace for the next decoding step given the tokens
/// emitted so far. Returns nullopt once the source is exhausted.
class LogitSource {
 public:
  virtual ~LogitSource() = default;
  virtual std::optional<StepTrace> step(std::span<const TokenId> prefix) const = 0;
  /// False for recorded traces, which hold a single path and ignore the
  /// token values in the prefix (only its length selects the step).
  virtual bool supports_branching() const = 0;
};

class RecordedSource final : public LogitSource {
 public:
  explicit RecordedSource(std::vector<StepTrace> steps);
  std::optional<StepTrace> step(std::span<const TokenId> prefix) const override;
  bool supports_branching() const override { return false; }
  const std::vector<StepTrace>& steps() const noexcept { return steps_; }

 private:
  std::vector<StepTrace> steps_;
};

enum class Method { kVanilla, kEva, kDeco };

const char* to_string(Method m);
Method parse_method(const std::string& s);

struct StepOutcome {
  LogitVector logits;
  std::optional<LayerSelection> selection;
  std::optional<ModulationState> modulation;
};

StepOutcome evaluate_step(const StepTrace& trace, const DecodeConfig& cfg, Method method);
LogitVector step_logits(const StepTrace& trace, const DecodeConfig& cfg, Method method);

/// log softmax at temperature 1.
std::vector<double> log_probs(const LogitVector& logits);

struct StepRecord {
  std::size_t step = 0;
  TokenId token = 0;
  double log_prob = 0.0;
  std::optional<LayerSelection> selection;
  std::optional<ModulationState> modulation;
};

struct DecodeResult {
  std::vector<TokenId> tokens;
  std::vector<StepRecord> steps;
  double score = 0.0;      // cumulative log-probability of tokens
  bool truncated = false;  // source ran out before eos / max_new_tokens
  bool hit_eos = false;
};

/// One decoding run. Holds the mutable sampling state and therefore must not
/// be shared between threads; the source is borrowed and must outlive it.
class DecodeSession {
 public:
  DecodeSession(DecodeConfig config, const LogitSource& source);

  const DecodeConfig& config() const noexcept { return config_; }
  const LogitSource& source() const noexcept { return *source_; }
  rng::Engine& rng() noexcept { return rng_; }
  const std::vector<TokenId>& emitted() const noexcept { return emitted_; }
  void emit(TokenId t) { emitted_.push_back(t); }
  bool fresh() const noexcept { return emitted_.empty() && !used_; }
  void mark_used() noexcept { used_ = true; }

 private:
  DecodeConfig config_;
  const LogitSource* source_;
  rng::Engine rng_;
  std::vector<TokenId> emitted_;
  bool used_ = false;
};

DecodeResult decode_greedy(DecodeSession& session, Method method);
DecodeResult decode_nucleus(DecodeSession& session, Method method);
DecodeResult decode_beam(DecodeSession& session, Method method);
/// Dispatches on session.config().strategy.
DecodeResult decode(DecodeSession& session, Method method);

}  // namespace eva
