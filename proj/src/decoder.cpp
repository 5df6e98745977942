// SPDX-License-Identifier: Apache-2.0
#include "eva/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "eva/probkit.hpp"

namespace eva {
namespace {

void start(DecodeSession& session) {
  if (!session.fresh()) raise(ErrorKind::kInvalidInput, "decode session already used");
  session.config().validate();
  session.mark_used();
}

bool is_eos(const DecodeConfig& cfg, TokenId t) { return cfg.eos_token && *cfg.eos_token == t; }

StepRecord make_record(std::size_t step, TokenId token, const std::vector<double>& lp,
                       StepOutcome& outcome) {
  return StepRecord{step, token, lp[static_cast<std::size_t>(token)], std::move(outcome.selection),
                    std::move(outcome.modulation)};
}

// Shared loop for strategies that extend a single path.
template <typename Choose>
DecodeResult decode_single_path(DecodeSession& session, Method method, Choose choose) {
  start(session);
  const DecodeConfig& cfg = session.config();
  DecodeResult result;
  for (int i = 0; i < cfg.max_new_tokens; ++i) {
    std::optional<StepTrace> trace = session.source().step(session.emitted());
    if (!trace) {
      result.truncated = true;
      break;
    }
    StepOutcome outcome = evaluate_step(*trace, cfg, method);
    const TokenId token = choose(outcome.logits);
    const std::vector<double> lp = log_probs(outcome.logits);
    result.score += lp[static_cast<std::size_t>(token)];
    result.steps.push_back(make_record(static_cast<std::size_t>(i), token, lp, outcome));
    session.emit(token);
    if (is_eos(cfg, token)) {
      result.hit_eos = true;
      break;
    }
  }
  result.tokens = session.emitted();
  return result;
}

struct Hypothesis {
  std::vector<TokenId> tokens;
  std::vector<StepRecord> records;
  double score = 0.0;
  bool finished = false;
  bool truncated = false;
  bool hit_eos = false;
};

bool better(const Hypothesis& a, const Hypothesis& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.tokens < b.tokens;
}

}  // namespace

RecordedSource::RecordedSource(std::vector<StepTrace> steps) : steps_(std::move(steps)) {
  for (const StepTrace& s : steps_) s.validate();
}

std::optional<StepTrace> RecordedSource::step(std::span<const TokenId> prefix) const {
  if (prefix.size() >= steps_.size()) return std::nullopt;
  return steps_[prefix.size()];
}

const char* to_string(Method m) {
  switch (m) {
    case Method::kVanilla: return "vanilla";
    case Method::kEva: return "eva";
    case Method::kDeco: return "deco";
  }
  return "?";
}

Method parse_method(const std::string& s) {
  if (s == "vanilla") return Method::kVanilla;
  if (s == "eva") return Method::kEva;
  if (s == "deco") return Method::kDeco;
  raise(ErrorKind::kConfig, "unknown method: " + s);
}

StepOutcome evaluate_step(const StepTrace& trace, const DecodeConfig& cfg, Method method) {
  trace.validate();
  switch (method) {
    case Method::kVanilla:
      return {trace.original_logits[trace.final_layer()], std::nullopt, std::nullopt};
    case Method::kEva: {
      const LayerSelection sel = select_layer_eva(trace, cfg);
      CorrectionResult corr = correct_logits(trace, sel, cfg);
      return {std::move(corr.corrected_logits), std::move(corr.selection), corr.modulation};
    }
    case Method::kDeco: {
      LayerSelection sel = select_layer_deco(trace, cfg);
      LogitVector logits = deco_blend(trace, sel, cfg);
      ModulationState mod = modulation_state(trace, sel);
      return {std::move(logits), std::move(sel), mod};
    }
  }
  raise(ErrorKind::kConfig, "unknown method");
}

LogitVector step_logits(const StepTrace& trace, const DecodeConfig& cfg, Method method) {
  return evaluate_step(trace, cfg, method).logits;
}

std::vector<double> log_probs(const LogitVector& logits) {
  const double lse = log_sum_exp(logits);
  std::vector<double> out(logits.values().begin(), logits.values().end());
  for (double& v : out) v -= lse;
  return out;
}

DecodeSession::DecodeSession(DecodeConfig config, const LogitSource& source)
    : config_(std::move(config)), source_(&source), rng_(config_.seed) {}

DecodeResult decode_greedy(DecodeSession& session, Method method) {
  return decode_single_path(session, method,
                            [](const LogitVector& logits) { return argmax(logits.values()); });
}

DecodeResult decode_nucleus(DecodeSession& session, Method method) {
  const DecodeConfig cfg = session.config();
  return decode_single_path(session, method, [&](const LogitVector& logits) {
    const Distribution dist = softmax(logits, cfg.temperature);
    const CandidateSet cand = top_p_candidates(dist, cfg.nucleus_p);
    const Distribution kept = restrict_and_renormalize(dist, cand);
    const double u = rng::uniform(session.rng());
    double acc = 0.0;
    for (TokenId t : cand.token_ids) {
      acc += kept[t];
      if (u < acc) return t;
    }
    return cand.token_ids.back();
  });
}

DecodeResult decode_beam(DecodeSession& session, Method method) {
  const DecodeConfig& cfg = session.config();
  if (cfg.beam_width > 1 && !session.source().supports_branching())
    raise(ErrorKind::kConfig, "recorded traces hold a single path; beam search needs beam_width 1 "
                              "or a live logit source");
  start(session);
  const auto width = static_cast<std::size_t>(cfg.beam_width);

  std::vector<Hypothesis> beams(1);
  for (int i = 0; i < cfg.max_new_tokens; ++i) {
    if (std::all_of(beams.begin(), beams.end(), [](const Hypothesis& h) { return h.finished; }))
      break;
    std::vector<Hypothesis> pool;
    for (Hypothesis& h : beams) {
      if (h.finished) {
        pool.push_back(std::move(h));
        continue;
      }
      std::optional<StepTrace> trace = session.source().step(h.tokens);
      if (!trace) {
        h.finished = h.truncated = true;
        pool.push_back(std::move(h));
        continue;
      }
      StepOutcome outcome = evaluate_step(*trace, cfg, method);
      const std::vector<double> lp = log_probs(outcome.logits);
      // Only the best `width` extensions of one hypothesis can survive.
      std::vector<TokenId> order(lp.size());
      std::iota(order.begin(), order.end(), 0);
      const std::size_t keep = std::min(width, order.size());
      std::partial_sort(order.begin(), order.begin() + static_cast<long>(keep), order.end(),
                        [&](TokenId a, TokenId b) { return lp[a] != lp[b] ? lp[a] > lp[b] : a < b; });
      for (std::size_t k = 0; k < keep; ++k) {
        const TokenId t = order[k];
        Hypothesis next;
        next.tokens = h.tokens;
        next.tokens.push_back(t);
        next.records = h.records;
        StepOutcome copy = outcome;
        next.records.push_back(make_record(static_cast<std::size_t>(i), t, lp, copy));
        next.score = h.score + lp[static_cast<std::size_t>(t)];
        next.hit_eos = is_eos(cfg, t);
        next.finished = next.hit_eos;
        pool.push_back(std::move(next));
      }
    }
    std::sort(pool.begin(), pool.end(), better);
    if (pool.size() > width) pool.resize(width);
    beams = std::move(pool);
  }

  const Hypothesis& best = *std::min_element(beams.begin(), beams.end(), better);
  for (TokenId t : best.tokens) session.emit(t);
  DecodeResult result;
  result.tokens = best.tokens;
  result.steps = best.records;
  result.score = best.score;
  result.truncated = best.truncated;
  result.hit_eos = best.hit_eos;
  return result;
}

DecodeResult decode(DecodeSession& session, Method method) {
  switch (session.config().strategy) {
    case Strategy::kGreedy: return decode_greedy(session, method);
    case Strategy::kNucleus: return decode_nucleus(session, method);
    case Strategy::kBeam: return decode_beam(session, method);
  }
  raise(ErrorKind::kConfig, "unknown strategy");
}

}  // namespace eva
