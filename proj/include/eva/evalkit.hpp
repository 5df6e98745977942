// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "eva/core.hpp"
#include "eva/decoder.hpp"
#include "eva/trace_io.hpp"

namespace eva {

// ---------------------------------------------------------------------------
// CHAIR

/// Maps surface forms to canonical object names; unknown words map to
/// themselves. Matching is exact.
class SynonymLexicon {
 public:
  SynonymLexicon() = default;
  explicit SynonymLexicon(std::map<std::string, std::string> surface_to_canonical);
  /// One JSON object per line: {"canonical": "dog", "surface": ["puppy", ...]}.
  static SynonymLexicon load(const std::filesystem::path& path);

  std::string canonical(const std::string& surface) const;
  std::size_t size() const noexcept { return map_.size(); }

 private:
  std::map<std::string, std::string> map_;
};

struct Caption {
  std::string image_id;
  std::set<std::string> mentioned_objects;
};

struct ChairInput {
  std::vector<Caption> captions;
  std::map<std::string, std::set<std::string>> ground_truth;
  SynonymLexicon synonyms;
};

struct ChairScores {
  std::optional<double> chair_s;  // nullopt: no captions
  std::optional<double> chair_i;  // nullopt: no mentioned objects
  std::size_t num_captions = 0;
  std::size_t num_hallucinated_captions = 0;
  std::size_t num_mentions = 0;
  std::size_t num_hallucinated_mentions = 0;
};

/// Mentions are canonicalized and de-duplicated per caption before counting.
ChairScores chair_scores(const ChairInput& input);

// ---------------------------------------------------------------------------
// POPE

enum class PopeSplit { kRandom, kPopular, kAdversarial };
inline constexpr std::array<PopeSplit, 3> kPopeSplits{PopeSplit::kRandom, PopeSplit::kPopular,
                                                      PopeSplit::kAdversarial};
const char* to_string(PopeSplit s);
PopeSplit parse_pope_split(const std::string& s);

struct PopeRecord {
  PopeSplit split = PopeSplit::kRandom;
  bool predicted_yes = false;
  bool label_yes = false;
};

struct PopeInput {
  std::vector<PopeRecord> records;
};

struct SplitF1 {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool degenerate = false;  // no predicted and no actual positives: f1 = 0
};

struct PopeScores {
  std::map<PopeSplit, SplitF1> per_split;
  double average_f1 = 0.0;
  std::vector<std::string> warnings;
};

/// "yes" is the positive class. Every split must have at least one record.
PopeScores pope_f1(const PopeInput& input);

// ---------------------------------------------------------------------------
// Activated ground-truth tokens, EVA vs DeCo

enum class ActivationStream { kOriginalAtTarget, kVisualFacts };

struct ActivationOptions {
  double threshold = 0.9;
  /// Distribution defining the EVA branch's candidates.
  ActivationStream eva_candidates = ActivationStream::kOriginalAtTarget;
};

struct ActivationResult {
  Method method = Method::kEva;
  std::size_t n_data_with_gt_candidate = 0;
  std::size_t n_activated_tokens = 0;
  std::size_t corpus_size = 0;
};

/// For each (trace, annotation) pair: select the method's layer and score its
/// tokens (EVA: softmax(original - prior) at the selected layer; DeCo:
/// softmax(original) at its layer). Candidates are the top-threshold tokens of
/// the original stream at that layer, or of the EVA scores when
/// `eva_candidates` is kVisualFacts. Examples whose candidates hold a
/// ground-truth token are counted, as are ground-truth candidates scored above
/// the hallucinated token.
ActivationResult activation_experiment(const std::vector<StepTrace>& traces,
                                       const std::vector<HallucAnnotation>& annotations,
                                       const DecodeConfig& cfg, Method method,
                                       const ActivationOptions& options = {}, unsigned jobs = 1);

// JSON-lines loaders used by the CLI.
std::vector<Caption> load_captions(const std::filesystem::path& path);
std::map<std::string, std::set<std::string>> load_ground_truth(const std::filesystem::path& path);
PopeInput load_pope(const std::filesystem::path& path);

}  // namespace eva
