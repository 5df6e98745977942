// SPDX-License-Identifier: Apache-2.0
#include "eva/evalkit.hpp"

#include <fstream>

#include "eva/layer_dynamics.hpp"
#include "eva/parallel.hpp"
#include "eva/probkit.hpp"
#include "json.hpp"

namespace eva {
namespace {

using nlohmann::json;

// Calls fn(json) for every non-blank line; wraps parse errors as kData.
template <typename Fn>
void for_each_json_line(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) raise(ErrorKind::kIo, "cannot open " + path.string());
  std::size_t lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      fn(json::parse(line));
    } catch (const json::exception& e) {
      raise(ErrorKind::kData, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

bool parse_yes_no(const std::string& s) {
  if (s == "yes") return true;
  if (s == "no") return false;
  raise(ErrorKind::kData, "expected yes/no, got '" + s + "'");
}

struct ExampleCounts {
  bool has_gt_candidate = false;
  std::size_t activated = 0;
};

ExampleCounts score_example(const StepTrace& trace, const HallucAnnotation& ann,
                            const DecodeConfig& cfg, Method method,
                            const ActivationOptions& options) {
  const auto vocab = trace.vocab_size();
  auto in_vocab = [&](TokenId t) { return t >= 0 && static_cast<std::size_t>(t) < vocab; };
  if (!in_vocab(ann.halluc_token))
    raise(ErrorKind::kData, "annotation " + ann.example_id + " hallucinated token out of vocabulary");
  for (TokenId t : ann.ground_truth_tokens)
    if (!in_vocab(t))
      raise(ErrorKind::kData, "annotation " + ann.example_id + " ground-truth token out of vocabulary");

  Distribution scored;
  Distribution candidate_source;
  LayerIndex layer = 0;
  if (method == Method::kEva) {
    const LayerSelection sel = select_layer_eva(trace, cfg);
    layer = sel.target_layer;
    std::vector<double> diff(vocab);
    for (std::size_t i = 0; i < vocab; ++i)
      diff[i] = trace.original_logits[layer][i] - trace.prior_logits[layer][i];
    scored = softmax(diff);
    candidate_source = options.eva_candidates == ActivationStream::kVisualFacts
                           ? scored
                           : softmax(trace.original_logits[layer]);
  } else if (method == Method::kDeco) {
    const LayerSelection sel = select_layer_deco(trace, cfg);
    layer = sel.target_layer;
    scored = softmax(trace.original_logits[layer]);
    candidate_source = scored;
  } else {
    raise(ErrorKind::kConfig, "activation experiment compares eva or deco");
  }

  const CandidateSet cand = top_p_candidates(candidate_source, options.threshold, layer);
  ExampleCounts counts;
  for (TokenId gt : ann.ground_truth_tokens) {
    if (!cand.contains(gt)) continue;
    counts.has_gt_candidate = true;
    if (scored[gt] - scored[ann.halluc_token] > 0.0) ++counts.activated;
  }
  return counts;
}

}  // namespace

SynonymLexicon::SynonymLexicon(std::map<std::string, std::string> surface_to_canonical)
    : map_(std::move(surface_to_canonical)) {}

SynonymLexicon SynonymLexicon::load(const std::filesystem::path& path) {
  std::map<std::string, std::string> map;
  for_each_json_line(path, [&](const json& j) {
    const auto canonical = j.at("canonical").get<std::string>();
    map[canonical] = canonical;
    for (const auto& s : j.value("surface", std::vector<std::string>{})) {
      const auto [it, inserted] = map.emplace(s, canonical);
      if (!inserted && it->second != canonical)
        raise(ErrorKind::kData, "surface form '" + s + "' maps to both '" + it->second +
                                    "' and '" + canonical + "'");
    }
  });
  return SynonymLexicon(std::move(map));
}

std::string SynonymLexicon::canonical(const std::string& surface) const {
  const auto it = map_.find(surface);
  return it == map_.end() ? surface : it->second;
}

ChairScores chair_scores(const ChairInput& input) {
  std::map<std::string, std::set<std::string>> truth;
  for (const auto& [image, objects] : input.ground_truth)
    for (const auto& o : objects) truth[image].insert(input.synonyms.canonical(o));

  ChairScores s;
  for (const Caption& c : input.captions) {
    const auto it = input.ground_truth.find(c.image_id);
    if (it == input.ground_truth.end())
      raise(ErrorKind::kData, "caption for image " + c.image_id + " has no ground truth");
    const std::set<std::string>& gt = truth[c.image_id];
    std::set<std::string> mentions;
    for (const auto& o : c.mentioned_objects) mentions.insert(input.synonyms.canonical(o));

    std::size_t hallucinated = 0;
    for (const auto& m : mentions)
      if (!gt.count(m)) ++hallucinated;
    ++s.num_captions;
    s.num_mentions += mentions.size();
    s.num_hallucinated_mentions += hallucinated;
    if (hallucinated > 0) ++s.num_hallucinated_captions;
  }
  if (s.num_captions > 0)
    s.chair_s = static_cast<double>(s.num_hallucinated_captions) / static_cast<double>(s.num_captions);
  if (s.num_mentions > 0)
    s.chair_i = static_cast<double>(s.num_hallucinated_mentions) / static_cast<double>(s.num_mentions);
  return s;
}

const char* to_string(PopeSplit s) {
  switch (s) {
    case PopeSplit::kRandom: return "random";
    case PopeSplit::kPopular: return "popular";
    case PopeSplit::kAdversarial: return "adversarial";
  }
  return "?";
}

PopeSplit parse_pope_split(const std::string& s) {
  for (PopeSplit split : kPopeSplits)
    if (s == to_string(split)) return split;
  raise(ErrorKind::kData, "unknown POPE split '" + s + "'");
}

PopeScores pope_f1(const PopeInput& input) {
  PopeScores out;
  std::map<PopeSplit, std::size_t> seen;
  for (PopeSplit split : kPopeSplits) out.per_split[split] = {};
  for (const PopeRecord& r : input.records) {
    SplitF1& f = out.per_split[r.split];
    ++seen[r.split];
    if (r.predicted_yes && r.label_yes) ++f.tp;
    else if (r.predicted_yes) ++f.fp;
    else if (r.label_yes) ++f.fn;
    else ++f.tn;
  }
  double total = 0.0;
  for (PopeSplit split : kPopeSplits) {
    if (seen[split] == 0)
      raise(ErrorKind::kData, std::string("POPE split '") + to_string(split) + "' has no records");
    SplitF1& f = out.per_split[split];
    const double tp = static_cast<double>(f.tp);
    if (f.tp + f.fp > 0) f.precision = tp / static_cast<double>(f.tp + f.fp);
    if (f.tp + f.fn > 0) f.recall = tp / static_cast<double>(f.tp + f.fn);
    if (f.tp + f.fp == 0 && f.tp + f.fn == 0) {
      f.degenerate = true;
      out.warnings.push_back(std::string("split '") + to_string(split) +
                             "' has no predicted or actual positives; F1 set to 0");
    }
    if (f.precision + f.recall > 0.0)
      f.f1 = 2.0 * f.precision * f.recall / (f.precision + f.recall);
    total += f.f1;
  }
  out.average_f1 = total / 3.0;
  return out;
}

ActivationResult activation_experiment(const std::vector<StepTrace>& traces,
                                       const std::vector<HallucAnnotation>& annotations,
                                       const DecodeConfig& cfg, Method method,
                                       const ActivationOptions& options, unsigned jobs) {
  if (traces.size() != annotations.size())
    raise(ErrorKind::kData, "corpus has " + std::to_string(traces.size()) + " traces but " +
                                std::to_string(annotations.size()) + " annotations");
  if (!(options.threshold > 0.0 && options.threshold <= 1.0))
    raise(ErrorKind::kConfig, "candidate threshold must be in (0, 1]");
  cfg.validate();

  std::vector<ExampleCounts> per_example(traces.size());
  parallel_for(traces.size(), jobs, [&](std::size_t i) {
    annotations[i].validate();
    per_example[i] = score_example(traces[i], annotations[i], cfg, method, options);
  });

  ActivationResult result;
  result.method = method;
  result.corpus_size = traces.size();
  for (const ExampleCounts& c : per_example) {
    if (!c.has_gt_candidate) continue;
    ++result.n_data_with_gt_candidate;
    result.n_activated_tokens += c.activated;
  }
  return result;
}

std::vector<Caption> load_captions(const std::filesystem::path& path) {
  std::vector<Caption> out;
  for_each_json_line(path, [&](const json& j) {
    Caption c;
    c.image_id = j.at("image_id").is_string() ? j.at("image_id").get<std::string>()
                                              : j.at("image_id").dump();
    for (const auto& o : j.at("objects").get<std::vector<std::string>>())
      c.mentioned_objects.insert(o);
    out.push_back(std::move(c));
  });
  return out;
}

std::map<std::string, std::set<std::string>> load_ground_truth(const std::filesystem::path& path) {
  std::map<std::string, std::set<std::string>> out;
  for_each_json_line(path, [&](const json& j) {
    const std::string id = j.at("image_id").is_string() ? j.at("image_id").get<std::string>()
                                                        : j.at("image_id").dump();
    auto& objects = out[id];
    for (const auto& o : j.at("objects").get<std::vector<std::string>>()) objects.insert(o);
  });
  return out;
}

PopeInput load_pope(const std::filesystem::path& path) {
  PopeInput in;
  for_each_json_line(path, [&](const json& j) {
    in.records.push_back({parse_pope_split(j.at("split").get<std::string>()),
                          parse_yes_no(j.at("predicted").get<std::string>()),
                          parse_yes_no(j.at("label").get<std::string>())});
  });
  return in;
}

}  // namespace eva
