// SPDX-License-Identifier: Apache-2.0
#include "config_json.hpp"

#include <set>

namespace eva::cli {
namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::set<std::string>& known, const char* what) {
  if (!j.is_object()) raise(ErrorKind::kConfig, std::string(what) + " must be a JSON object");
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) raise(ErrorKind::kConfig, std::string("unknown ") + what + " key: " + key);
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    raise(ErrorKind::kConfig, std::string("bad value for ") + key + ": " + e.what());
  }
}

}  // namespace

json to_json(const DecodeConfig& cfg) {
  json j;
  j["alpha"] = cfg.alpha;
  j["top_p"] = cfg.top_p;
  j["layer_window"] = cfg.layer_window ? json::array({cfg.layer_window->lo, cfg.layer_window->hi})
                                       : json(nullptr);
  j["strategy"] = to_string(cfg.strategy);
  j["beam_width"] = cfg.beam_width;
  j["nucleus_p"] = cfg.nucleus_p;
  j["temperature"] = cfg.temperature;
  j["seed"] = cfg.seed;
  j["use_max_prob"] = cfg.modulation.use_max_prob;
  j["use_max_jsd"] = cfg.modulation.use_max_jsd;
  j["max_new_tokens"] = cfg.max_new_tokens;
  j["eos_token"] = cfg.eos_token ? json(*cfg.eos_token) : json(nullptr);
  j["renormalize_candidates"] = cfg.renormalize_candidates;
  j["candidate_source"] = to_string(cfg.candidate_source);
  return j;
}

void apply_json(const json& j, DecodeConfig& cfg) {
  reject_unknown(j,
                 {"alpha", "top_p", "layer_window", "strategy", "beam_width", "nucleus_p",
                  "temperature", "seed", "use_max_prob", "use_max_jsd", "max_new_tokens",
                  "eos_token", "renormalize_candidates", "candidate_source"},
                 "config");
  read(j, "alpha", cfg.alpha);
  read(j, "top_p", cfg.top_p);
  if (j.contains("layer_window")) {
    const json& w = j.at("layer_window");
    if (w.is_null()) {
      cfg.layer_window.reset();
    } else if (w.is_array() && w.size() == 2) {
      cfg.layer_window = LayerWindow{w[0].get<int>(), w[1].get<int>()};
    } else {
      raise(ErrorKind::kConfig, "layer_window must be [lo, hi] or null");
    }
  }
  if (j.contains("strategy")) cfg.strategy = parse_strategy(j.at("strategy").get<std::string>());
  read(j, "beam_width", cfg.beam_width);
  read(j, "nucleus_p", cfg.nucleus_p);
  read(j, "temperature", cfg.temperature);
  read(j, "seed", cfg.seed);
  read(j, "use_max_prob", cfg.modulation.use_max_prob);
  read(j, "use_max_jsd", cfg.modulation.use_max_jsd);
  read(j, "max_new_tokens", cfg.max_new_tokens);
  if (j.contains("eos_token")) {
    if (j.at("eos_token").is_null()) cfg.eos_token.reset();
    else cfg.eos_token = j.at("eos_token").get<TokenId>();
  }
  read(j, "renormalize_candidates", cfg.renormalize_candidates);
  if (j.contains("candidate_source"))
    cfg.candidate_source = parse_candidate_source(j.at("candidate_source").get<std::string>());
}

json to_json(const ToySpec& spec) {
  json j;
  j["num_layers"] = spec.num_layers;
  j["vocab_size"] = spec.vocab_size;
  j["seed"] = spec.seed;
  j["noise_scale"] = spec.noise_scale;
  j["salience"] = spec.salience;
  if (spec.plant) {
    const PlantSpec& p = *spec.plant;
    j["plant"] = {{"fact_token", p.fact_token},   {"halluc_token", p.halluc_token},
                  {"fact_layer", p.fact_layer},   {"fact_boost", p.fact_boost},
                  {"suppression", p.suppression}, {"prior_boost", p.prior_boost},
                  {"prior_layer", p.prior_layer ? json(*p.prior_layer) : json(nullptr)}};
  } else {
    j["plant"] = nullptr;
  }
  return j;
}

void apply_json(const json& j, ToySpec& spec) {
  reject_unknown(j, {"num_layers", "vocab_size", "seed", "noise_scale", "salience", "plant"},
                 "toy spec");
  read(j, "num_layers", spec.num_layers);
  read(j, "vocab_size", spec.vocab_size);
  read(j, "seed", spec.seed);
  read(j, "noise_scale", spec.noise_scale);
  read(j, "salience", spec.salience);
  if (!j.contains("plant")) return;
  const json& p = j.at("plant");
  if (p.is_null()) {
    spec.plant.reset();
    return;
  }
  reject_unknown(p, {"fact_token", "halluc_token", "fact_layer", "fact_boost", "suppression",
                     "prior_boost", "prior_layer"},
                 "plant");
  PlantSpec plant = spec.plant.value_or(PlantSpec{});
  read(p, "fact_token", plant.fact_token);
  read(p, "halluc_token", plant.halluc_token);
  read(p, "fact_layer", plant.fact_layer);
  read(p, "fact_boost", plant.fact_boost);
  read(p, "suppression", plant.suppression);
  read(p, "prior_boost", plant.prior_boost);
  if (p.contains("prior_layer")) {
    if (p.at("prior_layer").is_null()) plant.prior_layer.reset();
    else plant.prior_layer = p.at("prior_layer").get<LayerIndex>();
  }
  spec.plant = plant;
}

}  // namespace eva::cli
