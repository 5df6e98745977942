// SPDX-License-Identifier: Apache-2.0
#include "cli.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "config_json.hpp"
#include "eva/decoder.hpp"
#include "eva/evalkit.hpp"
#include "eva/kernels.hpp"
#include "eva/layer_dynamics.hpp"
#include "eva/parallel.hpp"
#include "eva/toy_model.hpp"
#include "eva/trace_io.hpp"
#include "json.hpp"

#ifndef EVA_DEFAULT_SYNONYMS
#define EVA_DEFAULT_SYNONYMS "data/coco_synonyms.jsonl"
#endif

namespace eva::cli {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

[[noreturn]] void usage(const std::string& msg) { raise(ErrorKind::kConfig, msg); }

// ---------------------------------------------------------------------------
// Flags

struct DecodeFlags {
  std::optional<double> alpha, top_p, nucleus_p, temperature;
  std::optional<std::string> strategy, candidate_source;
  std::optional<int> layer_lo, layer_hi, beam_width, max_new_tokens;
  std::optional<std::uint64_t> seed;
  std::optional<TokenId> eos;
  bool no_max_prob = false;
  bool no_max_jsd = false;
  bool ghost_remainder = false;
};

void add_decode_flags(CLI::App* cmd, DecodeFlags& f) {
  cmd->add_option("--alpha", f.alpha, "correction strength (default 1)");
  cmd->add_option("--top-p", f.top_p, "candidate-set mass (default 0.9)");
  auto* lo = cmd->add_option("--layer-lo", f.layer_lo, "first window layer");
  auto* hi = cmd->add_option("--layer-hi", f.layer_hi, "last window layer");
  lo->needs(hi);
  hi->needs(lo);
  cmd->add_option("--strategy", f.strategy, "greedy | nucleus | beam");
  cmd->add_option("--beam-width", f.beam_width, "beam width (default 3)");
  cmd->add_option("--nucleus-p", f.nucleus_p, "nucleus mass (default 0.9)");
  cmd->add_option("--temperature", f.temperature, "sampling temperature (default 1)");
  cmd->add_option("--seed", f.seed, "sampling seed (default 0)");
  cmd->add_option("--max-new-tokens", f.max_new_tokens, "token budget (default 16)");
  cmd->add_option("--eos", f.eos, "end-of-sequence token id");
  cmd->add_option("--candidate-source", f.candidate_source, "final_layer | per_layer");
  cmd->add_flag("--no-max-prob", f.no_max_prob, "replace the max_prob coefficient by 1");
  cmd->add_flag("--no-max-jsd", f.no_max_jsd, "replace the max_jsd coefficient by 1");
  cmd->add_flag("--ghost-remainder", f.ghost_remainder,
                "JSD over candidates plus one remainder bin instead of renormalizing");
}

struct ToyFlags {
  bool toy = false;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> layers, vocab;
  std::optional<double> noise, salience, fact_boost, suppression, prior_boost;
  std::optional<TokenId> fact_token, halluc_token;
  std::optional<int> fact_layer, prior_layer;
  bool no_plant = false;
  std::vector<CLI::Option*> options;

  bool any() const {
    for (const CLI::Option* o : options)
      if (o->count() > 0) return true;
    return false;
  }
};

void add_toy_flags(CLI::App* cmd, ToyFlags& f) {
  auto& o = f.options;
  o.push_back(cmd->add_flag("--toy", f.toy, "use the synthetic toy model"));
  o.push_back(cmd->add_option("--toy-seed", f.seed, "toy model seed (default 0)"));
  o.push_back(cmd->add_option("--toy-layers", f.layers, "toy layer count (default 32)"));
  o.push_back(cmd->add_option("--toy-vocab", f.vocab, "toy vocabulary size (default 64)"));
  o.push_back(cmd->add_option("--toy-noise", f.noise, "random-walk step scale (default 0.1)"));
  o.push_back(cmd->add_option("--toy-salience", f.salience, "offset of the planted tokens (default 2)"));
  o.push_back(cmd->add_option("--fact-token", f.fact_token, "planted fact token (default 0)"));
  o.push_back(cmd->add_option("--halluc-token", f.halluc_token, "hallucinated token (default 1)"));
  o.push_back(cmd->add_option("--fact-layer", f.fact_layer, "layer carrying the fact"));
  o.push_back(cmd->add_option("--fact-boost", f.fact_boost, "fact logit boost (default 4)"));
  o.push_back(cmd->add_option("--suppression", f.suppression, "final-layer halluc boost (default 2)"));
  o.push_back(cmd->add_option("--prior-layer", f.prior_layer, "layer with extra prior pressure"));
  o.push_back(cmd->add_option("--prior-boost", f.prior_boost, "prior-layer halluc boost (default 5)"));
  o.push_back(cmd->add_flag("--no-plant", f.no_plant, "no planted fact"));
}

struct CommonFlags {
  std::optional<std::string> config;
  std::optional<unsigned> jobs;
};

void add_common_flags(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "JSON config file or a run manifest");
  cmd->add_option("--jobs", f.jobs, "worker threads (default $EVA_JOBS or 1; 0 = all cores)");
}

// ---------------------------------------------------------------------------
// Resolution: flags > config file > defaults

struct FileConfig {
  json decode = json::object();
  std::optional<std::string> method;
  json toy;  // null when absent
  json params = json::object();
};

FileConfig load_config(const std::optional<std::string>& path) {
  FileConfig fc;
  if (!path) return fc;
  std::ifstream in(*path);
  if (!in) raise(ErrorKind::kIo, "cannot open config " + *path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    raise(ErrorKind::kConfig, "config " + *path + ": " + e.what());
  }
  if (j.is_object() && j.contains("command") && j.contains("config")) j = j.at("config");
  if (!j.is_object()) usage("config must be a JSON object");
  for (const auto& [key, _] : j.items())
    if (key != "decode" && key != "method" && key != "toy" && key != "params")
      usage("unknown config key: " + key);
  if (j.contains("decode")) fc.decode = j.at("decode");
  if (j.contains("method") && !j.at("method").is_null()) fc.method = j.at("method").get<std::string>();
  if (j.contains("toy")) fc.toy = j.at("toy");
  if (j.contains("params")) fc.params = j.at("params");
  if (!fc.params.is_object()) usage("config params must be an object");
  return fc;
}

template <typename T>
T param(const FileConfig& fc, const char* key, const std::optional<T>& flag, T fallback) {
  if (flag) return *flag;
  if (fc.params.contains(key)) {
    try {
      return fc.params.at(key).get<T>();
    } catch (const json::exception& e) {
      usage(std::string("bad config param ") + key + ": " + e.what());
    }
  }
  return fallback;
}

DecodeConfig resolve_decode(const FileConfig& fc, const DecodeFlags& f) {
  DecodeConfig cfg;
  apply_json(fc.decode, cfg);
  if (f.alpha) cfg.alpha = *f.alpha;
  if (f.top_p) cfg.top_p = *f.top_p;
  if (f.layer_lo) cfg.layer_window = LayerWindow{*f.layer_lo, *f.layer_hi};
  if (f.strategy) cfg.strategy = parse_strategy(*f.strategy);
  if (f.beam_width) cfg.beam_width = *f.beam_width;
  if (f.nucleus_p) cfg.nucleus_p = *f.nucleus_p;
  if (f.temperature) cfg.temperature = *f.temperature;
  if (f.seed) cfg.seed = *f.seed;
  if (f.max_new_tokens) cfg.max_new_tokens = *f.max_new_tokens;
  if (f.eos) cfg.eos_token = *f.eos;
  if (f.candidate_source) cfg.candidate_source = parse_candidate_source(*f.candidate_source);
  if (f.no_max_prob) cfg.modulation.use_max_prob = false;
  if (f.no_max_jsd) cfg.modulation.use_max_jsd = false;
  if (f.ghost_remainder) cfg.renormalize_candidates = false;
  cfg.validate();
  return cfg;
}

Method resolve_method(const FileConfig& fc, const std::optional<std::string>& flag, Method fallback) {
  if (flag) return parse_method(*flag);
  if (fc.method) return parse_method(*fc.method);
  return fallback;
}

// The planted layer defaults to the middle of the default window.
LayerIndex default_fact_layer(std::size_t num_layers) {
  const LayerWindow w = default_layer_window(num_layers);
  return w.lo + static_cast<LayerIndex>(w.size() / 2);
}

ToySpec resolve_toy(const FileConfig& fc, const ToyFlags& f) {
  ToySpec spec;
  spec.plant = PlantSpec{};
  bool fact_layer_set = false;
  if (fc.toy.is_object()) {
    apply_json(fc.toy, spec);
    fact_layer_set = fc.toy.contains("plant") && fc.toy.at("plant").is_object() &&
                     fc.toy.at("plant").contains("fact_layer");
  }
  if (f.seed) spec.seed = *f.seed;
  if (f.layers) spec.num_layers = *f.layers;
  if (f.vocab) spec.vocab_size = *f.vocab;
  if (f.noise) spec.noise_scale = *f.noise;
  if (f.salience) spec.salience = *f.salience;
  if (f.no_plant) spec.plant.reset();
  if (spec.plant) {
    PlantSpec& p = *spec.plant;
    if (f.fact_token) p.fact_token = *f.fact_token;
    if (f.halluc_token) p.halluc_token = *f.halluc_token;
    if (f.fact_layer) p.fact_layer = *f.fact_layer;
    else if (!fact_layer_set) p.fact_layer = default_fact_layer(spec.num_layers);
    if (f.fact_boost) p.fact_boost = *f.fact_boost;
    if (f.suppression) p.suppression = *f.suppression;
    if (f.prior_layer) p.prior_layer = *f.prior_layer;
    if (f.prior_boost) p.prior_boost = *f.prior_boost;
  } else if (f.fact_token || f.halluc_token || f.fact_layer || f.fact_boost || f.suppression ||
             f.prior_layer || f.prior_boost) {
    usage("plant flags conflict with --no-plant");
  }
  spec.validate();
  return spec;
}

unsigned resolve_jobs(const FileConfig& fc, const std::optional<unsigned>& flag) {
  std::optional<unsigned> env;
  if (const char* s = std::getenv("EVA_JOBS"); s && *s) {
    char* end = nullptr;
    const unsigned long v = std::strtoul(s, &end, 10);
    if (*end != '\0' || v > 4096) usage(std::string("EVA_JOBS must be an integer in [0, 4096], got ") + s);
    env = static_cast<unsigned>(v);
  }
  unsigned jobs = param<unsigned>(fc, "jobs", flag, env.value_or(1u));
  if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
  return jobs;
}

// ---------------------------------------------------------------------------
// Output helpers

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) raise(ErrorKind::kIo, "cannot write " + path.string());
  out << text;
  out.flush();
  if (!out) raise(ErrorKind::kIo, "write failed: " + path.string());
}

void check_not_input(const fs::path& output, const std::vector<fs::path>& inputs) {
  std::error_code ec;
  const fs::path o = fs::weakly_canonical(output, ec);
  for (const fs::path& in : inputs) {
    std::error_code ec2;
    if (!ec && fs::weakly_canonical(in, ec2) == o && !ec2)
      usage("output " + output.string() + " would overwrite an input");
  }
}

struct Manifest {
  std::string command;
  json config;
  json inputs = json::object();
  json outputs = json::object();
  std::optional<std::uint64_t> seed;
  unsigned jobs = 1;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  void write(const fs::path& artifact) const {
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    json j;
    j["command"] = command;
    j["tool_version"] = kToolVersion;
    j["config"] = config;
    j["inputs"] = inputs;
    j["outputs"] = outputs;
    j["seed"] = seed ? json(*seed) : json(nullptr);
    j["jobs"] = jobs;
    j["simd_backend"] = kernels::active().name;
    j["duration_seconds"] = seconds;
    write_text(artifact.string() + ".manifest.json", j.dump(2) + "\n");
  }
};

json config_echo(const DecodeConfig* cfg, std::optional<Method> method, const ToySpec* toy,
                 json params) {
  json j;
  j["decode"] = cfg ? to_json(*cfg) : json(nullptr);
  j["method"] = method ? json(to_string(*method)) : json(nullptr);
  j["toy"] = toy ? to_json(*toy) : json(nullptr);
  j["params"] = std::move(params);
  return j;
}

json selection_json(const LayerSelection& sel) {
  return {{"method", to_string(sel.method)},
          {"target_layer", sel.target_layer},
          {"window", {sel.window.lo, sel.window.hi}},
          {"jsd_by_layer", sel.jsd_by_layer},
          {"candidate_prob_by_layer", sel.candidate_prob_by_layer},
          {"candidates", sel.candidate_set.token_ids}};
}

// ---------------------------------------------------------------------------
// Sources

struct SourceChoice {
  std::unique_ptr<LogitSource> source;
  std::optional<ToySpec> toy;
  std::optional<fs::path> trace_path;
};

SourceChoice choose_source(const FileConfig& fc, const ToyFlags& tf,
                           const std::optional<std::string>& trace) {
  SourceChoice c;
  if (trace) {
    c.trace_path = *trace;
    c.source = std::make_unique<RecordedSource>(read_trace(*trace).steps);
  } else if (tf.any() || fc.toy.is_object()) {
    c.toy = resolve_toy(fc, tf);
    c.source = std::make_unique<ToyModel>(*c.toy);
  } else {
    usage("need --trace PATH or --toy");
  }
  return c;
}

// ---------------------------------------------------------------------------
// Commands

struct Streams {
  std::ostream& out;
  std::ostream& err;
};

struct GenTracesArgs {
  CommonFlags common;
  ToyFlags toy;
  std::optional<std::size_t> steps, corpus;
  std::string out;
  std::optional<std::string> annotations_out;
};

int cmd_gen_traces(const GenTracesArgs& a, Streams io) {
  const FileConfig fc = load_config(a.common.config);
  const ToySpec spec = resolve_toy(fc, a.toy);
  const unsigned jobs = resolve_jobs(fc, a.common.jobs);
  Manifest m;
  m.command = "gen-traces";
  m.seed = spec.seed;
  m.jobs = jobs;
  m.outputs["trace"] = a.out;

  const std::size_t corpus = param<std::size_t>(fc, "corpus", a.corpus, 0);
  if (corpus > 0) {
    if (!a.annotations_out) usage("--corpus needs --annotations-out");
    const AnnotatedCorpus c = generate_annotated_corpus(spec, corpus, jobs);
    write_trace(TraceFile{c.header, c.traces, 0}, a.out);
    write_annotations(c.annotations, *a.annotations_out);
    m.outputs["annotations"] = *a.annotations_out;
    m.config = config_echo(nullptr, std::nullopt, &spec, {{"corpus", corpus}});
    io.out << "wrote " << corpus << " annotated examples to " << a.out << "\n";
  } else {
    if (a.annotations_out) usage("--annotations-out needs --corpus");
    const std::size_t steps = param<std::size_t>(fc, "steps", a.steps, 1);
    if (steps == 0) usage("--steps must be positive");
    const ToyModel model(spec);
    write_trace(TraceFile{model.header(), generate_trace(spec, steps), 0}, a.out);
    m.config = config_echo(nullptr, std::nullopt, &spec, {{"steps", steps}});
    io.out << "wrote " << steps << " steps to " << a.out << "\n";
  }
  m.write(a.out);
  return kExitOk;
}

struct DecodeArgs {
  CommonFlags common;
  DecodeFlags decode;
  ToyFlags toy;
  std::optional<std::string> method;
  std::optional<std::string> trace, out, steps_out;
};

int cmd_decode(const DecodeArgs& a, Streams io) {
  const FileConfig fc = load_config(a.common.config);
  const DecodeConfig cfg = resolve_decode(fc, a.decode);
  const Method method = resolve_method(fc, a.method, Method::kEva);
  const unsigned jobs = resolve_jobs(fc, a.common.jobs);
  SourceChoice src = choose_source(fc, a.toy, a.trace);
  std::vector<fs::path> inputs;
  if (src.trace_path) inputs.push_back(*src.trace_path);
  if (a.out) check_not_input(*a.out, inputs);
  if (a.steps_out) check_not_input(*a.steps_out, inputs);

  Manifest m;
  m.command = "decode";
  m.seed = cfg.seed;
  m.jobs = jobs;
  m.config = config_echo(&cfg, method, src.toy ? &*src.toy : nullptr, json::object());
  if (src.trace_path) m.inputs["trace"] = src.trace_path->string();

  DecodeSession session(cfg, *src.source);
  const DecodeResult r = decode(session, method);

  const std::string tokens_line =
      json{{"tokens", r.tokens}, {"truncated", r.truncated}, {"hit_eos", r.hit_eos}}.dump() + "\n";
  if (a.out) {
    write_text(*a.out, tokens_line);
    m.outputs["tokens"] = *a.out;
  } else {
    io.out << tokens_line;
  }
  if (a.steps_out) {
    std::string lines;
    for (const StepRecord& s : r.steps) {
      json j{{"step", s.step}, {"token", s.token}, {"log_prob", s.log_prob},
             {"method", to_string(method)}};
      j["selection"] = s.selection ? selection_json(*s.selection) : json(nullptr);
      j["modulation"] = s.modulation ? json{{"max_prob", s.modulation->max_prob},
                                            {"max_jsd", s.modulation->max_jsd},
                                            {"target_layer", s.modulation->target_layer}}
                                     : json(nullptr);
      lines += j.dump() + "\n";
    }
    write_text(*a.steps_out, lines);
    m.outputs["steps"] = *a.steps_out;
  }
  if (a.out) m.write(*a.out);
  else if (a.steps_out) m.write(*a.steps_out);
  return kExitOk;
}

struct LayerReportArgs {
  CommonFlags common;
  DecodeFlags decode;
  ToyFlags toy;
  std::optional<std::string> trace, out;
  std::optional<std::size_t> steps, top_k;
};

int cmd_layer_report(const LayerReportArgs& a, Streams io) {
  const FileConfig fc = load_config(a.common.config);
  const DecodeConfig cfg = resolve_decode(fc, a.decode);
  const unsigned jobs = resolve_jobs(fc, a.common.jobs);
  const std::size_t top_k = param<std::size_t>(fc, "top_k", a.top_k, 5);
  if (top_k == 0) usage("--top-k must be positive");

  std::vector<StepTrace> traces;
  std::optional<ToySpec> toy;
  json params{{"top_k", top_k}};
  if (a.trace) {
    if (a.out) check_not_input(*a.out, {*a.trace});
    traces = read_trace(*a.trace).steps;
  } else if (a.toy.any() || fc.toy.is_object()) {
    toy = resolve_toy(fc, a.toy);
    const std::size_t steps = param<std::size_t>(fc, "steps", a.steps, 1);
    if (steps == 0) usage("--steps must be positive");
    traces = generate_trace(*toy, steps);
    params["steps"] = steps;
  } else {
    usage("need --trace PATH or --toy");
  }

  std::vector<std::string> chunks(traces.size());
  parallel_for(traces.size(), jobs, [&](std::size_t i) {
    const LayerEvolutionReport rep = evolution_report(traces[i], cfg, top_k);
    const LayerWindow w = cfg.resolve_window(traces[i].num_layers());
    std::string& s = chunks[i];
    for (const LayerRecord& l : rep.layers) {
      s += json{{"step", rep.step_index},
                {"layer", l.layer},
                {"in_window", w.contains(l.layer)},
                {"tracked_tokens", rep.tracked_tokens},
                {"original_probs", l.original_probs},
                {"prior_probs", l.prior_probs},
                {"candidate_jsd", l.candidate_jsd}}
               .dump();
      s += "\n";
    }
  });
  std::string text;
  for (const std::string& c : chunks) text += c;

  if (!a.out) {
    io.out << text;
    return kExitOk;
  }
  write_text(*a.out, text);
  Manifest m;
  m.command = "layer-report";
  m.seed = toy ? std::optional<std::uint64_t>(toy->seed) : std::nullopt;
  m.jobs = jobs;
  m.config = config_echo(&cfg, std::nullopt, toy ? &*toy : nullptr, params);
  if (a.trace) m.inputs["trace"] = *a.trace;
  m.outputs["report"] = *a.out;
  m.write(*a.out);
  return kExitOk;
}

// Report to --out (plus manifest) and summary to stdout, or report to stdout
// and summary to stderr.
void emit_report(const json& report, const std::string& summary, const std::optional<std::string>& out,
                 Manifest& m, Streams io) {
  if (out) {
    write_text(*out, report.dump() + "\n");
    m.outputs["report"] = *out;
    m.write(*out);
    io.out << summary;
  } else {
    io.out << report.dump() << "\n";
    io.err << summary;
  }
}

std::string fmt(std::optional<double> v) {
  if (!v) return "undefined";
  std::ostringstream s;
  s.precision(4);
  s << std::fixed << *v;
  return s.str();
}

struct ChairArgs {
  CommonFlags common;
  std::string captions, ground_truth;
  std::string synonyms = EVA_DEFAULT_SYNONYMS;
  std::optional<std::string> out;
};

int cmd_eval_chair(const ChairArgs& a, Streams io) {
  const FileConfig fc = load_config(a.common.config);
  if (a.out) check_not_input(*a.out, {a.captions, a.ground_truth, a.synonyms});
  ChairInput in;
  in.captions = load_captions(a.captions);
  in.ground_truth = load_ground_truth(a.ground_truth);
  in.synonyms = SynonymLexicon::load(a.synonyms);
  const ChairScores s = chair_scores(in);

  const json report{{"chair_s", s.chair_s ? json(*s.chair_s) : json(nullptr)},
                    {"chair_i", s.chair_i ? json(*s.chair_i) : json(nullptr)},
                    {"num_captions", s.num_captions},
                    {"num_hallucinated_captions", s.num_hallucinated_captions},
                    {"num_mentions", s.num_mentions},
                    {"num_hallucinated_mentions", s.num_hallucinated_mentions}};
  std::ostringstream summary;
  summary << "CHAIR_S " << fmt(s.chair_s) << " (" << s.num_hallucinated_captions << "/"
          << s.num_captions << " captions)  CHAIR_I " << fmt(s.chair_i) << " ("
          << s.num_hallucinated_mentions << "/" << s.num_mentions << " mentions)\n";
  Manifest m;
  m.command = "eval-chair";
  m.jobs = resolve_jobs(fc, a.common.jobs);
  m.config = config_echo(nullptr, std::nullopt, nullptr, json::object());
  m.inputs = {{"captions", a.captions}, {"ground_truth", a.ground_truth}, {"synonyms", a.synonyms}};
  emit_report(report, summary.str(), a.out, m, io);
  return kExitOk;
}

struct PopeArgs {
  CommonFlags common;
  std::string records;
  std::optional<std::string> out;
};

int cmd_eval_pope(const PopeArgs& a, Streams io) {
  const FileConfig fc = load_config(a.common.config);
  if (a.out) check_not_input(*a.out, {a.records});
  const PopeScores s = pope_f1(load_pope(a.records));

  json splits = json::object();
  std::ostringstream summary;
  for (PopeSplit split : kPopeSplits) {
    const SplitF1& f = s.per_split.at(split);
    splits[to_string(split)] = {{"tp", f.tp}, {"fp", f.fp}, {"fn", f.fn}, {"tn", f.tn},
                                {"precision", f.precision}, {"recall", f.recall},
                                {"f1", f.f1}, {"degenerate", f.degenerate}};
    summary << to_string(split) << " F1 " << fmt(f.f1) << "  ";
  }
  summary << "average F1 " << fmt(s.average_f1) << "\n";
  for (const std::string& w : s.warnings) io.err << "warning: " << w << "\n";
  const json report{{"splits", splits}, {"average_f1", s.average_f1}, {"warnings", s.warnings}};
  Manifest m;
  m.command = "eval-pope";
  m.jobs = resolve_jobs(fc, a.common.jobs);
  m.config = config_echo(nullptr, std::nullopt, nullptr, json::object());
  m.inputs = {{"records", a.records}};
  emit_report(report, summary.str(), a.out, m, io);
  return kExitOk;
}

struct ActivationArgs {
  CommonFlags common;
  DecodeFlags decode;
  ToyFlags toy;
  std::optional<std::string> trace, annotations, out, eva_candidates;
  std::optional<std::size_t> corpus;
  std::optional<double> threshold;
};

ActivationStream parse_stream(const std::string& s) {
  if (s == "original") return ActivationStream::kOriginalAtTarget;
  if (s == "visual") return ActivationStream::kVisualFacts;
  usage("--eva-candidates must be original or visual, got '" + s + "'");
}

int cmd_compare_activation(const ActivationArgs& a, Streams io) {
  const FileConfig fc = load_config(a.common.config);
  const DecodeConfig cfg = resolve_decode(fc, a.decode);
  const unsigned jobs = resolve_jobs(fc, a.common.jobs);
  ActivationOptions opt;
  opt.threshold = param<double>(fc, "threshold", a.threshold, opt.threshold);
  const std::string stream =
      param<std::string>(fc, "eva_candidates", a.eva_candidates, std::string("original"));
  opt.eva_candidates = parse_stream(stream);

  std::vector<StepTrace> traces;
  std::vector<HallucAnnotation> annotations;
  std::optional<ToySpec> toy;
  json params{{"threshold", opt.threshold}, {"eva_candidates", stream}};
  Manifest m;
  if (a.trace) {
    if (!a.annotations) usage("--trace needs --annotations");
    if (a.out) check_not_input(*a.out, {*a.trace, *a.annotations});
    traces = read_trace(*a.trace).steps;
    annotations = read_annotations(*a.annotations);
    m.inputs = {{"trace", *a.trace}, {"annotations", *a.annotations}};
  } else {
    if (a.annotations) usage("--annotations needs --trace");
    toy = resolve_toy(fc, a.toy);
    const std::size_t n = param<std::size_t>(fc, "corpus", a.corpus, 500);
    if (n == 0) usage("--corpus must be positive");
    AnnotatedCorpus c = generate_annotated_corpus(*toy, n, jobs);
    traces = std::move(c.traces);
    annotations = std::move(c.annotations);
    params["corpus"] = n;
  }

  const ActivationResult eva = activation_experiment(traces, annotations, cfg, Method::kEva, opt, jobs);
  const ActivationResult deco = activation_experiment(traces, annotations, cfg, Method::kDeco, opt, jobs);
  auto counts = [](const ActivationResult& r) {
    return json{{"n_data_with_gt_candidate", r.n_data_with_gt_candidate},
                {"n_activated_tokens", r.n_activated_tokens}};
  };
  const bool ge = eva.n_data_with_gt_candidate >= deco.n_data_with_gt_candidate &&
                  eva.n_activated_tokens >= deco.n_activated_tokens;
  const json report{{"corpus_size", eva.corpus_size}, {"threshold", opt.threshold},
                    {"eva_candidates", stream},      {"eva", counts(eva)},
                    {"deco", counts(deco)},          {"eva_ge_deco", ge}};
  std::ostringstream summary;
  summary << "corpus " << eva.corpus_size << ": eva " << eva.n_data_with_gt_candidate << " data / "
          << eva.n_activated_tokens << " tokens, deco " << deco.n_data_with_gt_candidate
          << " data / " << deco.n_activated_tokens << " tokens\n";

  m.command = "compare-activation";
  m.seed = toy ? std::optional<std::uint64_t>(toy->seed) : std::nullopt;
  m.jobs = jobs;
  m.config = config_echo(&cfg, std::nullopt, toy ? &*toy : nullptr, params);
  emit_report(report, summary.str(), a.out, m, io);
  return kExitOk;
}

struct SelftestArgs {
  CommonFlags common;
  ToyFlags toy;
  std::optional<std::size_t> examples;
};

int cmd_selftest(const SelftestArgs& a, Streams io) {
  const FileConfig fc = load_config(a.common.config);
  const ToySpec spec = resolve_toy(fc, a.toy);
  if (!spec.plant) usage("selftest needs a planted toy model");
  const unsigned jobs = resolve_jobs(fc, a.common.jobs);
  const std::size_t n = param<std::size_t>(fc, "examples", a.examples, 200);
  if (n == 0) usage("--examples must be positive");

  const auto start = std::chrono::steady_clock::now();
  const AnnotatedCorpus corpus = generate_annotated_corpus(spec, n, jobs);
  DecodeConfig cfg;
  cfg.max_new_tokens = 1;
  DecodeConfig zero = cfg;
  zero.alpha = 0.0;

  std::vector<int> eva_ok(n), vanilla_ok(n), zero_ok(n);
  parallel_for(n, jobs, [&](std::size_t i) {
    const RecordedSource src({corpus.traces[i]});
    auto first = [&](const DecodeConfig& c, Method m) {
      DecodeSession s(c, src);
      return decode_greedy(s, m).tokens.at(0);
    };
    const TokenId vanilla = first(cfg, Method::kVanilla);
    eva_ok[i] = first(cfg, Method::kEva) == corpus.plants[i].fact_token;
    vanilla_ok[i] = vanilla == corpus.plants[i].halluc_token;
    zero_ok[i] = first(zero, Method::kEva) == vanilla;
  });
  std::size_t eva_hits = 0, vanilla_hits = 0, zero_hits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    eva_hits += static_cast<std::size_t>(eva_ok[i]);
    vanilla_hits += static_cast<std::size_t>(vanilla_ok[i]);
    zero_hits += static_cast<std::size_t>(zero_ok[i]);
  }
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  const bool recovered = eva_hits * 100 >= n * 95 && vanilla_hits * 100 >= n * 95;
  const bool equivalent = zero_hits == n;
  io.out << (recovered ? "PASS" : "FAIL") << " planted-fact recovery: eva emits fact " << eva_hits
         << "/" << n << ", vanilla emits hallucination " << vanilla_hits << "/" << n << "\n";
  io.out << (equivalent ? "PASS" : "FAIL") << " alpha=0 matches vanilla " << zero_hits << "/" << n
         << "\n";
  io.out << "backend " << kernels::active().name << ", " << seconds << " s\n";
  return recovered && equivalent ? kExitOk : kExitNumeric;
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig: return kExitUsage;
    case ErrorKind::kNumeric: return kExitNumeric;
    default: return kExitData;
  }
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"EVA decoding toolkit: dual-stream traces, corrected decoding, metrics", "eva"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  GenTracesArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-traces", "write toy-model traces");
  add_common_flags(gen_cmd, gen.common);
  add_toy_flags(gen_cmd, gen.toy);
  auto* gen_steps = gen_cmd->add_option("--steps", gen.steps, "greedy-path steps to record (default 1)");
  auto* gen_corpus = gen_cmd->add_option("--corpus", gen.corpus, "annotated single-step examples");
  gen_steps->excludes(gen_corpus);
  gen_cmd->add_option("--out", gen.out, "trace file")->required();
  gen_cmd->add_option("--annotations-out", gen.annotations_out, "annotation JSONL (with --corpus)");

  DecodeArgs dec;
  auto* dec_cmd = app.add_subcommand("decode", "decode a trace or the toy model");
  add_common_flags(dec_cmd, dec.common);
  add_decode_flags(dec_cmd, dec.decode);
  add_toy_flags(dec_cmd, dec.toy);
  dec_cmd->add_option("--method", dec.method, "vanilla | eva | deco (default eva)");
  auto* dec_trace = dec_cmd->add_option("--trace", dec.trace, "recorded trace file");
  for (CLI::Option* o : dec.toy.options) dec_trace->excludes(o);
  dec_cmd->add_option("--out", dec.out, "token output (JSON line); stdout if absent");
  dec_cmd->add_option("--steps-out", dec.steps_out, "per-step selection report (JSONL)");

  LayerReportArgs lr;
  auto* lr_cmd = app.add_subcommand("layer-report", "per-layer probability trajectories");
  add_common_flags(lr_cmd, lr.common);
  add_decode_flags(lr_cmd, lr.decode);
  add_toy_flags(lr_cmd, lr.toy);
  auto* lr_trace = lr_cmd->add_option("--trace", lr.trace, "recorded trace file");
  for (CLI::Option* o : lr.toy.options) lr_trace->excludes(o);
  lr_cmd->add_option("--steps", lr.steps, "toy steps (default 1)")->excludes(lr_trace);
  lr_cmd->add_option("--top-k", lr.top_k, "tracked final-layer tokens (default 5)");
  lr_cmd->add_option("--out", lr.out, "report (JSONL); stdout if absent");

  ChairArgs chair;
  auto* chair_cmd = app.add_subcommand("eval-chair", "CHAIR_S / CHAIR_I");
  add_common_flags(chair_cmd, chair.common);
  chair_cmd->add_option("--captions", chair.captions, "JSONL {image_id, objects}")->required();
  chair_cmd->add_option("--ground-truth", chair.ground_truth, "JSONL {image_id, objects}")->required();
  chair_cmd->add_option("--synonyms", chair.synonyms, "synonym lexicon JSONL")->capture_default_str();
  chair_cmd->add_option("--out", chair.out, "report (JSON); stdout if absent");

  PopeArgs pope;
  auto* pope_cmd = app.add_subcommand("eval-pope", "POPE F1 per split");
  add_common_flags(pope_cmd, pope.common);
  pope_cmd->add_option("--records", pope.records, "JSONL {split, predicted, label}")->required();
  pope_cmd->add_option("--out", pope.out, "report (JSON); stdout if absent");

  ActivationArgs act;
  auto* act_cmd = app.add_subcommand("compare-activation", "activated ground-truth tokens, eva vs deco");
  add_common_flags(act_cmd, act.common);
  add_decode_flags(act_cmd, act.decode);
  add_toy_flags(act_cmd, act.toy);
  auto* act_trace = act_cmd->add_option("--trace", act.trace, "corpus trace file");
  for (CLI::Option* o : act.toy.options) act_trace->excludes(o);
  act_cmd->add_option("--annotations", act.annotations, "annotation JSONL (with --trace)");
  act_cmd->add_option("--corpus", act.corpus, "toy corpus size (default 500)")->excludes(act_trace);
  act_cmd->add_option("--threshold", act.threshold, "candidate mass (default 0.9)");
  act_cmd->add_option("--eva-candidates", act.eva_candidates, "original | visual (default original)");
  act_cmd->add_option("--out", act.out, "report (JSON); stdout if absent");

  SelftestArgs st;
  auto* st_cmd = app.add_subcommand("selftest", "planted-fact end-to-end check");
  add_common_flags(st_cmd, st.common);
  add_toy_flags(st_cmd, st.toy);
  st_cmd->add_option("--examples", st.examples, "planted examples (default 200)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  const Streams io{out, err};
  try {
    if (*gen_cmd) return cmd_gen_traces(gen, io);
    if (*dec_cmd) return cmd_decode(dec, io);
    if (*lr_cmd) return cmd_layer_report(lr, io);
    if (*chair_cmd) return cmd_eval_chair(chair, io);
    if (*pope_cmd) return cmd_eval_pope(pope, io);
    if (*act_cmd) return cmd_compare_activation(act, io);
    if (*st_cmd) return cmd_selftest(st, io);
  } catch (const Error& e) {
    err << "eva: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const json::exception& e) {
    err << "eva: data: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "eva: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace eva::cli
