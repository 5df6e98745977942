// SPDX-License-Identifier: Apache-2.0
#include "eva/trace_io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

namespace eva {
namespace {

constexpr std::size_t kMaxHeaderLine = 4096;

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f32(std::string& out, float f) {
  const auto v = std::bit_cast<std::uint32_t>(f);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_u64(std::string_view in, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i)
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

float get_f32(std::string_view in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return std::bit_cast<float>(v);
}

bool valid_model_id(const std::string& id) {
  return !id.empty() && std::all_of(id.begin(), id.end(), [](char c) {
    return static_cast<unsigned char>(c) > 0x20 && static_cast<unsigned char>(c) < 0x7F;
  });
}

std::size_t parse_count(const std::map<std::string, std::string>& kv, const std::string& key) {
  const auto it = kv.find(key);
  if (it == kv.end()) raise(ErrorKind::kSchema, "trace header missing " + key);
  std::size_t v = 0;
  const auto& s = it->second;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
    raise(ErrorKind::kSchema, "trace header field " + key + " is not a count: " + s);
  return v;
}

std::size_t block_bytes(const TraceHeader& h) { return h.num_layers * h.vocab_size * 4; }

void check_logit_range(const LogitVector& v, std::size_t step) {
  for (double x : v.values())
    if (std::abs(x) > kMaxAbsLogit)
      raise(ErrorKind::kInvalidInput, "step " + std::to_string(step) + " logit " +
                                          std::to_string(x) + " outside storable range");
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorKind::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) raise(ErrorKind::kIo, "read failed: " + path.string());
  return std::move(ss).str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) raise(ErrorKind::kIo, "cannot create " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) raise(ErrorKind::kIo, "write failed: " + path.string());
}

}  // namespace

void HallucAnnotation::validate() const {
  if (ground_truth_tokens.empty())
    raise(ErrorKind::kData, "annotation " + example_id + " has no ground-truth tokens");
  if (std::find(ground_truth_tokens.begin(), ground_truth_tokens.end(), halluc_token) !=
      ground_truth_tokens.end())
    raise(ErrorKind::kData, "annotation " + example_id + " lists its hallucinated token as ground truth");
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

TraceHeader make_header(std::size_t vocab_size, std::size_t num_layers, std::string model_id,
                        std::size_t visual_tokens, std::size_t text_tokens) {
  TraceHeader h;
  h.vocab_size = vocab_size;
  h.num_layers = num_layers;
  h.model_id = std::move(model_id);
  h.visual_token_count = visual_tokens;
  h.text_token_count = text_tokens;
  h.schema_version = std::string(kTraceSchemaVersion);
  return h;
}

StepTrace quantize_f32(const StepTrace& step) {
  auto round_all = [](const std::vector<LogitVector>& layers) {
    std::vector<LogitVector> out;
    out.reserve(layers.size());
    for (const LogitVector& l : layers) {
      std::vector<double> v(l.values().begin(), l.values().end());
      for (double& x : v) x = static_cast<double>(static_cast<float>(x));
      out.emplace_back(std::move(v));
    }
    return out;
  };
  StepTrace q = step;
  q.original_logits = round_all(step.original_logits);
  q.prior_logits = round_all(step.prior_logits);
  return q;
}

std::string encode_trace(const TraceFile& file) {
  const TraceHeader& h = file.header;
  try {
    h.validate();
  } catch (const Error& e) {
    raise(ErrorKind::kInvalidInput, std::string("refusing to write: ") + e.what());
  }
  if (h.schema_version != kTraceSchemaVersion)
    raise(ErrorKind::kInvalidInput, "refusing to write schema version " + h.schema_version);
  if (!valid_model_id(h.model_id))
    raise(ErrorKind::kInvalidInput, "model_id must be non-empty printable ASCII without spaces");

  std::string out;
  out += std::string(kTraceMagic) + " " + h.schema_version;
  out += " vocab_size=" + std::to_string(h.vocab_size);
  out += " num_layers=" + std::to_string(h.num_layers);
  out += " model_id=" + h.model_id;
  out += " P=" + std::to_string(h.visual_token_count);
  out += " Q=" + std::to_string(h.text_token_count);
  out += " steps=" + std::to_string(file.steps.size());
  out += '\n';

  const std::size_t bytes = block_bytes(h);
  for (const StepTrace& s : file.steps) {
    try {
      s.validate(h);
    } catch (const Error& e) {
      raise(ErrorKind::kInvalidInput, std::string("refusing to write: ") + e.what());
    }
    put_u64(out, s.step_index);
    put_u64(out, s.emitted_token ? static_cast<std::uint64_t>(static_cast<std::int64_t>(*s.emitted_token))
                                 : static_cast<std::uint64_t>(std::int64_t{-1}));
    for (const auto* stream : {&s.original_logits, &s.prior_logits}) {
      put_u64(out, bytes);
      for (const LogitVector& layer : *stream) {
        check_logit_range(layer, s.step_index);
        for (double x : layer.values()) put_f32(out, static_cast<float>(x));
      }
    }
  }
  put_u64(out, fnv1a64(out));
  return out;
}

TraceFile decode_trace(std::string_view bytes) {
  const std::size_t eol = bytes.substr(0, kMaxHeaderLine).find('\n');
  if (eol == std::string_view::npos) raise(ErrorKind::kSchema, "missing trace header line");
  std::istringstream line{std::string(bytes.substr(0, eol))};
  std::string magic, version;
  line >> magic >> version;
  if (magic != kTraceMagic) raise(ErrorKind::kSchema, "not a trace file (bad magic)");
  if (version != kTraceSchemaVersion)
    raise(ErrorKind::kVersion, "unsupported trace schema version '" + version + "'");

  std::map<std::string, std::string> kv;
  for (std::string tok; line >> tok;) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) raise(ErrorKind::kSchema, "malformed header token: " + tok);
    kv[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  TraceFile file;
  TraceHeader& h = file.header;
  h.schema_version = version;
  h.vocab_size = parse_count(kv, "vocab_size");
  h.num_layers = parse_count(kv, "num_layers");
  h.visual_token_count = parse_count(kv, "P");
  h.text_token_count = parse_count(kv, "Q");
  const std::size_t num_steps = parse_count(kv, "steps");
  if (!kv.count("model_id")) raise(ErrorKind::kSchema, "trace header missing model_id");
  h.model_id = kv["model_id"];
  h.validate();
  if (h.vocab_size > (std::size_t{1} << 24) || h.num_layers > (std::size_t{1} << 12) ||
      num_steps > bytes.size())
    raise(ErrorKind::kDimension, "trace header dimensions exceed the file");

  const std::size_t block = block_bytes(h);
  const std::size_t per_step = 8 + 8 + 2 * (8 + block);
  const std::size_t body = eol + 1;
  if (bytes.size() != body + num_steps * per_step + 8)
    raise(ErrorKind::kDimension, "file size " + std::to_string(bytes.size()) +
                                     " does not match header dimensions");

  const std::size_t trailer = bytes.size() - 8;
  file.checksum = get_u64(bytes, trailer);
  if (fnv1a64(bytes.substr(0, trailer)) != file.checksum)
    raise(ErrorKind::kChecksum, "trace checksum mismatch");

  std::size_t at = body;
  file.steps.reserve(num_steps);
  for (std::size_t s = 0; s < num_steps; ++s) {
    StepTrace step;
    step.step_index = get_u64(bytes, at);
    const auto emitted = static_cast<std::int64_t>(get_u64(bytes, at + 8));
    at += 16;
    if (emitted >= 0) {
      if (static_cast<std::uint64_t>(emitted) >= h.vocab_size)
        raise(ErrorKind::kDimension, "emitted token out of vocabulary at step " + std::to_string(s));
      step.emitted_token = static_cast<TokenId>(emitted);
    } else if (emitted != -1) {
      raise(ErrorKind::kSchema, "invalid emitted token marker at step " + std::to_string(s));
    }
    for (auto* stream : {&step.original_logits, &step.prior_logits}) {
      if (get_u64(bytes, at) != block)
        raise(ErrorKind::kDimension, "block length mismatch at step " + std::to_string(s));
      at += 8;
      stream->reserve(h.num_layers);
      for (std::size_t j = 0; j < h.num_layers; ++j) {
        std::vector<double> values(h.vocab_size);
        for (std::size_t i = 0; i < h.vocab_size; ++i, at += 4) {
          const double x = get_f32(bytes, at);
          if (!std::isfinite(x) || std::abs(x) > kMaxAbsLogit)
            raise(ErrorKind::kFiniteness, "step " + std::to_string(s) + " layer " +
                                              std::to_string(j) + " holds a non-finite or "
                                              "out-of-range logit");
          values[i] = x;
        }
        stream->emplace_back(std::move(values));
      }
    }
    file.steps.push_back(std::move(step));
  }
  return file;
}

void write_trace(const TraceFile& file, const std::filesystem::path& path) {
  write_file(path, encode_trace(file));
}

TraceFile read_trace(const std::filesystem::path& path) { return decode_trace(read_file(path)); }

void write_annotations(const std::vector<HallucAnnotation>& annotations,
                       const std::filesystem::path& path) {
  std::string out;
  for (const HallucAnnotation& a : annotations) {
    a.validate();
    nlohmann::json j{{"example_id", a.example_id},
                     {"context_tokens", a.context_tokens},
                     {"ground_truth_tokens", a.ground_truth_tokens},
                     {"halluc_token", a.halluc_token}};
    out += j.dump() + "\n";
  }
  write_file(path, out);
}

std::vector<HallucAnnotation> read_annotations(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::vector<HallucAnnotation> out;
  std::set<std::string> ids;
  std::size_t lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      HallucAnnotation a;
      a.example_id = j.at("example_id").get<std::string>();
      a.context_tokens = j.value("context_tokens", std::vector<TokenId>{});
      a.ground_truth_tokens = j.at("ground_truth_tokens").get<std::vector<TokenId>>();
      a.halluc_token = j.at("halluc_token").get<TokenId>();
      a.validate();
      if (!ids.insert(a.example_id).second)
        raise(ErrorKind::kData, "duplicate example_id " + a.example_id);
      out.push_back(std::move(a));
    } catch (const nlohmann::json::exception& e) {
      raise(ErrorKind::kData, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace eva
