// SPDX-License-Identifier: Apache-2.0
//
// On-disk dual-stream trace format (schema "1"); see docs/trace-format.md.
//
//   ASCII line: EVATRACE 1 vocab_size=V num_layers=N model_id=ID P=p Q=q steps=S\n
//   per step:   u64 step_index | i64 emitted_token (-1 = none)
//               u64 byte length (4NV) | N*V f32 original, layer-major
//               u64 byte length (4NV) | N*V f32 prior, layer-major
//   trailer:    u64 FNV-1a-64 of every preceding byte
//
// All integers and floats little-endian. Logits must be finite and within
// [-kMaxAbsLogit, kMaxAbsLogit].
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "eva/core.hpp"

namespace eva {

inline constexpr std::string_view kTraceMagic = "EVATRACE";
inline constexpr std::string_view kTraceSchemaVersion = "1";
inline constexpr double kMaxAbsLogit = 100.0;

struct TraceFile {
  TraceHeader header;
  std::vector<StepTrace> steps;
  std::uint64_t checksum = 0;  // filled by read / encode
};

/// Ground truth and hallucinated token for one annotated example.
struct HallucAnnotation {
  std::string example_id;
  std::vector<TokenId> context_tokens;
  std::vector<TokenId> ground_truth_tokens;
  TokenId halluc_token = 0;

  void validate() const;
  friend bool operator==(const HallucAnnotation&, const HallucAnnotation&) = default;
};

std::uint64_t fnv1a64(std::string_view bytes);

/// Byte image of a trace file. Throws kInvalidInput for files that violate
/// the format's invariants (the writer refuses rather than clamps).
std::string encode_trace(const TraceFile& file);
TraceFile decode_trace(std::string_view bytes);

void write_trace(const TraceFile& file, const std::filesystem::path& path);
TraceFile read_trace(const std::filesystem::path& path);

/// Header line for a trace whose values are exactly representable as f32.
TraceHeader make_header(std::size_t vocab_size, std::size_t num_layers, std::string model_id,
                        std::size_t visual_tokens = 0, std::size_t text_tokens = 1);

/// Rounds every logit to f32 precision, as a write/read round trip would.
StepTrace quantize_f32(const StepTrace& step);

/// One JSON object per line, in corpus order.
void write_annotations(const std::vector<HallucAnnotation>& annotations,
                       const std::filesystem::path& path);
std::vector<HallucAnnotation> read_annotations(const std::filesystem::path& path);

}  // namespace eva
