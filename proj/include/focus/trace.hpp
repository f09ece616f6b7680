#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "focus/core.hpp"

namespace focus::trace {

/// Synthetic video-token generator settings.
///
/// Tokens are produced in FHW order. For frames after the first, a token is a
/// copy of the token at the same (r, c) in the previous frame with probability
/// `temporal_similarity`; otherwise, with probability `spatial_similarity`, a
/// copy of its left neighbour (or the one above, in column 0). Copies receive
/// i.i.d. N(0, noise_sigma^2) noise per element. Everything else, including all
/// text tokens, is drawn i.i.d. N(0, 1).
struct TraceGenConfig {
  Dims dims;
  double temporal_similarity = 0.0;
  double spatial_similarity = 0.0;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

TokenGrid generate_synthetic_trace(const TraceGenConfig& cfg);

inline constexpr char kTraceMagic[4] = {'F', 'C', 'T', 'R'};
inline constexpr std::uint16_t kTraceVersion = 1;

// Binary .fctr container: "FCTR", u16 version, u32 F,H,W,T,Dmodel, then image
// rows and text rows as f32, all little-endian. Only full grids are stored.
void write_trace(const TokenGrid& grid, std::ostream& out);
void write_trace(const TokenGrid& grid, const std::filesystem::path& path);
TokenGrid read_trace(std::istream& in);
TokenGrid read_trace(const std::filesystem::path& path);

struct SparsityRecord {
  std::uint32_t layer = 0;
  std::uint64_t retained_ops = 0;
  std::uint64_t total_ops = 0;
  std::uint64_t retained_tokens = 0;
  std::uint64_t compact_p = 0;

  double op_density() const {
    return total_ops == 0 ? 0.0 : static_cast<double>(retained_ops) / static_cast<double>(total_ops);
  }
  bool operator==(const SparsityRecord&) const = default;
};

struct SparsityTrace {
  std::vector<SparsityRecord> layers;

  // Checks the bounds that need the run configuration: S <= M and p <= m.
  void validate_against(std::size_t image_tokens, std::size_t tile_m) const;
  bool operator==(const SparsityTrace&) const = default;
};

inline constexpr const char* kSparsityHeader = "layer,retained_ops,total_ops,retained_tokens,compact_p";

SparsityTrace parse_sparsity_trace(std::istream& in);
SparsityTrace read_sparsity_trace(const std::filesystem::path& path);
void write_sparsity_trace(const SparsityTrace& trace, std::ostream& out);
void write_sparsity_trace(const SparsityTrace& trace, const std::filesystem::path& path);

// Little-endian primitives shared by every binary container in the project.
namespace le {
void put_u16(std::ostream& out, std::uint16_t v);
void put_u32(std::ostream& out, std::uint32_t v);
void put_f32(std::ostream& out, float v);
void put_f32s(std::ostream& out, std::span<const float> values);
// The `field` names what was being read when the stream ran dry.
std::uint16_t get_u16(std::istream& in, const char* field);
std::uint32_t get_u32(std::istream& in, const char* field);
void get_f32s(std::istream& in, std::span<float> out, const char* field);
}  // namespace le

}  // namespace focus::trace
