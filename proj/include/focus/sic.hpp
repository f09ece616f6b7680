#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "focus/config.hpp"
#include "focus/core.hpp"

// Similarity concentrator: conflict-free layout, block-wise vector gather and
// scatter reconstruction.
namespace focus::sic {

struct BankAssignment {
  std::uint32_t bank = 0;
  std::uint64_t offset = 0;
  bool operator==(const BankAssignment&) const = default;
};

std::uint32_t bank_of(std::uint32_t f, std::uint32_t r, std::uint32_t c);
std::uint64_t offset_of(std::uint32_t r, std::uint32_t c, std::uint32_t W);
inline BankAssignment layout_of(const Coord& x, std::uint32_t W) {
  return {bank_of(x.f, x.r, x.c), offset_of(x.r, x.c, W)};
}

struct ConflictReport {
  bool conflict_free = true;
  // First window (by its key coordinate) holding two members on the same bank.
  std::optional<Coord> window_key;
  std::optional<Coord> first;
  std::optional<Coord> second;
  std::uint64_t windows_checked = 0;
};

// Exhaustive over every stride-1 window position, clipped at the grid edges.
// Only the 2x2x2 block has a closed-form layout; other shapes throw.
ConflictReport verify_conflict_free(const Dims& dims, const BlockConfig& block);

/// Euclidean norms of the rows of one tile, computed once per gather.
class L2NormCache {
 public:
  explicit L2NormCache(const Matrix& rows);
  float operator[](std::size_t i) const { return norms_[i]; }
  std::size_t size() const { return norms_.size(); }

 private:
  std::vector<float> norms_;
};

float l2_norm(std::span<const float> v);

// Cosine in fp32. Bit-identical vectors score exactly 1; two zero vectors
// count as duplicates (1), a single zero vector matches nothing (0).
float cosine_similarity(std::span<const float> p, std::span<const float> q, float norm_p, float norm_q);
float cosine_similarity(std::span<const float> p, std::span<const float> q);

struct CompactTile {
  Matrix vectors;                       // p x n representatives
  std::vector<std::uint32_t> source_rows;  // tile row that produced each representative

  std::size_t p() const { return source_rows.size(); }
  bool operator==(const CompactTile&) const = default;
};

struct SimilarityMap {
  std::vector<std::uint32_t> rep_index;  // per tile row, index into the compact tile

  std::size_t rows() const { return rep_index.size(); }
  bool is_identity() const;
  bool operator==(const SimilarityMap&) const = default;
};

struct GatherResult {
  CompactTile compact;
  SimilarityMap map;
};

/// Row tags for a gather: image rows carry their (f, r, c); text rows carry nothing
/// and are always kept as their own representative.
using RowTag = std::optional<Coord>;

// Rows must be ordered by ascending FHW index with text rows after image rows.
// Throws ValidationError on duplicate or unordered coordinates.
GatherResult gather_tile(const Matrix& rows, std::span<const RowTag> tags, const Dims& dims, const BlockConfig& block,
                         SimThreshold threshold);

Matrix scatter_tile(const Matrix& compact_partial, const SimilarityMap& map);

// Checks the map invariants against a compact tile; throws ValidationError.
void validate_map(const SimilarityMap& map, std::size_t p);

std::uint64_t matcher_cycles(std::uint64_t rows, const BlockConfig& block);

// Serialization of a sequence of gathered tiles: "FCCT", u16 version, u32 n,
// u32 tile count; per tile u32 p, u32 m', p*n f32, m' u32 map entries.
inline constexpr char kCompactMagic[4] = {'F', 'C', 'C', 'T'};
void write_compact_tiles(std::span<const GatherResult> tiles, std::uint32_t n, std::ostream& out);
std::vector<GatherResult> read_compact_tiles(std::istream& in, std::uint32_t* n_out = nullptr);

}  // namespace focus::sic
