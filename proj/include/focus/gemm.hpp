#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "focus/config.hpp"
#include "focus/core.hpp"
#include "focus/sic.hpp"

namespace focus::gemm {

/// One row tile of a concentrated activation: a gathered compact tile per K-chunk.
struct ConcentratedTile {
  std::size_t row_begin = 0;
  std::size_t rows = 0;        // m'
  std::size_t image_rows = 0;  // rows carrying a video coordinate
  std::vector<sic::GatherResult> chunks;
};

/// Logically m x K, physically one compact tile plus similarity map per
/// (row tile, K-chunk). A dense matrix is the special case of identity maps.
class ConcentratedMatrix {
 public:
  ConcentratedMatrix() = default;

  // Gather every (row tile, column chunk) of `values`.
  static ConcentratedMatrix gather(const Matrix& values, std::span<const sic::RowTag> tags, const Dims& dims,
                                   std::size_t tile_m, std::size_t chunk_width, const BlockConfig& block,
                                   SimThreshold threshold);
  // Identity maps everywhere; `image_rows` leading rows are counted as video tokens.
  static ConcentratedMatrix dense(const Matrix& values, std::size_t tile_m, std::size_t chunk_width,
                                  std::size_t image_rows = 0);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t tile_m() const { return tile_m_; }
  std::size_t chunk_width() const { return chunk_width_; }
  std::size_t chunk_count() const { return chunk_width_ == 0 ? 0 : (cols_ + chunk_width_ - 1) / chunk_width_; }
  const std::vector<ConcentratedTile>& tiles() const { return tiles_; }

  // Scatter every chunk back to full rows.
  Matrix expand() const;
  std::uint64_t compact_rows() const;  // sum of p over all chunks

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::size_t tile_m_ = 0;
  std::size_t chunk_width_ = 0;
  std::vector<ConcentratedTile> tiles_;
};

/// Execution record of one GEMM (or a batch of identical per-head GEMMs).
///
/// Everything the cycle, traffic and buffer models need is here; the perf
/// module never looks at activations.
struct GemmRecord {
  std::string name;
  std::size_t batch = 1;
  std::size_t rows = 0;   // executed rows
  std::size_t inner = 0;  // K
  std::size_t cols = 0;   // N per batch instance
  std::size_t tile_n = 0;
  std::size_t chunk_k = 0;
  std::vector<std::uint32_t> tile_rows;        // m' per row tile
  std::vector<std::uint32_t> tile_image_rows;  // video rows per row tile
  std::vector<std::uint32_t> chunk_p;          // p per (row tile, K-chunk), row-major

  bool scatter = false;        // input consumed through similarity maps
  bool input_from_dram = true;
  bool output_to_dram = true;
  bool gathered = false;
  std::size_t out_width = 0;             // total output columns across the batch
  std::vector<std::uint32_t> out_p;      // p per (row tile, output col tile) after gather

  std::uint64_t ops_dense = 0;      // rows * K * N * batch
  std::uint64_t ops_baseline = 0;   // same GEMM had no token been pruned
  std::uint64_t ops_actual = 0;     // sum of p * k * n actually issued
  std::uint64_t scatter_accum_ops = 0;

  std::size_t chunks() const { return chunk_k == 0 ? 0 : (inner + chunk_k - 1) / chunk_k; }
  std::size_t col_tiles() const { return tile_n == 0 ? 0 : (cols + tile_n - 1) / tile_n; }
  std::size_t out_col_tiles() const { return tile_n == 0 ? 0 : (out_width + tile_n - 1) / tile_n; }
};

struct LayerStats {
  std::uint32_t layer = 0;
  std::vector<GemmRecord> gemms;
  std::size_t tokens_in = 0;        // image tokens entering the layer (S)
  std::size_t retained_tokens = 0;  // image tokens leaving it
  std::size_t text_tokens = 0;
  bool pruned = false;
  std::size_t prune_candidates = 0;
  std::size_t prune_k = 0;
  std::map<std::uint32_t, std::uint64_t> p_histogram;  // compact tile length -> count

  std::uint64_t ops_dense() const;  // unpruned dense equivalent
  std::uint64_t ops_actual() const;
  std::uint64_t scatter_accum_ops() const;
  double sparsity() const;
  // Sparsity restricted to GEMMs whose name starts with `prefix`.
  double sparsity_of(const std::string& prefix) const;
  std::uint64_t tiles_gathered() const;
};

Matrix naive_matmul(const Matrix& A, const Matrix& B);

// Output-stationary tiled GEMM: per output tile, K-chunks of width tile.k in
// ascending order; each chunk's dot product is summed left to right from zero
// and then added to the tile accumulator.
Matrix dense_gemm_tiled(const Matrix& A, const Matrix& B, const TileConfig& tile);

// Same loop nest, streaming only the p_j compact rows per chunk and scattering
// their partial sums through chunk j's map before accumulation.
std::pair<Matrix, GemmRecord> concentrated_gemm(const ConcentratedMatrix& X, const Matrix& B, const TileConfig& tile,
                                                std::uint32_t accumulators);

// Record for a GEMM executed densely with dense_gemm_tiled.
GemmRecord dense_record(std::string name, std::size_t rows, std::size_t inner, std::size_t cols,
                        const TileConfig& tile, std::size_t batch = 1);

}  // namespace focus::gemm
