#include "focus/gemm.hpp"

#include <algorithm>
#include <string>

namespace focus::gemm {

namespace {

// partial (p x nc) = rows (p x kw, row stride `stride`) * B[k0 .. k0+kw, c0 .. c0+nc].
void chunk_product(const float* rows, std::size_t stride, std::size_t p, const Matrix& B, std::size_t k0,
                   std::size_t kw, std::size_t c0, std::size_t nc, std::vector<float>& partial) {
  partial.assign(p * nc, 0.0f);
  for (std::size_t q = 0; q < p; ++q) {
    float* out = partial.data() + q * nc;
    const float* a = rows + q * stride;
    for (std::size_t kk = 0; kk < kw; ++kk) {
      const float av = a[kk];
      const float* b = B.row(k0 + kk).data() + c0;
      for (std::size_t col = 0; col < nc; ++col) out[col] += av * b[col];
    }
  }
}

}  // namespace

ConcentratedMatrix ConcentratedMatrix::gather(const Matrix& values, std::span<const sic::RowTag> tags,
                                              const Dims& dims, std::size_t tile_m, std::size_t chunk_width,
                                              const BlockConfig& block, SimThreshold threshold) {
  if (tags.size() != values.rows()) throw std::invalid_argument("ConcentratedMatrix::gather: one tag per row");
  if (tile_m == 0 || chunk_width == 0) throw std::invalid_argument("ConcentratedMatrix::gather: zero tile size");
  ConcentratedMatrix out;
  out.rows_ = values.rows();
  out.cols_ = values.cols();
  out.tile_m_ = tile_m;
  out.chunk_width_ = chunk_width;
  for (std::size_t r0 = 0; r0 < values.rows(); r0 += tile_m) {
    ConcentratedTile tile;
    tile.row_begin = r0;
    tile.rows = std::min(tile_m, values.rows() - r0);
    const auto tile_tags = tags.subspan(r0, tile.rows);
    tile.image_rows = static_cast<std::size_t>(
        std::count_if(tile_tags.begin(), tile_tags.end(), [](const sic::RowTag& t) { return t.has_value(); }));
    for (std::size_t c0 = 0; c0 < values.cols(); c0 += chunk_width) {
      const std::size_t w = std::min(chunk_width, values.cols() - c0);
      tile.chunks.push_back(sic::gather_tile(values.block(r0, tile.rows, c0, w), tile_tags, dims, block, threshold));
    }
    out.tiles_.push_back(std::move(tile));
  }
  return out;
}

ConcentratedMatrix ConcentratedMatrix::dense(const Matrix& values, std::size_t tile_m, std::size_t chunk_width,
                                             std::size_t image_rows) {
  if (tile_m == 0 || chunk_width == 0) throw std::invalid_argument("ConcentratedMatrix::dense: zero tile size");
  ConcentratedMatrix out;
  out.rows_ = values.rows();
  out.cols_ = values.cols();
  out.tile_m_ = tile_m;
  out.chunk_width_ = chunk_width;
  for (std::size_t r0 = 0; r0 < values.rows(); r0 += tile_m) {
    ConcentratedTile tile;
    tile.row_begin = r0;
    tile.rows = std::min(tile_m, values.rows() - r0);
    tile.image_rows = r0 >= image_rows ? 0 : std::min(tile.rows, image_rows - r0);
    for (std::size_t c0 = 0; c0 < values.cols(); c0 += chunk_width) {
      const std::size_t w = std::min(chunk_width, values.cols() - c0);
      sic::GatherResult g;
      g.compact.vectors = values.block(r0, tile.rows, c0, w);
      g.compact.source_rows.resize(tile.rows);
      g.map.rep_index.resize(tile.rows);
      for (std::size_t i = 0; i < tile.rows; ++i) {
        g.compact.source_rows[i] = g.map.rep_index[i] = static_cast<std::uint32_t>(i);
      }
      tile.chunks.push_back(std::move(g));
    }
    out.tiles_.push_back(std::move(tile));
  }
  return out;
}

Matrix ConcentratedMatrix::expand() const {
  Matrix out(rows_, cols_);
  for (const auto& tile : tiles_) {
    for (std::size_t j = 0; j < tile.chunks.size(); ++j) {
      const auto& g = tile.chunks[j];
      const Matrix part = sic::scatter_tile(g.compact.vectors, g.map);
      const std::size_t c0 = j * chunk_width_;
      for (std::size_t i = 0; i < tile.rows; ++i) {
        const auto src = part.row(i);
        std::copy(src.begin(), src.end(), out.row(tile.row_begin + i).begin() + static_cast<std::ptrdiff_t>(c0));
      }
    }
  }
  return out;
}

std::uint64_t ConcentratedMatrix::compact_rows() const {
  std::uint64_t total = 0;
  for (const auto& tile : tiles_)
    for (const auto& g : tile.chunks) total += g.compact.p();
  return total;
}

std::uint64_t LayerStats::ops_dense() const {
  std::uint64_t total = 0;
  for (const auto& g : gemms) total += g.ops_baseline;
  return total;
}

std::uint64_t LayerStats::ops_actual() const {
  std::uint64_t total = 0;
  for (const auto& g : gemms) total += g.ops_actual;
  return total;
}

std::uint64_t LayerStats::scatter_accum_ops() const {
  std::uint64_t total = 0;
  for (const auto& g : gemms) total += g.scatter_accum_ops;
  return total;
}

double LayerStats::sparsity() const {
  const auto dense = ops_dense();
  return dense == 0 ? 0.0 : 1.0 - static_cast<double>(ops_actual()) / static_cast<double>(dense);
}

double LayerStats::sparsity_of(const std::string& prefix) const {
  std::uint64_t dense = 0;
  std::uint64_t actual = 0;
  for (const auto& g : gemms) {
    if (g.name.rfind(prefix, 0) != 0) continue;
    dense += g.ops_baseline;
    actual += g.ops_actual;
  }
  return dense == 0 ? 0.0 : 1.0 - static_cast<double>(actual) / static_cast<double>(dense);
}

std::uint64_t LayerStats::tiles_gathered() const {
  std::uint64_t total = 0;
  for (const auto& [_, count] : p_histogram) total += count;
  return total;
}

Matrix naive_matmul(const Matrix& A, const Matrix& B) {
  if (A.cols() != B.rows()) throw std::invalid_argument("naive_matmul: shape mismatch");
  Matrix C(A.rows(), B.cols());
  for (std::size_t i = 0; i < A.rows(); ++i)
    for (std::size_t j = 0; j < B.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < A.cols(); ++k) acc += double{A(i, k)} * double{B(k, j)};
      C(i, j) = static_cast<float>(acc);
    }
  return C;
}

Matrix dense_gemm_tiled(const Matrix& A, const Matrix& B, const TileConfig& tile) {
  if (A.cols() != B.rows()) {
    throw std::invalid_argument("dense_gemm_tiled: A is " + std::to_string(A.rows()) + "x" + std::to_string(A.cols()) +
                                " but B is " + std::to_string(B.rows()) + "x" + std::to_string(B.cols()));
  }
  tile.validate();
  const std::size_t K = A.cols();
  const std::size_t N = B.cols();
  Matrix C(A.rows(), N);
  std::vector<float> partial;
  std::vector<float> acc;
  for (std::size_t r0 = 0; r0 < A.rows(); r0 += tile.m) {
    const std::size_t rows = std::min<std::size_t>(tile.m, A.rows() - r0);
    for (std::size_t c0 = 0; c0 < N; c0 += tile.n) {
      const std::size_t nc = std::min<std::size_t>(tile.n, N - c0);
      acc.assign(rows * nc, 0.0f);
      for (std::size_t k0 = 0; k0 < K; k0 += tile.k) {
        const std::size_t kw = std::min<std::size_t>(tile.k, K - k0);
        chunk_product(A.row(r0).data() + k0, K, rows, B, k0, kw, c0, nc, partial);
        for (std::size_t x = 0; x < acc.size(); ++x) acc[x] += partial[x];
      }
      for (std::size_t i = 0; i < rows; ++i)
        std::copy(acc.begin() + static_cast<std::ptrdiff_t>(i * nc),
                  acc.begin() + static_cast<std::ptrdiff_t>((i + 1) * nc),
                  C.row(r0 + i).begin() + static_cast<std::ptrdiff_t>(c0));
    }
  }
  return C;
}

GemmRecord dense_record(std::string name, std::size_t rows, std::size_t inner, std::size_t cols,
                        const TileConfig& tile, std::size_t batch) {
  GemmRecord rec;
  rec.name = std::move(name);
  rec.batch = batch;
  rec.rows = rows;
  rec.inner = inner;
  rec.cols = cols;
  rec.tile_n = tile.n;
  rec.chunk_k = tile.k;
  rec.out_width = cols * batch;
  for (std::size_t r0 = 0; r0 < rows; r0 += tile.m) {
    const auto m = static_cast<std::uint32_t>(std::min<std::size_t>(tile.m, rows - r0));
    rec.tile_rows.push_back(m);
    rec.tile_image_rows.push_back(0);
    for (std::size_t j = 0; j < rec.chunks(); ++j) rec.chunk_p.push_back(m);
  }
  rec.ops_dense = rec.ops_baseline = rec.ops_actual = std::uint64_t{rows} * inner * cols * batch;
  return rec;
}

std::pair<Matrix, GemmRecord> concentrated_gemm(const ConcentratedMatrix& X, const Matrix& B, const TileConfig& tile,
                                                [[maybe_unused]] std::uint32_t accumulators) {
  tile.validate();
  if (X.cols() != B.rows()) {
    throw std::invalid_argument("concentrated_gemm: X has K=" + std::to_string(X.cols()) + " but B has " +
                                std::to_string(B.rows()) + " rows");
  }
  if (X.chunk_width() != tile.k) {
    throw std::invalid_argument("concentrated_gemm: chunk width " + std::to_string(X.chunk_width()) +
                                " != tile.k " + std::to_string(tile.k));
  }
  const std::size_t K = X.cols();
  const std::size_t N = B.cols();
  Matrix C(X.rows(), N);

  GemmRecord rec;
  rec.rows = X.rows();
  rec.inner = K;
  rec.cols = N;
  rec.tile_n = tile.n;
  rec.chunk_k = tile.k;
  rec.scatter = true;
  rec.out_width = N;
  rec.ops_dense = rec.ops_baseline = std::uint64_t{X.rows()} * K * N;

  std::vector<float> partial;
  std::vector<float> acc;
  for (const auto& t : X.tiles()) {
    rec.tile_rows.push_back(static_cast<std::uint32_t>(t.rows));
    rec.tile_image_rows.push_back(static_cast<std::uint32_t>(t.image_rows));
    for (const auto& g : t.chunks) {
      sic::validate_map(g.map, g.compact.p());
      if (g.map.rows() != t.rows) throw ValidationError("concentrated_gemm: map length != tile rows");
      rec.chunk_p.push_back(static_cast<std::uint32_t>(g.compact.p()));
    }
    for (std::size_t c0 = 0; c0 < N; c0 += tile.n) {
      const std::size_t nc = std::min<std::size_t>(tile.n, N - c0);
      acc.assign(t.rows * nc, 0.0f);
      for (std::size_t j = 0; j < t.chunks.size(); ++j) {
        const auto& g = t.chunks[j];
        const std::size_t k0 = j * X.chunk_width();
        const std::size_t kw = g.compact.vectors.cols();
        const std::size_t p = g.compact.p();
        chunk_product(g.compact.vectors.data().data(), kw, p, B, k0, kw, c0, nc, partial);
        rec.ops_actual += std::uint64_t{p} * kw * nc;
        // Scatter: replicate each partial-sum vector to every row it represents.
        for (std::size_t i = 0; i < t.rows; ++i) {
          const float* src = partial.data() + std::size_t{g.map.rep_index[i]} * nc;
          float* dst = acc.data() + i * nc;
          for (std::size_t col = 0; col < nc; ++col) dst[col] += src[col];
        }
        rec.scatter_accum_ops += std::uint64_t{t.rows} * nc;
      }
      for (std::size_t i = 0; i < t.rows; ++i)
        std::copy(acc.begin() + static_cast<std::ptrdiff_t>(i * nc),
                  acc.begin() + static_cast<std::ptrdiff_t>((i + 1) * nc),
                  C.row(t.row_begin + i).begin() + static_cast<std::ptrdiff_t>(c0));
    }
  }
  return {std::move(C), std::move(rec)};
}

}  // namespace focus::gemm
