#include "focus/sic.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "focus/trace.hpp"

namespace focus::sic {

std::uint32_t bank_of(std::uint32_t f, std::uint32_t r, std::uint32_t c) {
  return (f % 2) * 4 + (r % 2) * 2 + (c % 2);
}

std::uint64_t offset_of(std::uint32_t r, std::uint32_t c, std::uint32_t W) {
  if (W == 0) throw std::invalid_argument("offset_of: W must be >= 1");
  return std::uint64_t{r / 2} * ((W + 1) / 2) + c / 2;
}

ConflictReport verify_conflict_free(const Dims& dims, const BlockConfig& block) {
  if (!(block == BlockConfig{2, 2, 2})) {
    throw std::invalid_argument("verify_conflict_free: bank layout is only defined for 2x2x2 blocks");
  }
  dims.validate(false);
  ConflictReport report;
  std::vector<Coord> members;
  members.reserve(8);
  for (std::uint32_t f = 0; f < dims.F; ++f) {
    for (std::uint32_t r = 0; r < dims.H; ++r) {
      for (std::uint32_t c = 0; c < dims.W; ++c) {
        members.clear();
        for (std::uint32_t df = 0; df < 2 && df <= f; ++df)
          for (std::uint32_t dr = 0; dr < 2 && dr <= r; ++dr)
            for (std::uint32_t dc = 0; dc < 2 && dc <= c; ++dc) members.push_back({f - df, r - dr, c - dc});
        ++report.windows_checked;
        std::uint32_t seen = 0;
        for (const auto& x : members) {
          const std::uint32_t bit = 1u << bank_of(x.f, x.r, x.c);
          if (seen & bit) {
            report.conflict_free = false;
            report.window_key = Coord{f, r, c};
            report.second = x;
            for (const auto& y : members) {
              if (bank_of(y.f, y.r, y.c) == bank_of(x.f, x.r, x.c)) {
                report.first = y;
                break;
              }
            }
            return report;
          }
          seen |= bit;
        }
      }
    }
  }
  return report;
}

float l2_norm(std::span<const float> v) {
  float acc = 0.0f;
  for (float x : v) acc += x * x;
  return std::sqrt(acc);
}

L2NormCache::L2NormCache(const Matrix& rows) {
  norms_.reserve(rows.rows());
  for (std::size_t i = 0; i < rows.rows(); ++i) norms_.push_back(l2_norm(rows.row(i)));
}

float cosine_similarity(std::span<const float> p, std::span<const float> q, float norm_p, float norm_q) {
  if (p.size() != q.size()) throw std::invalid_argument("cosine_similarity: length mismatch");
  if (std::memcmp(p.data(), q.data(), p.size() * sizeof(float)) == 0) return 1.0f;
  if (norm_p == 0.0f || norm_q == 0.0f) return (norm_p == 0.0f && norm_q == 0.0f) ? 1.0f : 0.0f;
  float dot = 0.0f;
  for (std::size_t i = 0; i < p.size(); ++i) dot += p[i] * q[i];
  return std::clamp(dot / (norm_p * norm_q), -1.0f, 1.0f);
}

float cosine_similarity(std::span<const float> p, std::span<const float> q) {
  if (p.size() != q.size()) throw std::invalid_argument("cosine_similarity: length mismatch");
  return cosine_similarity(p, q, l2_norm(p), l2_norm(q));
}

bool SimilarityMap::is_identity() const {
  for (std::size_t i = 0; i < rep_index.size(); ++i) {
    if (rep_index[i] != i) return false;
  }
  return true;
}

GatherResult gather_tile(const Matrix& rows, std::span<const RowTag> tags, const Dims& dims, const BlockConfig& block,
                         SimThreshold threshold) {
  const std::size_t m = rows.rows();
  if (tags.size() != m) throw std::invalid_argument("gather_tile: one tag per row required");
  block.validate();

  // FHW index of every tagged row; image rows precede text rows.
  std::vector<std::size_t> linear;
  linear.reserve(m);
  std::size_t image_rows = 0;
  for (std::size_t i = 0; i < m; ++i) {
    if (!tags[i]) continue;
    if (i != image_rows) throw ValidationError("gather_tile: image rows must precede text rows");
    const std::size_t idx = fhw_linearize(*tags[i], dims);
    if (!linear.empty() && idx <= linear.back()) {
      throw ValidationError(idx == linear.back() ? "gather_tile: duplicate coordinate in tile"
                                                 : "gather_tile: rows not in ascending FHW order");
    }
    linear.push_back(idx);
    ++image_rows;
  }

  GatherResult out;
  out.map.rep_index.resize(m);
  std::vector<std::uint32_t> rep_rows;

  if (!threshold) {
    out.compact.vectors = rows;
    out.compact.source_rows.resize(m);
    for (std::size_t i = 0; i < m; ++i) out.map.rep_index[i] = out.compact.source_rows[i] = static_cast<std::uint32_t>(i);
    return out;
  }

  const L2NormCache norms(rows);
  auto lookup = [&](std::size_t idx) -> std::optional<std::size_t> {
    const auto it = std::lower_bound(linear.begin(), linear.end(), idx);
    if (it == linear.end() || *it != idx) return std::nullopt;
    return static_cast<std::size_t>(it - linear.begin());
  };

  for (std::size_t i = 0; i < m; ++i) {
    std::optional<std::size_t> winner;
    float best = 0.0f;
    if (tags[i]) {
      const Coord key = *tags[i];
      for (std::uint32_t df = 0; df < block.bf && df <= key.f; ++df) {
        for (std::uint32_t dr = 0; dr < block.bh && dr <= key.r; ++dr) {
          for (std::uint32_t dc = 0; dc < block.bw && dc <= key.c; ++dc) {
            if (df == 0 && dr == 0 && dc == 0) continue;
            const auto j = lookup(fhw_linearize(key.f - df, key.r - dr, key.c - dc, dims));
            if (!j) continue;  // pruned, or held by another tile
            const float sim = cosine_similarity(rows.row(i), rows.row(*j), norms[i], norms[*j]);
            if (sim < *threshold) continue;
            // Rows are FHW-sorted, so a lower row position is a lower token index.
            if (!winner || sim > best || (sim == best && *j < *winner)) {
              winner = *j;
              best = sim;
            }
          }
        }
      }
    }
    if (winner) {
      out.map.rep_index[i] = out.map.rep_index[*winner];
    } else {
      out.map.rep_index[i] = static_cast<std::uint32_t>(rep_rows.size());
      rep_rows.push_back(static_cast<std::uint32_t>(i));
    }
  }

  std::vector<std::size_t> gather_rows(rep_rows.begin(), rep_rows.end());
  out.compact.vectors = rows.gather_rows(gather_rows);
  out.compact.source_rows = std::move(rep_rows);
  return out;
}

void validate_map(const SimilarityMap& map, std::size_t p) {
  std::vector<bool> used(p, false);
  for (std::size_t i = 0; i < map.rep_index.size(); ++i) {
    const auto r = map.rep_index[i];
    if (r >= p) {
      throw ValidationError("similarity map entry " + std::to_string(i) + " references compact row " +
                            std::to_string(r) + " >= p=" + std::to_string(p));
    }
    used[r] = true;
  }
  for (std::size_t j = 0; j < p; ++j) {
    if (!used[j]) throw ValidationError("compact row " + std::to_string(j) + " is never referenced");
  }
}

Matrix scatter_tile(const Matrix& compact_partial, const SimilarityMap& map) {
  const std::size_t p = compact_partial.rows();
  for (std::size_t i = 0; i < map.rep_index.size(); ++i) {
    if (map.rep_index[i] >= p) {
      throw std::invalid_argument("scatter_tile: map entry " + std::to_string(i) + " >= compact rows " +
                                  std::to_string(p));
    }
  }
  Matrix out(map.rows(), compact_partial.cols());
  for (std::size_t i = 0; i < map.rows(); ++i) {
    const auto src = compact_partial.row(map.rep_index[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

std::uint64_t matcher_cycles(std::uint64_t rows, const BlockConfig& block) { return std::uint64_t{block.volume()} * rows; }

void write_compact_tiles(std::span<const GatherResult> tiles, std::uint32_t n, std::ostream& out) {
  out.write(kCompactMagic, 4);
  trace::le::put_u16(out, 1);
  trace::le::put_u32(out, n);
  trace::le::put_u32(out, static_cast<std::uint32_t>(tiles.size()));
  for (const auto& t : tiles) {
    if (t.compact.vectors.rows() > 0 && t.compact.vectors.cols() != n) {
      throw std::invalid_argument("write_compact_tiles: tile width != n");
    }
    trace::le::put_u32(out, static_cast<std::uint32_t>(t.compact.p()));
    trace::le::put_u32(out, static_cast<std::uint32_t>(t.map.rows()));
    trace::le::put_f32s(out, t.compact.vectors.data());
    for (auto v : t.map.rep_index) trace::le::put_u32(out, v);
  }
  if (!out) throw IoError("write failed");
}

std::vector<GatherResult> read_compact_tiles(std::istream& in, std::uint32_t* n_out) {
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() != 4 || !std::equal(magic, magic + 4, kCompactMagic)) throw FormatError("bad magic: not an FCCT file");
  if (trace::le::get_u16(in, "version") != 1) throw FormatError("unsupported compact-tile version");
  const auto n = trace::le::get_u32(in, "n");
  const auto count = trace::le::get_u32(in, "tile count");
  std::vector<GatherResult> tiles;
  tiles.reserve(count);
  for (std::uint32_t t = 0; t < count; ++t) {
    GatherResult g;
    const auto p = trace::le::get_u32(in, "p");
    const auto rows = trace::le::get_u32(in, "m'");
    if (p > rows) throw FormatError("tile " + std::to_string(t) + ": p exceeds m'");
    g.compact.vectors = Matrix(p, n);
    trace::le::get_f32s(in, g.compact.vectors.data(), "compact vectors");
    g.map.rep_index.resize(rows);
    for (auto& v : g.map.rep_index) v = trace::le::get_u32(in, "map entry");
    validate_map(g.map, p);
    // A representative is the first row that references it.
    g.compact.source_rows.assign(p, 0);
    std::vector<bool> seen(p, false);
    for (std::uint32_t i = 0; i < rows; ++i) {
      const auto r = g.map.rep_index[i];
      if (!seen[r]) {
        seen[r] = true;
        g.compact.source_rows[r] = i;
      }
    }
    if (!std::is_sorted(g.compact.source_rows.begin(), g.compact.source_rows.end())) {
      throw FormatError("tile " + std::to_string(t) + ": representatives out of order");
    }
    tiles.push_back(std::move(g));
  }
  if (n_out) *n_out = n;
  return tiles;
}

}  // namespace focus::sic
