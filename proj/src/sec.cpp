#include "focus/sec.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <string>

namespace focus::sec {

AttentionScores::AttentionScores(std::vector<Matrix> heads, std::size_t image_tokens, std::size_t text_tokens)
    : heads_(std::move(heads)), image_(image_tokens), text_(text_tokens) {
  const std::size_t seq = image_ + text_;
  for (const auto& h : heads_) {
    if (h.rows() != seq || h.cols() != seq) throw std::invalid_argument("attention head is not (S+T) x (S+T)");
  }
}

bool AttentionScores::rows_normalized(float tol) const {
  for (const auto& h : heads_) {
    for (std::size_t i = 0; i < h.rows(); ++i) {
      double sum = 0.0;
      for (float v : h.row(i)) {
        if (!(v >= 0.0f && v <= 1.0f)) return false;
        sum += v;
      }
      if (std::abs(sum - 1.0) > tol) return false;
    }
  }
  return true;
}

bool RetainedSet::valid(std::size_t M) const {
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= M) return false;
    if (i > 0 && indices[i] <= indices[i - 1]) return false;
  }
  return true;
}

ImportanceVector importance_scores(const AttentionScores& attn) {
  if (attn.text_tokens() == 0) throw std::invalid_argument("no text tokens; importance undefined");
  if (attn.heads() == 0) throw std::invalid_argument("no attention heads; importance undefined");
  const std::size_t M = attn.image_tokens();
  ImportanceVector s(M, 0.0f);
  // Orthogonal stream: text rows arrive one at a time and are folded column-wise.
  for (std::size_t h = 0; h < attn.heads(); ++h) {
    for (std::size_t i = 0; i < attn.text_tokens(); ++i) {
      const auto row = attn.head(h).row(M + i);
      for (std::size_t j = 0; j < M; ++j) s[j] = std::max(s[j], row[j]);
    }
  }
  return s;
}

std::vector<std::size_t> top_k_select(std::span<const float> scores, std::size_t k) {
  const std::size_t M = scores.size();
  if (k > M) throw std::invalid_argument("top_k_select: k (" + std::to_string(k) + ") > M (" + std::to_string(M) + ")");
  for (float v : scores) {
    if (std::isnan(v)) throw std::invalid_argument("top_k_select: NaN score");
  }
  if (k == 0) return {};

  // Candidates stream in index order. The heap root is the weakest survivor:
  // lowest score, and among equal scores the highest index.
  auto weaker = [&](std::size_t x, std::size_t y) {
    // true when x ranks above y, so the heap keeps the weakest at the top.
    if (scores[x] != scores[y]) return scores[x] > scores[y];
    return x < y;
  };
  std::priority_queue<std::size_t, std::vector<std::size_t>, decltype(weaker)> kept(weaker);
  for (std::size_t j = 0; j < M; ++j) {
    if (kept.size() < k) {
      kept.push(j);
    } else if (scores[j] > scores[kept.top()]) {
      // A later candidate with an equal score never displaces an earlier one.
      kept.pop();
      kept.push(j);
    }
  }
  std::vector<std::size_t> out;
  out.reserve(k);
  while (!kept.empty()) {
    out.push_back(kept.top());
    kept.pop();
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::uint64_t sorter_cycles(std::uint64_t M, std::uint64_t k, std::uint64_t a) {
  if (a == 0) throw std::invalid_argument("sorter_cycles: a must be >= 1");
  return (M * k + a - 1) / a;
}

double attention_overlap_ratio(std::uint64_t M, std::uint64_t T, std::uint64_t h, std::uint64_t n, std::uint64_t k,
                               std::uint64_t b) {
  if (k == 0 || b == 0) throw std::invalid_argument("attention_overlap_ratio: k and b must be >= 1");
  return static_cast<double>((M + T) * h * n) / static_cast<double>(k * b);
}

bool sorter_hidden(std::uint64_t M, std::uint64_t T, std::uint64_t h, std::uint64_t n, std::uint64_t k,
                   std::uint64_t b) {
  // Integer comparison so the ratio == 1 boundary is exact.
  return (M + T) * h * n > k * b;
}

TokenGrid semantic_prune(const TokenGrid& grid, const RetainedSet& retained) {
  const auto& coords = grid.coords();
  std::vector<std::size_t> rows;
  std::vector<Coord> kept;
  rows.reserve(retained.size());
  kept.reserve(retained.size());
  std::size_t row = 0;
  for (std::size_t idx : retained.indices) {
    while (row < coords.size() && grid.token_index(row) < idx) ++row;
    if (row == coords.size() || grid.token_index(row) != idx) {
      throw std::invalid_argument("semantic_prune: token " + std::to_string(idx) + " is not present in the grid");
    }
    rows.push_back(row);
    kept.push_back(coords[row]);
    ++row;
  }
  return TokenGrid(grid.dims(), grid.image().gather_rows(rows), std::move(kept), grid.text());
}

OffsetEncoding encode_offsets(const RetainedSet& retained) {
  OffsetEncoding enc;
  enc.deltas.reserve(retained.size());
  std::size_t prev = 0;
  for (std::size_t i = 0; i < retained.indices.size(); ++i) {
    const std::size_t idx = retained.indices[i];
    if (i > 0 && idx <= prev) throw std::invalid_argument("encode_offsets: indices not strictly increasing");
    enc.deltas.push_back(i == 0 ? idx : idx - prev);
    prev = idx;
  }
  return enc;
}

RetainedSet decode_offsets(const OffsetEncoding& enc) {
  RetainedSet out;
  out.indices.reserve(enc.deltas.size());
  std::size_t pos = 0;
  for (std::size_t i = 0; i < enc.deltas.size(); ++i) {
    if (i > 0 && enc.deltas[i] < 1) {
      throw ValidationError("decode_offsets: delta at position " + std::to_string(i) + " is < 1");
    }
    pos = i == 0 ? enc.deltas[0] : pos + enc.deltas[i];
    out.indices.push_back(pos);
  }
  return out;
}

double retention_for_layer(std::span<const RetentionEntry> schedule, std::uint32_t layer) {
  double fraction = 1.0;
  for (const auto& e : schedule) {
    if (e.layer_index > layer) break;
    fraction = e.retain_fraction;
  }
  return fraction;
}

std::size_t retained_count(double fraction, std::size_t original_M) {
  const double exact = fraction * static_cast<double>(original_M);
  const double nearest = std::round(exact);
  // 0.3 * 10 lands a hair above 3 in binary; snap those back before taking the ceiling.
  const double k = std::abs(exact - nearest) < 1e-9 * std::max(1.0, exact) ? nearest : std::ceil(exact);
  auto out = static_cast<std::size_t>(k);
  if (fraction > 0.0 && out == 0) out = 1;
  return std::min(out, original_M);
}

}  // namespace focus::sec
