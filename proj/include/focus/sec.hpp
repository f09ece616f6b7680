#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "focus/config.hpp"
#include "focus/core.hpp"

// Semantic concentrator: cross-modal importance, streaming top-k, pruning and
// offset encoding of the surviving token positions.
namespace focus::sec {

/// Post-softmax attention for every head over an image-then-text sequence.
///
/// Each head is a (S+T) x (S+T) row-stochastic matrix where the first S rows
/// and columns are image tokens. The text-to-image block (rows S.., cols ..S)
/// is the importance matrix.
class AttentionScores {
 public:
  AttentionScores(std::vector<Matrix> heads, std::size_t image_tokens, std::size_t text_tokens);

  std::size_t heads() const { return heads_.size(); }
  std::size_t image_tokens() const { return image_; }
  std::size_t text_tokens() const { return text_; }
  const Matrix& head(std::size_t h) const { return heads_[h]; }

  // I^(h)[i][j]: attention paid by text token i to image token j.
  float text_to_image(std::size_t head, std::size_t text_row, std::size_t image_col) const {
    return heads_[head](image_ + text_row, image_col);
  }

  // Softmax normalization check used by tests and assertions.
  bool rows_normalized(float tol = 1e-5f) const;

 private:
  std::vector<Matrix> heads_;
  std::size_t image_;
  std::size_t text_;
};

using ImportanceVector = std::vector<float>;

/// Token indices (FHW-linear, into the original [0, M)) kept after pruning.
struct RetainedSet {
  std::vector<std::size_t> indices;

  std::size_t size() const { return indices.size(); }
  bool valid(std::size_t M) const;
  bool operator==(const RetainedSet&) const = default;
};

struct OffsetEncoding {
  std::vector<std::size_t> deltas;
  bool operator==(const OffsetEncoding&) const = default;
};

// s_j = max over heads and text rows of I[i][j].
ImportanceVector importance_scores(const AttentionScores& attn);

// Indices of the k largest scores, ties toward the lower index, returned ascending.
std::vector<std::size_t> top_k_select(std::span<const float> scores, std::size_t k);

std::uint64_t sorter_cycles(std::uint64_t M, std::uint64_t k, std::uint64_t a);
double attention_overlap_ratio(std::uint64_t M, std::uint64_t T, std::uint64_t h, std::uint64_t n, std::uint64_t k,
                               std::uint64_t b);
bool sorter_hidden(std::uint64_t M, std::uint64_t T, std::uint64_t h, std::uint64_t n, std::uint64_t k,
                   std::uint64_t b);

// Keeps the image rows whose token index is in `retained`; text is untouched.
TokenGrid semantic_prune(const TokenGrid& grid, const RetainedSet& retained);

OffsetEncoding encode_offsets(const RetainedSet& retained);
RetainedSet decode_offsets(const OffsetEncoding& enc);

double retention_for_layer(std::span<const RetentionEntry> schedule, std::uint32_t layer);
// k = ceil(fraction * M_original), at least 1 for a positive fraction.
std::size_t retained_count(double fraction, std::size_t original_M);

}  // namespace focus::sec
