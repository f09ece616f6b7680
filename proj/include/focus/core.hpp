#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace focus {

// Error taxonomy. The CLI maps these onto exit codes (2 validation, 3 I/O, 4 invariant).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FormatError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvariantError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Problem dimensions of one VLM prompt: an F x H x W video-token grid plus T text tokens.
struct Dims {
  std::uint32_t F = 1;
  std::uint32_t H = 1;
  std::uint32_t W = 1;
  std::uint32_t T = 0;
  std::uint32_t Dmodel = 1;
  std::uint32_t heads = 1;
  std::uint32_t head_dim = 1;

  std::size_t M() const { return std::size_t{F} * H * W; }
  std::size_t frame_size() const { return std::size_t{H} * W; }
  std::size_t sequence() const { return M() + T; }

  // Throws ValidationError naming the offending field. The head split is only
  // checked when `attention` is set, since timing-only runs never build heads.
  void validate(bool attention = true) const;

  bool operator==(const Dims&) const = default;
};

struct TileConfig {
  std::uint32_t m = 1024;  // output-tile rows
  std::uint32_t n = 32;    // output-tile cols (vector length)
  std::uint32_t k = 32;    // K sub-tile width
  std::uint32_t a = 32;    // PE array width
  std::uint32_t b = 32;    // PE array height

  void validate() const;
  bool operator==(const TileConfig&) const = default;
};

struct BlockConfig {
  std::uint32_t bf = 2;
  std::uint32_t bh = 2;
  std::uint32_t bw = 2;

  std::uint32_t volume() const { return bf * bh * bw; }
  void validate() const;
  bool operator==(const BlockConfig&) const = default;
};

struct Coord {
  std::uint32_t f = 0;
  std::uint32_t r = 0;
  std::uint32_t c = 0;

  bool operator==(const Coord&) const = default;
};

/// Row-major dense fp32 matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, float fill = 0.0f)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<float> data);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  float& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  float operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<float> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const float> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }

  static Matrix identity(std::size_t n);
  Matrix transposed() const;
  // Copy of rows [begin, begin+count) restricted to cols [col, col+width).
  Matrix block(std::size_t begin, std::size_t count, std::size_t col, std::size_t width) const;
  Matrix gather_rows(std::span<const std::size_t> rows) const;

  bool operator==(const Matrix& other) const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<float> data_;
};

// FHW linearization of a video-token coordinate. Throws std::out_of_range.
std::size_t fhw_linearize(std::uint32_t f, std::uint32_t r, std::uint32_t c, const Dims& dims);
inline std::size_t fhw_linearize(const Coord& x, const Dims& dims) {
  return fhw_linearize(x.f, x.r, x.c, dims);
}
Coord fhw_delinearize(std::size_t idx, const Dims& dims);

/// Visual tokens tagged with their (f, r, c) position, followed by text tokens.
///
/// Pruned grids keep only a subset of image rows; the tags are what lets the
/// similarity layouter recover spatial neighbourhoods afterwards. Tags are
/// strictly increasing in FHW order.
class TokenGrid {
 public:
  TokenGrid() = default;
  // Full grid: image must have exactly F*H*W rows in FHW order.
  TokenGrid(Dims dims, Matrix image, Matrix text);
  // Explicitly tagged (possibly pruned) grid.
  TokenGrid(Dims dims, Matrix image, std::vector<Coord> coords, Matrix text);

  const Dims& dims() const { return dims_; }
  const Matrix& image() const { return image_; }
  const Matrix& text() const { return text_; }
  const std::vector<Coord>& coords() const { return coords_; }

  std::size_t image_rows() const { return image_.rows(); }
  std::size_t token_index(std::size_t row) const { return fhw_linearize(coords_[row], dims_); }
  std::vector<std::size_t> token_indices() const;

  // [image | text] stacked into one (S+T) x Dmodel matrix.
  Matrix sequence() const;

  bool operator==(const TokenGrid&) const = default;

 private:
  void check() const;

  Dims dims_;
  Matrix image_;
  std::vector<Coord> coords_;
  Matrix text_;
};

}  // namespace focus
