#include "focus/core.hpp"

#include <cstring>
#include <string>

namespace focus {

namespace {

void require_positive(std::uint32_t v, const char* field) {
  if (v == 0) throw ValidationError(std::string(field) + " must be >= 1");
}

}  // namespace

void Dims::validate(bool attention) const {
  require_positive(F, "F");
  require_positive(H, "H");
  require_positive(W, "W");
  require_positive(Dmodel, "Dmodel");
  if (attention) {
    require_positive(heads, "heads");
    require_positive(head_dim, "head_dim");
    if (std::size_t{heads} * head_dim != Dmodel) {
      throw ValidationError("heads*head_dim must equal Dmodel (" + std::to_string(heads) + "*" +
                            std::to_string(head_dim) + " != " + std::to_string(Dmodel) + ")");
    }
  }
}

void TileConfig::validate() const {
  require_positive(m, "tile.m");
  require_positive(n, "tile.n");
  require_positive(k, "tile.k");
  require_positive(a, "tile.a");
  require_positive(b, "tile.b");
}

void BlockConfig::validate() const {
  require_positive(bf, "block.bf");
  require_positive(bh, "block.bh");
  require_positive(bw, "block.bw");
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<float> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw std::invalid_argument("matrix payload size does not match shape");
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i) out(i, i) = 1.0f;
  return out;
}

Matrix Matrix::transposed() const {
  Matrix out(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) out(j, i) = (*this)(i, j);
  return out;
}

Matrix Matrix::block(std::size_t begin, std::size_t count, std::size_t col, std::size_t width) const {
  if (begin + count > rows_ || col + width > cols_) throw std::out_of_range("matrix block out of range");
  Matrix out(count, width);
  for (std::size_t i = 0; i < count; ++i) {
    const float* src = data_.data() + (begin + i) * cols_ + col;
    std::copy(src, src + width, out.row(i).begin());
  }
  return out;
}

Matrix Matrix::gather_rows(std::span<const std::size_t> rows) const {
  Matrix out(rows.size(), cols_);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= rows_) throw std::out_of_range("gather_rows index out of range");
    auto src = row(rows[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

bool Matrix::operator==(const Matrix& other) const {
  // Bitwise: distinguishes -0.0 from 0.0, which is what bit-exactness claims need.
  return rows_ == other.rows_ && cols_ == other.cols_ &&
         (data_.empty() || std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(float)) == 0);
}

std::size_t fhw_linearize(std::uint32_t f, std::uint32_t r, std::uint32_t c, const Dims& dims) {
  if (f >= dims.F || r >= dims.H || c >= dims.W) {
    throw std::out_of_range("coordinate (" + std::to_string(f) + "," + std::to_string(r) + "," +
                            std::to_string(c) + ") outside grid");
  }
  return (std::size_t{f} * dims.H + r) * dims.W + c;
}

Coord fhw_delinearize(std::size_t idx, const Dims& dims) {
  if (idx >= dims.M()) throw std::out_of_range("token index " + std::to_string(idx) + " >= M");
  const std::size_t hw = dims.frame_size();
  const auto f = static_cast<std::uint32_t>(idx / hw);
  const std::size_t rem = idx % hw;
  return {f, static_cast<std::uint32_t>(rem / dims.W), static_cast<std::uint32_t>(rem % dims.W)};
}

TokenGrid::TokenGrid(Dims dims, Matrix image, Matrix text)
    : dims_(dims), image_(std::move(image)), text_(std::move(text)) {
  if (image_.rows() != dims_.M()) {
    throw ValidationError("image rows (" + std::to_string(image_.rows()) + ") != M = F*H*W (" +
                          std::to_string(dims_.M()) + ")");
  }
  coords_.reserve(dims_.M());
  for (std::size_t i = 0; i < dims_.M(); ++i) coords_.push_back(fhw_delinearize(i, dims_));
  check();
}

TokenGrid::TokenGrid(Dims dims, Matrix image, std::vector<Coord> coords, Matrix text)
    : dims_(dims), image_(std::move(image)), coords_(std::move(coords)), text_(std::move(text)) {
  check();
}

void TokenGrid::check() const {
  dims_.validate(false);
  if (coords_.size() != image_.rows()) throw ValidationError("coordinate tag count != image rows");
  if (image_.rows() > dims_.M()) throw ValidationError("more image rows than M");
  if (image_.rows() > 0 && image_.cols() != dims_.Dmodel) throw ValidationError("image cols != Dmodel");
  if (text_.rows() != dims_.T) throw ValidationError("text rows != T");
  if (text_.rows() > 0 && text_.cols() != dims_.Dmodel) throw ValidationError("text cols != Dmodel");
  std::size_t prev = 0;
  for (std::size_t i = 0; i < coords_.size(); ++i) {
    const std::size_t idx = fhw_linearize(coords_[i], dims_);
    if (i > 0 && idx <= prev) throw ValidationError("coordinate tags not strictly increasing in FHW order");
    prev = idx;
  }
}

std::vector<std::size_t> TokenGrid::token_indices() const {
  std::vector<std::size_t> out;
  out.reserve(coords_.size());
  for (const auto& c : coords_) out.push_back(fhw_linearize(c, dims_));
  return out;
}

Matrix TokenGrid::sequence() const {
  Matrix out(image_.rows() + text_.rows(), dims_.Dmodel);
  auto dst = out.data();
  auto img = image_.data();
  auto txt = text_.data();
  std::copy(img.begin(), img.end(), dst.begin());
  std::copy(txt.begin(), txt.end(), dst.begin() + static_cast<std::ptrdiff_t>(img.size()));
  return out;
}

}  // namespace focus
