#pragma once

// Independent reference implementations used by the unit and acceptance
// tests. Nothing here calls into the library's algorithms; only the plain data
// types (Matrix, Coord, Dims) are shared.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <vector>

#include "focus/core.hpp"

namespace oracle {

using focus::Coord;
using focus::Dims;
using focus::Matrix;

struct Rng {
  std::mt19937_64 eng;
  explicit Rng(std::uint64_t seed) : eng(seed) {}

  std::size_t uniform(std::size_t lo, std::size_t hi) {  // inclusive
    return std::uniform_int_distribution<std::size_t>(lo, hi)(eng);
  }
  double unit() { return std::uniform_real_distribution<double>(0.0, 1.0)(eng); }
  float normal() { return static_cast<float>(std::normal_distribution<double>(0.0, 1.0)(eng)); }
  bool coin(double p) { return unit() < p; }

  Matrix matrix(std::size_t rows, std::size_t cols) {
    Matrix m(rows, cols);
    for (auto& v : m.data()) v = normal();
    return m;
  }
  // Strictly increasing subset of [0, M) of size k.
  std::vector<std::size_t> subset(std::size_t M, std::size_t k) {
    std::vector<std::size_t> all(M);
    std::iota(all.begin(), all.end(), std::size_t{0});
    std::shuffle(all.begin(), all.end(), eng);
    all.resize(k);
    std::sort(all.begin(), all.end());
    return all;
  }
};

// ---- top-k ---------------------------------------------------------------

inline std::vector<std::size_t> top_k(const std::vector<float>& s, std::size_t k) {
  std::vector<std::size_t> idx(s.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return s[a] != s[b] ? s[a] > s[b] : a < b; });
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

// ---- GEMM ----------------------------------------------------------------

inline std::vector<double> naive_mm_double(const Matrix& A, const Matrix& B) {
  std::vector<double> out(A.rows() * B.cols(), 0.0);
  for (std::size_t i = 0; i < A.rows(); ++i)
    for (std::size_t j = 0; j < B.cols(); ++j) {
      double s = 0.0;
      for (std::size_t q = 0; q < A.cols(); ++q) s += static_cast<double>(A(i, q)) * B(q, j);
      out[i * B.cols() + j] = s;
    }
  return out;
}

// fp32: per element, each K-chunk of width k summed left to right from zero,
// chunk sums added in ascending order onto a zero accumulator.
inline Matrix chunked_mm(const Matrix& A, const Matrix& B, std::size_t k) {
  Matrix out(A.rows(), B.cols());
  for (std::size_t i = 0; i < A.rows(); ++i)
    for (std::size_t j = 0; j < B.cols(); ++j) {
      float acc = 0.0f;
      for (std::size_t k0 = 0; k0 < A.cols(); k0 += k) {
        float part = 0.0f;
        for (std::size_t q = k0; q < std::min(A.cols(), k0 + k); ++q) part += A(i, q) * B(q, j);
        acc += part;
      }
      out(i, j) = acc;
    }
  return out;
}

// ---- similarity gather ---------------------------------------------------

inline double cosine_double(std::span<const float> a, std::span<const float> b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (std::equal(a.begin(), a.end(), b.begin())) return 1.0;
  if (na == 0.0 || nb == 0.0) return (na == 0.0 && nb == 0.0) ? 1.0 : 0.0;
  return dot / std::sqrt(na * nb);
}

struct GatherOracle {
  std::vector<std::uint32_t> rep;  // per row
  std::size_t p = 0;
};

// Brute force: every earlier row whose coordinate lies inside the key's
// window is a candidate; best similarity above threshold wins, ties to the
// earliest row. Rows without a coordinate are never merged.
inline GatherOracle gather(const Matrix& rows, const std::vector<std::optional<Coord>>& tags, std::uint32_t bf,
                           std::uint32_t bh, std::uint32_t bw, std::optional<double> threshold) {
  GatherOracle g;
  g.rep.resize(rows.rows());
  for (std::size_t i = 0; i < rows.rows(); ++i) {
    std::optional<std::size_t> win;
    double best = -2.0;
    if (threshold && tags[i]) {
      for (std::size_t j = 0; j < rows.rows(); ++j) {
        if (j == i || !tags[j]) continue;
        const Coord a = *tags[i], b = *tags[j];
        if (b.f > a.f || b.r > a.r || b.c > a.c) continue;
        if (a.f - b.f >= bf || a.r - b.r >= bh || a.c - b.c >= bw) continue;
        const double s = cosine_double(rows.row(i), rows.row(j));
        if (s < *threshold) continue;
        if (!win || s > best || (s == best && j < *win)) {
          win = j;
          best = s;
        }
      }
    }
    if (win) {
      g.rep[i] = g.rep[*win];
    } else {
      g.rep[i] = static_cast<std::uint32_t>(g.p++);
    }
  }
  return g;
}

// ---- layout --------------------------------------------------------------

inline std::uint32_t bank(std::uint32_t f, std::uint32_t r, std::uint32_t c) { return (f & 1) * 4 + (r & 1) * 2 + (c & 1); }

// ---- DRAM accounting -----------------------------------------------------

inline std::uint64_t tile_bytes(std::uint64_t p, std::uint64_t n, std::uint64_t rows, std::uint64_t image_rows) {
  std::uint64_t bytes = 0;
  bytes += p * n * sizeof(float);           // compact payload
  bytes += rows * sizeof(std::uint32_t);    // similarity map
  bytes += image_rows * sizeof(std::uint8_t);  // offset byte per video row
  return bytes;
}

// ---- dense transformer layer ---------------------------------------------

struct DenseWeights {
  const Matrix *wq, *wk, *wv, *wo, *w1, *w2;
};

inline void softmax(Matrix& s) {
  for (std::size_t i = 0; i < s.rows(); ++i) {
    float mx = s(i, 0);
    for (std::size_t j = 1; j < s.cols(); ++j) mx = std::max(mx, s(i, j));
    float sum = 0.0f;
    for (std::size_t j = 0; j < s.cols(); ++j) {
      s(i, j) = std::exp(s(i, j) - mx);
      sum += s(i, j);
    }
    for (std::size_t j = 0; j < s.cols(); ++j) s(i, j) = s(i, j) / sum;
  }
}

inline Matrix cols_of(const Matrix& m, std::size_t c0, std::size_t w) {
  Matrix out(m.rows(), w);
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < w; ++j) out(i, j) = m(i, c0 + j);
  return out;
}

inline Matrix transpose(const Matrix& m) {
  Matrix t(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
  return t;
}

struct DenseLayerOut {
  Matrix y;                         // (kept + T) x D
  std::vector<std::size_t> kept;    // positions into the incoming image rows
};

// One layer on x = [S image rows | T text rows]. When keep_k < S the image
// rows are pruned to the keep_k with the highest max text-to-image attention.
inline DenseLayerOut dense_layer(const Matrix& x, std::size_t S, std::size_t T, std::size_t heads, std::size_t hd,
                                 const DenseWeights& w, std::size_t k, std::size_t keep_k) {
  const std::size_t seq = S + T;
  const Matrix Q = chunked_mm(x, *w.wq, k);
  const Matrix K = chunked_mm(x, *w.wk, k);
  const Matrix V = chunked_mm(x, *w.wv, k);
  const float scale = 1.0f / std::sqrt(static_cast<float>(hd));
  std::vector<Matrix> P;
  for (std::size_t h = 0; h < heads; ++h) {
    Matrix s = chunked_mm(cols_of(Q, h * hd, hd), transpose(cols_of(K, h * hd, hd)), k);
    for (auto& v : s.data()) v *= scale;
    softmax(s);
    P.push_back(std::move(s));
  }
  DenseLayerOut out;
  out.kept.resize(S);
  std::iota(out.kept.begin(), out.kept.end(), std::size_t{0});
  if (keep_k < S && T > 0) {
    std::vector<float> imp(S, -INFINITY);
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t j = 0; j < S; ++j) imp[j] = std::max(imp[j], P[h](S + t, j));
    out.kept = top_k(imp, keep_k);
  }
  std::vector<std::size_t> qrows = out.kept;
  for (std::size_t t = 0; t < T; ++t) qrows.push_back(S + t);
  Matrix attn(qrows.size(), x.cols());
  for (std::size_t h = 0; h < heads; ++h) {
    Matrix ph(qrows.size(), seq);
    for (std::size_t i = 0; i < qrows.size(); ++i)
      for (std::size_t j = 0; j < seq; ++j) ph(i, j) = P[h](qrows[i], j);
    const Matrix oh = chunked_mm(ph, cols_of(V, h * hd, hd), k);
    for (std::size_t i = 0; i < qrows.size(); ++i)
      for (std::size_t j = 0; j < hd; ++j) attn(i, h * hd + j) = oh(i, j);
  }
  const Matrix O = chunked_mm(attn, *w.wo, k);
  Matrix H = chunked_mm(O, *w.w1, k);
  for (auto& v : H.data()) v = v < 0.0f ? 0.0f : v;
  out.y = chunked_mm(H, *w.w2, k);
  return out;
}

}  // namespace oracle
