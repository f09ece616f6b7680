#include "focus/layer.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <string>

#include "focus/trace.hpp"

namespace focus::gemm {

namespace {

void check_shape(const Matrix& m, std::size_t rows, std::size_t cols, const char* name) {
  if (m.rows() != rows || m.cols() != cols) {
    throw std::invalid_argument(std::string("weight ") + name + " is " + std::to_string(m.rows()) + "x" +
                                std::to_string(m.cols()) + ", expected " + std::to_string(rows) + "x" +
                                std::to_string(cols));
  }
}

bool same_shape(const Dims& a, const Dims& b) {
  return a.F == b.F && a.H == b.H && a.W == b.W && a.T == b.T && a.Dmodel == b.Dmodel;
}

void require_same_shape(const Dims& got, const Dims& want, const char* what) {
  const std::pair<const char*, std::pair<std::uint32_t, std::uint32_t>> fields[] = {
      {"F", {got.F, want.F}}, {"H", {got.H, want.H}}, {"W", {got.W, want.W}},
      {"T", {got.T, want.T}}, {"Dmodel", {got.Dmodel, want.Dmodel}}};
  for (const auto& [name, v] : fields) {
    if (v.first != v.second) {
      throw ValidationError(std::string(what) + " dims do not match config: " + name + " is " +
                            std::to_string(v.first) + ", config has " + std::to_string(v.second));
    }
  }
}

void annotate_gather(GemmRecord& rec, const ConcentratedMatrix& packed, LayerStats& stats) {
  rec.gathered = true;
  rec.out_p.clear();
  for (const auto& tile : packed.tiles()) {
    for (const auto& g : tile.chunks) {
      const auto p = static_cast<std::uint32_t>(g.compact.p());
      rec.out_p.push_back(p);
      ++stats.p_histogram[p];
    }
  }
}

}  // namespace

void LayerWeights::validate(std::size_t dmodel, std::size_t ffn) const {
  check_shape(wq, dmodel, dmodel, "wq");
  check_shape(wk, dmodel, dmodel, "wk");
  check_shape(wv, dmodel, dmodel, "wv");
  check_shape(wo, dmodel, dmodel, "wo");
  check_shape(w1, dmodel, ffn, "w1");
  check_shape(w2, ffn, dmodel, "w2");
}

std::vector<LayerWeights> random_weights(const FocusConfig& cfg, std::uint64_t seed) {
  const std::size_t D = cfg.dims.Dmodel;
  const std::size_t ffn = cfg.ffn_width();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto fill = [&](std::size_t rows, std::size_t cols) {
    Matrix m(rows, cols);
    const double scale = 1.0 / std::sqrt(static_cast<double>(rows));
    for (auto& v : m.data()) v = static_cast<float>(scale * gauss(rng));
    return m;
  };
  std::vector<LayerWeights> out;
  out.reserve(cfg.num_layers);
  for (std::uint32_t l = 0; l < cfg.num_layers; ++l) {
    LayerWeights w;
    w.wq = fill(D, D);
    w.wk = fill(D, D);
    w.wv = fill(D, D);
    w.wo = fill(D, D);
    w.w1 = fill(D, ffn);
    w.w2 = fill(ffn, D);
    out.push_back(std::move(w));
  }
  return out;
}

void write_weights(std::span<const LayerWeights> layers, std::ostream& out) {
  const std::uint32_t D = layers.empty() ? 0 : static_cast<std::uint32_t>(layers.front().wq.rows());
  const std::uint32_t ffn = layers.empty() ? 0 : static_cast<std::uint32_t>(layers.front().w1.cols());
  out.write("FCWT", 4);
  trace::le::put_u16(out, 1);
  trace::le::put_u32(out, static_cast<std::uint32_t>(layers.size()));
  trace::le::put_u32(out, D);
  trace::le::put_u32(out, ffn);
  for (const auto& w : layers) {
    w.validate(D, ffn);
    for (const Matrix* m : {&w.wq, &w.wk, &w.wv, &w.wo, &w.w1, &w.w2}) trace::le::put_f32s(out, m->data());
  }
  if (!out) throw IoError("write failed");
}

void write_weights(std::span<const LayerWeights> layers, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_weights(layers, out);
}

std::vector<LayerWeights> read_weights(std::istream& in) {
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() != 4 || std::string(magic, 4) != "FCWT") throw FormatError("bad magic: not an FCWT weights file");
  if (trace::le::get_u16(in, "version") != 1) throw FormatError("unsupported weights version");
  const auto layers = trace::le::get_u32(in, "layers");
  const auto D = trace::le::get_u32(in, "Dmodel");
  const auto ffn = trace::le::get_u32(in, "ffn");
  std::vector<LayerWeights> out(layers);
  for (auto& w : out) {
    w.wq = Matrix(D, D);
    w.wk = Matrix(D, D);
    w.wv = Matrix(D, D);
    w.wo = Matrix(D, D);
    w.w1 = Matrix(D, ffn);
    w.w2 = Matrix(ffn, D);
    for (auto [m, name] : {std::pair{&w.wq, "wq"}, {&w.wk, "wk"}, {&w.wv, "wv"}, {&w.wo, "wo"}, {&w.w1, "w1"},
                           {&w.w2, "w2"}}) {
      trace::le::get_f32s(in, m->data(), name);
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after weights payload");
  return out;
}

std::vector<LayerWeights> read_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open weights " + path.string());
  return read_weights(in);
}

std::vector<sic::RowTag> row_tags(const TokenGrid& grid) {
  std::vector<sic::RowTag> tags(grid.coords().begin(), grid.coords().end());
  tags.resize(grid.image_rows() + grid.text().rows());
  return tags;
}

namespace {

TokenGrid grid_from_sequence(const Dims& dims, const Matrix& seq, std::vector<Coord> coords) {
  const std::size_t S = coords.size();
  return TokenGrid(dims, seq.block(0, S, 0, seq.cols()), std::move(coords), seq.block(S, seq.rows() - S, 0, seq.cols()));
}

void require_gather_tiling(const FocusConfig& cfg) {
  if (cfg.tile.n != cfg.tile.k) {
    throw std::invalid_argument("tile.n (" + std::to_string(cfg.tile.n) + ") must equal tile.k (" +
                                std::to_string(cfg.tile.k) + ") so gathered tiles feed the next GEMM's K-chunks");
  }
}

}  // namespace

Activations concentrate_input(const TokenGrid& grid, const FocusConfig& cfg) {
  require_gather_tiling(cfg);
  const auto tags = row_tags(grid);
  auto packed = ConcentratedMatrix::gather(grid.sequence(), tags, grid.dims(), cfg.tile.m, cfg.tile.n, cfg.block,
                                           cfg.sim_threshold);
  TokenGrid expanded = grid_from_sequence(grid.dims(), packed.expand(), grid.coords());
  return {std::move(expanded), std::move(packed)};
}

void softmax_rows(Matrix& scores) {
  for (std::size_t i = 0; i < scores.rows(); ++i) {
    auto row = scores.row(i);
    if (row.empty()) continue;
    float mx = row[0];
    for (float v : row) mx = std::max(mx, v);
    float sum = 0.0f;
    for (auto& v : row) {
      v = std::exp(v - mx);
      sum += v;
    }
    for (auto& v : row) v = v / sum;
  }
}

LayerResult layer_forward(const Activations& in, const LayerWeights& weights, const FocusConfig& cfg,
                          std::uint32_t layer) {
  cfg.validate(true);
  require_gather_tiling(cfg);
  const Dims& d = cfg.dims;
  if (!same_shape(in.grid.dims(), d)) throw std::invalid_argument("activation dims do not match config dims");
  const std::size_t D = d.Dmodel;
  const std::size_t T = d.T;
  const std::size_t S = in.grid.image_rows();
  const std::size_t seq = S + T;
  const std::size_t base_seq = d.M() + T;
  weights.validate(D, cfg.ffn_width());
  if (in.packed.rows() != seq || in.packed.cols() != D) {
    throw std::invalid_argument("packed activations do not match the token grid");
  }

  LayerResult result;
  LayerStats& stats = result.stats;
  stats.layer = layer;
  stats.tokens_in = S;
  stats.text_tokens = T;
  const TileConfig& tile = cfg.tile;
  const auto acc = cfg.scatter_accumulators;

  auto project = [&](const ConcentratedMatrix& x, const Matrix& w, const char* name, std::size_t base_rows) {
    auto [out, rec] = concentrated_gemm(x, w, tile, acc);
    rec.name = name;
    rec.ops_baseline = std::uint64_t{base_rows} * w.rows() * w.cols();
    stats.gemms.push_back(std::move(rec));
    return std::move(out);
  };

  const Matrix Q = project(in.packed, weights.wq, "q", base_seq);
  const Matrix K = project(in.packed, weights.wk, "k", base_seq);
  const Matrix V = project(in.packed, weights.wv, "v", base_seq);

  const std::size_t heads = d.heads;
  const std::size_t hd = d.head_dim;
  const float scale = 1.0f / std::sqrt(static_cast<float>(hd));
  std::vector<Matrix> probs;
  probs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const Matrix kt = K.block(0, seq, h * hd, hd).transposed();
    Matrix scores = dense_gemm_tiled(Q.block(0, seq, h * hd, hd), kt, tile);
    for (auto& v : scores.data()) v *= scale;
    softmax_rows(scores);
    probs.push_back(std::move(scores));
  }
  {
    auto rec = dense_record("qk", seq, hd, seq, tile, heads);
    rec.output_to_dram = false;  // scores stay on chip for softmax and the analyzer
    rec.ops_baseline = std::uint64_t{base_seq} * hd * base_seq * heads;
    stats.gemms.push_back(std::move(rec));
  }
  const sec::AttentionScores attn(std::move(probs), S, T);

  // Semantic pruning where the schedule steps down.
  std::vector<std::size_t> keep(S);
  for (std::size_t i = 0; i < S; ++i) keep[i] = i;
  const double frac_now = sec::retention_for_layer(cfg.retention_schedule, layer);
  const double frac_prev = layer == 0 ? 1.0 : sec::retention_for_layer(cfg.retention_schedule, layer - 1);
  if (frac_now < frac_prev) {
    const std::size_t k = sec::retained_count(frac_now, d.M());
    if (k < S) {
      const auto scores = sec::importance_scores(attn);
      keep = sec::top_k_select(scores, k);
      stats.pruned = true;
      stats.prune_candidates = S;
      stats.prune_k = k;
    }
  }

  std::vector<std::size_t> query_rows = keep;
  for (std::size_t i = 0; i < T; ++i) query_rows.push_back(S + i);
  const std::size_t q_rows = query_rows.size();

  Matrix attn_out(q_rows, D);
  for (std::size_t h = 0; h < heads; ++h) {
    const Matrix ph = attn.head(h).gather_rows(query_rows);
    const Matrix out_h = dense_gemm_tiled(ph, V.block(0, seq, h * hd, hd), tile);
    for (std::size_t i = 0; i < q_rows; ++i) {
      const auto src = out_h.row(i);
      std::copy(src.begin(), src.end(), attn_out.row(i).begin() + static_cast<std::ptrdiff_t>(h * hd));
    }
  }

  std::vector<Coord> coords;
  coords.reserve(keep.size());
  for (auto row : keep) coords.push_back(in.grid.coords()[row]);
  std::vector<sic::RowTag> tags(coords.begin(), coords.end());
  tags.resize(q_rows);
  auto gather = [&](const Matrix& values) {
    return ConcentratedMatrix::gather(values, tags, d, tile.m, tile.n, cfg.block, cfg.sim_threshold);
  };

  const ConcentratedMatrix packed_pv = gather(attn_out);
  {
    auto rec = dense_record("pv", q_rows, seq, hd, tile, heads);
    rec.input_from_dram = false;  // probabilities come straight from softmax
    rec.ops_baseline = std::uint64_t{base_seq} * base_seq * hd * heads;
    rec.tile_image_rows.clear();
    for (const auto& t : packed_pv.tiles()) rec.tile_image_rows.push_back(static_cast<std::uint32_t>(t.image_rows));
    annotate_gather(rec, packed_pv, stats);
    stats.gemms.push_back(std::move(rec));
  }

  const Matrix O = project(packed_pv, weights.wo, "o", base_seq);
  const ConcentratedMatrix packed_o = gather(O);
  annotate_gather(stats.gemms.back(), packed_o, stats);

  Matrix hidden = project(packed_o, weights.w1, "ffn_up", base_seq);
  for (auto& v : hidden.data()) v = std::max(v, 0.0f);
  const ConcentratedMatrix packed_h = gather(hidden);
  annotate_gather(stats.gemms.back(), packed_h, stats);

  const Matrix Y = project(packed_h, weights.w2, "ffn_down", base_seq);
  ConcentratedMatrix packed_y = gather(Y);
  annotate_gather(stats.gemms.back(), packed_y, stats);

  stats.retained_tokens = keep.size();
  for (const auto& c : coords) result.retained.indices.push_back(fhw_linearize(c, d));
  result.out.grid = grid_from_sequence(d, packed_y.expand(), std::move(coords));
  result.out.packed = std::move(packed_y);
  return result;
}

LayerResult layer_forward(const TokenGrid& grid, const LayerWeights& weights, const FocusConfig& cfg,
                          std::uint32_t layer) {
  return layer_forward(concentrate_input(grid, cfg), weights, cfg, layer);
}

PipelineResult run_pipeline(const TokenGrid& input, std::span<const LayerWeights> weights, const FocusConfig& cfg) {
  if (weights.size() < cfg.num_layers) {
    throw ValidationError("need " + std::to_string(cfg.num_layers) + " layers of weights, got " +
                                std::to_string(weights.size()));
  }
  require_same_shape(input.dims(), cfg.dims, "trace");
  const TokenGrid grid(cfg.dims, input.image(), input.coords(), input.text());
  Activations acts = concentrate_input(grid, cfg);
  PipelineResult out;
  for (std::uint32_t l = 0; l < cfg.num_layers; ++l) {
    auto res = layer_forward(acts, weights[l], cfg, l);
    out.layers.push_back(std::move(res.stats));
    acts = std::move(res.out);
  }
  out.output = std::move(acts.grid);
  return out;
}

}  // namespace focus::gemm
