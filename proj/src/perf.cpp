#include "focus/perf.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "focus/sec.hpp"
#include "focus/sic.hpp"
#include "json.hpp"

namespace focus::perf {

namespace {

std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b) { return (a + b - 1) / b; }

std::uint64_t sat_sub(std::uint64_t a, std::uint64_t b) { return a > b ? a - b : 0; }

// Width of K-chunk j / output column tile c of a GEMM record.
std::uint64_t chunk_width(const gemm::GemmRecord& rec, std::size_t j) {
  return std::min<std::uint64_t>(rec.chunk_k, rec.inner - j * rec.chunk_k);
}
std::uint64_t col_width(std::uint64_t total, std::uint64_t tile_n, std::size_t c) {
  return std::min<std::uint64_t>(tile_n, total - c * tile_n);
}

}  // namespace

std::uint64_t chunk_cycles(std::uint64_t p, std::uint64_t kw, std::uint64_t b, std::uint64_t nc, std::uint64_t a) {
  if (a == 0 || b == 0) throw std::invalid_argument("chunk_cycles: PE array dims must be >= 1");
  return ceil_div(kw, b) * ceil_div(nc, a) * p;
}

std::uint64_t gemm_tile_cycles(std::uint64_t p, std::uint64_t K, std::uint64_t k, std::uint64_t b, std::uint64_t n,
                               std::uint64_t a) {
  if (k == 0) throw std::invalid_argument("gemm_tile_cycles: k must be >= 1");
  std::uint64_t total = 0;
  for (std::uint64_t k0 = 0; k0 < K; k0 += k) total += chunk_cycles(p, std::min(k, K - k0), b, n, a);
  return total;
}

std::uint64_t attention_cycles(std::uint64_t M, std::uint64_t T, std::uint64_t h, std::uint64_t n, std::uint64_t a,
                               std::uint64_t b) {
  if (a == 0 || b == 0) throw std::invalid_argument("attention_cycles: PE array dims must be >= 1");
  return ceil_div(M * (M + T) * h * n, a * b);
}

SecOverlap sec_overlap(std::uint64_t attn_cycles, std::uint64_t sorter_cycles) {
  return {sorter_cycles <= attn_cycles, sat_sub(sorter_cycles, attn_cycles)};
}

std::uint64_t scatter_stall_cycles(std::uint64_t m, std::uint64_t n, std::uint64_t p, std::uint64_t chunks,
                                   std::uint64_t accumulators, std::uint64_t a) {
  if (accumulators == 0) throw std::invalid_argument("scatter_stall_cycles: accumulators must be >= 1");
  if (a == 0) throw std::invalid_argument("scatter_stall_cycles: a must be >= 1");
  const std::uint64_t consumer = ceil_div(m * n, accumulators);
  const std::uint64_t producer = ceil_div(n, a) * p;
  return chunks * sat_sub(consumer, producer);
}

std::uint64_t tile_write_bytes(std::uint64_t p, std::uint64_t n, std::uint64_t rows, std::uint64_t image_rows,
                               bool gathered) {
  if (!gathered) return rows * n * kDramValueBytes;
  return p * n * kDramValueBytes + rows * kMapEntryBytes + image_rows * kOffsetEntryBytes;
}

Traffic gemm_traffic(const gemm::GemmRecord& rec) {
  Traffic t;
  const std::size_t row_tiles = rec.tile_rows.size();
  if (rec.input_from_dram) {
    if (rec.scatter) {
      // The consumer reads exactly what the gathering producer wrote.
      for (std::size_t r = 0; r < row_tiles; ++r)
        for (std::size_t j = 0; j < rec.chunks(); ++j)
          t.read += tile_write_bytes(rec.chunk_p[r * rec.chunks() + j], chunk_width(rec, j), rec.tile_rows[r],
                                     rec.tile_image_rows[r], true);
    } else {
      t.read += std::uint64_t{rec.rows} * rec.inner * rec.batch * kDramValueBytes;
    }
  }
  // Weights stream in once per row-tile pass.
  t.read += std::uint64_t{row_tiles} * rec.inner * rec.cols * rec.batch * kDramValueBytes;

  if (rec.output_to_dram) {
    if (rec.gathered) {
      const std::size_t ct = rec.out_col_tiles();
      for (std::size_t r = 0; r < row_tiles; ++r)
        for (std::size_t c = 0; c < ct; ++c)
          t.written += tile_write_bytes(rec.out_p[r * ct + c], col_width(rec.out_width, rec.tile_n, c),
                                        rec.tile_rows[r], rec.tile_image_rows[r], true);
    } else {
      t.written += std::uint64_t{rec.rows} * rec.out_width * kDramValueBytes;
    }
  }
  return t;
}

Traffic dram_traffic(std::span<const gemm::LayerStats> layers) {
  Traffic total;
  for (const auto& l : layers) {
    for (const auto& g : l.gemms) {
      const auto t = gemm_traffic(g);
      total.read += t.read;
      total.written += t.written;
    }
  }
  return total;
}

std::uint64_t gemm_cycles(const gemm::GemmRecord& rec, const TileConfig& tile) {
  std::uint64_t total = 0;
  for (std::size_t r = 0; r < rec.tile_rows.size(); ++r)
    for (std::size_t c = 0; c < rec.col_tiles(); ++c)
      for (std::size_t j = 0; j < rec.chunks(); ++j)
        total += chunk_cycles(rec.chunk_p[r * rec.chunks() + j], chunk_width(rec, j), tile.b,
                              col_width(rec.cols, rec.tile_n, c), tile.a);
  return total * rec.batch;
}

std::uint64_t gemm_scatter_stall(const gemm::GemmRecord& rec, const TileConfig& tile, std::uint32_t accumulators) {
  if (!rec.scatter) return 0;
  std::uint64_t total = 0;
  for (std::size_t r = 0; r < rec.tile_rows.size(); ++r)
    for (std::size_t c = 0; c < rec.col_tiles(); ++c)
      for (std::size_t j = 0; j < rec.chunks(); ++j) {
        const std::uint64_t nc = col_width(rec.cols, rec.tile_n, c);
        const std::uint64_t p = rec.chunk_p[r * rec.chunks() + j];
        // Producer time for this chunk includes K passes when k exceeds the array height.
        const std::uint64_t producer = chunk_cycles(p, chunk_width(rec, j), tile.b, nc, tile.a);
        total += sat_sub(ceil_div(std::uint64_t{rec.tile_rows[r]} * nc, accumulators), producer);
      }
  return total * rec.batch;
}

std::uint64_t gemm_sram_bytes(const gemm::GemmRecord& rec) {
  std::uint64_t total = 0;
  for (std::size_t r = 0; r < rec.tile_rows.size(); ++r)
    for (std::size_t c = 0; c < rec.col_tiles(); ++c)
      for (std::size_t j = 0; j < rec.chunks(); ++j) {
        const std::uint64_t kw = chunk_width(rec, j);
        const std::uint64_t nc = col_width(rec.cols, rec.tile_n, c);
        const std::uint64_t p = rec.chunk_p[r * rec.chunks() + j];
        total += p * kw * kOperandBytes + kw * nc * kOperandBytes + std::uint64_t{rec.tile_rows[r]} * nc * kAccumBytes;
      }
  return total * rec.batch;
}

double energy_mj(std::uint64_t macs, std::uint64_t sram_bytes, std::uint64_t dram_bytes, const EnergyCoeffs& coeffs) {
  coeffs.validate();
  const double pj = static_cast<double>(macs) * coeffs.pj_per_mac +
                    static_cast<double>(sram_bytes) * coeffs.pj_per_sram_byte +
                    static_cast<double>(dram_bytes) * coeffs.pj_per_dram_byte;
  return pj * 1e-9;
}

bool BufferReport::any_overflow() const {
  return std::any_of(buffers.begin(), buffers.end(), [](const BufferUsage& b) { return b.overflow(); });
}

const BufferUsage& BufferReport::at(const std::string& name) const {
  for (const auto& b : buffers)
    if (b.name == name) return b;
  throw std::out_of_range("no buffer named " + name);
}

std::uint64_t layouter_window_vectors(const Dims& dims, const BlockConfig& block) {
  return std::uint64_t{block.bf - 1} * dims.frame_size() + std::uint64_t{block.bh - 1} * dims.W + (block.bw - 1) + 1;
}

namespace {

BufferReport make_report(std::uint64_t input, std::uint64_t weight, std::uint64_t output, std::uint64_t layouter,
                         std::uint64_t importance, const BufferCapacities& caps) {
  BufferReport r;
  r.buffers = {{"input", input, caps.input},
               {"weight", weight, caps.weight},
               {"output", output, caps.output},
               {"layouter", layouter, caps.layouter},
               {"importance", importance, caps.importance}};
  return r;
}

}  // namespace

BufferReport buffer_occupancy_check(const FocusConfig& cfg, std::span<const gemm::LayerStats> layers,
                                    const BufferCapacities& caps) {
  std::uint64_t input = 0, weight = 0, output = 0, layouter = 0, importance = 0;
  const std::uint64_t window = layouter_window_vectors(cfg.dims, cfg.block);
  for (const auto& l : layers) {
    if (l.pruned) importance = std::max<std::uint64_t>(importance, l.prune_candidates * kScoreBytes);
    for (const auto& g : l.gemms) {
      for (std::size_t r = 0; r < g.tile_rows.size(); ++r) {
        for (std::size_t j = 0; j < g.chunks(); ++j) {
          const std::uint64_t kw = chunk_width(g, j);
          // Double-buffered operand streams.
          input = std::max(input, 2 * std::uint64_t{g.chunk_p[r * g.chunks() + j]} * kw * kOperandBytes);
          for (std::size_t c = 0; c < g.col_tiles(); ++c)
            weight = std::max(weight, 2 * kw * col_width(g.cols, g.tile_n, c) * kOperandBytes);
        }
        for (std::size_t c = 0; c < g.col_tiles(); ++c)
          output = std::max(output, std::uint64_t{g.tile_rows[r]} * col_width(g.cols, g.tile_n, c) * kAccumBytes);
        if (g.gathered) {
          for (std::size_t c = 0; c < g.out_col_tiles(); ++c)
            layouter = std::max(layouter, std::min<std::uint64_t>(g.tile_rows[r], window) *
                                              col_width(g.out_width, g.tile_n, c) * kOperandBytes);
        }
      }
    }
  }
  return make_report(input, weight, output, layouter, importance, caps);
}

BufferReport buffer_worst_case(const FocusConfig& cfg, const BufferCapacities& caps) {
  const std::uint64_t m = cfg.tile.m;
  const std::uint64_t n = cfg.tile.n;
  const std::uint64_t k = cfg.tile.k;
  const std::uint64_t window = std::min<std::uint64_t>(m, layouter_window_vectors(cfg.dims, cfg.block));
  return make_report(2 * m * k * kOperandBytes, 2 * k * n * kOperandBytes, m * n * kAccumBytes,
                     window * n * kOperandBytes, cfg.dims.M() * kScoreBytes, caps);
}

double PerfReport::sparsity() const {
  return ops_dense == 0 ? 0.0 : 1.0 - static_cast<double>(ops_actual) / static_cast<double>(ops_dense);
}

double PerfReport::mean_tile_length() const {
  std::uint64_t count = 0;
  double sum = 0.0;
  for (const auto& [p, c] : tile_length_histogram) {
    count += c;
    sum += static_cast<double>(p) * static_cast<double>(c);
  }
  return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

namespace {

void finalize(PerfReport& rep, const FocusConfig& cfg) {
  for (auto& l : rep.layers) {
    l.stall_cycles = l.scatter_stall + l.memory_stall + l.sec_exposed;
    l.utilization = l.gemm_cycles == 0 ? 0.0
                                       : static_cast<double>(l.ops_actual) /
                                             (static_cast<double>(cfg.tile.a) * cfg.tile.b * l.gemm_cycles);
    rep.gemm_cycles += l.gemm_cycles;
    rep.sec_cycles += l.sec_cycles;
    rep.sic_cycles += l.sic_cycles;
    rep.stall_cycles += l.stall_cycles;
    rep.scatter_stall += l.scatter_stall;
    rep.memory_stall += l.memory_stall;
    rep.sec_exposed += l.sec_exposed;
    rep.dram_bytes_read += l.dram_read;
    rep.dram_bytes_written += l.dram_write;
    rep.ops_dense += l.ops_dense;
    rep.ops_actual += l.ops_actual;
    rep.scatter_accum_ops += l.scatter_accum_ops;
    rep.sram_bytes += l.sram_bytes;
  }
  rep.total_cycles = rep.gemm_cycles + rep.stall_cycles;
  rep.pe_utilization = rep.gemm_cycles == 0 ? 0.0
                                            : static_cast<double>(rep.ops_actual) /
                                                  (static_cast<double>(cfg.tile.a) * cfg.tile.b * rep.gemm_cycles);
  rep.energy_mj = energy_mj(rep.ops_actual, rep.sram_bytes, rep.dram_bytes_read + rep.dram_bytes_written,
                            cfg.energy_coeffs);
}

}  // namespace

PerfReport evaluate(std::span<const gemm::LayerStats> layers, const FocusConfig& cfg) {
  PerfReport rep;
  rep.mode = "functional";
  const auto& tile = cfg.tile;
  std::uint64_t ffn_dense = 0, ffn_actual = 0;
  for (const auto& l : layers) {
    LayerPerf lp;
    lp.layer = l.layer;
    lp.retained_tokens = l.retained_tokens;
    for (const auto& g : l.gemms) {
      const auto cycles = gemm_cycles(g, tile);
      const auto traffic = gemm_traffic(g);
      const auto scatter = gemm_scatter_stall(g, tile, cfg.scatter_accumulators);
      lp.gemm_cycles += cycles;
      lp.scatter_stall += scatter;
      // Transfers are double-buffered against the whole GEMM phase.
      const auto transfer = static_cast<std::uint64_t>(
          std::ceil(static_cast<double>(traffic.read + traffic.written) / std::ceil(cfg.dram_bandwidth)));
      lp.memory_stall += sat_sub(transfer, cycles + scatter);
      lp.dram_read += traffic.read;
      lp.dram_write += traffic.written;
      lp.ops_dense += g.ops_baseline;
      lp.ops_actual += g.ops_actual;
      lp.scatter_accum_ops += g.scatter_accum_ops;
      lp.sram_bytes += gemm_sram_bytes(g);
      if (g.gathered) {
        const std::size_t ct = g.out_col_tiles();
        for (std::size_t r = 0; r < g.tile_rows.size(); ++r)
          lp.sic_cycles += ct * sic::matcher_cycles(g.tile_rows[r], cfg.block);
      }
      if (g.name.rfind("ffn", 0) == 0) {
        ffn_dense += g.ops_baseline;
        ffn_actual += g.ops_actual;
      }
    }
    if (l.pruned) {
      lp.sec_cycles = sec::sorter_cycles(l.prune_candidates, l.prune_k, tile.a);
      const auto attn = attention_cycles(l.prune_candidates, l.text_tokens, cfg.dims.head_dim, cfg.dims.heads,
                                         tile.a, tile.b);
      lp.sec_exposed = sec_overlap(attn, lp.sec_cycles).exposed_cycles;
    }
    for (const auto& [p, c] : l.p_histogram) rep.tile_length_histogram[p] += c;
    rep.layers.push_back(lp);
  }
  if (ffn_dense > 0) rep.ffn_sparsity = 1.0 - static_cast<double>(ffn_actual) / static_cast<double>(ffn_dense);
  rep.buffers = buffer_occupancy_check(cfg, layers);
  finalize(rep, cfg);
  return rep;
}

PerfReport evaluate_timing(const trace::SparsityTrace& trace, const FocusConfig& cfg) {
  cfg.validate(true);
  trace.validate_against(cfg.dims.M(), cfg.tile.m);
  PerfReport rep;
  rep.mode = "timing";
  const auto& tile = cfg.tile;
  const std::uint64_t m = tile.m, n = tile.n, k = tile.k;
  const std::uint64_t chunks_per_tile = ceil_div(cfg.dims.Dmodel, k);
  std::uint64_t prev_tokens = cfg.dims.M();
  std::uint64_t importance = 0;
  for (const auto& r : trace.layers) {
    LayerPerf lp;
    lp.layer = r.layer;
    lp.retained_tokens = r.retained_tokens;
    lp.ops_dense = r.total_ops;
    lp.ops_actual = r.retained_ops;
    lp.gemm_cycles = ceil_div(r.retained_ops, std::uint64_t{tile.a} * tile.b);
    // Chunk passes the dense GEMMs of this layer would take at full tile height.
    const std::uint64_t passes = ceil_div(r.total_ops, m * k * n);
    lp.scatter_stall = scatter_stall_cycles(m, n, r.compact_p, passes, cfg.scatter_accumulators, tile.a);
    lp.scatter_accum_ops = passes * m * n;
    const std::uint64_t out_tiles = ceil_div(passes, chunks_per_tile);
    const std::uint64_t act = out_tiles * tile_write_bytes(r.compact_p, n, m, m, true);
    lp.dram_write = act;
    lp.dram_read = act + ceil_div(r.total_ops * kDramValueBytes, m);
    const auto transfer = static_cast<std::uint64_t>(
        std::ceil(static_cast<double>(lp.dram_read + lp.dram_write) / std::ceil(cfg.dram_bandwidth)));
    lp.memory_stall = sat_sub(transfer, lp.gemm_cycles + lp.scatter_stall);
    lp.sram_bytes = passes * (r.compact_p * k * kOperandBytes + k * n * kOperandBytes + m * n * kAccumBytes);
    if (r.retained_tokens < prev_tokens) {
      lp.sec_cycles = sec::sorter_cycles(prev_tokens, r.retained_tokens, tile.a);
      const auto attn =
          attention_cycles(prev_tokens, cfg.dims.T, cfg.dims.head_dim, cfg.dims.heads, tile.a, tile.b);
      lp.sec_exposed = sec_overlap(attn, lp.sec_cycles).exposed_cycles;
      importance = std::max(importance, prev_tokens * kScoreBytes);
      prev_tokens = r.retained_tokens;
    }
    if (passes > 0) rep.tile_length_histogram[static_cast<std::uint32_t>(r.compact_p)] += passes;
    rep.layers.push_back(lp);
  }
  // Buffer peaks from the configured tile shape at the recorded tile lengths.
  std::uint64_t max_p = 0;
  for (const auto& r : trace.layers) max_p = std::max(max_p, r.compact_p);
  const BufferCapacities caps;
  const std::uint64_t window = std::min<std::uint64_t>(m, layouter_window_vectors(cfg.dims, cfg.block));
  rep.buffers = BufferReport{{{"input", 2 * max_p * k * kOperandBytes, caps.input},
                              {"weight", 2 * k * n * kOperandBytes, caps.weight},
                              {"output", m * n * kAccumBytes, caps.output},
                              {"layouter", window * n * kOperandBytes, caps.layouter},
                              {"importance", importance, caps.importance}}};
  finalize(rep, cfg);
  return rep;
}

trace::SparsityTrace derive_sparsity_trace(std::span<const gemm::LayerStats> layers) {
  trace::SparsityTrace out;
  for (const auto& l : layers) {
    trace::SparsityRecord r;
    r.layer = l.layer;
    r.retained_ops = l.ops_actual();
    r.total_ops = l.ops_dense();
    r.retained_tokens = l.retained_tokens;
    std::uint64_t count = 0, sum = 0;
    for (const auto& [p, c] : l.p_histogram) {
      count += c;
      sum += std::uint64_t{p} * c;
    }
    r.compact_p = count == 0 ? 0 : (sum + count / 2) / count;
    out.layers.push_back(r);
  }
  return out;
}

namespace {

std::string fmt_ratio(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(6) << v;
  return os.str();
}

}  // namespace

std::string report_csv(const PerfReport& report) {
  std::ostringstream os;
  os << kReportCsvHeader << '\n';
  for (const auto& l : report.layers) {
    os << l.layer << ',' << l.gemm_cycles << ',' << l.sec_cycles << ',' << l.sic_cycles << ',' << l.stall_cycles << ','
       << l.dram_read << ',' << l.dram_write << ',' << l.ops_dense << ',' << l.ops_actual << ','
       << fmt_ratio(l.utilization) << '\n';
  }
  os << "total," << report.gemm_cycles << ',' << report.sec_cycles << ',' << report.sic_cycles << ','
     << report.stall_cycles << ',' << report.dram_bytes_read << ',' << report.dram_bytes_written << ','
     << report.ops_dense << ',' << report.ops_actual << ',' << fmt_ratio(report.pe_utilization) << '\n';
  return os.str();
}

std::string report_json(const PerfReport& report) {
  nlohmann::ordered_json j;
  j["mode"] = report.mode;
  j["total_cycles"] = report.total_cycles;
  j["gemm_cycles"] = report.gemm_cycles;
  j["sec_cycles"] = report.sec_cycles;
  j["sic_cycles"] = report.sic_cycles;
  j["stall_cycles"] = report.stall_cycles;
  j["stall_breakdown"] = {{"scatter", report.scatter_stall},
                          {"memory", report.memory_stall},
                          {"sec_exposed", report.sec_exposed}};
  j["dram_bytes_read"] = report.dram_bytes_read;
  j["dram_bytes_written"] = report.dram_bytes_written;
  j["ops_dense"] = report.ops_dense;
  j["ops_actual"] = report.ops_actual;
  j["scatter_accum_ops"] = report.scatter_accum_ops;
  j["sram_bytes"] = report.sram_bytes;
  j["sparsity"] = report.sparsity();
  if (report.ffn_sparsity) j["ffn_sparsity"] = *report.ffn_sparsity;
  j["energy_mj"] = report.energy_mj;
  j["pe_utilization"] = report.pe_utilization;
  j["mean_tile_length"] = report.mean_tile_length();
  nlohmann::ordered_json hist = nlohmann::ordered_json::object();
  for (const auto& [p, c] : report.tile_length_histogram) hist[std::to_string(p)] = c;
  j["tile_length_histogram"] = hist;
  j["buffers"] = nlohmann::ordered_json::array();
  for (const auto& b : report.buffers.buffers) {
    j["buffers"].push_back(
        {{"name", b.name}, {"peak_bytes", b.peak}, {"capacity_bytes", b.capacity}, {"overflow", b.overflow()}});
  }
  j["buffer_overflow"] = report.buffers.any_overflow();
  return j.dump(2) + "\n";
}

}  // namespace focus::perf
