#include <catch2/catch_amalgamated.hpp>

#include "focus/layer.hpp"
#include "focus/perf.hpp"
#include "focus/trace.hpp"
#include "oracles.hpp"

using namespace focus;
using namespace focus::perf;

namespace {

FocusConfig desk_config() {
  FocusConfig cfg;
  cfg.dims = Dims{4, 4, 4, 4, 32, 4, 8};
  cfg.tile = TileConfig{32, 8, 8, 8, 8};
  cfg.num_layers = 2;
  cfg.ffn_dim = 64;
  cfg.retention_schedule = {{1, 0.5}};
  cfg.energy_coeffs = EnergyCoeffs{0.5, 0.05, 20.0};
  return cfg;
}

std::vector<gemm::LayerStats> desk_run(const FocusConfig& cfg, double temporal, std::uint64_t seed = 1) {
  trace::TraceGenConfig g;
  g.dims = cfg.dims;
  g.temporal_similarity = temporal;
  g.seed = seed;
  const auto grid = trace::generate_synthetic_trace(g);
  return gemm::run_pipeline(grid, gemm::random_weights(cfg, seed), cfg).layers;
}

// One scatter GEMM with uniform p over all chunks.
gemm::GemmRecord uniform_record(std::size_t rows, std::size_t K, std::size_t N, std::size_t m, std::size_t k,
                                std::uint32_t p) {
  gemm::GemmRecord r;
  r.name = "x";
  r.rows = rows;
  r.inner = K;
  r.cols = N;
  r.tile_n = k;
  r.chunk_k = k;
  r.scatter = true;
  r.out_width = N;
  for (std::size_t r0 = 0; r0 < rows; r0 += m) {
    const auto t = static_cast<std::uint32_t>(std::min(m, rows - r0));
    r.tile_rows.push_back(t);
    r.tile_image_rows.push_back(t);
    for (std::size_t j = 0; j < r.chunks(); ++j) r.chunk_p.push_back(std::min(p, t));
  }
  r.ops_dense = r.ops_baseline = rows * K * N;
  for (auto cp : r.chunk_p) r.ops_actual += std::uint64_t{cp} * k * N;
  return r;
}

}  // namespace

TEST_CASE("GEMM tile cycles") {
  CHECK(gemm_tile_cycles(1024, 3584, 32, 32, 32, 32) == 114688);
  CHECK(gemm_tile_cycles(0, 3584, 32, 32, 32, 32) == 0);
  CHECK(gemm_tile_cycles(77, 32, 32, 32, 32, 32) == 77);
  // k wider than the array height takes several passes per chunk.
  CHECK(gemm_tile_cycles(10, 64, 64, 32, 32, 32) == 20);
  CHECK(chunk_cycles(5, 16, 32, 48, 32) == 10);
}

TEST_CASE("attention cycles and sorter overlap") {
  CHECK(attention_cycles(6272, 109, 128, 28, 32, 32) == 140075712);
  CHECK(attention_cycles(0, 109, 128, 28, 32, 32) == 0);
  const auto o = sec_overlap(140075712, 491764);
  CHECK(o.hidden);
  CHECK(o.exposed_cycles == 0);
  CHECK(sec_overlap(100, 100).hidden);
  CHECK(sec_overlap(100, 100).exposed_cycles == 0);
  CHECK_FALSE(sec_overlap(100, 105).hidden);
  CHECK(sec_overlap(100, 105).exposed_cycles == 5);
}

TEST_CASE("scatter stall model") {
  CHECK(scatter_stall_cycles(1024, 32, 1024, 112, 64, 32) == 0);
  CHECK(scatter_stall_cycles(1024, 32, 1, 112, 1u << 30, 32) == 0);
  std::uint64_t prev = scatter_stall_cycles(1024, 32, 4, 10, 1, 32);
  CHECK(prev > 0);
  for (std::uint64_t acc = 2; acc <= 4096; acc *= 2) {
    const auto s = scatter_stall_cycles(1024, 32, 4, 10, acc, 32);
    CHECK(s <= prev);
    prev = s;
  }
  // Default 2a accumulators stall once p < m/2.
  CHECK(scatter_stall_cycles(1024, 32, 512, 1, 64, 32) == 0);
  CHECK(scatter_stall_cycles(1024, 32, 511, 1, 64, 32) == 1);
}

TEST_CASE("tile write bytes match the byte-count oracle") {
  oracle::Rng rng(8);
  for (int i = 0; i < 200; ++i) {
    const auto rows = rng.uniform(1, 1024), img = rng.uniform(0, rows), p = rng.uniform(1, rows),
               n = rng.uniform(1, 64);
    REQUIRE(tile_write_bytes(p, n, rows, img, true) == oracle::tile_bytes(p, n, rows, img));
    REQUIRE(tile_write_bytes(p, n, rows, img, false) == rows * n * 4);
  }
}

TEST_CASE("DRAM traffic accounting identities") {
  CHECK(dram_traffic({}) == Traffic{0, 0});

  // Identity maps: payload equals the dense bytes plus map and offset overhead.
  FocusConfig cfg = desk_config();
  cfg.sim_threshold = std::nullopt;
  cfg.retention_schedule.clear();
  const auto layers = desk_run(cfg, 0.0);
  for (const auto& l : layers)
    for (const auto& g : l.gemms) {
      if (!g.gathered) continue;
      const auto t = gemm_traffic(g);
      std::uint64_t dense = g.rows * g.out_width * 4, overhead = 0;
      for (std::size_t r = 0; r < g.tile_rows.size(); ++r)
        overhead += g.out_col_tiles() * (g.tile_rows[r] * 4u + g.tile_image_rows[r]);
      REQUIRE(t.written == dense + overhead);
    }

  // Halving p halves the payload term.
  auto full = uniform_record(64, 32, 32, 32, 8, 32);
  full.gathered = true;
  full.out_p.assign(full.tile_rows.size() * full.out_col_tiles(), 32);
  auto half = full;
  half.out_p.assign(half.out_p.size(), 16);
  const auto a = gemm_traffic(full), b = gemm_traffic(half);
  const std::uint64_t overhead = 2 * 4 * (32 * 4 + 32);
  CHECK(a.written - overhead == 2 * (b.written - overhead));
}

TEST_CASE("scatter inputs read exactly what the producer wrote") {
  const auto layers = desk_run(desk_config(), 0.8);
  const auto& gemms = layers[0].gemms;
  auto find = [&](const std::string& name) -> const gemm::GemmRecord& {
    for (const auto& g : gemms)
      if (g.name == name) return g;
    throw std::runtime_error(name);
  };
  const auto& o = find("o");
  const auto& up = find("ffn_up");
  // ffn_up consumes o's gathered output, so its activation read equals o's write.
  const std::uint64_t weights = up.tile_rows.size() * up.inner * up.cols * 4;
  CHECK(gemm_traffic(up).read - weights == gemm_traffic(o).written);
}

TEST_CASE("energy model") {
  CHECK(energy_mj(1000, 1000, 1000, EnergyCoeffs{}) == 0.0);
  CHECK(energy_mj(1000000, 200000, 30000, EnergyCoeffs{0.5, 0.05, 20.0}) ==
        Catch::Approx((1000000 * 0.5 + 200000 * 0.05 + 30000 * 20.0) * 1e-9));
  CHECK_THROWS_AS(energy_mj(1, 1, 1, EnergyCoeffs{-1, 0, 0}), ValidationError);
}

TEST_CASE("buffer worst case at the default point") {
  const FocusConfig cfg = reference_config();
  const auto r = buffer_worst_case(cfg);
  CHECK_FALSE(r.any_overflow());
  CHECK(r.at("output").peak == 1024u * 32 * 4);
  CHECK(r.at("input").peak <= r.at("input").capacity);
  CHECK(r.at("importance").peak == 6272u * 4);
  CHECK(layouter_window_vectors(cfg.dims, cfg.block) == 196 + 14 + 1 + 1);

  FocusConfig big = cfg;
  big.tile.m = 2048;
  const auto r2 = buffer_worst_case(big);
  CHECK(r2.at("output").peak == 2 * r.at("output").peak);
  CHECK_FALSE(r2.at("output").overflow());
  CHECK(r2.at("input").overflow());
  CHECK(r2.any_overflow());
  CHECK_THROWS_AS(r.at("nope"), std::out_of_range);
}

TEST_CASE("functional report identities") {
  const FocusConfig cfg = desk_config();
  const auto layers = desk_run(cfg, 0.7);
  const auto rep = evaluate(layers, cfg);
  CHECK(rep.total_cycles == rep.gemm_cycles + rep.stall_cycles);
  CHECK(rep.stall_cycles == rep.scatter_stall + rep.memory_stall + rep.sec_exposed);
  // Utilization identity.
  CHECK(rep.pe_utilization * cfg.tile.a * cfg.tile.b * rep.gemm_cycles ==
        Catch::Approx(static_cast<double>(rep.ops_actual)).epsilon(1e-12));
  CHECK(rep.pe_utilization <= 1.0);
  CHECK(rep.sparsity() > 0.0);
  CHECK(rep.sparsity() < 1.0);
  REQUIRE(rep.ffn_sparsity.has_value());
  // Histogram conservation: one entry per gathered output tile.
  std::uint64_t tiles = 0, hist = 0;
  for (const auto& l : layers) tiles += l.tiles_gathered();
  for (const auto& [p, c] : rep.tile_length_histogram) hist += c;
  CHECK(hist == tiles);
  CHECK(rep.sec_cycles == 0 + sec::sorter_cycles(64, 32, cfg.tile.a));
  CHECK(rep.layers.size() == 2);
  const auto t = dram_traffic(layers);
  CHECK(t.read == rep.dram_bytes_read);
  CHECK(t.written == rep.dram_bytes_written);
}

TEST_CASE("fewer compact rows never cost more cycles") {
  FocusConfig cfg = desk_config();
  std::uint64_t prev = UINT64_MAX;
  for (std::uint32_t p = 32; p >= 1; --p) {
    gemm::LayerStats l;
    l.gemms.push_back(uniform_record(96, 64, 64, 32, 8, p));
    const auto rep = evaluate(std::vector{l}, cfg);
    REQUIRE(rep.total_cycles <= prev);
    prev = rep.total_cycles;
  }
}

TEST_CASE("timing-only evaluation") {
  FocusConfig cfg = desk_config();
  trace::SparsityTrace t;
  t.layers = {{0, 500000, 1000000, 64, 16}, {1, 250000, 1000000, 32, 8}};
  const auto rep = evaluate_timing(t, cfg);
  CHECK(rep.mode == "timing");
  CHECK(rep.gemm_cycles == (500000 + 63) / 64 + (250000 + 63) / 64);
  CHECK(rep.ops_actual == 750000);
  CHECK(rep.sec_cycles == sec::sorter_cycles(64, 32, 8));
  CHECK(rep.total_cycles == rep.gemm_cycles + rep.stall_cycles);
  trace::SparsityTrace bad;
  bad.layers = {{0, 5, 10, 65, 16}};
  CHECK_THROWS_AS(evaluate_timing(bad, cfg), ValidationError);
}

TEST_CASE("derived sparsity trace mirrors the functional run") {
  const FocusConfig cfg = desk_config();
  const auto layers = desk_run(cfg, 0.9);
  const auto t = derive_sparsity_trace(layers);
  REQUIRE(t.layers.size() == layers.size());
  for (std::size_t i = 0; i < layers.size(); ++i) {
    CHECK(t.layers[i].retained_ops == layers[i].ops_actual());
    CHECK(t.layers[i].total_ops == layers[i].ops_dense());
    CHECK(t.layers[i].retained_tokens == layers[i].retained_tokens);
  }
  CHECK_NOTHROW(evaluate_timing(t, cfg));
}

TEST_CASE("report formats") {
  const FocusConfig cfg = desk_config();
  const auto rep = evaluate(desk_run(cfg, 0.5), cfg);
  const auto csv = report_csv(rep);
  CHECK(csv.rfind(std::string(kReportCsvHeader) + "\n", 0) == 0);
  CHECK(csv.find("\ntotal,") != std::string::npos);
  const auto json = report_json(rep);
  for (const char* key : {"\"total_cycles\"", "\"gemm_cycles\"", "\"sec_cycles\"", "\"sic_cycles\"",
                          "\"stall_cycles\"", "\"dram_bytes_read\"", "\"dram_bytes_written\"", "\"energy_mj\"",
                          "\"pe_utilization\"", "\"tile_length_histogram\"", "\"buffers\""})
    CHECK(json.find(key) != std::string::npos);
  CHECK(report_json(rep) == json);
}
