#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "focus/config.hpp"
#include "focus/gemm.hpp"
#include "focus/trace.hpp"

// Analytical cycle, traffic, buffer and energy models over execution records.
namespace focus::perf {

// Value widths. DRAM traffic follows the fp32 functional model; on-chip
// operand buffers hold fp16 operands and fp32 accumulators.
inline constexpr std::uint64_t kDramValueBytes = 4;
inline constexpr std::uint64_t kMapEntryBytes = 4;
inline constexpr std::uint64_t kOffsetEntryBytes = 1;
inline constexpr std::uint64_t kOperandBytes = 2;
inline constexpr std::uint64_t kAccumBytes = 4;
inline constexpr std::uint64_t kScoreBytes = 4;

// Cycles for one K-chunk: one row per cycle per ceil(k/b) x ceil(n/a) array pass.
std::uint64_t chunk_cycles(std::uint64_t p, std::uint64_t kw, std::uint64_t b, std::uint64_t nc, std::uint64_t a);
// Output tile with uniform p over ceil(K/k) chunks; p = m for a dense tile.
std::uint64_t gemm_tile_cycles(std::uint64_t p, std::uint64_t K, std::uint64_t k, std::uint64_t b, std::uint64_t n,
                               std::uint64_t a);
std::uint64_t attention_cycles(std::uint64_t M, std::uint64_t T, std::uint64_t h, std::uint64_t n, std::uint64_t a,
                               std::uint64_t b);

struct SecOverlap {
  bool hidden = true;
  std::uint64_t exposed_cycles = 0;
};
SecOverlap sec_overlap(std::uint64_t attn_cycles, std::uint64_t sorter_cycles);

// Scatter accumulation of m x n results per chunk at `accumulators` adds per
// cycle, against a producer delivering p rows in ceil(n/a) * p cycles.
std::uint64_t scatter_stall_cycles(std::uint64_t m, std::uint64_t n, std::uint64_t p, std::uint64_t chunks,
                                   std::uint64_t accumulators, std::uint64_t a);

// Bytes written for one output tile: compact payload, similarity map and one
// offset byte per video row when gathered; the dense payload otherwise.
std::uint64_t tile_write_bytes(std::uint64_t p, std::uint64_t n, std::uint64_t rows, std::uint64_t image_rows,
                               bool gathered);

struct Traffic {
  std::uint64_t read = 0;
  std::uint64_t written = 0;
  bool operator==(const Traffic&) const = default;
};

Traffic gemm_traffic(const gemm::GemmRecord& rec);
Traffic dram_traffic(std::span<const gemm::LayerStats> layers);

std::uint64_t gemm_sram_bytes(const gemm::GemmRecord& rec);
std::uint64_t gemm_cycles(const gemm::GemmRecord& rec, const TileConfig& tile);
std::uint64_t gemm_scatter_stall(const gemm::GemmRecord& rec, const TileConfig& tile, std::uint32_t accumulators);

double energy_mj(std::uint64_t macs, std::uint64_t sram_bytes, std::uint64_t dram_bytes, const EnergyCoeffs& coeffs);

struct BufferCapacities {
  std::uint64_t input = 128 * 1024;
  std::uint64_t weight = 78 * 1024;
  std::uint64_t output = 512 * 1024;
  std::uint64_t layouter = 16 * 1024;
  std::uint64_t importance = 25 * 1024;
};

struct BufferUsage {
  std::string name;
  std::uint64_t peak = 0;
  std::uint64_t capacity = 0;
  bool overflow() const { return peak > capacity; }
};

struct BufferReport {
  std::vector<BufferUsage> buffers;  // input, weight, output, layouter, importance
  bool any_overflow() const;
  const BufferUsage& at(const std::string& name) const;
};

// Vectors the layouter must hold so every window of a key is still resident.
std::uint64_t layouter_window_vectors(const Dims& dims, const BlockConfig& block);

BufferReport buffer_occupancy_check(const FocusConfig& cfg, std::span<const gemm::LayerStats> layers,
                                    const BufferCapacities& caps = {});
// Every tile at full length p = m, importance vector over all M tokens.
BufferReport buffer_worst_case(const FocusConfig& cfg, const BufferCapacities& caps = {});

struct LayerPerf {
  std::uint32_t layer = 0;
  std::uint64_t gemm_cycles = 0;
  std::uint64_t sec_cycles = 0;
  std::uint64_t sic_cycles = 0;
  std::uint64_t stall_cycles = 0;  // scatter + memory + exposed sorter
  std::uint64_t scatter_stall = 0;
  std::uint64_t memory_stall = 0;
  std::uint64_t sec_exposed = 0;
  std::uint64_t dram_read = 0;
  std::uint64_t dram_write = 0;
  std::uint64_t ops_dense = 0;
  std::uint64_t ops_actual = 0;
  std::uint64_t scatter_accum_ops = 0;
  std::uint64_t sram_bytes = 0;
  std::uint64_t retained_tokens = 0;
  double utilization = 0.0;

  std::uint64_t total_cycles() const { return gemm_cycles + stall_cycles; }
};

struct PerfReport {
  std::string mode;
  std::vector<LayerPerf> layers;
  std::uint64_t total_cycles = 0;
  std::uint64_t gemm_cycles = 0;
  std::uint64_t sec_cycles = 0;
  std::uint64_t sic_cycles = 0;
  std::uint64_t stall_cycles = 0;
  std::uint64_t scatter_stall = 0;
  std::uint64_t memory_stall = 0;
  std::uint64_t sec_exposed = 0;
  std::uint64_t dram_bytes_read = 0;
  std::uint64_t dram_bytes_written = 0;
  std::uint64_t ops_dense = 0;
  std::uint64_t ops_actual = 0;
  std::uint64_t scatter_accum_ops = 0;
  std::uint64_t sram_bytes = 0;
  double energy_mj = 0.0;
  double pe_utilization = 0.0;
  std::optional<double> ffn_sparsity;
  std::map<std::uint32_t, std::uint64_t> tile_length_histogram;
  BufferReport buffers;

  double sparsity() const;
  double mean_tile_length() const;
};

PerfReport evaluate(std::span<const gemm::LayerStats> layers, const FocusConfig& cfg);
// Timing-only: op counts and tile lengths from a recorded sparsity trace.
PerfReport evaluate_timing(const trace::SparsityTrace& trace, const FocusConfig& cfg);

trace::SparsityTrace derive_sparsity_trace(std::span<const gemm::LayerStats> layers);

inline constexpr const char* kReportCsvHeader =
    "layer,gemm_cycles,sec_cycles,sic_cycles,stall_cycles,dram_read,dram_write,ops_dense,ops_actual,utilization";
std::string report_csv(const PerfReport& report);
std::string report_json(const PerfReport& report);

}  // namespace focus::perf
