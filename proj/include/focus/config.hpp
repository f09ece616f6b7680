#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "focus/core.hpp"

namespace focus {

struct EnergyCoeffs {
  double pj_per_mac = 0.0;
  double pj_per_sram_byte = 0.0;
  double pj_per_dram_byte = 0.0;

  void validate() const;
  bool operator==(const EnergyCoeffs&) const = default;
};

struct RetentionEntry {
  std::uint32_t layer_index = 0;
  double retain_fraction = 1.0;

  bool operator==(const RetentionEntry&) const = default;
};

// Cosine threshold for similarity gather; nullopt means gathering is disabled.
using SimThreshold = std::optional<float>;

struct FocusConfig {
  Dims dims;
  TileConfig tile;
  BlockConfig block;
  SimThreshold sim_threshold = 0.9f;
  std::vector<RetentionEntry> retention_schedule;
  std::uint32_t num_layers = 1;
  std::uint32_t scatter_accumulators = 64;
  EnergyCoeffs energy_coeffs;
  double dram_bandwidth = 128.0;  // bytes per cycle
  std::uint32_t ffn_dim = 0;      // 0 -> 4 * Dmodel

  std::uint32_t ffn_width() const { return ffn_dim != 0 ? ffn_dim : 4 * dims.Dmodel; }

  void validate(bool attention = true) const;
  bool operator==(const FocusConfig&) const = default;
};

// Accelerator point used for the analytical checks: 32 frames of 14x14 tokens,
// 109 text tokens, a 3584-wide model with 28 heads, 32x32 PEs.
FocusConfig reference_config();

// Parse a JSON config document. When `dims` is absent from the document and
// `fallback_dims` is given, those dims are used instead.
FocusConfig parse_config(const std::string& json_text, const std::optional<Dims>& fallback_dims = std::nullopt);
FocusConfig load_config(const std::filesystem::path& path, const std::optional<Dims>& fallback_dims = std::nullopt);
std::string config_to_json(const FocusConfig& cfg);

// True when the document names its own dims.
bool config_has_dims(const std::string& json_text);

}  // namespace focus
