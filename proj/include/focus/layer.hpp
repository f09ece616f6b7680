#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "focus/config.hpp"
#include "focus/core.hpp"
#include "focus/gemm.hpp"
#include "focus/sec.hpp"

namespace focus::gemm {

struct LayerWeights {
  Matrix wq, wk, wv, wo;  // Dmodel x Dmodel
  Matrix w1;              // Dmodel x ffn
  Matrix w2;              // ffn x Dmodel

  void validate(std::size_t dmodel, std::size_t ffn) const;
  bool operator==(const LayerWeights&) const = default;
};

// N(0, 1/fan_in) weights, deterministic in `seed`.
std::vector<LayerWeights> random_weights(const FocusConfig& cfg, std::uint64_t seed);

// "FCWT", u16 version, u32 layers, u32 Dmodel, u32 ffn, then per layer
// wq wk wv wo w1 w2 as little-endian f32, row-major.
void write_weights(std::span<const LayerWeights> layers, std::ostream& out);
void write_weights(std::span<const LayerWeights> layers, const std::filesystem::path& path);
std::vector<LayerWeights> read_weights(std::istream& in);
std::vector<LayerWeights> read_weights(const std::filesystem::path& path);

/// Activations between layers: values plus the gathered form they were written in.
/// `packed.expand()` reproduces `grid.sequence()` bit for bit.
struct Activations {
  TokenGrid grid;
  ConcentratedMatrix packed;
};

std::vector<sic::RowTag> row_tags(const TokenGrid& grid);

// Gather the model input as the output of the projector GEMM.
Activations concentrate_input(const TokenGrid& grid, const FocusConfig& cfg);

// Row-wise softmax: subtract the row max, exp, sum left to right, divide.
void softmax_rows(Matrix& scores);

struct LayerResult {
  Activations out;
  LayerStats stats;
  sec::RetainedSet retained;  // token indices alive after this layer
};

// Q/K/V projections, per-head attention with semantic pruning where the
// schedule steps down, P*V on the retained rows, O projection and a two-matrix
// ReLU FFN. PV, O, FFN-up and FFN-down outputs are similarity-gathered.
LayerResult layer_forward(const Activations& in, const LayerWeights& weights, const FocusConfig& cfg,
                          std::uint32_t layer);
LayerResult layer_forward(const TokenGrid& grid, const LayerWeights& weights, const FocusConfig& cfg,
                          std::uint32_t layer);

struct PipelineResult {
  TokenGrid output;
  std::vector<LayerStats> layers;
};

PipelineResult run_pipeline(const TokenGrid& input, std::span<const LayerWeights> weights, const FocusConfig& cfg);

}  // namespace focus::gemm
