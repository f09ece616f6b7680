#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "focus/config.hpp"
#include "focus/layer.hpp"
#include "focus/perf.hpp"
#include "focus/trace.hpp"

// Command implementations behind the `focus` executable.
namespace focus::app {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitInternal = 4;

struct GenSpec {
  trace::TraceGenConfig gen;
  std::filesystem::path output;
};

void cmd_gen(const GenSpec& spec);

enum class Mode { Functional, Timing, Both };
Mode parse_mode(const std::string& text);
std::string mode_name(Mode mode);

struct RunSpec {
  std::filesystem::path config;
  std::optional<std::filesystem::path> trace;     // .fctr
  std::optional<std::filesystem::path> sparsity;  // layer-wise CSV
  std::optional<Mode> mode;                       // default: functional for traces, timing for CSVs
  bool oracle = false;
  std::filesystem::path out_dir = ".";
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> weights;

  Mode effective_mode() const;
  void validate() const;
};

struct OracleResult {
  double max_abs_error = 0.0;
  std::size_t compared_rows = 0;
};

struct RunOutcome {
  std::optional<perf::PerfReport> functional;
  std::optional<perf::PerfReport> timing;
  std::optional<OracleResult> oracle;
};

// In-memory run over an already loaded config. Exactly one of `grid`/`sparsity`.
struct RunInputs {
  FocusConfig config;
  std::optional<TokenGrid> grid;
  std::optional<trace::SparsityTrace> sparsity;
  std::vector<gemm::LayerWeights> weights;  // empty: random_weights(config, seed)
  std::uint64_t seed = 0;
};

struct RunArtifacts {
  RunOutcome outcome;
  std::optional<gemm::PipelineResult> pipeline;
  std::optional<trace::SparsityTrace> derived_sparsity;
};

RunArtifacts execute(const RunInputs& inputs, Mode mode, bool oracle);

// Loads inputs, executes and writes report.csv, summary.json and, with a
// trace, output.bin; `both` adds sparsity.csv, timing_report.csv and
// timing_summary.json.
RunOutcome cmd_run(const RunSpec& spec);

inline constexpr const char* kSweepCsvHeader = "param,value,metric,metric_value";
inline constexpr const char* kSweepParams[] = {"tile_m", "vector_len", "block_shape", "accumulators",
                                               "retention_schedule"};

struct SweepSpec {
  RunSpec base;
  std::string param;
  std::vector<std::string> values;

  void validate() const;
};

struct SweepRow {
  std::string param;
  std::string value;
  std::string metric;
  std::string metric_value;
};

// Apply one swept value to a copy of `base`. Throws ValidationError on bad values.
FocusConfig apply_sweep_value(const FocusConfig& base, const std::string& param, const std::string& value);

// One row per (value, metric), sorted by swept value. Writes sweep.csv.
std::vector<SweepRow> cmd_sweep(const SweepSpec& spec);
std::string sweep_csv(const std::vector<SweepRow>& rows);

// Functional output dump: "FCOU", u16 version, u32 S, T, Dmodel, S u32 token
// indices, then S image rows and T text rows as little-endian f32.
void write_output_dump(const TokenGrid& grid, const std::filesystem::path& path);

// Full command-line entry point; returns the process exit code.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace focus::app
