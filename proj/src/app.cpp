#include "focus/app.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

namespace focus::app {

namespace fs = std::filesystem;

void cmd_gen(const GenSpec& spec) {
  const TokenGrid grid = trace::generate_synthetic_trace(spec.gen);
  trace::write_trace(grid, spec.output);
}

Mode parse_mode(const std::string& text) {
  if (text == "functional") return Mode::Functional;
  if (text == "timing") return Mode::Timing;
  if (text == "both") return Mode::Both;
  throw ValidationError("mode must be functional, timing or both, got '" + text + "'");
}

std::string mode_name(Mode mode) {
  switch (mode) {
    case Mode::Functional: return "functional";
    case Mode::Timing: return "timing";
    case Mode::Both: return "both";
  }
  return "unknown";
}

Mode RunSpec::effective_mode() const {
  if (mode) return *mode;
  return trace ? Mode::Functional : Mode::Timing;
}

void RunSpec::validate() const {
  if (trace.has_value() == sparsity.has_value()) {
    throw ValidationError("exactly one of --trace or --sparsity is required");
  }
  const Mode m = effective_mode();
  if (sparsity && m != Mode::Timing) {
    throw ValidationError("--sparsity drives timing mode only; use --trace for mode " + mode_name(m));
  }
  if (trace && m == Mode::Timing) {
    throw ValidationError("timing mode reads a layer-wise --sparsity CSV, not a --trace");
  }
  if (oracle && !trace) throw ValidationError("--oracle needs a --trace");
}

namespace {

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

FocusConfig dense_reference(FocusConfig cfg) {
  cfg.sim_threshold = std::nullopt;
  cfg.retention_schedule.clear();
  return cfg;
}

OracleResult compare_to_dense(const TokenGrid& got, const TokenGrid& dense) {
  OracleResult r;
  const auto dense_idx = dense.token_indices();
  const auto got_idx = got.token_indices();
  double max_err = 0.0;
  auto compare_rows = [&](std::span<const float> a, std::span<const float> b) {
    for (std::size_t j = 0; j < a.size(); ++j) {
      max_err = std::max(max_err, std::fabs(static_cast<double>(a[j]) - static_cast<double>(b[j])));
    }
    ++r.compared_rows;
  };
  // Both index lists are strictly increasing.
  std::size_t di = 0;
  for (std::size_t gi = 0; gi < got_idx.size(); ++gi) {
    while (di < dense_idx.size() && dense_idx[di] < got_idx[gi]) ++di;
    if (di == dense_idx.size() || dense_idx[di] != got_idx[gi]) {
      throw InvariantError("token " + std::to_string(got_idx[gi]) + " missing from the dense reference");
    }
    compare_rows(got.image().row(gi), dense.image().row(di));
  }
  for (std::size_t t = 0; t < got.text().rows(); ++t) compare_rows(got.text().row(t), dense.text().row(t));
  r.max_abs_error = max_err;
  return r;
}

}  // namespace

RunArtifacts execute(const RunInputs& inputs, Mode mode, bool oracle) {
  const FocusConfig& cfg = inputs.config;
  RunArtifacts art;
  if (mode == Mode::Timing) {
    if (!inputs.sparsity) throw ValidationError("timing mode needs a sparsity trace");
    art.outcome.timing = perf::evaluate_timing(*inputs.sparsity, cfg);
    return art;
  }
  if (!inputs.grid) throw ValidationError(mode_name(mode) + " mode needs a token trace");
  cfg.validate(true);
  std::vector<gemm::LayerWeights> generated;
  const std::vector<gemm::LayerWeights>* weights = &inputs.weights;
  if (inputs.weights.empty()) {
    generated = gemm::random_weights(cfg, inputs.seed);
    weights = &generated;
  }
  art.pipeline = gemm::run_pipeline(*inputs.grid, *weights, cfg);
  art.outcome.functional = perf::evaluate(art.pipeline->layers, cfg);
  if (mode == Mode::Both) {
    art.derived_sparsity = perf::derive_sparsity_trace(art.pipeline->layers);
    art.outcome.timing = perf::evaluate_timing(*art.derived_sparsity, cfg);
  }
  if (oracle) {
    const auto dense = gemm::run_pipeline(*inputs.grid, *weights, dense_reference(cfg));
    art.outcome.oracle = compare_to_dense(art.pipeline->output, dense.output);
  }
  return art;
}

void write_output_dump(const TokenGrid& grid, const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write("FCOU", 4);
  trace::le::put_u16(out, 1);
  trace::le::put_u32(out, static_cast<std::uint32_t>(grid.image_rows()));
  trace::le::put_u32(out, static_cast<std::uint32_t>(grid.text().rows()));
  trace::le::put_u32(out, grid.dims().Dmodel);
  for (const auto idx : grid.token_indices()) trace::le::put_u32(out, static_cast<std::uint32_t>(idx));
  trace::le::put_f32s(out, grid.image().data());
  trace::le::put_f32s(out, grid.text().data());
  if (!out) throw IoError("write failed: " + path.string());
}

namespace {

struct LoadedRun {
  RunInputs inputs;
  Mode mode;
};

LoadedRun load_run(const RunSpec& spec) {
  spec.validate();
  LoadedRun run;
  run.mode = spec.effective_mode();
  run.inputs.seed = spec.seed;
  const std::string cfg_text = read_text(spec.config);
  if (spec.trace) {
    run.inputs.grid = trace::read_trace(*spec.trace);
    run.inputs.config = parse_config(cfg_text, run.inputs.grid->dims());
  } else {
    if (!config_has_dims(cfg_text)) throw ValidationError("dims: timing mode needs dims in the config");
    run.inputs.config = parse_config(cfg_text);
    run.inputs.sparsity = trace::read_sparsity_trace(*spec.sparsity);
  }
  if (spec.weights) run.inputs.weights = gemm::read_weights(*spec.weights);
  return run;
}

nlohmann::ordered_json summary_json(const perf::PerfReport& rep, const FocusConfig& cfg,
                                    const std::optional<OracleResult>& oracle) {
  auto j = nlohmann::ordered_json::parse(perf::report_json(rep));
  if (oracle) j["oracle"] = {{"max_abs_error", oracle->max_abs_error}, {"compared_rows", oracle->compared_rows}};
  j["config"] = nlohmann::ordered_json::parse(config_to_json(cfg));
  return j;
}

}  // namespace

RunOutcome cmd_run(const RunSpec& spec) {
  LoadedRun run = load_run(spec);
  const RunArtifacts art = execute(run.inputs, run.mode, spec.oracle);
  ensure_dir(spec.out_dir);
  const FocusConfig& cfg = run.inputs.config;
  const auto& out = art.outcome;
  if (out.functional) {
    write_text(spec.out_dir / "report.csv", perf::report_csv(*out.functional));
    write_text(spec.out_dir / "summary.json", summary_json(*out.functional, cfg, out.oracle).dump(2) + "\n");
    write_output_dump(art.pipeline->output, spec.out_dir / "output.bin");
  }
  if (out.timing) {
    const bool alone = !out.functional;
    write_text(spec.out_dir / (alone ? "report.csv" : "timing_report.csv"), perf::report_csv(*out.timing));
    write_text(spec.out_dir / (alone ? "summary.json" : "timing_summary.json"),
               summary_json(*out.timing, cfg, std::nullopt).dump(2) + "\n");
  }
  if (art.derived_sparsity) trace::write_sparsity_trace(*art.derived_sparsity, spec.out_dir / "sparsity.csv");
  return out;
}

void SweepSpec::validate() const {
  base.validate();
  if (std::find(std::begin(kSweepParams), std::end(kSweepParams), param) == std::end(kSweepParams)) {
    throw ValidationError("sweep-param must be one of tile_m, vector_len, block_shape, accumulators, "
                          "retention_schedule; got '" + param + "'");
  }
  if (values.empty()) throw ValidationError("sweep-values: at least one value is required");
}

namespace {

std::uint32_t parse_u32(const std::string& param, const std::string& text) {
  char* end = nullptr;
  errno = 0;
  const unsigned long long v = std::strtoull(text.c_str(), &end, 10);
  if (text.empty() || text[0] == '-' || *end != '\0' || errno != 0 || v == 0 || v > 0xFFFFFFFFull) {
    throw ValidationError(param + ": '" + text + "' is not a positive integer");
  }
  return static_cast<std::uint32_t>(v);
}

BlockConfig parse_block(const std::string& text) {
  std::vector<std::uint32_t> parts;
  if (text.size() == 3 && std::all_of(text.begin(), text.end(), [](char c) { return c >= '1' && c <= '9'; })) {
    for (char c : text) parts.push_back(static_cast<std::uint32_t>(c - '0'));
  } else {
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, 'x')) parts.push_back(parse_u32("block_shape", item));
  }
  if (parts.size() != 3) throw ValidationError("block_shape: '" + text + "' is not bf x bh x bw");
  return {parts[0], parts[1], parts[2]};
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string normalize_value(const FocusConfig& base, const std::string& param, const std::string& value) {
  if (param == "tile_m" && value == "full") return std::to_string(base.dims.sequence());
  if (param == "block_shape") {
    const auto b = parse_block(value);
    return std::to_string(b.bf) + "x" + std::to_string(b.bh) + "x" + std::to_string(b.bw);
  }
  return value;
}

std::optional<double> numeric(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || *end != '\0') return std::nullopt;
  return v;
}

std::vector<std::pair<std::string, std::string>> point_metrics(const perf::PerfReport& rep) {
  std::vector<std::pair<std::string, std::string>> m = {
      {"total_cycles", std::to_string(rep.total_cycles)},
      {"gemm_cycles", std::to_string(rep.gemm_cycles)},
      {"stall_cycles", std::to_string(rep.stall_cycles)},
      {"sec_cycles", std::to_string(rep.sec_cycles)},
      {"sic_cycles", std::to_string(rep.sic_cycles)},
      {"sparsity", fmt_double(rep.sparsity())},
      {"utilization", fmt_double(rep.pe_utilization)},
      {"mean_tile_length", fmt_double(rep.mean_tile_length())},
      {"dram_bytes_read", std::to_string(rep.dram_bytes_read)},
      {"dram_bytes_written", std::to_string(rep.dram_bytes_written)},
      {"energy_mj", fmt_double(rep.energy_mj)},
  };
  for (const auto& b : rep.buffers.buffers) m.emplace_back("peak_" + b.name, std::to_string(b.peak));
  m.emplace_back("buffer_overflow", rep.buffers.any_overflow() ? "1" : "0");
  return m;
}

template <class E>
[[noreturn]] void rethrow_at(const std::string& where, const E& e) {
  throw E(where + ": " + e.what());
}

}  // namespace

FocusConfig apply_sweep_value(const FocusConfig& base, const std::string& param, const std::string& value) {
  FocusConfig cfg = base;
  if (param == "tile_m") {
    cfg.tile.m = value == "full" ? static_cast<std::uint32_t>(base.dims.sequence()) : parse_u32(param, value);
  } else if (param == "vector_len") {
    // Output tile width and K sub-tile width move together.
    cfg.tile.n = cfg.tile.k = parse_u32(param, value);
  } else if (param == "block_shape") {
    cfg.block = parse_block(value);
  } else if (param == "accumulators") {
    cfg.scatter_accumulators = parse_u32(param, value);
  } else if (param == "retention_schedule") {
    const auto frac = numeric(value);
    if (!frac || !(*frac > 0.0 && *frac <= 1.0)) {
      throw ValidationError("retention_schedule: '" + value + "' is not a fraction in (0,1]");
    }
    const std::uint32_t layer = base.retention_schedule.empty() ? 0 : base.retention_schedule.front().layer_index;
    cfg.retention_schedule = {{layer, *frac}};
  } else {
    throw ValidationError("unknown sweep parameter '" + param + "'");
  }
  cfg.validate(true);
  return cfg;
}

std::vector<SweepRow> cmd_sweep(const SweepSpec& spec) {
  spec.validate();
  LoadedRun run = load_run(spec.base);
  const FocusConfig base = run.inputs.config;

  std::vector<std::string> values;
  for (const auto& v : spec.values) {
    try {
      values.push_back(normalize_value(base, spec.param, v));
    } catch (const ValidationError& e) {
      rethrow_at("sweep point " + spec.param + "=" + v, e);
    }
  }
  const bool all_numeric = std::all_of(values.begin(), values.end(), [](const auto& v) { return numeric(v); });
  std::stable_sort(values.begin(), values.end(), [&](const std::string& a, const std::string& b) {
    return all_numeric ? *numeric(a) < *numeric(b) : a < b;
  });
  values.erase(std::unique(values.begin(), values.end()), values.end());

  // Weights depend only on dims, ffn width, layer count and seed, none of which are swept.
  if (run.inputs.weights.empty() && run.inputs.grid) run.inputs.weights = gemm::random_weights(base, run.inputs.seed);

  std::vector<SweepRow> rows;
  for (const auto& v : values) {
    const std::string where = "sweep point " + spec.param + "=" + v;
    try {
      RunInputs in = run.inputs;
      in.config = apply_sweep_value(base, spec.param, v);
      const auto art = execute(in, run.mode, false);
      const auto& rep = art.outcome.functional ? *art.outcome.functional : *art.outcome.timing;
      for (auto& [metric, mv] : point_metrics(rep)) rows.push_back({spec.param, v, metric, mv});
    } catch (const FormatError& e) {
      rethrow_at(where, e);
    } catch (const ValidationError& e) {
      rethrow_at(where, e);
    } catch (const IoError& e) {
      rethrow_at(where, e);
    } catch (const InvariantError& e) {
      rethrow_at(where, e);
    } catch (const std::invalid_argument& e) {
      rethrow_at(where, e);
    } catch (const std::exception& e) {
      throw InvariantError(where + ": " + e.what());
    }
  }
  ensure_dir(spec.base.out_dir);
  write_text(spec.base.out_dir / "sweep.csv", sweep_csv(rows));
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = std::string(kSweepCsvHeader) + "\n";
  for (const auto& r : rows) out += r.param + "," + r.value + "," + r.metric + "," + r.metric_value + "\n";
  return out;
}

namespace {

void add_run_flags(CLI::App& cmd, RunSpec& spec, std::string& mode, std::string& trace_path,
                   std::string& sparsity_path, std::string& weights_path, std::string& out_dir,
                   std::string& config_path) {
  cmd.add_option("--config", config_path, "Accelerator configuration (JSON)")->required();
  auto* t = cmd.add_option("--trace", trace_path, "Token trace (.fctr)");
  auto* s = cmd.add_option("--sparsity", sparsity_path, "Layer-wise sparsity trace (CSV)");
  t->excludes(s);
  cmd.add_option("--mode", mode, "functional | timing | both")
      ->check(CLI::IsMember({"functional", "timing", "both"}));
  cmd.add_option("--out", out_dir, "Output directory")->capture_default_str();
  cmd.add_option("--seed", spec.seed, "Weight seed")->capture_default_str();
  cmd.add_option("--weights", weights_path, "Weights file (.fcwt); random weights otherwise");
}

void finish_run_spec(RunSpec& spec, const std::string& mode, const std::string& trace_path,
                     const std::string& sparsity_path, const std::string& weights_path, const std::string& out_dir,
                     const std::string& config_path) {
  spec.config = config_path;
  if (!trace_path.empty()) spec.trace = trace_path;
  if (!sparsity_path.empty()) spec.sparsity = sparsity_path;
  if (!weights_path.empty()) spec.weights = weights_path;
  if (!mode.empty()) spec.mode = parse_mode(mode);
  spec.out_dir = out_dir;
}

std::pair<std::uint32_t, std::uint32_t> parse_hw(const std::string& text) {
  const auto x = text.find('x');
  if (x == std::string::npos) throw ValidationError("--hw: expected HxW, got '" + text + "'");
  return {parse_u32("--hw", text.substr(0, x)), parse_u32("--hw", text.substr(x + 1))};
}

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Video-language model accelerator simulator"};
  app.require_subcommand(1);

  GenSpec gen;
  std::uint32_t frames = 1, dmodel = 64, text = 0;
  std::string hw = "8x8", gen_out;
  auto* g = app.add_subcommand("gen", "Generate a synthetic token trace");
  g->add_option("--frames", frames, "Frames F")->check(CLI::PositiveNumber)->capture_default_str();
  g->add_option("--hw", hw, "Frame size HxW")->capture_default_str();
  g->add_option("--dmodel", dmodel, "Hidden size")->check(CLI::PositiveNumber)->capture_default_str();
  g->add_option("--text", text, "Text tokens T")->capture_default_str();
  g->add_option("--temporal", gen.gen.temporal_similarity, "Temporal copy probability")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  g->add_option("--spatial", gen.gen.spatial_similarity, "Spatial copy probability")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  g->add_option("--noise", gen.gen.noise_sigma, "Noise std on copies")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  g->add_option("--seed", gen.gen.seed, "RNG seed")->capture_default_str();
  g->add_option("-o,--output", gen_out, "Output .fctr path")->required();

  RunSpec run;
  bool run_oracle = false;
  std::string run_mode, run_trace, run_sparsity, run_weights, run_out = ".", run_config;
  auto* r = app.add_subcommand("run", "Simulate one configuration");
  add_run_flags(*r, run, run_mode, run_trace, run_sparsity, run_weights, run_out, run_config);
  r->add_flag("--oracle", run_oracle, "Compare against the dense reference");

  SweepSpec sweep;
  std::string sw_mode, sw_trace, sw_sparsity, sw_weights, sw_out = ".", sw_config;
  auto* s = app.add_subcommand("sweep", "Sweep one parameter");
  add_run_flags(*s, sweep.base, sw_mode, sw_trace, sw_sparsity, sw_weights, sw_out, sw_config);
  s->add_option("--sweep-param", sweep.param, "tile_m | vector_len | block_shape | accumulators | retention_schedule")
      ->required();
  s->add_option("--sweep-values", sweep.values, "Comma-separated values")->delimiter(',')->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*g) {
      const auto [h, w] = parse_hw(hw);
      gen.gen.dims.F = frames;
      gen.gen.dims.H = h;
      gen.gen.dims.W = w;
      gen.gen.dims.T = text;
      gen.gen.dims.Dmodel = dmodel;
      gen.gen.dims.head_dim = dmodel;
      gen.output = gen_out;
      cmd_gen(gen);
      out << "wrote " << gen.output.string() << "\n";
    } else if (*r) {
      finish_run_spec(run, run_mode, run_trace, run_sparsity, run_weights, run_out, run_config);
      run.oracle = run_oracle;
      const auto res = cmd_run(run);
      const auto& rep = res.functional ? *res.functional : *res.timing;
      out << "total_cycles " << rep.total_cycles << " sparsity " << fmt_double(rep.sparsity()) << "\n";
      if (res.oracle) out << "max_abs_error " << fmt_double(res.oracle->max_abs_error) << "\n";
    } else if (*s) {
      finish_run_spec(sweep.base, sw_mode, sw_trace, sw_sparsity, sw_weights, sw_out, sw_config);
      const auto rows = cmd_sweep(sweep);
      out << "wrote " << (sweep.base.out_dir / "sweep.csv").string() << " (" << rows.size() << " rows)\n";
    }
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    err << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitOk;
}

}  // namespace focus::app
