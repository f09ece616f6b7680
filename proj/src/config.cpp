#include "focus/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace focus {

using nlohmann::json;

void EnergyCoeffs::validate() const {
  if (!(pj_per_mac >= 0.0)) throw ValidationError("energy_coeffs.pj_per_mac must be >= 0");
  if (!(pj_per_sram_byte >= 0.0)) throw ValidationError("energy_coeffs.pj_per_sram_byte must be >= 0");
  if (!(pj_per_dram_byte >= 0.0)) throw ValidationError("energy_coeffs.pj_per_dram_byte must be >= 0");
}

void FocusConfig::validate(bool attention) const {
  dims.validate(attention);
  tile.validate();
  block.validate();
  energy_coeffs.validate();
  if (sim_threshold && !(*sim_threshold >= 0.0f && *sim_threshold <= 1.0f)) {
    throw ValidationError("sim_threshold must lie in [0,1] or be \"disabled\"");
  }
  if (scatter_accumulators == 0) throw ValidationError("scatter_accumulators must be >= 1");
  if (!(dram_bandwidth > 0.0)) throw ValidationError("dram_bandwidth must be > 0");
  for (std::size_t i = 0; i < retention_schedule.size(); ++i) {
    const auto& e = retention_schedule[i];
    if (!(e.retain_fraction > 0.0 && e.retain_fraction <= 1.0)) {
      throw ValidationError("retention_schedule[" + std::to_string(i) + "].retain_fraction must lie in (0,1]");
    }
    if (i > 0) {
      const auto& prev = retention_schedule[i - 1];
      if (e.layer_index <= prev.layer_index) {
        throw ValidationError("retention_schedule layer indices must be strictly increasing");
      }
      if (e.retain_fraction > prev.retain_fraction) {
        throw ValidationError("retention_schedule fractions must be non-increasing");
      }
    }
  }
}

FocusConfig reference_config() {
  FocusConfig cfg;
  cfg.dims = Dims{32, 14, 14, 109, 3584, 28, 128};
  cfg.tile = TileConfig{1024, 32, 32, 32, 32};
  cfg.block = BlockConfig{2, 2, 2};
  cfg.sim_threshold = 0.9f;
  cfg.retention_schedule = {{3, 0.40}, {6, 0.30}, {9, 0.20}, {18, 0.15}, {26, 0.10}};
  cfg.num_layers = 28;
  cfg.scatter_accumulators = 64;
  // Placeholder coefficients, not calibrated against any silicon.
  cfg.energy_coeffs = EnergyCoeffs{0.5, 0.05, 20.0};
  cfg.dram_bandwidth = 128.0;  // 64 GB/s at 500 MHz
  return cfg;
}

namespace {

void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.count(key)) throw ValidationError("unknown field '" + where + key + "'");
  }
}

template <typename T>
T get_field(const json& obj, const char* key, const std::string& where, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ValidationError("field '" + where + key + "' has the wrong type");
  }
}

std::uint32_t get_u32(const json& obj, const char* key, const std::string& where, std::uint32_t fallback) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0 || v.get<std::int64_t>() > 0xffffffffLL) {
    throw ValidationError("field '" + where + key + "' must be a non-negative integer");
  }
  return v.get<std::uint32_t>();
}

Dims parse_dims(const json& j) {
  if (!j.is_object()) throw ValidationError("field 'dims' must be an object");
  reject_unknown(j, {"F", "H", "W", "T", "M", "Dmodel", "heads", "head_dim"}, "dims.");
  Dims d;
  d.F = get_u32(j, "F", "dims.", d.F);
  d.H = get_u32(j, "H", "dims.", d.H);
  d.W = get_u32(j, "W", "dims.", d.W);
  d.T = get_u32(j, "T", "dims.", d.T);
  d.Dmodel = get_u32(j, "Dmodel", "dims.", d.Dmodel);
  d.heads = get_u32(j, "heads", "dims.", 1);
  d.head_dim = get_u32(j, "head_dim", "dims.", d.Dmodel / std::max<std::uint32_t>(d.heads, 1));
  if (j.contains("M")) {
    const auto m = get_u32(j, "M", "dims.", 0);
    if (m != d.M()) throw ValidationError("dims.M must equal F*H*W");
  }
  return d;
}

}  // namespace

bool config_has_dims(const std::string& json_text) {
  try {
    const auto j = json::parse(json_text);
    return j.is_object() && j.contains("dims");
  } catch (const json::exception&) {
    return false;
  }
}

FocusConfig parse_config(const std::string& json_text, const std::optional<Dims>& fallback_dims) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  reject_unknown(j,
                 {"dims", "tile", "block", "sim_threshold", "retention_schedule", "num_layers",
                  "scatter_accumulators", "energy_coeffs", "dram_bandwidth", "ffn_dim"},
                 "");

  FocusConfig cfg;
  if (j.contains("dims")) {
    cfg.dims = parse_dims(j.at("dims"));
  } else if (fallback_dims) {
    cfg.dims = *fallback_dims;
  } else {
    throw ValidationError("missing field 'dims'");
  }

  if (j.contains("tile")) {
    const auto& t = j.at("tile");
    if (!t.is_object()) throw ValidationError("field 'tile' must be an object");
    reject_unknown(t, {"m", "n", "k", "a", "b"}, "tile.");
    cfg.tile.m = get_u32(t, "m", "tile.", cfg.tile.m);
    cfg.tile.n = get_u32(t, "n", "tile.", cfg.tile.n);
    cfg.tile.k = get_u32(t, "k", "tile.", cfg.tile.k);
    cfg.tile.a = get_u32(t, "a", "tile.", cfg.tile.a);
    cfg.tile.b = get_u32(t, "b", "tile.", cfg.tile.b);
  }
  if (j.contains("block")) {
    const auto& b = j.at("block");
    if (!b.is_object()) throw ValidationError("field 'block' must be an object");
    reject_unknown(b, {"bf", "bh", "bw"}, "block.");
    cfg.block.bf = get_u32(b, "bf", "block.", cfg.block.bf);
    cfg.block.bh = get_u32(b, "bh", "block.", cfg.block.bh);
    cfg.block.bw = get_u32(b, "bw", "block.", cfg.block.bw);
  }
  if (j.contains("sim_threshold")) {
    const auto& s = j.at("sim_threshold");
    if (s.is_string() && s.get<std::string>() == "disabled") {
      cfg.sim_threshold.reset();
    } else if (s.is_number()) {
      cfg.sim_threshold = s.get<float>();
    } else {
      throw ValidationError("field 'sim_threshold' must be a number or \"disabled\"");
    }
  }
  if (j.contains("retention_schedule")) {
    const auto& rs = j.at("retention_schedule");
    if (!rs.is_array()) throw ValidationError("field 'retention_schedule' must be an array");
    for (std::size_t i = 0; i < rs.size(); ++i) {
      const auto& e = rs[i];
      const std::string where = "retention_schedule[" + std::to_string(i) + "].";
      RetentionEntry entry;
      if (e.is_object()) {
        reject_unknown(e, {"layer_index", "retain_fraction"}, where);
        if (!e.contains("layer_index") || !e.contains("retain_fraction")) {
          throw ValidationError("field '" + where + "' needs layer_index and retain_fraction");
        }
        entry.layer_index = get_u32(e, "layer_index", where, 0);
        entry.retain_fraction = get_field<double>(e, "retain_fraction", where, 1.0);
      } else if (e.is_array() && e.size() == 2 && e[0].is_number_integer() && e[1].is_number()) {
        if (e[0].get<std::int64_t>() < 0) throw ValidationError("field '" + where + "layer_index' must be >= 0");
        entry.layer_index = e[0].get<std::uint32_t>();
        entry.retain_fraction = e[1].get<double>();
      } else {
        throw ValidationError("field '" + where + "' must be {layer_index, retain_fraction} or [layer, fraction]");
      }
      cfg.retention_schedule.push_back(entry);
    }
  }
  cfg.num_layers = get_u32(j, "num_layers", "", cfg.num_layers);
  cfg.scatter_accumulators = get_u32(j, "scatter_accumulators", "", cfg.scatter_accumulators);
  cfg.ffn_dim = get_u32(j, "ffn_dim", "", cfg.ffn_dim);
  if (j.contains("energy_coeffs")) {
    const auto& e = j.at("energy_coeffs");
    if (!e.is_object()) throw ValidationError("field 'energy_coeffs' must be an object");
    reject_unknown(e, {"pj_per_mac", "pj_per_sram_byte", "pj_per_dram_byte"}, "energy_coeffs.");
    cfg.energy_coeffs.pj_per_mac = get_field<double>(e, "pj_per_mac", "energy_coeffs.", 0.0);
    cfg.energy_coeffs.pj_per_sram_byte = get_field<double>(e, "pj_per_sram_byte", "energy_coeffs.", 0.0);
    cfg.energy_coeffs.pj_per_dram_byte = get_field<double>(e, "pj_per_dram_byte", "energy_coeffs.", 0.0);
  }
  cfg.dram_bandwidth = get_field<double>(j, "dram_bandwidth", "", cfg.dram_bandwidth);
  cfg.validate(false);
  return cfg;
}

FocusConfig load_config(const std::filesystem::path& path, const std::optional<Dims>& fallback_dims) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), fallback_dims);
}

std::string config_to_json(const FocusConfig& cfg) {
  json j;
  const auto& d = cfg.dims;
  j["dims"] = {{"F", d.F},           {"H", d.H},         {"W", d.W},
               {"T", d.T},           {"Dmodel", d.Dmodel}, {"heads", d.heads},
               {"head_dim", d.head_dim}};
  j["tile"] = {{"m", cfg.tile.m}, {"n", cfg.tile.n}, {"k", cfg.tile.k}, {"a", cfg.tile.a}, {"b", cfg.tile.b}};
  j["block"] = {{"bf", cfg.block.bf}, {"bh", cfg.block.bh}, {"bw", cfg.block.bw}};
  if (cfg.sim_threshold) {
    j["sim_threshold"] = *cfg.sim_threshold;
  } else {
    j["sim_threshold"] = "disabled";
  }
  j["retention_schedule"] = json::array();
  for (const auto& e : cfg.retention_schedule) {
    j["retention_schedule"].push_back({{"layer_index", e.layer_index}, {"retain_fraction", e.retain_fraction}});
  }
  j["num_layers"] = cfg.num_layers;
  j["scatter_accumulators"] = cfg.scatter_accumulators;
  j["energy_coeffs"] = {{"pj_per_mac", cfg.energy_coeffs.pj_per_mac},
                        {"pj_per_sram_byte", cfg.energy_coeffs.pj_per_sram_byte},
                        {"pj_per_dram_byte", cfg.energy_coeffs.pj_per_dram_byte}};
  j["dram_bandwidth"] = cfg.dram_bandwidth;
  if (cfg.ffn_dim != 0) j["ffn_dim"] = cfg.ffn_dim;
  return j.dump(2);
}

}  // namespace focus
