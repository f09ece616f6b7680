#include "focus/trace.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <string>

namespace focus::trace {

namespace le {

void put_u16(std::ostream& out, std::uint16_t v) {
  const char bytes[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
  out.write(bytes, 2);
}

void put_u32(std::ostream& out, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                         static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(bytes, 4);
}

void put_f32(std::ostream& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

void put_f32s(std::ostream& out, std::span<const float> values) {
  std::vector<char> buf(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto u = std::bit_cast<std::uint32_t>(values[i]);
    buf[4 * i + 0] = static_cast<char>(u & 0xff);
    buf[4 * i + 1] = static_cast<char>((u >> 8) & 0xff);
    buf[4 * i + 2] = static_cast<char>((u >> 16) & 0xff);
    buf[4 * i + 3] = static_cast<char>((u >> 24) & 0xff);
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

namespace {
void read_exact(std::istream& in, char* dst, std::size_t n, const char* field) {
  in.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) {
    throw FormatError(std::string("truncated file while reading ") + field);
  }
}
}  // namespace

std::uint16_t get_u16(std::istream& in, const char* field) {
  unsigned char b[2];
  read_exact(in, reinterpret_cast<char*>(b), 2, field);
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint32_t get_u32(std::istream& in, const char* field) {
  unsigned char b[4];
  read_exact(in, reinterpret_cast<char*>(b), 4, field);
  return std::uint32_t{b[0]} | (std::uint32_t{b[1]} << 8) | (std::uint32_t{b[2]} << 16) |
         (std::uint32_t{b[3]} << 24);
}

void get_f32s(std::istream& in, std::span<float> out, const char* field) {
  std::vector<unsigned char> buf(out.size() * 4);
  read_exact(in, reinterpret_cast<char*>(buf.data()), buf.size(), field);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::uint32_t u = std::uint32_t{buf[4 * i]} | (std::uint32_t{buf[4 * i + 1]} << 8) |
                            (std::uint32_t{buf[4 * i + 2]} << 16) | (std::uint32_t{buf[4 * i + 3]} << 24);
    out[i] = std::bit_cast<float>(u);
  }
}

}  // namespace le

void TraceGenConfig::validate() const {
  dims.validate(false);
  if (!(temporal_similarity >= 0.0 && temporal_similarity <= 1.0)) {
    throw ValidationError("temporal_similarity must lie in [0,1]");
  }
  if (!(spatial_similarity >= 0.0 && spatial_similarity <= 1.0)) {
    throw ValidationError("spatial_similarity must lie in [0,1]");
  }
  if (!(noise_sigma >= 0.0)) throw ValidationError("noise_sigma must be >= 0");
}

TokenGrid generate_synthetic_trace(const TraceGenConfig& cfg) {
  cfg.validate();
  const Dims& d = cfg.dims;
  const std::size_t D = d.Dmodel;
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  Matrix image(d.M(), D);
  auto fresh = [&](std::span<float> dst) {
    for (auto& v : dst) v = static_cast<float>(gauss(rng));
  };
  auto copy_from = [&](std::span<float> dst, std::span<const float> src) {
    std::copy(src.begin(), src.end(), dst.begin());
    if (cfg.noise_sigma > 0.0) {
      for (auto& v : dst) v += static_cast<float>(cfg.noise_sigma * gauss(rng));
    }
  };

  for (std::uint32_t f = 0; f < d.F; ++f) {
    for (std::uint32_t r = 0; r < d.H; ++r) {
      for (std::uint32_t c = 0; c < d.W; ++c) {
        const std::size_t idx = fhw_linearize(f, r, c, d);
        auto dst = image.row(idx);
        // Both draws happen for every token so the stream layout does not depend on the outcome.
        const double u_temporal = unit(rng);
        const double u_spatial = unit(rng);
        if (f > 0 && u_temporal < cfg.temporal_similarity) {
          copy_from(dst, image.row(fhw_linearize(f - 1, r, c, d)));
        } else if ((r > 0 || c > 0) && u_spatial < cfg.spatial_similarity) {
          const std::size_t src = c > 0 ? fhw_linearize(f, r, c - 1, d) : fhw_linearize(f, r - 1, c, d);
          copy_from(dst, image.row(src));
        } else {
          fresh(dst);
        }
      }
    }
  }
  Matrix text(d.T, D);
  for (std::size_t i = 0; i < d.T; ++i) fresh(text.row(i));
  return TokenGrid(d, std::move(image), std::move(text));
}

void write_trace(const TokenGrid& grid, std::ostream& out) {
  const Dims& d = grid.dims();
  if (grid.image_rows() != d.M()) throw std::invalid_argument("only full (unpruned) grids can be written as traces");
  out.write(kTraceMagic, 4);
  le::put_u16(out, kTraceVersion);
  le::put_u32(out, d.F);
  le::put_u32(out, d.H);
  le::put_u32(out, d.W);
  le::put_u32(out, d.T);
  le::put_u32(out, d.Dmodel);
  le::put_f32s(out, grid.image().data());
  le::put_f32s(out, grid.text().data());
  if (!out) throw IoError("write failed");
}

void write_trace(const TokenGrid& grid, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_trace(grid, out);
}

TokenGrid read_trace(std::istream& in) {
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() != 4 || !std::equal(magic, magic + 4, kTraceMagic)) {
    throw FormatError("bad magic: not an FCTR trace");
  }
  const auto version = le::get_u16(in, "version");
  if (version != kTraceVersion) throw FormatError("unsupported version " + std::to_string(version));
  Dims d;
  d.F = le::get_u32(in, "F");
  d.H = le::get_u32(in, "H");
  d.W = le::get_u32(in, "W");
  d.T = le::get_u32(in, "T");
  d.Dmodel = le::get_u32(in, "Dmodel");
  for (auto [value, name] : {std::pair{d.F, "F"}, {d.H, "H"}, {d.W, "W"}, {d.Dmodel, "Dmodel"}}) {
    if (value == 0) throw FormatError(std::string("dimension mismatch: ") + name + " is zero");
  }
  d.heads = 1;
  d.head_dim = d.Dmodel;

  Matrix image(d.M(), d.Dmodel);
  for (std::size_t i = 0; i < d.M(); ++i) {
    const std::string field = "image row " + std::to_string(i) + " of M=" + std::to_string(d.M());
    le::get_f32s(in, image.row(i), field.c_str());
  }
  Matrix text(d.T, d.Dmodel);
  for (std::size_t i = 0; i < d.T; ++i) {
    const std::string field = "text row " + std::to_string(i) + " of T=" + std::to_string(d.T);
    le::get_f32s(in, text.row(i), field.c_str());
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after payload");
  return TokenGrid(d, std::move(image), std::move(text));
}

TokenGrid read_trace(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open trace " + path.string());
  return read_trace(in);
}

void SparsityTrace::validate_against(std::size_t image_tokens, std::size_t tile_m) const {
  for (const auto& r : layers) {
    const std::string where = "sparsity layer " + std::to_string(r.layer) + ": ";
    if (r.retained_tokens > image_tokens) throw ValidationError(where + "retained_tokens exceeds M");
    if (r.compact_p > tile_m) throw ValidationError(where + "compact_p exceeds tile m");
  }
}

namespace {

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::uint64_t parse_u64(const std::string& token, std::size_t line, const char* column) {
  const std::string t = trim(token);
  std::uint64_t value = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (t.empty() || ec != std::errc{} || ptr != t.data() + t.size()) {
    throw ValidationError("line " + std::to_string(line) + ": column '" + column + "' is not a non-negative integer");
  }
  return value;
}

}  // namespace

SparsityTrace parse_sparsity_trace(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  SparsityTrace trace;
  static constexpr std::array<const char*, 5> kColumns = {"layer", "retained_ops", "total_ops", "retained_tokens",
                                                          "compact_p"};
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    if (!have_header) {
      if (line != kSparsityHeader) {
        throw ValidationError(std::string("sparsity trace header must be '") + kSparsityHeader + "'");
      }
      have_header = true;
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != kColumns.size()) {
      throw ValidationError("line " + std::to_string(line_no) + ": expected 5 columns");
    }
    SparsityRecord r;
    const auto layer = parse_u64(cells[0], line_no, kColumns[0]);
    if (layer > 0xffffffffULL) throw ValidationError("line " + std::to_string(line_no) + ": layer out of range");
    r.layer = static_cast<std::uint32_t>(layer);
    r.retained_ops = parse_u64(cells[1], line_no, kColumns[1]);
    r.total_ops = parse_u64(cells[2], line_no, kColumns[2]);
    r.retained_tokens = parse_u64(cells[3], line_no, kColumns[3]);
    r.compact_p = parse_u64(cells[4], line_no, kColumns[4]);
    const std::string where = "line " + std::to_string(line_no) + ": ";
    if (!trace.layers.empty() && r.layer <= trace.layers.back().layer) {
      throw ValidationError(where + "layer indices must be strictly increasing");
    }
    if (r.retained_ops > r.total_ops) throw ValidationError(where + "retained_ops > total_ops");
    if (r.retained_tokens == 0) throw ValidationError(where + "retained_tokens must be > 0");
    trace.layers.push_back(r);
  }
  if (trace.layers.empty()) throw ValidationError("sparsity trace has no records");
  return trace;
}

SparsityTrace read_sparsity_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open sparsity trace " + path.string());
  return parse_sparsity_trace(in);
}

void write_sparsity_trace(const SparsityTrace& trace, std::ostream& out) {
  out << kSparsityHeader << '\n';
  for (const auto& r : trace.layers) {
    out << r.layer << ',' << r.retained_ops << ',' << r.total_ops << ',' << r.retained_tokens << ',' << r.compact_p
        << '\n';
  }
}

void write_sparsity_trace(const SparsityTrace& trace, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_sparsity_trace(trace, out);
}

}  // namespace focus::trace
