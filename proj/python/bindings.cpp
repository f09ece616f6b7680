#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "focus/app.hpp"
#include "focus/config.hpp"
#include "focus/perf.hpp"
#include "focus/sec.hpp"
#include "focus/sic.hpp"
#include "focus/trace.hpp"

namespace py = pybind11;
using namespace focus;

namespace {

py::array_t<float> to_numpy(const Matrix& m) {
  py::array_t<float> out({m.rows(), m.cols()});
  std::copy(m.data().begin(), m.data().end(), out.mutable_data());
  return out;
}

Matrix from_numpy(const py::array_t<float, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2) throw std::invalid_argument("expected a 2-D array");
  const auto rows = static_cast<std::size_t>(a.shape(0)), cols = static_cast<std::size_t>(a.shape(1));
  return Matrix(rows, cols, std::vector<float>(a.data(), a.data() + rows * cols));
}

py::dict grid_dict(const TokenGrid& g) {
  const auto& d = g.dims();
  py::dict out;
  out["dims"] = py::dict(py::arg("F") = d.F, py::arg("H") = d.H, py::arg("W") = d.W, py::arg("T") = d.T,
                         py::arg("Dmodel") = d.Dmodel);
  out["image"] = to_numpy(g.image());
  out["text"] = to_numpy(g.text());
  out["token_indices"] = g.token_indices();
  return out;
}

}  // namespace

PYBIND11_MODULE(_focus, m) {
  m.doc() = "Concentrated-execution accelerator simulator";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);

  m.def(
      "generate_trace",
      [](std::uint32_t frames, std::uint32_t h, std::uint32_t w, std::uint32_t dmodel, std::uint32_t text,
         double temporal, double spatial, double noise, std::uint64_t seed) {
        trace::TraceGenConfig g;
        g.dims = Dims{frames, h, w, text, dmodel, 1, dmodel};
        g.temporal_similarity = temporal;
        g.spatial_similarity = spatial;
        g.noise_sigma = noise;
        g.seed = seed;
        return grid_dict(trace::generate_synthetic_trace(g));
      },
      py::arg("frames"), py::arg("h"), py::arg("w"), py::arg("dmodel"), py::arg("text") = 0,
      py::arg("temporal") = 0.0, py::arg("spatial") = 0.0, py::arg("noise") = 0.0, py::arg("seed") = 0);

  m.def(
      "write_trace",
      [](const std::filesystem::path& path, const py::array_t<float>& image, const py::array_t<float>& text,
         std::uint32_t F, std::uint32_t H, std::uint32_t W) {
        const Matrix img = from_numpy(image), txt = from_numpy(text);
        const Dims d{F, H, W, static_cast<std::uint32_t>(txt.rows()), static_cast<std::uint32_t>(img.cols()), 1,
                     static_cast<std::uint32_t>(img.cols())};
        trace::write_trace(TokenGrid(d, img, txt), path);
      },
      py::arg("path"), py::arg("image"), py::arg("text"), py::arg("F"), py::arg("H"), py::arg("W"));
  m.def("read_trace", [](const std::filesystem::path& path) { return grid_dict(trace::read_trace(path)); });

  m.def(
      "run",
      [](const std::string& config_json, const std::filesystem::path& trace_path, bool oracle, std::uint64_t seed) {
        app::RunInputs in;
        in.grid = trace::read_trace(trace_path);
        in.config = parse_config(config_json, in.grid->dims());
        in.seed = seed;
        const auto r = app::execute(in, app::Mode::Functional, oracle);
        py::dict out;
        out["report"] = perf::report_json(*r.outcome.functional);
        out["csv"] = perf::report_csv(*r.outcome.functional);
        if (r.outcome.oracle) out["max_abs_error"] = r.outcome.oracle->max_abs_error;
        out["output"] = to_numpy(r.pipeline->output.sequence());
        return out;
      },
      py::arg("config_json"), py::arg("trace_path"), py::arg("oracle") = false, py::arg("seed") = 0);

  m.def(
      "cli",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "focus");
        std::vector<const char*> argv;
        for (const auto& a : args) argv.push_back(a.c_str());
        std::ostringstream out, err;
        const int code = app::cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"));

  m.def(
      "top_k_select",
      [](const py::array_t<float, py::array::c_style | py::array::forcecast>& s, std::size_t k) {
        return sec::top_k_select(std::span<const float>(s.data(), static_cast<std::size_t>(s.size())), k);
      },
      py::arg("scores"), py::arg("k"));
  m.def("encode_offsets",
        [](std::vector<std::size_t> idx) { return sec::encode_offsets(sec::RetainedSet{std::move(idx)}).deltas; });
  m.def("decode_offsets", [](std::vector<std::size_t> deltas) {
    return sec::decode_offsets(sec::OffsetEncoding{std::move(deltas)}).indices;
  });

  m.def("gemm_tile_cycles", &perf::gemm_tile_cycles, py::arg("p"), py::arg("K"), py::arg("k"), py::arg("b"),
        py::arg("n"), py::arg("a"));
  m.def("attention_cycles", &perf::attention_cycles, py::arg("M"), py::arg("T"), py::arg("h"), py::arg("n"),
        py::arg("a"), py::arg("b"));
  m.def("sorter_cycles", &sec::sorter_cycles, py::arg("M"), py::arg("k"), py::arg("a"));
  m.def(
      "matcher_cycles",
      [](std::uint64_t rows, std::uint32_t bf, std::uint32_t bh, std::uint32_t bw) {
        return sic::matcher_cycles(rows, BlockConfig{bf, bh, bw});
      },
      py::arg("rows"), py::arg("bf") = 2, py::arg("bh") = 2, py::arg("bw") = 2);
  m.def("default_config_json", [] { return config_to_json(reference_config()); });
}
