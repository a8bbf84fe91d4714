#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "profuse/container_io.hpp"
#include "profuse/errors.hpp"
#include "profuse/parallel.hpp"
#include "profuse/pipeline.hpp"
#include "profuse/pq_index.hpp"
#include "profuse/query_eval.hpp"
#include "profuse/synth.hpp"

namespace py = pybind11;
using namespace profuse;

namespace {

using U8Array = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

BinaryMask mask_from_array(const U8Array& a) {
  if (a.ndim() != 2) throw py::value_error("masks must be 2-D");
  BinaryMask m(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)), 0);
  const auto* p = a.data();
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = p[i] != 0;
  return m;
}

py::dict scene_dict(const GaussianScene& scene) {
  const auto n = static_cast<Eigen::Index>(scene.size());
  RowMatrixf pos(n, 3), scale(n, 3), rot(n, 4), color(n, 3);
  Eigen::VectorXf opacity(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Gaussian& g = scene.gaussians[static_cast<std::size_t>(i)];
    pos.row(i) = g.position.transpose();
    scale.row(i) = g.scale.transpose();
    rot.row(i) << g.rotation.w(), g.rotation.x(), g.rotation.y(), g.rotation.z();
    color.row(i) = g.color.transpose();
    opacity[i] = g.opacity;
  }
  py::dict d;
  d["positions"] = pos;
  d["scales"] = scale;
  d["rotations"] = rot;
  d["colors"] = color;
  d["opacity"] = opacity;
  if (scene.descriptors) {
    d["descriptors"] = *scene.descriptors;
    d["labeled"] = py::array_t<std::uint8_t>(static_cast<py::ssize_t>(scene.labeled.size()), scene.labeled.data());
  }
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Multi-view mask fusion onto Gaussian scenes";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_IOError);
  py::register_exception<StageError>(m, "StageError", PyExc_RuntimeError);

  m.def("set_thread_count", &set_thread_count, py::arg("threads"));
  m.def("thread_count", &thread_count);

  m.def(
      "synth",
      [](const std::string& spec_json, const std::filesystem::path& out) {
        const SynthSpec spec = synth_spec_from_json(spec_json);
        spec.check();
        py::gil_scoped_release release;
        write_synth(generate(spec), out);
      },
      py::arg("spec_json"), py::arg("out_dir"), "Generate a synthetic scene and write it to out_dir.");

  m.def(
      "run_pipeline",
      [](const std::filesystem::path& config, bool force) {
        const PipelineConfig c = load_pipeline_config(config);
        RunReport report;
        {
          py::gil_scoped_release release;
          report = run_pipeline(c, RunOptions{force, nullptr});
        }
        py::list out;
        for (const auto& s : report.stages) out.append(py::make_tuple(s.name, s.skipped, s.seconds));
        return out;
      },
      py::arg("config"), py::arg("force") = false, "Run every stage; returns (stage, skipped, seconds) tuples.");

  m.def(
      "load_scene", [](const std::filesystem::path& path) { return scene_dict(load_scene(path)); }, py::arg("path"));

  m.def(
      "read_tensor",
      [](const std::filesystem::path& path) -> py::array {
        const Tensor t = read_tensor(path);
        std::vector<py::ssize_t> shape(t.shape.begin(), t.shape.end());
        switch (t.dtype) {
          case DType::f32: {
            const auto v = t.to_f32();
            return py::array_t<float>(shape, v.data());
          }
          case DType::u16: {
            const auto v = t.to_u16();
            return py::array_t<std::uint16_t>(shape, v.data());
          }
          default: {
            const auto v = t.to_u8();
            return py::array_t<std::uint8_t>(shape, v.data());
          }
        }
      },
      py::arg("path"));

  m.def(
      "pq_search",
      [](const RowMatrixf& data, const Eigen::VectorXf& query, std::size_t k, int m_sub, int bits) {
        PQTrainConfig cfg;
        cfg.m = m_sub;
        cfg.bits = bits;
        const PQCodebook cb = train_pq(data, cfg);
        const PQCodes codes = encode(cb, data);
        const std::vector<std::uint8_t> valid(static_cast<std::size_t>(data.rows()), 1);
        py::list out;
        for (const auto& h : search(cb, codes, query, k, valid)) out.append(py::make_tuple(h.index, h.score));
        return out;
      },
      py::arg("data"), py::arg("query"), py::arg("k"), py::arg("m") = 0, py::arg("bits") = 8,
      "Train a product quantizer on data and return the top-k (index, score) for query.");

  m.def(
      "miou_macc",
      [](const std::vector<U8Array>& pred, const std::vector<U8Array>& gt, double acc_threshold) {
        std::vector<BinaryMask> p, g;
        for (const auto& a : pred) p.push_back(mask_from_array(a));
        for (const auto& a : gt) g.push_back(mask_from_array(a));
        const SelectionMetrics s = miou_macc(p, g, acc_threshold);
        return py::make_tuple(s.miou, s.macc, s.ious);
      },
      py::arg("pred"), py::arg("gt"), py::arg("acc_threshold") = 0.5);

  m.def("default_tau_grid", &default_tau_grid);
}
