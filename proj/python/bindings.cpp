#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "ctrace/dataset_io.hpp"
#include "ctrace/error.hpp"
#include "ctrace/oracle.hpp"
#include "ctrace/report.hpp"
#include "ctrace/results_io.hpp"
#include "ctrace/sweep.hpp"
#include "ctrace/weights_io.hpp"

namespace py = pybind11;
using namespace ctrace;
using nlohmann::json;

namespace {

// Results cross the boundary as plain Python objects via their JSON text.
py::object to_python(const json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

json from_python(const py::object& o) {
  return json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

py::dict config_dict(const ModelConfig& c) { return to_python(config_to_json(c)); }

CorruptionSpec corruption_for(const Model& model, const Dataset& ds, const std::optional<Vector>& silence) {
  if (ds.header.d_audio != model.config().d_audio)
    throw Error(ErrorKind::Shape, "dataset d_audio does not match the model");
  CorruptionSpec c = silence ? CorruptionSpec{*silence} : ds.default_corruption();
  c.validate(model.config().d_audio);
  return c;
}

SweepContext context(const Model& model, const Dataset& ds, const CorruptionSpec& c, const SweepOptions& o) {
  return {model.config(), c, dataset_digest(ds), o};
}

oracle::OracleSpec oracle_spec(std::size_t layers, std::size_t copy_block, std::size_t attributes,
                               double attention_gain, double readout_gain, std::size_t audio_frames,
                               std::uint64_t seed) {
  return {layers, copy_block, attributes, attention_gain, readout_gain, audio_frames, seed};
}

const TraceSample& find_sample(const Dataset& ds, const std::optional<std::string>& id) {
  if (ds.samples.empty()) throw Error(ErrorKind::InvalidSpec, "dataset contains no samples");
  if (!id) return ds.samples.front();
  for (const auto& s : ds.samples)
    if (s.id == *id) return s;
  throw Error(ErrorKind::InvalidSpec, "no sample with id '" + *id + "'");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Causal tracing for multimodal decoder-only transformers";

  static py::exception<Error> trace_error(m, "TraceError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = py::handle(trace_error.ptr())(e.what());
      exc.attr("kind") = std::string(to_string(e.kind()));
      PyErr_SetObject(trace_error.ptr(), exc.ptr());
    }
  });

  py::class_<Model>(m, "Model")
      .def_static("load", &load_model, py::arg("path"))
      .def("save", [](const Model& self, const std::filesystem::path& p) { save_model(p, self); }, py::arg("path"))
      .def("to_bytes", [](const Model& self) {
        const auto b = serialize_model(self);
        return py::bytes(reinterpret_cast<const char*>(b.data()), b.size());
      })
      .def_static("from_bytes", [](const py::bytes& b) {
        const std::string s = b;
        return deserialize_model(std::vector<std::uint8_t>(s.begin(), s.end()));
      })
      .def_property_readonly("config", [](const Model& self) { return config_dict(self.config()); });

  py::class_<Dataset>(m, "Dataset")
      .def_static("load", [](const std::filesystem::path& p) { return load_dataset(p); }, py::arg("path"))
      .def_static("parse", [](const std::string& text) { return parse_dataset(text); }, py::arg("text"))
      .def("save", [](const Dataset& self, const std::filesystem::path& p) { save_dataset(p, self); }, py::arg("path"))
      .def("to_text", &format_dataset)
      .def_property_readonly("digest", &dataset_digest)
      .def_property_readonly("ids", [](const Dataset& self) {
        std::vector<std::string> ids;
        for (const auto& s : self.samples) ids.push_back(s.id);
        return ids;
      })
      .def("__len__", [](const Dataset& self) { return self.samples.size(); });

  m.def(
      "oracle_model",
      [](std::size_t layers, std::size_t copy_block, std::size_t attributes, double attention_gain,
         double readout_gain, std::size_t audio_frames) {
        return oracle::build_oracle(
            oracle_spec(layers, copy_block, attributes, attention_gain, readout_gain, audio_frames, 0));
      },
      py::arg("layers") = 4, py::arg("copy_block") = 2, py::arg("attributes") = 4, py::arg("attention_gain") = 30.0,
      py::arg("readout_gain") = 10.0, py::arg("audio_frames") = 1,
      "Analytic copy-circuit model whose causal map is known exactly.");

  m.def(
      "oracle_dataset",
      [](std::size_t n_samples, std::size_t layers, std::size_t copy_block, std::size_t attributes,
         std::size_t audio_frames, std::uint64_t seed, bool stratified) {
        const auto spec = oracle_spec(layers, copy_block, attributes, 30.0, 10.0, audio_frames, seed);
        return oracle::to_dataset(spec, oracle::gen_dataset(spec, n_samples, stratified));
      },
      py::arg("n_samples") = 64, py::arg("layers") = 4, py::arg("copy_block") = 2, py::arg("attributes") = 4,
      py::arg("audio_frames") = 1, py::arg("seed") = 0, py::arg("stratified") = false);

  m.def(
      "expected_layer_map",
      [](std::size_t layers, std::size_t copy_block) {
        oracle::OracleSpec s;
        s.n_layers = layers;
        s.copy_block = copy_block;
        return oracle::expected_layer_map(s);
      },
      py::arg("layers") = 4, py::arg("copy_block") = 2);

  m.def("recovery_rate", &recovery_rate, py::arg("p_clean"), py::arg("p_corrupted"), py::arg("p_patched"),
        py::arg("epsilon_gap") = kDefaultEpsilonGap);

  m.def(
      "layer_sweep",
      [](const Model& model, const Dataset& ds, std::optional<Vector> silence, double epsilon_gap,
         bool include_audio_positions, bool clamp, std::size_t workers) {
        const SweepOptions o{epsilon_gap, include_audio_positions, clamp, workers};
        const CorruptionSpec c = corruption_for(model, ds, silence);
        json doc;
        {
          py::gil_scoped_release release;
          doc = results_to_json(context(model, ds, c, o), layer_sweep(model, ds.samples, c, o));
        }
        return to_python(doc);
      },
      py::arg("model"), py::arg("dataset"), py::arg("silence") = std::nullopt,
      py::arg("epsilon_gap") = kDefaultEpsilonGap, py::arg("include_audio_positions") = false,
      py::arg("clamp") = false, py::arg("workers") = 1, "Layer-wise sweep; returns the results document.");

  m.def(
      "token_sweep",
      [](const Model& model, const Dataset& ds, std::vector<std::size_t> sites, std::optional<Vector> silence,
         double epsilon_gap, bool include_audio_positions, bool clamp, std::size_t workers) {
        const SweepOptions o{epsilon_gap, include_audio_positions, clamp, workers};
        const CorruptionSpec c = corruption_for(model, ds, silence);
        json doc;
        {
          py::gil_scoped_release release;
          doc = results_to_json(context(model, ds, c, o), token_sweep(model, ds.samples, c, sites, o));
        }
        return to_python(doc);
      },
      py::arg("model"), py::arg("dataset"), py::arg("sites") = std::vector<std::size_t>{},
      py::arg("silence") = std::nullopt, py::arg("epsilon_gap") = kDefaultEpsilonGap,
      py::arg("include_audio_positions") = false, py::arg("clamp") = false, py::arg("workers") = 1,
      "Token-wise sweep; returns the results document.");

  m.def(
      "trace",
      [](const Model& model, const Dataset& ds, std::vector<std::pair<std::size_t, std::size_t>> patches,
         std::optional<std::string> sample_id, std::optional<Vector> silence, double epsilon_gap) {
        const CorruptionSpec c = corruption_for(model, ds, silence);
        InterventionSpec spec;
        for (const auto& [site, pos] : patches)
          if (!spec.add({site, pos})) throw Error(ErrorKind::InvalidSpec, "duplicate patch");
        const TraceSample& s = find_sample(ds, sample_id);
        const TraceResult r = trace_one(model, s, c, spec, epsilon_gap);
        py::dict out;
        out["id"] = s.id;
        out["p_clean"] = r.p_clean;
        out["p_corrupted"] = r.p_corrupted;
        out["p_patched"] = r.p_patched;
        out["rr"] = r.rr ? py::object(py::float_(*r.rr)) : py::none();
        out["verdict"] = std::string(to_string(r.verdict));
        return out;
      },
      py::arg("model"), py::arg("dataset"), py::arg("patches") = std::vector<std::pair<std::size_t, std::size_t>>{},
      py::arg("sample_id") = std::nullopt, py::arg("silence") = std::nullopt,
      py::arg("epsilon_gap") = kDefaultEpsilonGap, "Clean, corrupted, and patched runs for one sample.");

  m.def("results_csv", [](const py::object& doc) {
    const json j = from_python(doc);
    check_results_document(j);
    return results_csv(j);
  });
  m.def("render_figures", [](const py::object& doc) {
    const json j = from_python(doc);
    check_results_document(j);
    return report::render_figures(j);
  });
}
