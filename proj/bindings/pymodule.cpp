// SPDX-License-Identifier: Apache-2.0
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cricbench/config.hpp"
#include "cricbench/hpo.hpp"
#include "cricbench/report.hpp"
#include "cricbench/synth.hpp"
#include "cricbench/train.hpp"

namespace py = pybind11;
using namespace cricbench;

namespace {

py::array_t<float> tensor_to_numpy(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<float> out(shape);
  std::copy_n(t.data(), t.numel(), out.mutable_data());
  return out;
}

Tensor numpy_to_tensor(const py::array_t<float, py::array::c_style | py::array::forcecast>& a) {
  std::vector<long> shape(a.ndim());
  for (py::ssize_t i = 0; i < a.ndim(); ++i) shape[static_cast<std::size_t>(i)] = a.shape(i);
  Tensor t(shape);
  std::copy_n(a.data(), t.numel(), t.data());
  return t;
}

py::dict metrics_to_dict(const MetricsReport& m) {
  py::dict d;
  d["accuracy"] = m.accuracy;
  d["weighted_precision"] = m.weighted_precision;
  d["weighted_recall"] = m.weighted_recall;
  d["weighted_f1"] = m.weighted_f1;
  d["confusion"] = m.confusion;
  d["n_samples"] = m.n_samples;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "cricket-shot classification benchmark core";

  py::register_exception<Error>(m, "CricbenchError");

  // ingest
  py::enum_<Split>(m, "Split")
      .value("train", Split::train)
      .value("val", Split::val)
      .value("test", Split::test)
      .value("unassigned", Split::unassigned);
  py::class_<ManifestEntry>(m, "ManifestEntry")
      .def_readonly("path", &ManifestEntry::path)
      .def_readonly("label", &ManifestEntry::label)
      .def_property_readonly("split",
                             [](const ManifestEntry& e) { return split_name(e.split); });
  py::class_<VideoManifest>(m, "VideoManifest")
      .def_readonly("entries", &VideoManifest::entries)
      .def_readonly("class_names", &VideoManifest::class_names)
      .def_readonly("seed", &VideoManifest::seed)
      .def("save", &VideoManifest::save)
      .def_static("load", &VideoManifest::load);
  m.def("build_manifest", &build_manifest, py::arg("root_dir"),
        py::arg("class_names") = default_class_names());
  m.def("stratified_split", &stratified_split, py::arg("manifest"), py::arg("ratios"),
        py::arg("seed"));
  m.def("split_counts", [](long n) {
    SplitCounts c = split_counts(n, 0.70, 0.15, 0.15);
    return py::make_tuple(c.train, c.val, c.test);
  });
  m.def("default_class_names", &default_class_names);

  // pipelines
  m.def("sample_indices",
        [](long n_frames, long t, const std::string& strategy, std::optional<long> seed) {
          if (sampling_from_name(strategy) == Sampling::random_draw) {
            if (!seed) throw MissingRngError("random sampling requires a seed");
            Pcg32 rng(static_cast<std::uint64_t>(*seed));
            return sample_indices(n_frames, t, Sampling::random_draw, &rng);
          }
          return sample_indices(n_frames, t, sampling_from_name(strategy));
        },
        py::arg("n_frames"), py::arg("t"), py::arg("strategy"), py::arg("seed") = py::none());
  m.def("builtin_pipeline_names", [] {
    std::vector<std::string> names;
    for (const auto& [k, v] : builtin_specs()) names.push_back(k);
    return names;
  });
  m.def("preprocess_file",
        [](const std::string& path, const std::string& pipeline, std::optional<long> seed) {
          const PipelineSpec& spec = builtin_specs().at(pipeline);
          std::optional<Pcg32> rng;
          if (seed) rng.emplace(static_cast<std::uint64_t>(*seed));
          FrameSequence fsq = preprocess(decode_video(path), spec, rng ? &*rng : nullptr);
          return tensor_to_numpy(fsq.data);
        },
        py::arg("path"), py::arg("pipeline"), py::arg("seed") = py::none());

  // model zoo
  py::class_<Model>(m, "Model")
      .def_property_readonly("arch_id", [](const Model& mm) { return mm.spec().arch_id; })
      .def("forward",
           [](Model& mm, const py::array_t<float, py::array::c_style | py::array::forcecast>& a) {
             return tensor_to_numpy(mm.forward_eval(numpy_to_tensor(a)));
           })
      .def("count_parameters", &Model::count_parameters)
      .def("last_attention", [](const Model& mm) { return tensor_to_numpy(mm.last_attention()); })
      .def("save_checkpoint", &Model::save_checkpoint)
      .def_static("load_checkpoint", &Model::load_checkpoint);
  m.def("build_model",
        [](const std::string& arch_id, int num_classes, std::map<std::string, double> hyper) {
          return build_model(ModelSpec{arch_id, num_classes, std::move(hyper)});
        },
        py::arg("arch_id"), py::arg("num_classes") = 10,
        py::arg("hyper") = std::map<std::string, double>{});
  m.def("all_arch_ids", &all_arch_ids);
  m.def("required_pipeline",
        [](const std::string& arch) { return required_pipeline(arch); });

  // metrics
  m.def("compute_metrics",
        [](const std::vector<int>& y_true, const std::vector<int>& y_pred, int num_classes) {
          return metrics_to_dict(compute_metrics(y_true, y_pred, num_classes));
        });

  // training
  m.def("train",
        [](const std::string& config_json, const std::string& manifest_path) {
          TrainConfig cfg = TrainConfig::from_json(config_json);
          TrainResult r = train(cfg, VideoManifest::load(manifest_path));
          py::dict d;
          d["best_val_accuracy"] = r.best_val_accuracy;
          d["best_epoch"] = r.best_epoch;
          d["checkpoint_path"] = r.checkpoint_path;
          d["last_checkpoint_path"] = r.last_checkpoint_path;
          d["epochs_run"] = r.history.size();
          return d;
        },
        py::arg("config_json"), py::arg("manifest_path"));
  m.def("evaluate",
        [](const std::string& ckpt, const std::string& manifest_path, const std::string& split) {
          return metrics_to_dict(
              evaluate(ckpt, VideoManifest::load(manifest_path), split_from_name(split)));
        });

  // hpo
  m.def("run_study",
        [](long n_trials, const py::function& objective, std::uint64_t seed,
           const std::string& journal_path) {
          StudyResult r = run_study(
              default_search_space(), n_trials,
              [&](const std::map<std::string, double>& p) {
                return objective(p).cast<double>();
              },
              seed, journal_path);
          py::dict d;
          d["best_id"] = r.best.id;
          d["best_objective"] = r.best.objective;
          d["best_params"] = r.best.params;
          d["n_trials"] = r.trials.size();
          return d;
        },
        py::arg("n_trials"), py::arg("objective"), py::arg("seed"), py::arg("journal_path"));

  // synth + report
  m.def("generate_synthetic",
        [](const std::string& out_dir, long n_classes, long clips_per_class, long frames,
           long height, long width, long seed) {
          SyntheticSpec spec{n_classes, clips_per_class, frames, height, width, seed};
          return generate_synthetic(spec, out_dir);
        },
        py::arg("out_dir"), py::arg("n_classes") = 4, py::arg("clips_per_class") = 10,
        py::arg("frames") = 16, py::arg("height") = 64, py::arg("width") = 64,
        py::arg("seed") = 0);
  m.def("write_report", [](const std::vector<std::string>& run_dirs, const std::string& out) {
    auto rows = write_report(run_dirs, out);
    return rows.size();
  });
}
