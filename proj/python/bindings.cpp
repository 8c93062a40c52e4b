#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <memory>
#include <sstream>
#include <variant>

#include "bmpnet/checkpoint.hpp"
#include "bmpnet/commands.hpp"
#include "bmpnet/concept_graph.hpp"
#include "bmpnet/dataset.hpp"
#include "bmpnet/error.hpp"
#include "bmpnet/evaluation.hpp"
#include "bmpnet/run_config.hpp"
#include "bmpnet/training.hpp"

namespace py = pybind11;
using namespace bmp;

namespace {

using PyPair = std::pair<std::uint32_t, std::uint32_t>;

std::vector<PyPair> to_py(const std::vector<Pair>& pairs) {
  std::vector<PyPair> out;
  out.reserve(pairs.size());
  for (Pair p : pairs) out.emplace_back(p.attr, p.obj);
  return out;
}

Split split_arg(const std::string& name) { return parse_split(name); }

ConceptKind kind_arg(const std::string& name) {
  if (name == "attr" || name == "attribute") return ConceptKind::Attribute;
  if (name == "obj" || name == "object") return ConceptKind::Object;
  throw ConfigError("kind: expected 'attr' or 'obj', got '" + name + "'");
}

py::dict loss_dict(const LossValues& v) {
  py::dict d;
  d["total"] = v.total;
  d["l_v"] = v.l_v;
  d["l_c"] = v.l_c;
  d["l_aux"] = v.l_aux;
  d["l_r"] = v.l_r;
  return d;
}

py::dict metrics_dict(const SplitMetrics& m) {
  py::dict d;
  d["auc"] = m.auc;
  d["best_seen"] = m.best_seen;
  d["best_unseen"] = m.best_unseen;
  d["ch_mean"] = m.ch_mean;
  return d;
}

py::array_t<double> curve_array(const EvalCurve& c) {
  py::array_t<double> out({c.points.size(), std::size_t{3}});
  auto v = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < c.points.size(); ++i) {
    v(i, 0) = c.points[i].bias;
    v(i, 1) = c.points[i].seen;
    v(i, 2) = c.points[i].unseen;
  }
  return out;
}

py::dict report_dict(const EvalReport& r) {
  py::dict out;
  for (std::size_t i = 0; i < r.ks.size(); ++i) {
    py::dict d = metrics_dict(r.metrics[i]);
    d["curve"] = curve_array(r.curves[i]);
    out[py::int_(r.ks[i])] = d;
  }
  return out;
}

template <typename T>
Tensor<T> tensor_arg(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  std::vector<T> data(a.data(), a.data() + a.size());
  return Tensor<T>(std::move(shape), std::move(data));
}

// Single- or double-precision trainer behind one Python type.
class PyTrainer {
 public:
  PyTrainer(const Dataset& data, const ModelConfig& mc, const TrainConfig& tc) {
    if (tc.precision == Precision::Float64) {
      impl_ = std::make_unique<Trainer<double>>(data, mc, tc);
    } else {
      impl_ = std::make_unique<Trainer<float>>(data, mc, tc);
    }
  }
  template <typename T>
  explicit PyTrainer(std::unique_ptr<Trainer<T>> t) : impl_(std::move(t)) {}

  template <typename F>
  decltype(auto) visit(F&& f) {
    return std::visit([&](auto& t) -> decltype(auto) { return f(*t); }, impl_);
  }

 private:
  std::variant<std::unique_ptr<Trainer<float>>, std::unique_ptr<Trainer<double>>> impl_;
};

PyTrainer resume(const Dataset& data, const std::filesystem::path& path) {
  const CheckpointInfo info = read_checkpoint_info(path);
  if (info.precision == Precision::Float64) {
    return PyTrainer(std::make_unique<Trainer<double>>(data, load_checkpoint<double>(path, data.universe)));
  }
  return PyTrainer(std::make_unique<Trainer<float>>(data, load_checkpoint<float>(path, data.universe)));
}

}  // namespace

PYBIND11_MODULE(_bmpnet, m) {
  m.doc() = "Compositional zero-shot learning with blocked message passing";

  auto base = py::register_exception<Error>(m, "BmpError", PyExc_RuntimeError);
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DatasetError>(m, "DatasetError", base.ptr());
  py::register_exception<CheckpointError>(m, "CheckpointError", base.ptr());
  py::register_exception<NonFiniteLossError>(m, "NonFiniteLossError", base.ptr());

  py::class_<SyntheticWorldConfig>(m, "SyntheticWorldConfig")
      .def(py::init<>())
      .def_readwrite("num_attributes", &SyntheticWorldConfig::num_attributes)
      .def_readwrite("num_objects", &SyntheticWorldConfig::num_objects)
      .def_readwrite("feature_dim", &SyntheticWorldConfig::feature_dim)
      .def_readwrite("unseen_fraction", &SyntheticWorldConfig::unseen_fraction)
      .def_readwrite("images_per_pair", &SyntheticWorldConfig::images_per_pair)
      .def_readwrite("noise_scale", &SyntheticWorldConfig::noise_scale)
      .def_readwrite("seed", &SyntheticWorldConfig::seed);

  py::class_<Dataset>(m, "Dataset")
      .def_static("synthetic", &generate_synthetic, py::arg("config") = SyntheticWorldConfig{})
      .def_static(
          "load",
          [](const std::filesystem::path& manifest, const std::filesystem::path& features, bool cartesian) {
            return load_dataset(manifest, features, cartesian ? CandidateMode::Cartesian : CandidateMode::Listed);
          },
          py::arg("manifest"), py::arg("features"), py::arg("cartesian") = false)
      .def("save", [](const Dataset& d, const std::filesystem::path& manifest,
                      const std::filesystem::path& features) { save_dataset(d, manifest, features); },
           py::arg("manifest"), py::arg("features"))
      .def_property_readonly("attributes", [](const Dataset& d) { return d.universe.attributes(); })
      .def_property_readonly("objects", [](const Dataset& d) { return d.universe.objects(); })
      .def_property_readonly("seen", [](const Dataset& d) { return to_py(d.universe.seen()); })
      .def_property_readonly("unseen", [](const Dataset& d) { return to_py(d.universe.unseen()); })
      .def_property_readonly("candidates", [](const Dataset& d) { return to_py(d.universe.candidates()); })
      .def_property_readonly("feature_dim", &Dataset::feature_dim)
      .def_property_readonly("num_images", [](const Dataset& d) { return d.images.size(); })
      .def_property_readonly("features",
                             [](const Dataset& d) {
                               py::array_t<float> out({d.features.dim(0), d.features.dim(1)});
                               std::copy(d.features.data().begin(), d.features.data().end(), out.mutable_data());
                               return out;
                             })
      .def(
          "labels",
          [](const Dataset& d, const std::string& split) {
            std::vector<std::pair<std::uint32_t, PyPair>> out;
            for (const ImageRecord& r : d.images_in(split_arg(split))) out.push_back({r.offset, {r.pair.attr, r.pair.obj}});
            return out;
          },
          py::arg("split"), "(feature row, (attribute, object)) for every image of a split");

  py::class_<ModelConfig>(m, "ModelConfig")
      .def(py::init<>())
      .def_readwrite("dim", &ModelConfig::dim)
      .def_readwrite("input_dim", &ModelConfig::input_dim)
      .def_readwrite("conditional_residue", &ModelConfig::conditional_residue)
      .def_readwrite("use_residue", &ModelConfig::use_residue)
      .def_readwrite("edge_blocking", &ModelConfig::edge_blocking);

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_static("ut_zappos", &TrainConfig::ut_zappos)
      .def_static("mit_states", &TrainConfig::mit_states)
      .def_readwrite("margin", &TrainConfig::margin)
      .def_readwrite("tau", &TrainConfig::tau)
      .def_readwrite("lambda_v", &TrainConfig::lambda_v)
      .def_readwrite("lambda_c", &TrainConfig::lambda_c)
      .def_readwrite("lambda_a", &TrainConfig::lambda_a)
      .def_readwrite("lambda_r", &TrainConfig::lambda_r)
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("learning_rate", &TrainConfig::learning_rate)
      .def_readwrite("epochs", &TrainConfig::epochs)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_property(
          "precision", [](const TrainConfig& c) { return c.precision == Precision::Float64 ? "float64" : "float32"; },
          [](TrainConfig& c, const std::string& p) {
            if (p == "float32") c.precision = Precision::Float32;
            else if (p == "float64") c.precision = Precision::Float64;
            else throw ConfigError("precision: expected float32 or float64, got '" + p + "'");
          })
      .def("validate", &TrainConfig::validate);

  py::class_<PyTrainer>(m, "Trainer")
      .def(py::init<const Dataset&, const ModelConfig&, const TrainConfig&>(), py::arg("dataset"),
           py::arg("model_config"), py::arg("train_config"), py::keep_alive<1, 2>())
      .def_static("resume", &resume, py::arg("dataset"), py::arg("checkpoint"), py::keep_alive<0, 1>())
      .def("step", [](PyTrainer& t) { return t.visit([](auto& tr) { return loss_dict(tr.step().losses); }); })
      .def("run_epoch",
           [](PyTrainer& t) {
             return t.visit([](auto& tr) {
               const EpochRecord r = tr.run_epoch();
               py::dict d;
               d["epoch"] = r.epoch;
               d["l_v"] = r.l_v;
               d["l_c"] = r.l_c;
               d["l_aux"] = r.l_aux;
               d["l_r"] = r.l_r;
               d["val_auc"] = r.val_auc;
               return d;
             });
           })
      .def_property_readonly("steps_per_epoch", [](PyTrainer& t) { return t.visit([](auto& tr) { return tr.steps_per_epoch(); }); })
      .def_property_readonly("step_count", [](PyTrainer& t) { return t.visit([](auto& tr) { return tr.state().step; }); })
      .def(
          "evaluate",
          [](PyTrainer& t, const std::string& split, std::vector<std::size_t> ks) {
            return t.visit([&](auto& tr) { return report_dict(evaluate(tr.model(), tr.data(), split_arg(split), ks)); });
          },
          py::arg("split") = "test", py::arg("ks") = std::vector<std::size_t>{1, 2, 3},
          "{k: {auc, best_seen, best_unseen, ch_mean, curve}} with accuracies as fractions")
      .def(
          "attention",
          [](PyTrainer& t, const std::string& kind, std::uint32_t id, std::optional<std::uint32_t> partner) {
            return t.visit([&](auto& tr) {
              const auto& params = tr.model().concepts;
              const auto& u = tr.data().universe;
              const auto r = partner ? attention_blocked(params, u, kind_arg(kind), id, *partner)
                                     : attention_naive(params, u, kind_arg(kind), id);
              return std::vector<double>(r.beta.begin(), r.beta.end());
            });
          },
          py::arg("kind"), py::arg("id"), py::arg("partner") = py::none(),
          "Attention of a concept over all concepts; blocked for the given input partner")
      .def(
          "save_checkpoint",
          [](PyTrainer& t, const std::filesystem::path& path) {
            t.visit([&](auto& tr) { save_checkpoint(path, tr.state(), tr.data().universe); });
          },
          py::arg("path"));

  m.def(
      "calibration_sweep",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& scores, std::vector<std::size_t> labels,
         std::vector<bool> unseen_columns, std::size_t k) {
        if (scores.ndim() != 2) throw ShapeError("calibration_sweep: scores must be 2-D");
        ScoreMatrix s;
        s.rows = scores.shape(0);
        s.cols = scores.shape(1);
        s.scores.assign(scores.data(), scores.data() + scores.size());
        if (labels.size() != s.rows || unseen_columns.size() != s.cols) {
          throw ShapeError("calibration_sweep: need one label per row and one unseen flag per column");
        }
        for (std::size_t l : labels) {
          if (l >= s.cols) throw ShapeError("calibration_sweep: label " + std::to_string(l) + " out of range");
        }
        s.labels = std::move(labels);
        for (bool u : unseen_columns) s.unseen_column.push_back(u);
        const EvalCurve c = calibration_sweep(s, k);
        py::dict d = metrics_dict(curve_metrics(c));
        d["curve"] = curve_array(c);
        return d;
      },
      py::arg("scores"), py::arg("labels"), py::arg("unseen_columns"), py::arg("k") = 1,
      "Exact bias sweep over a score matrix: metrics plus the (bias, seen, unseen) curve");

  m.def(
      "triplet_term",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& negative,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& positive,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& reference, double margin) {
        return triplet_term(tensor_arg<double>(negative), tensor_arg<double>(positive), tensor_arg<double>(reference),
                            margin);
      },
      py::arg("negative"), py::arg("positive"), py::arg("reference"), py::arg("margin") = 0.5);

  m.def(
      "train",
      [](const std::filesystem::path& config, std::optional<std::filesystem::path> output_dir,
         std::optional<std::size_t> epochs, std::optional<std::uint64_t> seed, std::vector<std::string> ablate) {
        cli::TrainOverrides o;
        o.output_dir = std::move(output_dir);
        o.epochs = epochs;
        o.seed = seed;
        o.ablations = std::move(ablate);
        std::ostringstream log;
        const auto summary = cli::run_train(cli::resolve_run_config(config, o), log);
        py::dict d;
        d["output_dir"] = summary.output_dir;
        d["best_epoch"] = summary.best_epoch;
        d["best_val_auc"] = summary.best_val_auc;
        d["log"] = log.str();
        return d;
      },
      py::arg("config"), py::arg("output_dir") = py::none(), py::arg("epochs") = py::none(),
      py::arg("seed") = py::none(), py::arg("ablate") = std::vector<std::string>{},
      "Runs the `bmp train` pipeline from a JSON config file");

  m.def(
      "evaluate",
      [](const std::filesystem::path& config, std::optional<std::filesystem::path> checkpoint,
         const std::string& split, std::vector<std::size_t> ks) {
        std::ostringstream log;
        const auto reports = cli::run_eval(cli::resolve_run_config(config, {}), checkpoint, split_arg(split), ks, log);
        return report_dict(reports.front());
      },
      py::arg("config"), py::arg("checkpoint") = py::none(), py::arg("split") = "test",
      py::arg("ks") = std::vector<std::size_t>{1, 2, 3});

  m.attr("known_ablations") = known_ablations();
}
