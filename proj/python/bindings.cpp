// Python bindings for the main operations: environment simulation, training,
// closed-loop evaluation, embeddings, gradient auditing, and the full command
// line. State tensors cross the boundary as 2-d numpy arrays.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <algorithm>
#include <sstream>
#include <string>
#include <vector>

#include "nidlab/cli.hpp"
#include "nidlab/env.hpp"
#include "nidlab/error.hpp"
#include "nidlab/harness.hpp"
#include "nidlab/model.hpp"
#include "nidlab/rng.hpp"
#include "nidlab/tensor.hpp"

namespace py = pybind11;
using namespace nidlab;

namespace {

Tensor tensor_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2) throw ConfigError("state arrays must be 2-d (objects x positions)");
  Tensor t = Tensor::zeros(Shape::mat(static_cast<std::size_t>(a.shape(0)),
                                      static_cast<std::size_t>(a.shape(1))));
  std::copy(a.data(), a.data() + t.data.size(), t.data.begin());
  return t;
}

py::array_t<double> array_from_tensor(const Tensor& t) {
  py::array_t<double> a({t.rows(), t.cols()});
  std::copy(t.data.begin(), t.data.end(), a.mutable_data());
  return a;
}

std::uint64_t eval_stream(Split split) {
  return split == Split::Train ? streams::kEvalTrain : streams::kEvalTest;
}

}  // namespace

PYBIND11_MODULE(_nidlab, m) {
  m.doc() = "Factored grid-world transition models: simulators, training, evaluation";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<Error>(m, "RunError", PyExc_RuntimeError);

  py::enum_<Orientation>(m, "Orientation")
      .value("PEAK", Orientation::Peak)
      .value("VALLEY", Orientation::Valley)
      .value("FLAT", Orientation::Flat);
  py::enum_<Split>(m, "Split").value("TRAIN", Split::Train).value("TEST", Split::Test);
  py::enum_<Action>(m, "Action")
      .value("LEFT", Action::MoveLeftNoGrab)
      .value("RIGHT", Action::MoveRightNoGrab)
      .value("LEFT_GRAB", Action::MoveLeftGrab)
      .value("RIGHT_GRAB", Action::MoveRightGrab)
      .value("NONE", Action::None);
  py::enum_<AttentionVariant>(m, "AttentionVariant")
      .value("SAMPLE_DEPENDENT", AttentionVariant::SampleDependent)
      .value("SAMPLE_INDEPENDENT", AttentionVariant::SampleIndependent);
  py::enum_<InitScheme>(m, "InitScheme")
      .value("RANDOM", InitScheme::Random)
      .value("FIXED_ROWS", InitScheme::FixedRows);

  py::class_<Rng>(m, "Rng")
      .def(py::init<std::uint64_t>(), py::arg("seed"))
      .def_static("derive", &Rng::derive, py::arg("seed"), py::arg("stream"))
      .def("uniform01", &Rng::uniform01)
      .def("uniform_int", &Rng::uniform_int, py::arg("n"));

  py::class_<ObjectSpec>(m, "ObjectSpec")
      .def(py::init([](std::string name, bool rollable, bool train_left_only, bool is_agent) {
             return ObjectSpec{std::move(name), rollable, train_left_only, is_agent};
           }),
           py::arg("name"), py::arg("rollable") = false, py::arg("train_left_only") = false,
           py::arg("is_agent") = false)
      .def_readwrite("name", &ObjectSpec::name)
      .def_readwrite("rollable", &ObjectSpec::rollable)
      .def_readwrite("train_left_only", &ObjectSpec::train_left_only)
      .def_readwrite("is_agent", &ObjectSpec::is_agent)
      .def("__repr__", [](const ObjectSpec& o) { return "<ObjectSpec " + o.name + ">"; });

  py::class_<EnvSpec>(m, "EnvSpec")
      .def(py::init<>())
      .def_static("inclined_plane", &EnvSpec::inclined_plane, py::arg("with_agent") = false)
      .def_static("valley_plane", &EnvSpec::valley_plane, py::arg("with_agent") = false)
      .def_static("stochastic_plane", &EnvSpec::stochastic_plane)
      .def_readwrite("D", &EnvSpec::D)
      .def_readwrite("apex", &EnvSpec::apex)
      .def_readwrite("orientation", &EnvSpec::orientation)
      .def_readwrite("objects", &EnvSpec::objects)
      .def_readwrite("stochastic_mover", &EnvSpec::stochastic_mover)
      .def_readwrite("horizon", &EnvSpec::horizon)
      .def("n_objects", &EnvSpec::n_objects)
      .def("has_agent", &EnvSpec::has_agent)
      .def("n_actions", &EnvSpec::n_actions)
      .def("validate", &EnvSpec::validate);

  py::class_<GridState>(m, "GridState")
      .def(py::init([](std::vector<int> pos) { return GridState{std::move(pos)}; }),
           py::arg("pos"))
      .def_readwrite("pos", &GridState::pos)
      .def("__eq__", [](const GridState& a, const GridState& b) { return a.pos == b.pos; });

  py::class_<Episode>(m, "Episode")
      .def_readonly("seed", &Episode::seed)
      .def_readonly("split", &Episode::split)
      .def_readonly("actions", &Episode::actions)
      .def_readonly("states", &Episode::states);

  m.def("direction_of", &direction_of, py::arg("env"), py::arg("position"));
  m.def("step", &step, py::arg("env"), py::arg("state"), py::arg("action"), py::arg("rng"));
  m.def("step_core", &step_core, py::arg("env"), py::arg("state"), py::arg("action"),
        py::arg("stochastic_direction"));
  m.def("sample_initial", &sample_initial, py::arg("env"), py::arg("split"), py::arg("rng"));
  m.def(
      "to_state_tensor",
      [](const EnvSpec& env, const GridState& s) { return array_from_tensor(to_state_tensor(env, s)); },
      py::arg("env"), py::arg("state"));
  m.def("generate_episodes", &generate_episodes, py::arg("env"), py::arg("split"), py::arg("n"),
        py::arg("seed"));
  m.def("episodes_to_ndjson", [](const std::vector<Episode>& eps) {
    std::ostringstream ss;
    write_episodes(ss, eps);
    return ss.str();
  });
  m.def("episodes_from_ndjson", [](const std::string& text) {
    std::istringstream ss(text);
    return read_episodes(ss);
  });

  py::class_<Hyper>(m, "Hyper")
      .def(py::init<>())
      .def_readwrite("K", &Hyper::K)
      .def_readwrite("m", &Hyper::m)
      .def_readwrite("d1", &Hyper::d1)
      .def_readwrite("dP", &Hyper::dP)
      .def_readwrite("dR", &Hyper::dR)
      .def_readwrite("S1", &Hyper::S1)
      .def_readwrite("S2", &Hyper::S2)
      .def_readwrite("H", &Hyper::H)
      .def_readwrite("lambda1", &Hyper::lambda1)
      .def_readwrite("lambda2", &Hyper::lambda2)
      .def_readwrite("lr", &Hyper::lr)
      .def_readwrite("rho", &Hyper::rho)
      .def_readwrite("eps", &Hyper::eps)
      .def_readwrite("steps", &Hyper::steps)
      .def_readwrite("variant", &Hyper::variant)
      .def_readwrite("init", &Hyper::init)
      .def("validate", &Hyper::validate);

  py::class_<LearningCurve>(m, "LearningCurve")
      .def_readonly("steps", &LearningCurve::steps)
      .def_readonly("bin_means", &LearningCurve::bin_means)
      .def_property_readonly_static("BIN_WIDTH",
                                    [](py::object) { return LearningCurve::kBinWidth; });

  py::class_<RolloutReport>(m, "RolloutReport")
      .def_readonly("split", &RolloutReport::split)
      .def_readonly("n_series", &RolloutReport::n_series)
      .def_readonly("horizon", &RolloutReport::horizon)
      .def_readonly("mean_cumulative", &RolloutReport::mean_cumulative)
      .def_readonly("std_cumulative", &RolloutReport::std_cumulative);

  py::class_<TrainedModel>(m, "TrainedModel")
      .def_readonly("kind", &TrainedModel::kind)
      .def_readonly("curve", &TrainedModel::curve)
      .def("checkpoint_json", &TrainedModel::checkpoint_json)
      .def(
          "predict",
          [](const TrainedModel& tm, const py::array_t<double>& x, int action) {
            return array_from_tensor(tm.predictor()->predict(tensor_from_array(x), action));
          },
          py::arg("x"), py::arg("action") = -1);

  m.def(
      "train_model",
      [](const std::string& kind, const Hyper& hyper, const EnvSpec& env, std::uint64_t seed,
         int hidden, int channels, const std::vector<Episode>& dataset) {
        TrainSpec ts;
        ts.kind = kind;
        ts.hyper = hyper;
        ts.hidden = hidden;
        ts.channels = channels;
        if (!dataset.empty()) ts.dataset = &dataset;
        return train_model(ts, env, seed);
      },
      py::arg("kind"), py::arg("hyper"), py::arg("env"), py::arg("seed") = 0,
      py::arg("hidden") = 128, py::arg("channels") = 16,
      py::arg("dataset") = std::vector<Episode>{});
  m.def("checkpoint_from_json", &checkpoint_from_json, py::arg("text"));

  m.def(
      "compound_rollout",
      [](const TrainedModel& tm, const EnvSpec& env, Split split, int n_rollouts, int horizon,
         std::uint64_t seed) {
        Rng rng(Rng::derive(seed, eval_stream(split)));
        return compound_rollout(*tm.predictor(), env, split, n_rollouts, horizon, rng);
      },
      py::arg("model"), py::arg("env"), py::arg("split"), py::arg("n_rollouts") = 100,
      py::arg("horizon") = 8, py::arg("seed") = 0);
  m.def("aggregate_reports", &aggregate_reports, py::arg("per_seed"));

  py::class_<EmbeddingReport>(m, "EmbeddingReport")
      .def_readonly("object_names", &EmbeddingReport::object_names)
      .def_readonly("positions", &EmbeddingReport::positions)
      .def_readonly("points", &EmbeddingReport::points)
      .def_readonly("labels", &EmbeddingReport::labels)
      .def_readonly("silhouette", &EmbeddingReport::silhouette);

  m.def(
      "embedding_report",
      [](const TrainedModel& tm, const EnvSpec& env) {
        if (!tm.nid) throw ConfigError("embeddings need a nid model, got " + tm.kind);
        return embedding_report(*tm.nid, env);
      },
      py::arg("model"), py::arg("env"));
  m.def("embedding_to_json", &embedding_to_json, py::arg("report"));
  m.def("cluster_labels", &cluster_labels, py::arg("env"));
  m.def("silhouette", &silhouette, py::arg("points"), py::arg("labels"));

  py::class_<GradSweepResult>(m, "GradSweepResult")
      .def_readonly("n_configs", &GradSweepResult::n_configs)
      .def_readonly("max_rel_error", &GradSweepResult::max_rel_error);
  m.def("gradient_sweep", &gradient_sweep, py::arg("n_configs"), py::arg("seed"),
        py::arg("h") = 1e-5);

  m.def(
      "canonical_config",
      [](const std::string& text) { return config_to_json(config_from_json(text)); },
      py::arg("text"));
  m.def("render_state", &render_state, py::arg("env"), py::arg("state"));
  m.def(
      "render_distribution",
      [](const EnvSpec& env, const py::array_t<double>& x) {
        return render_distribution(env, tensor_from_array(x));
      },
      py::arg("env"), py::arg("x"));
  m.def(
      "run_command",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        const int code = run_command(args, out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Full command line; returns (exit_code, stdout, stderr)");

  m.attr("STREAM_INIT") = streams::kInit;
  m.attr("STREAM_DATA") = streams::kData;
  m.attr("STREAM_EVAL_TRAIN") = streams::kEvalTrain;
  m.attr("STREAM_EVAL_TEST") = streams::kEvalTest;
}
