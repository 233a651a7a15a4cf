#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>
#include <vector>

#include "vgsil/error.hpp"
#include "vgsil/io.hpp"

namespace py = pybind11;
using namespace vgsil;
using io::json;

namespace {

json parse(const std::string& text) {
  try {
    return text.empty() ? json::object() : json::parse(text);
  } catch (const json::exception& e) {
    throw Error(Errc::invalid_config, e.what());
  }
}

std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

std::string gen_demo_json(const std::string& config) {
  return io::to_json(gen_demo(io::demo_config_from_json(parse(config)))).dump();
}

std::string perturb_json(const std::string& demo, const std::string& kind, double magnitude, std::uint64_t seed) {
  const PerturbationSetting s{perturbation_kind_from_string(kind), magnitude};
  return io::to_json(apply_perturbation(io::demo_from_json(parse(demo)), s, seed)).dump();
}

std::string train_json(const std::string& demo, const std::string& kind, const std::string& config) {
  const DemoSequence d = io::demo_from_json(parse(demo));
  const KernelKind k = kind.empty() ? d.ground_truth.kind : kernel_kind_from_string(kind);
  TrainedKernel trained;
  {
    py::gil_scoped_release release;
    trained = train(d, k, io::train_config_from_json(parse(config)));
  }
  return io::to_json(trained).dump();
}

std::string evaluate_json(const std::string& demo, const std::string& model) {
  return io::to_json(evaluate(io::demo_from_json(parse(demo)), io::trained_kernel_from_json(parse(model)))).dump();
}

std::string infer_json(const std::string& demo, int frame, const std::string& model) {
  const DemoSequence d = io::demo_from_json(parse(demo));
  if (frame < 0 || frame >= static_cast<int>(d.frames.size()))
    throw Error(Errc::invalid_config, "frame index out of range");
  const Inference r = infer(d.frames[static_cast<std::size_t>(frame)], io::trained_kernel_from_json(parse(model)));
  return json{{"winner_ids", r.winner_ids},
              {"g", to_vector(r.g)},
              {"error", to_vector(r.error.values)},
              {"error_norm", r.error.norm()},
              {"low_confidence", r.low_confidence},
              {"candidate_ids", r.candidate_ids}}
      .dump();
}

std::string closed_loop_json(const std::string& model, const std::string& world, const std::string& servo) {
  const TrainedKernel k = io::trained_kernel_from_json(parse(model));
  DemoConfig dc = io::demo_config_from_json(parse(world));
  dc.kernel = k.kind;
  const ServoConfig sc = io::servo_config_from_json(parse(servo));
  const ServoScene scene = make_servo_scene(dc);
  Trajectory t;
  {
    py::gil_scoped_release release;
    t = closed_loop(scene, k, sc);
  }
  json q = json::array();
  for (const auto& x : t.q) q.push_back(to_vector(x));
  return json{{"mode", std::string(to_string(t.mode))},
              {"q0", to_vector(t.q0)},
              {"initial_error", t.initial_error},
              {"q", q},
              {"error_norm", t.error_norm},
              {"winners", t.winners},
              {"converged", t.converged},
              {"max_secant_residual", t.max_secant_residual},
              {"ground_truth", scene.ground_truth.feature_ids}}
      .dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Geometric skill kernels learned from synthetic demonstrations";

  py::register_exception<Error>(m, "VgsilError", PyExc_ValueError);

  m.def("gen_demo", &gen_demo_json, py::arg("config"));
  m.def("apply_perturbation", &perturb_json, py::arg("demo"), py::arg("kind"), py::arg("magnitude"),
        py::arg("seed"));
  m.def("train", &train_json, py::arg("demo"), py::arg("kind"), py::arg("config"));
  m.def("evaluate", &evaluate_json, py::arg("demo"), py::arg("model"));
  m.def("infer", &infer_json, py::arg("demo"), py::arg("frame"), py::arg("model"));
  m.def("closed_loop", &closed_loop_json, py::arg("model"), py::arg("world"), py::arg("servo"));

  m.def(
      "accuracy",
      [](const std::vector<std::vector<int>>& winners, const std::vector<int>& ground_truth) {
        return accuracy(winners, ground_truth);
      },
      py::arg("winners"), py::arg("ground_truth"));
  m.def(
      "autocorr", [](const std::vector<double>& s, int k) { return autocorr(s, k); }, py::arg("series"),
      py::arg("k"));
  m.def(
      "con_acc", [](const std::vector<double>& s, int k) { return con_acc(s, k); }, py::arg("error_norms"),
      py::arg("k") = 2);
  m.def(
      "quality_score",
      [](const std::vector<double>& norms, double lambda_dec, double lambda_smooth) {
        return quality_score(std::span<const double>(norms), lambda_dec, lambda_smooth);
      },
      py::arg("norms"), py::arg("lambda_dec") = 1.0, py::arg("lambda_smooth") = 1.0);
  m.def(
      "select_out",
      [](const std::vector<double>& b) {
        const Selection s = select_out(b);
        return py::make_tuple(to_vector(s.g), s.winner);
      },
      py::arg("scores"));
}
