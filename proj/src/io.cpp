#include "vgsil/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "vgsil/error.hpp"

namespace vgsil::io {

namespace {

json vec_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Eigen::VectorXd vec_from(const json& a) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) v(static_cast<Eigen::Index>(i)) = a[i].get<double>();
  return v;
}

template <typename F>
auto guarded(const char* what, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw Error(Errc::io, std::string("malformed ") + what + ": " + e.what());
  }
}

void check_keys(const json& j, std::initializer_list<std::string_view> allowed, const char* what) {
  if (!j.is_object()) throw Error(Errc::invalid_config, std::string(what) + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw Error(Errc::invalid_config, std::string("unknown ") + what + " key '" + key + "'");
    }
  }
}

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
  return os.str();
}

std::string join_ids(const std::vector<int>& ids) {
  std::string s;
  for (std::size_t i = 0; i < ids.size(); ++i) s += (i ? ";" : "") + std::to_string(ids[i]);
  return s;
}

}  // namespace

json to_json(const CameraModel& cam) {
  json r = json::array();
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) r.push_back(cam.rotation(i, k));
  return {{"f", cam.f}, {"cu", cam.cu}, {"cv", cam.cv}, {"width", cam.width}, {"height", cam.height},
          {"rotation", r}, {"translation", vec_json(cam.translation)}};
}

CameraModel camera_from_json(const json& j) {
  return guarded("camera", [&] {
    CameraModel cam;
    cam.f = j.at("f").get<double>();
    cam.cu = j.at("cu").get<double>();
    cam.cv = j.at("cv").get<double>();
    cam.width = j.value("width", cam.width);
    cam.height = j.value("height", cam.height);
    const auto& r = j.at("rotation");
    for (int i = 0; i < 3; ++i)
      for (int k = 0; k < 3; ++k) cam.rotation(i, k) = r.at(static_cast<std::size_t>(3 * i + k)).get<double>();
    cam.translation = vec_from(j.at("translation"));
    return cam;
  });
}

json to_json(const DemoConfig& c) {
  json j = {{"n_frames", c.n_frames},
            {"n_distractors", c.n_distractors},
            {"kernel", std::string(to_string(c.kernel))},
            {"approach_rate", c.approach_rate},
            {"noise_px", c.noise_px},
            {"initial_error_px", c.initial_error_px},
            {"descriptor_dim", c.descriptor_dim},
            {"descriptor_jitter", c.descriptor_jitter},
            {"distractor_step_px", c.distractor_step_px},
            {"distractor_box_px", c.distractor_box_px},
            {"seed", c.seed}};
  j["appearance_seed"] = c.effective_appearance_seed();
  return j;
}

DemoConfig demo_config_from_json(const json& j) {
  check_keys(j,
             {"n_frames", "n_distractors", "kernel", "approach_rate", "noise_px", "initial_error_px",
              "descriptor_dim", "descriptor_jitter", "distractor_step_px", "distractor_box_px", "seed",
              "appearance_seed"},
             "demo config");
  return guarded("demo config", [&] {
    DemoConfig c;
    c.n_frames = j.value("n_frames", c.n_frames);
    c.n_distractors = j.value("n_distractors", c.n_distractors);
    c.kernel = kernel_kind_from_string(j.value("kernel", std::string("p2p")));
    c.approach_rate = j.value("approach_rate", c.approach_rate);
    c.noise_px = j.value("noise_px", c.noise_px);
    c.initial_error_px = j.value("initial_error_px", c.initial_error_px);
    c.descriptor_dim = j.value("descriptor_dim", c.descriptor_dim);
    c.descriptor_jitter = j.value("descriptor_jitter", c.descriptor_jitter);
    c.distractor_step_px = j.value("distractor_step_px", c.distractor_step_px);
    c.distractor_box_px = j.value("distractor_box_px", c.distractor_box_px);
    c.seed = j.value("seed", c.seed);
    if (j.contains("appearance_seed")) c.appearance_seed = j.at("appearance_seed").get<std::uint64_t>();
    return c;
  });
}

json to_json(const DemoSequence& demo) {
  json frames = json::array();
  for (const auto& frame : demo.frames) {
    json f = json::array();
    for (const auto& o : frame) {
      f.push_back({{"id", o.id},
                   {"u", o.pixel.u},
                   {"v", o.pixel.v},
                   {"visible", o.visible},
                   {"descriptor", vec_json(o.descriptor)},
                   {"entity", o.entity},
                   {"class", std::string(to_string(o.feature_class))}});
    }
    frames.push_back(std::move(f));
  }
  json features = json::array();
  for (const auto& f : demo.features) {
    features.push_back({{"id", f.id}, {"entity", f.entity},
                        {"class", std::string(to_string(f.feature_class))},
                        {"role", std::string(to_string(f.role))}});
  }
  json world = json::array();
  for (const auto& frame : demo.world) {
    json w = json::array();
    for (const auto& s : frame) {
      w.push_back(json::array({s.position.x(), s.position.y(), s.position.z(), s.noise.u, s.noise.v, s.hidden}));
    }
    world.push_back(std::move(w));
  }
  return {{"camera", to_json(demo.camera)},
          {"seed", demo.seed},
          {"ground_truth", {{"kernel", std::string(to_string(demo.ground_truth.kind))},
                            {"ids", demo.ground_truth.feature_ids}}},
          {"frames", std::move(frames)},
          {"config", to_json(demo.config)},
          {"features", std::move(features)},
          {"world", std::move(world)}};
}

DemoSequence demo_from_json(const json& j) {
  return guarded("demo", [&] {
    DemoSequence demo;
    demo.camera = camera_from_json(j.at("camera"));
    demo.seed = j.at("seed").get<std::uint64_t>();
    demo.config = j.contains("config") ? demo_config_from_json(j.at("config")) : DemoConfig{};
    const auto& gt = j.at("ground_truth");
    demo.ground_truth.kind = kernel_kind_from_string(gt.at("kernel").get<std::string>());
    demo.ground_truth.feature_ids = gt.at("ids").get<std::vector<int>>();
    for (const auto& f : j.at("frames")) {
      Frame frame;
      for (const auto& o : f) {
        FeatureObservation obs;
        obs.id = o.at("id").get<int>();
        obs.entity = o.value("entity", obs.id);
        obs.feature_class = feature_class_from_string(o.value("class", std::string("point")));
        obs.pixel = {o.at("u").get<double>(), o.at("v").get<double>()};
        obs.visible = o.at("visible").get<bool>();
        obs.descriptor = vec_from(o.at("descriptor"));
        frame.push_back(std::move(obs));
      }
      demo.frames.push_back(std::move(frame));
    }
    if (j.contains("features")) {
      for (const auto& f : j.at("features")) {
        demo.features.push_back({f.at("id").get<int>(), f.at("entity").get<int>(),
                                 feature_class_from_string(f.at("class").get<std::string>()),
                                 feature_role_from_string(f.at("role").get<std::string>())});
      }
    }
    if (j.contains("world")) {
      for (const auto& w : j.at("world")) {
        std::vector<WorldSample> frame;
        for (const auto& s : w) {
          frame.push_back({{s.at(0).get<double>(), s.at(1).get<double>(), s.at(2).get<double>()},
                           {s.at(3).get<double>(), s.at(4).get<double>()},
                           s.at(5).get<bool>()});
        }
        demo.world.push_back(std::move(frame));
      }
    }
    return demo;
  });
}

json to_json(const NetParams& params) {
  json blocks = json::array();
  for (const auto& [name, m] : params.blocks()) {
    json data = json::array();
    for (Eigen::Index k = 0; k < m->size(); ++k) data.push_back(m->data()[k]);
    blocks.push_back({{"name", std::string(name)}, {"rows", m->rows()}, {"cols", m->cols()}, {"data", std::move(data)}});
  }
  return {{"input_dim", params.input_dim}, {"hidden", params.hidden}, {"blocks", std::move(blocks)}};
}

NetParams params_from_json(const json& j) {
  return guarded("params", [&] {
    NetParams p = NetParams::zeros(j.at("input_dim").get<int>(), j.at("hidden").get<int>());
    const auto& blocks = j.at("blocks");
    for (auto& [name, m] : p.blocks()) {
      const auto it = std::find_if(blocks.begin(), blocks.end(),
                                   [&](const json& b) { return b.at("name").get<std::string>() == name; });
      if (it == blocks.end()) throw Error(Errc::io, "params missing block " + std::string(name));
      if (it->at("rows").get<Eigen::Index>() != m->rows() || it->at("cols").get<Eigen::Index>() != m->cols() ||
          static_cast<Eigen::Index>(it->at("data").size()) != m->size()) {
        throw Error(Errc::io, "params block " + std::string(name) + " has the wrong shape");
      }
      for (Eigen::Index k = 0; k < m->size(); ++k) m->data()[k] = it->at("data")[static_cast<std::size_t>(k)].get<double>();
    }
    return p;
  });
}

json to_json(const TrainConfig& c) {
  return {{"alpha_gcr", c.alpha_gcr}, {"alpha_rsw", c.alpha_rsw}, {"lambda_dec", c.lambda_dec},
          {"lambda_smooth", c.lambda_smooth}, {"lr", c.lr}, {"epochs", c.epochs},
          {"seed", c.seed}, {"alpha_conf", c.alpha_conf}, {"hidden", c.hidden}, {"layers", c.layers},
          {"grad_clip", c.grad_clip}};
}

TrainConfig train_config_from_json(const json& j) {
  check_keys(j,
             {"alpha_gcr", "alpha_rsw", "lambda_dec", "lambda_smooth", "lr", "epochs", "seed", "alpha_conf",
              "hidden", "layers", "grad_clip"},
             "train config");
  return guarded("train config", [&] {
    TrainConfig c;
    c.alpha_gcr = j.value("alpha_gcr", c.alpha_gcr);
    c.alpha_rsw = j.value("alpha_rsw", c.alpha_rsw);
    c.lambda_dec = j.value("lambda_dec", c.lambda_dec);
    c.lambda_smooth = j.value("lambda_smooth", c.lambda_smooth);
    c.lr = j.value("lr", c.lr);
    c.epochs = j.value("epochs", c.epochs);
    c.seed = j.value("seed", c.seed);
    c.alpha_conf = j.value("alpha_conf", c.alpha_conf);
    c.hidden = j.value("hidden", c.hidden);
    c.layers = j.value("layers", c.layers);
    c.grad_clip = j.value("grad_clip", c.grad_clip);
    return c;
  });
}

json to_json(const TrainedKernel& k) {
  json trace = json::array();
  for (const auto& t : k.loss_trace) trace.push_back(json::array({t.loss, t.gcr, t.rsw, t.expected_quality}));
  return {{"kernel_kind", std::string(to_string(k.kind))},
          {"image_width", k.image_width},
          {"image_height", k.image_height},
          {"config", to_json(k.config)},
          {"params", to_json(k.params)},
          {"loss_trace", std::move(trace)}};
}

TrainedKernel trained_kernel_from_json(const json& j) {
  return guarded("trained kernel", [&] {
    TrainedKernel k;
    k.kind = kernel_kind_from_string(j.at("kernel_kind").get<std::string>());
    k.image_width = j.value("image_width", k.image_width);
    k.image_height = j.value("image_height", k.image_height);
    k.config = train_config_from_json(j.at("config"));
    k.params = params_from_json(j.at("params"));
    if (j.contains("loss_trace")) {
      for (const auto& t : j.at("loss_trace")) {
        k.loss_trace.push_back({t.at(0).get<double>(), t.at(1).get<double>(), t.at(2).get<double>(),
                                t.at(3).get<double>()});
      }
    }
    return k;
  });
}

json to_json(const EvalReport& r) {
  json winners = json::array();
  for (const auto& w : r.per_frame_winners) winners.push_back(w);
  json norms = json::array();
  for (double n : r.error_norms) norms.push_back(std::isfinite(n) ? json(n) : json(nullptr));
  return {{"acc", r.acc},
          {"con_acc", r.con_acc ? json(*r.con_acc) : json(nullptr)},
          {"con_acc_defined", r.con_acc.has_value()},
          {"visible_acc", r.visible_accuracy()},
          {"n_frames", r.n_frames},
          {"per_frame_winners", std::move(winners)},
          {"error_norms", std::move(norms)}};
}

json to_json(const ServoConfig& c) {
  return {{"gain", c.gain}, {"tol", c.tol}, {"max_steps", c.max_steps},
          {"mode", std::string(to_string(c.mode))}, {"damping", c.damping}, {"dof", c.dof},
          {"probe_step", c.probe_step}, {"min_update_step", c.min_update_step}, {"seed", c.seed}};
}

ServoConfig servo_config_from_json(const json& j) {
  check_keys(j, {"gain", "tol", "max_steps", "mode", "damping", "dof", "probe_step", "min_update_step", "seed"},
             "servo config");
  return guarded("servo config", [&] {
    ServoConfig c;
    c.gain = j.value("gain", c.gain);
    c.tol = j.value("tol", c.tol);
    c.max_steps = j.value("max_steps", c.max_steps);
    c.mode = servo_mode_from_string(j.value("mode", std::string("ibvs")));
    c.damping = j.value("damping", c.damping);
    c.dof = j.value("dof", c.dof);
    c.probe_step = j.value("probe_step", c.probe_step);
    c.min_update_step = j.value("min_update_step", c.min_update_step);
    c.seed = j.value("seed", c.seed);
    return c;
  });
}

void write_loss_csv(std::ostream& os, const TrainedKernel& k) {
  os << "epoch,loss,gcr_term,rsw_term,expected_quality\n";
  for (std::size_t e = 0; e < k.loss_trace.size(); ++e) {
    const auto& t = k.loss_trace[e];
    os << e << ',' << format_double(t.loss) << ',' << format_double(t.gcr) << ','
       << format_double(t.rsw) << ',' << format_double(t.expected_quality) << '\n';
  }
}

void write_eval_csv(std::ostream& os, const EvalReport& r) {
  os << "frame,winner_ids,error_norm,correct\n";
  for (std::size_t t = 0; t < r.per_frame_winners.size(); ++t) {
    os << t << ',' << join_ids(r.per_frame_winners[t]) << ','
       << (std::isfinite(r.error_norms[t]) ? format_double(r.error_norms[t]) : std::string("nan")) << ','
       << (r.correct[t] ? 1 : 0) << '\n';
  }
}

void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
  const auto dof = traj.q0.size();
  os << "step";
  for (Eigen::Index k = 0; k < dof; ++k) os << ",q" << k;
  os << ",error_norm,mode\n";
  for (std::size_t s = 0; s < traj.q.size(); ++s) {
    os << s + 1;
    for (Eigen::Index k = 0; k < dof; ++k) os << ',' << format_double(traj.q[s](k));
    os << ',' << format_double(traj.error_norm[s]) << ',' << to_string(traj.mode) << '\n';
  }
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(Errc::io, path.string() + ": " + e.what());
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::io, "cannot write " + path.string());
  out << text;
  out.flush();
  if (!out) throw Error(Errc::io, "short write to " + path.string());
}

void write_json_file(const std::filesystem::path& path, const json& j) {
  write_text_file(path, j.dump(1) + "\n");
}

}  // namespace vgsil::io
