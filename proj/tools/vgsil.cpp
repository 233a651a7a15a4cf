#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "vgsil/error.hpp"
#include "vgsil/io.hpp"

namespace fs = std::filesystem;
using namespace vgsil;
using io::json;

namespace {

struct Common {
  std::uint64_t seed = 1;
  std::string out;
};

struct WorldFlags {
  std::string kernel = "p2p";
  int frames = 60;
  int distractors = 8;
  double rate = 0.9;
  double noise = 0.5;
  double initial_error = 50.0;
  int descriptor_dim = 16;
  double jitter = 0.02;
  std::optional<std::uint64_t> appearance_seed;

  DemoConfig config(std::uint64_t seed) const {
    DemoConfig c;
    c.kernel = kernel_kind_from_string(kernel);
    c.n_frames = frames;
    c.n_distractors = distractors;
    c.approach_rate = rate;
    c.noise_px = noise;
    c.initial_error_px = initial_error;
    c.descriptor_dim = descriptor_dim;
    c.descriptor_jitter = jitter;
    c.seed = seed;
    c.appearance_seed = appearance_seed;
    return c;
  }
};

void add_common(CLI::App* cmd, Common& c, const std::string& default_out) {
  c.out = default_out;
  cmd->add_option("--seed", c.seed, "Seed for every random choice of this command")->capture_default_str();
  cmd->add_option("--out", c.out, "Output path")->capture_default_str();
}

void add_world(CLI::App* cmd, WorldFlags& w) {
  cmd->add_option("--kernel", w.kernel, "Kernel kind: p2p, p2l, l2l, p2c")
      ->check(CLI::IsMember({"p2p", "p2l", "l2l", "p2c"}))
      ->capture_default_str();
  cmd->add_option("--frames", w.frames, "Number of frames")->capture_default_str();
  cmd->add_option("--distractors", w.distractors, "Number of distractor entities")->capture_default_str();
  cmd->add_option("--rate", w.rate, "Approach rate of the demonstrated error")->capture_default_str();
  cmd->add_option("--noise", w.noise, "Pixel noise sigma")->capture_default_str();
  cmd->add_option("--initial-error", w.initial_error, "Initial task error in pixels")->capture_default_str();
  cmd->add_option("--descriptor-dim", w.descriptor_dim, "Descriptor length")->capture_default_str();
  cmd->add_option("--jitter", w.jitter, "Per-frame descriptor jitter")->capture_default_str();
  cmd->add_option("--appearance-seed", w.appearance_seed, "Seed for object appearance (defaults to --seed)");
}

/// Resolved options of a subcommand, in config-file syntax.
std::string echo(const CLI::App* cmd) {
  std::istringstream in(cmd->config_to_str(true, false));
  std::string text = "[" + cmd->get_name() + "]\n", line;
  while (std::getline(in, line))
    if (!line.ends_with("=\"\"")) text += line + "\n";
  return text;
}

std::string csv_comment(const std::string& text) {
  std::istringstream in(text);
  std::string line, out;
  while (std::getline(in, line))
    if (!line.empty()) out += "# " + line + "\n";
  return out;
}

void require_input(const std::string& path) {
  if (!fs::is_regular_file(path)) throw Error(Errc::io, "input file not found: " + path);
}

void require_output(const fs::path& path) {
  const fs::path dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
  if (!fs::is_directory(dir)) throw Error(Errc::io, "output directory does not exist: " + dir.string());
}

fs::path with_suffix(const fs::path& out, const std::string& suffix) {
  fs::path p = out;
  p.replace_extension();
  return p.string() + suffix;
}

/// Writes every file or none: contents go to temporaries first, then get
/// renamed into place.
void commit(const std::vector<std::pair<fs::path, std::string>>& files) {
  std::vector<fs::path> temps;
  try {
    for (const auto& [path, text] : files) {
      fs::path tmp = path;
      tmp += ".partial";
      io::write_text_file(tmp, text);
      temps.push_back(tmp);
    }
    for (std::size_t i = 0; i < files.size(); ++i) fs::rename(temps[i], files[i].first);
  } catch (...) {
    std::error_code ec;
    for (const auto& t : temps) fs::remove(t, ec);
    throw;
  }
}

std::string dump(const json& j) { return j.dump(1) + "\n"; }

std::vector<int> sorted_ids(std::vector<int> ids) {
  std::sort(ids.begin(), ids.end());
  return ids;
}

// ---------------------------------------------------------------------------

struct GenArgs {
  Common common;
  WorldFlags world;
  std::string perturb;
  double magnitude = 1.0;
};

void run_gen(const GenArgs& a, const CLI::App* cmd) {
  require_output(a.common.out);
  DemoSequence demo = gen_demo(a.world.config(a.common.seed));
  json perturbation = nullptr;
  if (!a.perturb.empty()) {
    const PerturbationSetting setting{perturbation_kind_from_string(a.perturb), a.magnitude};
    demo = apply_perturbation(demo, setting, a.common.seed);
    perturbation = {{"kind", a.perturb}, {"magnitude", a.magnitude}, {"seed", a.common.seed}};
  }
  json j = io::to_json(demo);
  j["perturbation"] = perturbation;
  j["run"] = echo(cmd);
  commit({{a.common.out, dump(j)}});

  const auto candidates = build_candidates(demo.frames.front(), demo.config.kernel).size();
  std::size_t hidden = 0;
  for (const auto& f : demo.frames)
    for (const auto& o : f) hidden += !o.visible;
  std::cout << "frames: " << demo.frames.size() << "\nfeatures: " << demo.features.size()
            << "\ncandidates: " << candidates << "\ninvisible observations: " << hidden
            << "\nwrote " << a.common.out << "\n";
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  Common common;
  std::string demo;
  std::string kernel;
  std::string loss_csv;
  TrainConfig cfg;
};

void run_train(TrainArgs a, const CLI::App* cmd) {
  require_input(a.demo);
  require_output(a.common.out);
  const fs::path csv_path = a.loss_csv.empty() ? with_suffix(a.common.out, ".loss.csv") : fs::path(a.loss_csv);
  require_output(csv_path);
  a.cfg.seed = a.common.seed;
  a.cfg.validate();

  const DemoSequence demo = io::demo_from_json(io::read_json_file(a.demo));
  const KernelKind kind = a.kernel.empty() ? demo.ground_truth.kind : kernel_kind_from_string(a.kernel);
  const TrainedKernel k = train(demo, kind, a.cfg);

  json j = io::to_json(k);
  j["run"] = echo(cmd);
  std::ostringstream csv;
  csv << csv_comment(echo(cmd));
  io::write_loss_csv(csv, k);
  commit({{a.common.out, dump(j)}, {csv_path, csv.str()}});

  std::cout << "kernel: " << to_string(kind) << "\nepochs: " << a.cfg.epochs
            << "\ninitial loss: " << k.loss_trace.front().loss << "\nfinal loss: " << k.loss_trace.back().loss
            << "\nwrote " << a.common.out << " and " << csv_path.string() << "\n";
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  Common common;
  std::vector<std::string> demos;
  std::string model;
  std::vector<std::string> perturb;
  double magnitude = 1.0;
};

void run_eval(const EvalArgs& a, const CLI::App* cmd) {
  for (const auto& d : a.demos) require_input(d);
  require_input(a.model);
  require_output(a.common.out);
  std::vector<PerturbationSetting> settings;
  for (const auto& p : a.perturb) settings.push_back({perturbation_kind_from_string(p), a.magnitude});

  const TrainedKernel k = io::trained_kernel_from_json(io::read_json_file(a.model));
  struct Item {
    std::string label;
    json entry;
    EvalReport report;
  };
  std::vector<Item> items;
  for (const auto& path : a.demos) {
    const DemoSequence demo = io::demo_from_json(io::read_json_file(path));
    const std::string stem = fs::path(path).stem().string();
    auto add = [&](const DemoSequence& d, const std::string& label, json perturbation) {
      EvalReport r = evaluate(d, k);
      json e = {{"demo", path}, {"perturbation", std::move(perturbation)}, {"report", io::to_json(r)}};
      items.push_back({label, std::move(e), std::move(r)});
    };
    if (settings.empty()) {
      add(demo, stem, nullptr);
    } else {
      for (const auto& s : settings) {
        const std::string name(to_string(s.kind));
        add(apply_perturbation(demo, s, a.common.seed), stem + "." + name,
            {{"kind", name}, {"magnitude", s.magnitude}, {"seed", a.common.seed}});
      }
    }
  }

  json reports = json::array();
  std::vector<std::pair<fs::path, std::string>> files;
  const std::string header = csv_comment(echo(cmd));
  for (const auto& item : items) {
    const fs::path csv_path =
        items.size() == 1 ? with_suffix(a.common.out, ".csv") : with_suffix(a.common.out, "." + item.label + ".csv");
    std::ostringstream csv;
    csv << header;
    io::write_eval_csv(csv, item.report);
    files.emplace_back(csv_path, csv.str());
    json e = item.entry;
    e["frames_csv"] = csv_path.filename().string();
    reports.push_back(std::move(e));
  }
  json j = {{"model", a.model}, {"kernel_kind", std::string(to_string(k.kind))}, {"reports", reports},
            {"run", echo(cmd)}};
  files.insert(files.begin(), {a.common.out, dump(j)});
  commit(files);

  for (const auto& item : items) {
    std::cout << item.label << ": acc " << item.report.acc << "%, visible acc " << item.report.visible_accuracy()
              << "%, con_acc ";
    if (item.report.con_acc) std::cout << *item.report.con_acc; else std::cout << "undefined";
    std::cout << "\n";
  }
  std::cout << "wrote " << a.common.out << "\n";
}

// ---------------------------------------------------------------------------

struct ServoArgs {
  Common common;
  WorldFlags world;
  std::string model;
  std::string mode = "ibvs";
  ServoConfig cfg;
};

void run_servo(ServoArgs a, const CLI::App* cmd) {
  require_input(a.model);
  require_output(a.common.out);
  a.cfg.mode = servo_mode_from_string(a.mode);
  a.cfg.seed = a.common.seed;
  a.cfg.validate();

  const TrainedKernel k = io::trained_kernel_from_json(io::read_json_file(a.model));
  DemoConfig dc = a.world.config(a.common.seed);
  dc.kernel = k.kind;
  const ServoScene scene = make_servo_scene(dc);
  const Trajectory traj = closed_loop(scene, k, a.cfg);

  std::ostringstream csv;
  csv << csv_comment(echo(cmd));
  io::write_trajectory_csv(csv, traj);
  const double final_error = traj.error_norm.empty() ? traj.initial_error : traj.error_norm.back();
  json summary = {{"mode", a.mode},
                  {"converged", traj.converged},
                  {"steps", traj.q.size()},
                  {"initial_error", traj.initial_error},
                  {"final_error", final_error},
                  {"ground_truth", scene.ground_truth.feature_ids},
                  {"config", io::to_json(a.cfg)},
                  {"world", io::to_json(dc)},
                  {"run", echo(cmd)}};
  if (a.cfg.mode == ServoMode::uvs) summary["max_secant_residual"] = traj.max_secant_residual;
  const fs::path summary_path = with_suffix(a.common.out, ".json");
  commit({{a.common.out, csv.str()}, {summary_path, dump(summary)}});

  bool on_task = true;
  for (const auto& w : traj.winners) on_task = on_task && sorted_ids(w) == sorted_ids(scene.ground_truth.feature_ids);
  std::cout << "mode: " << a.mode << "\nsteps: " << traj.q.size() << "\ninitial error: " << traj.initial_error
            << " px\nfinal error: " << final_error << " px\nconverged: " << (traj.converged ? "true" : "false")
            << "\nwinner always ground truth: " << (on_task ? "true" : "false") << "\nwrote " << a.common.out
            << " and " << summary_path.string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Visual geometric skill imitation learning on synthetic demonstrations"};
  app.require_subcommand(1);
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.set_config("--config", "", "Read options from a TOML/INI file; sections name the subcommand");

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen", "Generate a demonstration");
  add_common(gen_cmd, gen.common, "demo.json");
  add_world(gen_cmd, gen.world);
  gen_cmd->add_option("--perturb", gen.perturb, "Perturbation applied after generation")
      ->check(CLI::IsMember({"random_target", "change_camera", "occlusion", "outside_fov", "change_illumination"}));
  gen_cmd->add_option("--magnitude", gen.magnitude, "Perturbation magnitude")->capture_default_str();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train a kernel on a demonstration");
  add_common(train_cmd, tr.common, "kernel.json");
  train_cmd->add_option("--demo", tr.demo, "Demonstration JSON")->required();
  train_cmd->add_option("--kernel", tr.kernel, "Kernel kind (defaults to the demo's)")
      ->check(CLI::IsMember({"p2p", "p2l", "l2l", "p2c"}));
  train_cmd->add_option("--loss-csv", tr.loss_csv, "Loss trace CSV (defaults next to --out)");
  train_cmd->add_option("--alpha-gcr", tr.cfg.alpha_gcr, "Geometry consistency weight")->capture_default_str();
  train_cmd->add_option("--alpha-rsw", tr.cfg.alpha_rsw, "Residual sum of weights weight")->capture_default_str();
  train_cmd->add_option("--lambda-dec", tr.cfg.lambda_dec, "Weight of the decrease term")->capture_default_str();
  train_cmd->add_option("--lambda-smooth", tr.cfg.lambda_smooth, "Weight of the smoothness term")->capture_default_str();
  train_cmd->add_option("--alpha-conf", tr.cfg.alpha_conf, "Demonstrator confidence (softmax temperature)")
      ->capture_default_str();
  train_cmd->add_option("--lr", tr.cfg.lr, "Learning rate")->capture_default_str();
  train_cmd->add_option("--epochs", tr.cfg.epochs, "Full passes over the demonstration")->capture_default_str();
  train_cmd->add_option("--hidden", tr.cfg.hidden, "Hidden size")->capture_default_str();
  train_cmd->add_option("--layers", tr.cfg.layers, "Message-passing rounds")->capture_default_str();
  train_cmd->add_option("--grad-clip", tr.cfg.grad_clip, "Gradient norm ceiling, 0 to disable")->capture_default_str();

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a trained kernel on demonstrations");
  add_common(eval_cmd, ev.common, "report.json");
  eval_cmd->add_option("--demo", ev.demos, "Demonstration JSON files")->required();
  eval_cmd->add_option("--model", ev.model, "Trained kernel JSON")->required();
  eval_cmd->add_option("--perturb", ev.perturb, "Evaluate under each listed perturbation")
      ->check(CLI::IsMember({"random_target", "change_camera", "occlusion", "outside_fov", "change_illumination"}));
  eval_cmd->add_option("--magnitude", ev.magnitude, "Perturbation magnitude")->capture_default_str();

  ServoArgs sv;
  auto* servo_cmd = app.add_subcommand("servo", "Run closed-loop control with a trained kernel");
  add_common(servo_cmd, sv.common, "trajectory.csv");
  add_world(servo_cmd, sv.world);
  servo_cmd->add_option("--model", sv.model, "Trained kernel JSON")->required();
  servo_cmd->add_option("--mode", sv.mode, "ibvs or uvs")->check(CLI::IsMember({"ibvs", "uvs"}))->capture_default_str();
  servo_cmd->add_option("--gain", sv.cfg.gain, "Control gain")->capture_default_str();
  servo_cmd->add_option("--tol", sv.cfg.tol, "Convergence tolerance in pixels")->capture_default_str();
  servo_cmd->add_option("--max-steps", sv.cfg.max_steps, "Step limit")->capture_default_str();
  servo_cmd->add_option("--damping", sv.cfg.damping, "Pseudo-inverse damping")->capture_default_str();
  servo_cmd->add_option("--dof", sv.cfg.dof, "Controlled camera coordinates (2-6)")->capture_default_str();
  servo_cmd->add_option("--probe-step", sv.cfg.probe_step, "Exploratory step for the UVS Jacobian")
      ->capture_default_str();
  servo_cmd->add_option("--min-update-step", sv.cfg.min_update_step, "Shortest step that updates the UVS Jacobian")
      ->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen_cmd) run_gen(gen, gen_cmd);
    if (*train_cmd) run_train(tr, train_cmd);
    if (*eval_cmd) run_eval(ev, eval_cmd);
    if (*servo_cmd) run_servo(sv, servo_cmd);
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.code()) << "): " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
