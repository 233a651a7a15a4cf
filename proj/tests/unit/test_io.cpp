#include <doctest.h>

#include <filesystem>
#include <sstream>

#include "vgsil/error.hpp"
#include "vgsil/io.hpp"

using namespace vgsil;
namespace fs = std::filesystem;

namespace {

std::string first_line(const std::string& s) { return s.substr(0, s.find('\n')); }

}  // namespace

TEST_SUITE("io") {

TEST_CASE("demo round trip") {
  DemoConfig cfg;
  cfg.n_frames = 8;
  cfg.kernel = KernelKind::p2l;
  cfg.n_distractors = 4;
  const auto demo = apply_perturbation(gen_demo(cfg), {PerturbationKind::occlusion, 1.0}, 2);
  const auto j = io::to_json(demo);
  for (const char* key : {"camera", "seed", "ground_truth", "frames"}) CHECK(j.contains(key));
  const auto& obs = j["frames"][0][0];
  for (const char* key : {"id", "u", "v", "visible", "descriptor"}) CHECK(obs.contains(key));
  const auto back = io::demo_from_json(j);
  CHECK(io::to_json(back).dump() == j.dump());
  CHECK(back.frames[3][2].pixel == demo.frames[3][2].pixel);
  CHECK(back.frames[3][2].descriptor == demo.frames[3][2].descriptor);
  CHECK(back.ground_truth.feature_ids == demo.ground_truth.feature_ids);
  CHECK(back.camera.rotation == demo.camera.rotation);

  // The simulator state survives, so perturbing the reloaded demo matches.
  const auto p1 = apply_perturbation(demo, {PerturbationKind::change_camera, 1.0}, 4);
  const auto p2 = apply_perturbation(back, {PerturbationKind::change_camera, 1.0}, 4);
  CHECK(io::to_json(p1).dump() == io::to_json(p2).dump());
}

TEST_CASE("floats keep full precision") {
  DemoConfig cfg;
  cfg.n_frames = 3;
  const auto demo = gen_demo(cfg);
  const auto text = io::to_json(demo).dump();
  const auto back = io::demo_from_json(io::json::parse(text));
  CHECK(back.frames[1][4].pixel.u == demo.frames[1][4].pixel.u);
}

TEST_CASE("parameters and trained kernels round trip") {
  const auto p = NetParams::random(6, 5, 9);
  const auto j = io::to_json(p);
  CHECK(j["blocks"].size() == NetParams::kBlockCount);
  CHECK(io::params_from_json(j) == p);

  TrainConfig tc;
  tc.alpha_gcr = 0.0;
  tc.epochs = 3;
  tc.hidden = 4;
  const auto k = train(gen_demo(DemoConfig{}), KernelKind::p2p, tc);
  const auto kj = io::to_json(k);
  CHECK(kj["config"]["alpha_gcr"] == 0.0);
  const auto back = io::trained_kernel_from_json(kj);
  CHECK(back.params == k.params);
  CHECK(back.kind == k.kind);
  CHECK(back.config.epochs == 3);
  CHECK(back.loss_trace.size() == k.loss_trace.size());
  CHECK(io::to_json(back).dump() == kj.dump());

  auto broken = j;
  broken["blocks"][0]["rows"] = 99;
  CHECK_THROWS_AS(io::params_from_json(broken), Error);
}

TEST_CASE("configs reject unknown keys") {
  auto j = io::to_json(DemoConfig{});
  j["n_franes"] = 3;
  CHECK_THROWS_AS(io::demo_config_from_json(j), Error);
  auto t = io::to_json(TrainConfig{});
  CHECK(io::train_config_from_json(t).epochs == 300);
  t["bogus"] = 1;
  CHECK_THROWS_AS(io::train_config_from_json(t), Error);
}

TEST_CASE("csv headers") {
  TrainedKernel k;
  k.loss_trace.resize(3);
  std::ostringstream loss;
  io::write_loss_csv(loss, k);
  CHECK(first_line(loss.str()) == "epoch,loss,gcr_term,rsw_term,expected_quality");

  EvalReport r;
  r.per_frame_winners = {{1, 2}, {}};
  r.error_norms = {3.5, std::nan("")};
  r.correct = {true, false};
  r.ground_truth_visible = {true, true};
  std::ostringstream eval;
  io::write_eval_csv(eval, r);
  CHECK(first_line(eval.str()) == "frame,winner_ids,error_norm,correct");
  CHECK(eval.str().find("0,1;2,") != std::string::npos);

  Trajectory traj;
  traj.q0 = Eigen::VectorXd::Zero(6);
  traj.q.push_back(Eigen::VectorXd::Ones(6));
  traj.error_norm.push_back(2.0);
  std::ostringstream csv;
  io::write_trajectory_csv(csv, traj);
  CHECK(first_line(csv.str()) == "step,q0,q1,q2,q3,q4,q5,error_norm,mode");
}

TEST_CASE("file helpers") {
  const auto dir = fs::temp_directory_path() / "vgsil_io_test";
  fs::create_directories(dir);
  const auto path = dir / "x.json";
  io::write_json_file(path, io::json{{"a", 1}});
  CHECK(io::read_json_file(path)["a"] == 1);
  try {
    io::read_json_file(dir / "missing.json");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::io);
  }
  io::write_text_file(dir / "bad.json", "{not json");
  CHECK_THROWS_AS(io::read_json_file(dir / "bad.json"), Error);
  CHECK_THROWS_AS(io::write_text_file(dir / "no" / "such" / "dir" / "f.txt", "x"), Error);
  fs::remove_all(dir);
}

}  // TEST_SUITE
