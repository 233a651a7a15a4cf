#include <doctest.h>

#include <Eigen/LU>
#include <algorithm>
#include <cmath>
#include <set>

#include "vgsil/error.hpp"
#include "vgsil/scene_sim.hpp"
#include "vgsil/trainer.hpp"

using namespace vgsil;

namespace {

const FeatureObservation& find_id(const Frame& frame, int id) {
  return *std::find_if(frame.begin(), frame.end(), [&](const auto& o) { return o.id == id; });
}

double gt_norm(const DemoSequence& demo, std::size_t t) {
  const auto& ids = demo.ground_truth.feature_ids;
  return p2p_error(find_id(demo.frames[t], ids[0]).pixel, find_id(demo.frames[t], ids[1]).pixel).norm();
}

bool bit_identical(const DemoSequence& a, const DemoSequence& b) {
  if (a.frames.size() != b.frames.size() || a.ground_truth.feature_ids != b.ground_truth.feature_ids) {
    return false;
  }
  for (std::size_t t = 0; t < a.frames.size(); ++t) {
    for (std::size_t i = 0; i < a.frames[t].size(); ++i) {
      const auto& x = a.frames[t][i];
      const auto& y = b.frames[t][i];
      if (x.id != y.id || x.visible != y.visible || !(x.pixel == y.pixel) || x.descriptor != y.descriptor) {
        return false;
      }
    }
  }
  return true;
}

}  // namespace

TEST_SUITE("scene_sim") {

TEST_CASE("projection") {
  CameraModel cam;
  cam.f = 100.0;
  auto p = project({0, 0, 2}, cam);
  CHECK(p.u == doctest::Approx(320.0));
  CHECK(p.v == doctest::Approx(240.0));
  p = project({0.2, -0.1, 1}, cam);
  CHECK(p.u == doctest::Approx(340.0));
  CHECK(p.v == doctest::Approx(230.0));
  try {
    project({0, 0, -1}, cam);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::behind_camera);
  }
}

TEST_CASE("camera moves keep a proper rotation") {
  CameraModel cam;
  for (int i = 0; i < 20; ++i) {
    cam = move_camera(cam, {0.01 * i, -0.02, 0.03}, {0.05, -0.03 * i, 0.02});
    CHECK((cam.rotation * cam.rotation.transpose() - Eigen::Matrix3d::Identity()).norm() < 1e-9);
    CHECK(cam.rotation.determinant() == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("collinear world points stay collinear") {
  Rng rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  CameraModel cam = move_camera(CameraModel{}, {0.1, 0.05, -0.2}, {0.05, 0.1, -0.03});
  for (int i = 0; i < 500; ++i) {
    const Eigen::Vector3d a(u(rng), u(rng), 3.0 + u(rng));
    const Eigen::Vector3d d(u(rng), u(rng), 0.5 * u(rng));
    const Eigen::Vector3d b = a + d;
    const Eigen::Vector3d c = a + 0.3 * u(rng) * d + d * 1.7;
    const auto pa = project(a, cam);
    const auto pb = project(b, cam);
    const auto pc = project(c, cam);
    if (std::hypot(pa.u - pb.u, pa.v - pb.v) < 1e-3) continue;
    CHECK(std::abs(p2l_error(pc, line_through(pa, pb)).values[0]) < 1e-6);
  }
}

TEST_CASE("default demo layout") {
  const auto demo = gen_demo(DemoConfig{});
  CHECK(demo.frames.size() == 60);
  CHECK(demo.frames[0].size() == 10);
  CHECK(demo.ground_truth.feature_ids.size() == 2);
  CHECK(build_candidates(demo.frames[0], KernelKind::p2p).size() == 45);
  std::set<int> ids;
  for (const auto& o : demo.frames[0]) {
    ids.insert(o.id);
    CHECK(o.descriptor.size() == 16);
  }
  CHECK(ids.size() == 10);
  for (int id : demo.ground_truth.feature_ids) CHECK(find_id(demo.frames[0], id).visible);
  for (const auto& frame : demo.frames) {
    for (std::size_t i = 0; i < frame.size(); ++i) CHECK(frame[i].id == demo.frames[0][i].id);
  }
}

TEST_CASE("noise-free demo decays geometrically") {
  DemoConfig cfg;
  cfg.noise_px = 0.0;
  for (std::uint64_t seed : {1, 2, 3}) {
    cfg.seed = seed;
    const auto demo = gen_demo(cfg);
    CHECK(gt_norm(demo, 0) == doctest::Approx(50.0).epsilon(1e-9));
    CHECK(gt_norm(demo, 10) == doctest::Approx(50.0 * std::pow(0.9, 10)).epsilon(1e-9));
    CHECK(gt_norm(demo, 10) == doctest::Approx(17.43).epsilon(1e-3));
    for (std::size_t t = 1; t < demo.frames.size(); ++t) CHECK(gt_norm(demo, t) < gt_norm(demo, t - 1));
  }
}

TEST_CASE("ground truth is the only monotone candidate without noise") {
  DemoConfig cfg;
  cfg.noise_px = 0.0;
  cfg.n_frames = 30;
  for (auto kind : {KernelKind::p2p, KernelKind::p2l, KernelKind::l2l, KernelKind::p2c}) {
    cfg.kernel = kind;
    cfg.n_distractors = kind == KernelKind::p2p ? 8 : 4;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      cfg.seed = seed;
      const auto demo = gen_demo(cfg);
      auto cands = build_candidates(demo.frames[0], kind);
      int monotone = 0;
      bool gt_monotone = false;
      for (const auto& c : cands) {
        std::vector<double> norms;
        for (const auto& frame : demo.frames) {
          auto obs = observe(c, kind, frame, demo.camera.width, demo.camera.height);
          REQUIRE(obs.has_value());
          norms.push_back(obs->error.norm());
        }
        bool dec = true;
        for (std::size_t t = 1; t < norms.size(); ++t) dec = dec && norms[t] < norms[t - 1];
        if (dec) {
          ++monotone;
          gt_monotone = c.feature_ids == demo.ground_truth.feature_ids;
        }
      }
      CHECK(monotone == 1);
      CHECK(gt_monotone);
    }
  }
}

TEST_CASE("same seed gives identical demos") {
  DemoConfig cfg;
  cfg.seed = 42;
  const auto a = gen_demo(cfg);
  const auto b = gen_demo(cfg);
  CHECK(bit_identical(a, b));
  cfg.seed = 43;
  CHECK_FALSE(bit_identical(a, gen_demo(cfg)));
  const auto pa = apply_perturbation(a, {PerturbationKind::occlusion, 1.0}, 9);
  const auto pb = apply_perturbation(b, {PerturbationKind::occlusion, 1.0}, 9);
  CHECK(bit_identical(pa, pb));
}

TEST_CASE("entity counts per kernel") {
  DemoConfig cfg;
  cfg.n_distractors = 6;
  cfg.kernel = KernelKind::p2l;
  auto demo = gen_demo(cfg);
  CHECK(demo.ground_truth.feature_ids.size() == 3);
  CHECK(build_candidates(demo.frames[0], KernelKind::p2l).size() == 16);  // 4 points x 4 segments
  cfg.kernel = KernelKind::l2l;
  cfg.n_distractors = 2;
  demo = gen_demo(cfg);
  CHECK(demo.ground_truth.feature_ids.size() == 4);
  CHECK(build_candidates(demo.frames[0], KernelKind::l2l).size() == 6);
  cfg.kernel = KernelKind::p2c;
  cfg.n_distractors = 4;
  demo = gen_demo(cfg);
  CHECK(demo.ground_truth.feature_ids.size() == 6);
}

TEST_CASE("invalid configs") {
  DemoConfig cfg;
  cfg.n_frames = 1;
  CHECK_THROWS_AS(gen_demo(cfg), Error);
  cfg = {};
  cfg.approach_rate = 1.0;
  CHECK_THROWS_AS(gen_demo(cfg), Error);
  cfg = {};
  cfg.noise_px = -1.0;
  CHECK_THROWS_AS(gen_demo(cfg), Error);
  CHECK_THROWS_AS(apply_perturbation(gen_demo({}), {PerturbationKind::occlusion, -1.0}, 1), Error);
}

TEST_CASE("descriptors") {
  Rng rng(3);
  const auto base = base_descriptor(7, 3, 16);
  CHECK(descriptor_of(base, 0.0, rng) == base);
  CHECK(base != base_descriptor(7, 4, 16));
  CHECK(base == base_descriptor(7, 3, 16));
}

TEST_CASE("nearest-neighbour re-identification at jitter 0.05") {
  const int n_entities = 100;
  std::vector<Eigen::VectorXd> bases;
  for (int id = 0; id < n_entities; ++id) bases.push_back(base_descriptor(99, id, 16));
  Rng rng(17);
  int hits = 0;
  const int trials = 10000;
  for (int k = 0; k < trials; ++k) {
    const int id = k % n_entities;
    const auto d = descriptor_of(bases[static_cast<std::size_t>(id)], 0.05, rng);
    int best = -1;
    double best_dist = 1e300;
    for (int j = 0; j < n_entities; ++j) {
      const double dist = (d - bases[static_cast<std::size_t>(j)]).squaredNorm();
      if (dist < best_dist) best_dist = dist, best = j;
    }
    hits += best == id;
  }
  CHECK(hits >= 0.99 * trials);
}

TEST_CASE("zero magnitude perturbations are identities") {
  const auto demo = gen_demo(DemoConfig{});
  for (auto kind : {PerturbationKind::random_target, PerturbationKind::change_camera, PerturbationKind::occlusion,
                    PerturbationKind::outside_fov, PerturbationKind::change_illumination}) {
    CHECK(bit_identical(demo, apply_perturbation(demo, {kind, 0.0}, 5)));
  }
}

TEST_CASE("occlusion hides a contiguous id range for a window") {
  const auto demo = gen_demo(DemoConfig{});
  const auto occ = apply_perturbation(demo, {PerturbationKind::occlusion, 1.0}, 4);
  int hidden_frames = 0;
  for (const auto& frame : occ.frames) {
    std::vector<int> hidden;
    for (const auto& o : frame) if (!o.visible) hidden.push_back(o.id);
    if (hidden.empty()) continue;
    ++hidden_frames;
    std::sort(hidden.begin(), hidden.end());
    CHECK(hidden.back() - hidden.front() + 1 == static_cast<int>(hidden.size()));
  }
  CHECK(hidden_frames == 10);
}

TEST_CASE("outside field of view hides the ground truth for a window") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto demo = apply_perturbation(gen_demo(DemoConfig{}), {PerturbationKind::outside_fov, 1.0}, seed);
    const int gt = demo.ground_truth.feature_ids[0];
    int invisible = 0;
    for (const auto& frame : demo.frames) invisible += !find_id(frame, gt).visible;
    CHECK(invisible >= 1);
    CHECK(find_id(demo.frames.front(), gt).visible);
    CHECK(find_id(demo.frames.back(), gt).visible);
  }
}

TEST_CASE("camera change preserves incidence") {
  DemoConfig cfg;
  cfg.kernel = KernelKind::p2l;
  cfg.noise_px = 0.0;
  cfg.n_distractors = 4;
  const auto demo = gen_demo(cfg);
  const auto moved = apply_perturbation(demo, {PerturbationKind::change_camera, 1.0}, 8);
  CHECK_FALSE(moved.camera.rotation.isApprox(demo.camera.rotation));
  auto index_of = [&](int id) {
    return static_cast<std::size_t>(std::find_if(moved.features.begin(), moved.features.end(),
                                                 [&](const auto& f) { return f.id == id; }) -
                                    moved.features.begin());
  };
  const auto& ids = moved.ground_truth.feature_ids;
  for (const auto& world : moved.world) {
    const Eigen::Vector3d a = world[index_of(ids[1])].position;
    const Eigen::Vector3d b = world[index_of(ids[2])].position;
    const auto line = line_through(project(a, moved.camera), project(b, moved.camera));
    const auto mid = project(0.35 * a + 0.65 * b, moved.camera);
    CHECK(std::abs(p2l_error(mid, line).values[0]) < 1e-6);
  }
}

TEST_CASE("random target keeps the task in view and moves it") {
  const auto demo = gen_demo(DemoConfig{});
  const auto moved = apply_perturbation(demo, {PerturbationKind::random_target, 1.0}, 12);
  const int target = moved.ground_truth.feature_ids[1];
  const auto& a = find_id(demo.frames[0], target).pixel;
  const auto& b = find_id(moved.frames[0], target).pixel;
  CHECK(std::hypot(a.u - b.u, a.v - b.v) > 1.0);
  for (const auto& frame : moved.frames) {
    for (int id : moved.ground_truth.feature_ids) CHECK(find_id(frame, id).visible);
  }
}

TEST_CASE("illumination change perturbs descriptors only") {
  const auto demo = gen_demo(DemoConfig{});
  const auto lit = apply_perturbation(demo, {PerturbationKind::change_illumination, 0.1}, 3);
  CHECK(lit.frames[0][0].pixel == demo.frames[0][0].pixel);
  const double diff = (lit.frames[0][0].descriptor - demo.frames[0][0].descriptor).norm();
  CHECK(diff > 0.0);
  CHECK(diff < 1.0);
}

TEST_CASE("servo scene attaches the tool to the camera") {
  const auto scene = make_servo_scene(DemoConfig{});
  const auto moved = move_camera(scene.camera, {0.02, 0.0, 0.0}, {0.0, 0.0, 0.0});
  Rng r1(1), r2(1);
  ServoScene quiet = scene;
  quiet.config.noise_px = 0.0;
  const auto f0 = render(quiet, scene.camera, r1);
  const auto f1 = render(quiet, moved, r2);
  for (std::size_t i = 0; i < scene.features.size(); ++i) {
    const double du = f1[i].pixel.u - f0[i].pixel.u;
    if (scene.camera_attached(i)) {
      CHECK(du == doctest::Approx(0.0));
    } else {
      CHECK(du < 0.0);
    }
  }
}

}  // TEST_SUITE
