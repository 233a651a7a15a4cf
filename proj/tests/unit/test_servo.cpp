#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <set>

#include "vgsil/error.hpp"
#include "vgsil/servo.hpp"

using namespace vgsil;

namespace {

const TrainedKernel& sorting_kernel() {
  static const TrainedKernel kernel = [] {
    TrainConfig cfg;
    cfg.epochs = 80;
    cfg.hidden = 16;
    return train(gen_demo(DemoConfig{}), KernelKind::p2p, cfg);
  }();
  return kernel;
}

ServoScene quiet_scene(std::uint64_t seed) {
  DemoConfig cfg;
  cfg.seed = seed;
  cfg.noise_px = 0.0;
  return make_servo_scene(cfg);
}

Eigen::VectorXd true_error(const ServoScene& scene, const CameraModel& cam) {
  Rng rng(0);
  const Frame f = render(scene, cam, rng);
  auto at = [&](int id) {
    for (const auto& o : f)
      if (o.id == id) return o.pixel;
    return ImagePoint{};
  };
  return p2p_error(at(scene.ground_truth.feature_ids[0]), at(scene.ground_truth.feature_ids[1])).values;
}

}  // namespace

TEST_SUITE("servo") {

TEST_CASE("interaction matrix") {
  auto l = interaction_matrix_point(0, 0, 1);
  Eigen::Matrix<double, 2, 6> expect;
  expect << -1, 0, 0, 0, -1, 0, 0, -1, 0, 1, 0, 0;
  CHECK(l.isApprox(expect));
  const auto l2 = interaction_matrix_point(0, 0, 2);
  CHECK(l2.leftCols(3).isApprox(0.5 * l.leftCols(3)));
  CHECK(l2.rightCols(3).isApprox(l.rightCols(3)));
  const auto far = interaction_matrix_point(0.3, -0.2, 1e12);
  CHECK(far.leftCols(3).norm() < 1e-11);
  CHECK_THROWS_AS(interaction_matrix_point(0, 0, 0), Error);
}

TEST_CASE("control step") {
  ServoConfig cfg;
  cfg.gain = 1.0;
  const auto dq = control_step(Eigen::Vector2d(1, 0), Eigen::Matrix2d::Identity(), cfg);
  CHECK(dq.isApprox(Eigen::Vector2d(-1, 0)));
  CHECK(control_step(Eigen::Vector2d::Zero(), Eigen::Matrix2d::Identity(), cfg).isZero());
  Eigen::Matrix2d singular;
  singular << 1, 2, 2, 4;
  try {
    control_step(Eigen::Vector2d(1, 1), singular, cfg);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::singular_system);
  }
  cfg.damping = 1e-6;
  CHECK(control_step(Eigen::Vector2d(1, 1), singular, cfg).allFinite());
  CHECK_THROWS_AS(control_step(Eigen::Vector3d(1, 1, 1), Eigen::Matrix2d::Identity(), cfg), Error);
}

TEST_CASE("damped pseudo-inverse approaches the least-squares step") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::MatrixXd l(2 + trial % 3, 6);
    for (Eigen::Index i = 0; i < l.size(); ++i) l.data()[i] = n(rng);
    Eigen::VectorXd e(l.rows());
    for (Eigen::Index i = 0; i < e.size(); ++i) e(i) = n(rng);
    const Eigen::VectorXd direct = l.completeOrthogonalDecomposition().solve(e);
    const Eigen::VectorXd damped = pinv_damped(l, 1e-12) * e;
    CHECK((damped - direct).norm() < 1e-6 * (1.0 + direct.norm()));
  }
}

TEST_CASE("Broyden update") {
  auto j = broyden_update(Eigen::Matrix2d::Identity(), Eigen::Vector2d(1, 0), Eigen::Vector2d(2, 0));
  Eigen::Matrix2d expect;
  expect << 2, 0, 0, 1;
  CHECK(j.isApprox(expect));
  const Eigen::Matrix2d j0 = (Eigen::Matrix2d() << 1, 2, 3, 4).finished();
  const Eigen::Vector2d dq(0.3, -0.7);
  CHECK(broyden_update(j0, dq, j0 * dq).isApprox(j0));
  try {
    broyden_update(j0, Eigen::Vector2d::Zero(), Eigen::Vector2d(1, 1));
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::zero_step);
  }
}

TEST_CASE("secant condition holds after every update") {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd j = Eigen::MatrixXd::Identity(2, 6);
  for (int k = 0; k < 1000; ++k) {
    Eigen::VectorXd dq(6), de(2);
    for (int i = 0; i < 6; ++i) dq(i) = n(rng);
    for (int i = 0; i < 2; ++i) de(i) = n(rng);
    j = broyden_update(j, dq, de);
    CHECK((j * dq - de).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("UVS on a linear plant") {
  ServoConfig cfg;
  cfg.gain = 0.5;
  cfg.tol = 1e-6;
  cfg.max_steps = 100;
  cfg.dof = 2;
  const Plant plant = [](const Eigen::VectorXd& q) { return Eigen::VectorXd(2.0 * q - Eigen::Vector2d(2, 2)); };
  const auto traj = uvs_loop(plant, Eigen::Vector2d::Zero(), Eigen::Matrix2d::Identity(), cfg);
  CHECK(traj.converged);
  CHECK(traj.error_norm.back() < 1e-6);
  CHECK(traj.q.back().isApprox(Eigen::Vector2d(1, 1), 1e-6));
  CHECK(traj.max_secant_residual < 1e-12);
  CHECK(traj.q.size() <= 100);
}

TEST_CASE("steps shorter than min_update_step keep the Jacobian") {
  ServoConfig cfg;
  cfg.gain = 0.5;
  cfg.tol = 1e-6;
  cfg.dof = 2;
  cfg.min_update_step = 1e3;
  const Plant plant = [](const Eigen::VectorXd& q) { return Eigen::VectorXd(2.0 * q - Eigen::Vector2d(2, 2)); };
  // Fixed J = 2I halves the error each step.
  const auto traj = uvs_loop(plant, Eigen::Vector2d::Zero(), 2.0 * Eigen::Matrix2d::Identity(), cfg);
  CHECK(traj.converged);
  CHECK(traj.max_secant_residual == 0.0);
  for (std::size_t t = 0; t < traj.error_norm.size(); ++t) {
    const double prev = t == 0 ? traj.initial_error : traj.error_norm[t - 1];
    CHECK(traj.error_norm[t] == doctest::Approx(0.5 * prev).epsilon(1e-12));
  }
}

TEST_CASE("IBVS with the exact model decreases the error") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto scene = quiet_scene(seed);
    ServoConfig cfg;
    CameraModel cam = scene.camera;
    Eigen::VectorXd e = true_error(scene, cam);
    CHECK(e.norm() == doctest::Approx(50.0).epsilon(1e-6));
    int steps = 0;
    while (e.norm() >= 1.0 && steps < 200) {
      const auto j = ibvs_jacobian(scene, cam, scene.ground_truth.feature_ids);
      const Eigen::VectorXd dq = control_step(e, j, cfg);
      cam = move_camera(cam, dq.head<3>(), dq.tail<3>());
      const Eigen::VectorXd next = true_error(scene, cam);
      CHECK(next.norm() < e.norm());
      e = next;
      ++steps;
    }
    CHECK(e.norm() < 1.0);
  }
}

TEST_CASE("IBVS Jacobian matches finite differences of the rendered error") {
  const auto scene = quiet_scene(3);
  const auto j = ibvs_jacobian(scene, scene.camera, scene.ground_truth.feature_ids);
  const double h = 1e-7;
  for (int k = 0; k < 6; ++k) {
    Eigen::VectorXd tw = Eigen::VectorXd::Zero(6);
    tw(k) = h;
    const auto up = true_error(scene, move_camera(scene.camera, tw.head<3>(), tw.tail<3>()));
    const auto dn = true_error(scene, move_camera(scene.camera, -tw.head<3>(), -tw.tail<3>()));
    const Eigen::VectorXd fd = (up - dn) / (2 * h);
    CHECK((fd - j.col(k)).norm() < 1e-4 * (1.0 + j.col(k).norm()));
  }
}

TEST_CASE("closed loop with the learned kernel") {
  const auto& k = sorting_kernel();
  const auto scene = quiet_scene(1);
  ServoConfig cfg;
  const auto ibvs = closed_loop(scene, k, cfg);
  CHECK(ibvs.converged);
  CHECK(ibvs.error_norm.back() < 1.0);
  CHECK(ibvs.error_norm.front() < ibvs.initial_error);
  for (std::size_t t = 1; t < ibvs.error_norm.size(); ++t) CHECK(ibvs.error_norm[t] < ibvs.error_norm[t - 1]);
  for (const auto& w : ibvs.winners) {
    CHECK(std::set<int>(w.begin(), w.end()) ==
          std::set<int>(scene.ground_truth.feature_ids.begin(), scene.ground_truth.feature_ids.end()));
  }

  cfg.mode = ServoMode::uvs;
  const auto uvs = closed_loop(scene, k, cfg);
  CHECK(uvs.converged);
  CHECK(uvs.error_norm.back() < 1.0);
  CHECK(uvs.max_secant_residual < 1e-9);

  const auto again = closed_loop(scene, k, cfg);
  CHECK(again.error_norm == uvs.error_norm);
}

TEST_CASE("UVS closed loop under pixel noise") {
  const auto& k = sorting_kernel();
  DemoConfig dc;
  dc.noise_px = 0.5;
  const auto scene = make_servo_scene(dc);
  ServoConfig cfg;
  cfg.mode = ServoMode::uvs;
  const auto uvs = closed_loop(scene, k, cfg);
  CHECK(uvs.converged);
  CHECK(uvs.error_norm.back() < cfg.tol);
}

TEST_CASE("closed loop edge cases") {
  const auto& k = sorting_kernel();
  const auto scene = quiet_scene(1);
  for (auto mode : {ServoMode::ibvs, ServoMode::uvs}) {
    ServoConfig cfg;
    cfg.mode = mode;
    cfg.max_steps = 0;
    auto traj = closed_loop(scene, k, cfg);
    CHECK(traj.q.empty());
    CHECK_FALSE(traj.converged);
    cfg.max_steps = 200;
    cfg.tol = 1e6;
    traj = closed_loop(scene, k, cfg);
    CHECK(traj.q.empty());
    CHECK(traj.converged);
  }
  TrainedKernel blank = k;
  blank.params.set_zero();
  try {
    closed_loop(scene, blank, ServoConfig{});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::low_confidence);
  }
  TrainedKernel other = k;
  other.kind = KernelKind::p2l;
  CHECK_THROWS_AS(closed_loop(scene, other, ServoConfig{}), Error);
  ServoConfig bad;
  bad.gain = 0.0;
  CHECK_THROWS_AS(closed_loop(scene, k, bad), Error);
}

}  // TEST_SUITE
