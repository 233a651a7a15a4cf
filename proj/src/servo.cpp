#include "vgsil/servo.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "vgsil/error.hpp"

namespace vgsil {

std::string_view to_string(ServoMode mode) { return mode == ServoMode::ibvs ? "ibvs" : "uvs"; }

ServoMode servo_mode_from_string(std::string_view name) {
  if (name == "ibvs") return ServoMode::ibvs;
  if (name == "uvs") return ServoMode::uvs;
  throw Error(Errc::invalid_config, "unknown servo mode '" + std::string(name) + "'");
}

void ServoConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(Errc::invalid_config, m); };
  if (!(gain > 0.0)) fail("gain must be > 0");
  if (!(tol > 0.0)) fail("tol must be > 0");
  if (max_steps < 0) fail("max_steps must be >= 0");
  if (!(damping >= 0.0)) fail("damping must be >= 0");
  if (dof < 2 || dof > 6) fail("dof must be in [2, 6]");
  if (!(probe_step > 0.0)) fail("probe_step must be > 0");
  if (!(min_update_step >= 0.0)) fail("min_update_step must be >= 0");
}

Eigen::Matrix<double, 2, 6> interaction_matrix_point(double x, double y, double depth) {
  if (!(depth > 0.0)) throw Error(Errc::behind_camera, "interaction matrix needs Z > 0");
  Eigen::Matrix<double, 2, 6> l;
  const double iz = 1.0 / depth;
  l << -iz, 0.0, x * iz, x * y, -(1.0 + x * x), y,
       0.0, -iz, y * iz, 1.0 + y * y, -x * y, -x;
  return l;
}

Eigen::MatrixXd pinv_damped(const Eigen::MatrixXd& l, double mu) {
  const Eigen::Index m = l.rows();
  const Eigen::MatrixXd gram = l * l.transpose() + mu * Eigen::MatrixXd::Identity(m, m);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(gram);
  lu.setThreshold(1e-12);
  if (lu.rank() < m) {
    throw Error(Errc::singular_system, "L L^T is rank " + std::to_string(lu.rank()) + " of " +
                                           std::to_string(m) + "; use damping > 0");
  }
  return l.transpose() * lu.solve(Eigen::MatrixXd::Identity(m, m));
}

Eigen::VectorXd control_step(const Eigen::VectorXd& e, const Eigen::MatrixXd& jacobian,
                             const ServoConfig& config) {
  if (jacobian.rows() != e.size()) {
    throw Error(Errc::dimension_mismatch, "Jacobian rows must match the error dimension");
  }
  return -config.gain * (pinv_damped(jacobian, config.damping) * e);
}

Eigen::MatrixXd broyden_update(const Eigen::MatrixXd& jacobian, const Eigen::VectorXd& dq,
                               const Eigen::VectorXd& de) {
  const double dq2 = dq.squaredNorm();
  if (!(std::sqrt(dq2) > 1e-12)) throw Error(Errc::zero_step, "Broyden update needs a nonzero step");
  if (jacobian.cols() != dq.size() || jacobian.rows() != de.size()) {
    throw Error(Errc::dimension_mismatch, "Broyden update shapes disagree");
  }
  return jacobian + (de - jacobian * dq) * dq.transpose() / dq2;
}

namespace {

using StepHook = std::function<void()>;

void record(Trajectory& traj, const Eigen::VectorXd& q, double norm, const ServoConfig& config) {
  traj.q.push_back(q);
  traj.error_norm.push_back(norm);
  if (norm > 10.0 * traj.initial_error && traj.initial_error > 0.0) {
    throw Error(Errc::divergence, "error norm " + std::to_string(norm) + " exceeds 10x initial " +
                                      std::to_string(traj.initial_error));
  }
  traj.converged = norm < config.tol;
}

Trajectory run_uvs(const Plant& plant, const Eigen::VectorXd& q0, const Eigen::MatrixXd& j0,
                   const ServoConfig& config, const StepHook& on_step) {
  Trajectory traj;
  traj.mode = ServoMode::uvs;
  traj.q0 = q0;
  Eigen::VectorXd q = q0;
  Eigen::VectorXd e = plant(q);
  traj.initial_error = e.norm();
  traj.converged = traj.initial_error < config.tol;
  Eigen::MatrixXd j = j0;
  for (int step = 0; step < config.max_steps && !traj.converged; ++step) {
    const Eigen::VectorXd dq = control_step(e, j, config);
    q += dq;
    const Eigen::VectorXd e_next = plant(q);
    if (e_next.size() != e.size()) {
      throw Error(Errc::dimension_mismatch, "error dimension changed during servoing");
    }
    const Eigen::VectorXd de = e_next - e;
    if (dq.norm() > std::max(1e-12, config.min_update_step)) {
      j = broyden_update(j, dq, de);
      traj.max_secant_residual = std::max(traj.max_secant_residual, (j * dq - de).cwiseAbs().maxCoeff());
    }
    e = e_next;
    if (on_step) on_step();
    record(traj, q, e.norm(), config);
  }
  return traj;
}

Eigen::VectorXd pad6(const Eigen::VectorXd& q) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(6);
  out.head(q.size()) = q;
  return out;
}

}  // namespace

Trajectory uvs_loop(const Plant& plant, const Eigen::VectorXd& q0, const Eigen::MatrixXd& j0,
                    const ServoConfig& config) {
  config.validate();
  return run_uvs(plant, q0, j0, config, {});
}

Eigen::MatrixXd ibvs_jacobian(const ServoScene& scene, const CameraModel& cam,
                              const std::vector<int>& winner_ids) {
  if (winner_ids.size() != 2) {
    throw Error(Errc::invalid_config, "IBVS needs a point-to-point association");
  }
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(2, 6);
  for (std::size_t k = 0; k < 2; ++k) {
    const auto it = std::find_if(scene.features.begin(), scene.features.end(),
                                 [&](const SceneFeature& f) { return f.id == winner_ids[k]; });
    if (it == scene.features.end()) throw Error(Errc::invalid_config, "winner id not in scene");
    const auto i = static_cast<std::size_t>(it - scene.features.begin());
    if (scene.camera_attached(i)) continue;
    const Eigen::Vector3d x = scene.camera_point(i, cam);
    const double sign = k == 0 ? 1.0 : -1.0;
    j += sign * cam.f * interaction_matrix_point(x.x() / x.z(), x.y() / x.z(), x.z());
  }
  return j;
}

Trajectory closed_loop(const ServoScene& scene, const TrainedKernel& trained,
                       const ServoConfig& config) {
  config.validate();
  Rng rng(derive_seed(config.seed, 20));
  auto observe_at = [&](const CameraModel& cam) {
    const Inference inf = infer(render(scene, cam, rng), trained);
    if (inf.low_confidence) {
      throw Error(Errc::low_confidence, "max relevance " + std::to_string(inf.g.maxCoeff()) +
                                            " below 2/m for m=" + std::to_string(inf.g.size()));
    }
    return inf;
  };

  if (config.mode == ServoMode::ibvs) {
    if (trained.kind != KernelKind::p2p) {
      throw Error(Errc::invalid_config, "IBVS mode supports point-to-point kernels only; use uvs");
    }
    Trajectory traj;
    traj.mode = ServoMode::ibvs;
    traj.q0 = Eigen::VectorXd::Zero(config.dof);
    CameraModel cam = scene.camera;
    Inference inf = observe_at(cam);
    traj.initial_error = inf.error.norm();
    traj.converged = traj.initial_error < config.tol;
    Eigen::VectorXd q = traj.q0;
    for (int step = 0; step < config.max_steps && !traj.converged; ++step) {
      const Eigen::MatrixXd j = ibvs_jacobian(scene, cam, inf.winner_ids).leftCols(config.dof);
      const Eigen::VectorXd dq = control_step(inf.error.values, j, config);
      const Eigen::VectorXd twist = pad6(dq);
      cam = move_camera(cam, twist.head<3>(), twist.tail<3>());
      q += dq;
      inf = observe_at(cam);
      traj.winners.push_back(inf.winner_ids);
      record(traj, q, inf.error.norm(), config);
    }
    return traj;
  }

  std::vector<int> last_winner;
  const Plant plant = [&](const Eigen::VectorXd& q) {
    const Eigen::VectorXd twist = pad6(q);
    const Inference inf = observe_at(move_camera(scene.camera, twist.head<3>(), twist.tail<3>()));
    last_winner = inf.winner_ids;
    return Eigen::VectorXd(inf.error.values);
  };
  const Eigen::VectorXd q0 = Eigen::VectorXd::Zero(config.dof);
  const Eigen::VectorXd e0 = plant(q0);
  if (e0.norm() < config.tol || config.max_steps == 0) {
    Trajectory traj;
    traj.mode = ServoMode::uvs;
    traj.q0 = q0;
    traj.initial_error = e0.norm();
    traj.converged = traj.initial_error < config.tol;
    return traj;
  }
  Eigen::MatrixXd j0(e0.size(), config.dof);
  for (int k = 0; k < config.dof; ++k) {
    Eigen::VectorXd probe = q0;
    probe(k) = config.probe_step;
    j0.col(k) = (plant(probe) - e0) / config.probe_step;
  }
  std::vector<std::vector<int>> winners;
  Trajectory traj = run_uvs(plant, q0, j0, config, [&] { winners.push_back(last_winner); });
  traj.winners = std::move(winners);
  return traj;
}

}  // namespace vgsil
