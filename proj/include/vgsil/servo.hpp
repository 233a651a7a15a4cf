#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <string_view>
#include <vector>

#include "vgsil/scene_sim.hpp"
#include "vgsil/trainer.hpp"

namespace vgsil {

enum class ServoMode { ibvs, uvs };

std::string_view to_string(ServoMode mode);
ServoMode servo_mode_from_string(std::string_view name);

struct ServoConfig {
  double gain = 0.1;
  double tol = 1.0;
  int max_steps = 200;
  ServoMode mode = ServoMode::ibvs;
  double damping = 0.0;
  /// Controlled camera coordinates: translation first, then rotation.
  int dof = 6;
  /// Exploratory step used to seed the Jacobian estimate in UVS mode.
  double probe_step = 0.02;
  /// Broyden updates are skipped for steps shorter than this.
  double min_update_step = 2e-3;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Point-feature interaction matrix for normalized coordinates (x, y) at depth Z.
Eigen::Matrix<double, 2, 6> interaction_matrix_point(double x, double y, double depth);

/// Damped pseudo-inverse L^T (L L^T + mu I)^{-1}.
Eigen::MatrixXd pinv_damped(const Eigen::MatrixXd& l, double mu);

/// dq = -gain * pinv_damped(J, damping) * e
Eigen::VectorXd control_step(const Eigen::VectorXd& e, const Eigen::MatrixXd& jacobian,
                             const ServoConfig& config);

/// Rank-one secant update so that J' dq = de.
Eigen::MatrixXd broyden_update(const Eigen::MatrixXd& jacobian, const Eigen::VectorXd& dq,
                               const Eigen::VectorXd& de);

struct ServoState {
  Eigen::VectorXd q;
  Eigen::VectorXd e;
  Eigen::MatrixXd j_hat;
  int step = 0;
};

/// States after each control step; the initial state is kept separately.
struct Trajectory {
  ServoMode mode = ServoMode::ibvs;
  Eigen::VectorXd q0;
  double initial_error = 0.0;
  std::vector<Eigen::VectorXd> q;
  std::vector<double> error_norm;
  std::vector<std::vector<int>> winners;
  bool converged = false;
  /// Largest |J' dq - de| seen across Broyden updates.
  double max_secant_residual = 0.0;
};

using Plant = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

/// Broyden-driven loop on an arbitrary error function e(q).
Trajectory uvs_loop(const Plant& plant, const Eigen::VectorXd& q0, const Eigen::MatrixXd& j0,
                    const ServoConfig& config);

/// Image-error Jacobian of a point-to-point association with respect to the
/// camera twist, in pixels. Features riding with the camera contribute nothing.
Eigen::MatrixXd ibvs_jacobian(const ServoScene& scene, const CameraModel& cam,
                              const std::vector<int>& winner_ids);

/// Eye-in-hand control of the simulated camera on the learned error signal.
Trajectory closed_loop(const ServoScene& scene, const TrainedKernel& trained,
                       const ServoConfig& config);

}  // namespace vgsil
