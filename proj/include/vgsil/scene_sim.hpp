#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <random>
#include <string_view>
#include <vector>

#include "vgsil/geometry.hpp"

namespace vgsil {

using Rng = std::mt19937_64;

/// splitmix64 of (seed, stream); used for every derived sub-seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// Pinhole camera. `rotation`/`translation` map world to camera coordinates:
/// X_cam = rotation * X_world + translation.
struct CameraModel {
  double f = 500.0;
  double cu = 320.0;
  double cv = 240.0;
  double width = 640.0;
  double height = 480.0;
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Eigen::Vector3d to_camera(const Eigen::Vector3d& world) const {
    return rotation * world + translation;
  }
  bool in_bounds(const ImagePoint& p) const {
    return p.u >= 0.0 && p.u < width && p.v >= 0.0 && p.v < height;
  }
  /// Camera-frame point at depth `z` that projects to `p`.
  Eigen::Vector3d back_project(const ImagePoint& p, double z) const {
    return {(p.u - cu) * z / f, (p.v - cv) * z / f, z};
  }
};

ImagePoint project(const Eigen::Vector3d& world, const CameraModel& cam);
/// Projection of a point already expressed in camera coordinates.
ImagePoint project_camera(const Eigen::Vector3d& cam_point, const CameraModel& cam);

enum class FeatureClass { point, segment_endpoint, conic_point };
enum class FeatureRole { tool, target, distractor };

std::string_view to_string(FeatureClass c);
FeatureClass feature_class_from_string(std::string_view name);
std::string_view to_string(FeatureRole r);
FeatureRole feature_role_from_string(std::string_view name);

struct FeatureObservation {
  int id = 0;
  int entity = 0;
  FeatureClass feature_class = FeatureClass::point;
  ImagePoint pixel;
  Eigen::VectorXd descriptor;
  bool visible = true;
};

using Frame = std::vector<FeatureObservation>;

/// Static description of one simulated feature.
struct SceneFeature {
  int id = 0;
  int entity = 0;
  FeatureClass feature_class = FeatureClass::point;
  FeatureRole role = FeatureRole::distractor;
};

/// Feature ids of the demonstrated association, in candidate order
/// (point before line endpoints, first segment before second).
struct GroundTruth {
  KernelKind kind = KernelKind::p2p;
  std::vector<int> feature_ids;
};

struct DemoConfig {
  int n_frames = 60;
  int n_distractors = 8;
  KernelKind kernel = KernelKind::p2p;
  double approach_rate = 0.9;
  double noise_px = 0.5;
  double initial_error_px = 50.0;
  int descriptor_dim = 16;
  double descriptor_jitter = 0.02;
  double distractor_step_px = 2.0;
  double distractor_box_px = 12.0;
  std::uint64_t seed = 1;
  /// Entity ids and base descriptors come from this seed (defaults to
  /// `seed`), so demos with different layouts can share the same objects.
  std::optional<std::uint64_t> appearance_seed;

  std::uint64_t effective_appearance_seed() const { return appearance_seed.value_or(seed); }
  void validate() const;
};

/// Simulator state for one feature on one frame.
struct WorldSample {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  ImagePoint noise;
  bool hidden = false;
};

struct DemoSequence {
  DemoConfig config;
  CameraModel camera;
  std::uint64_t seed = 0;
  GroundTruth ground_truth;
  std::vector<SceneFeature> features;
  std::vector<Frame> frames;
  /// world[frame][feature index], parallel to `features`.
  std::vector<std::vector<WorldSample>> world;
};

enum class PerturbationKind { random_target, change_camera, occlusion, outside_fov, change_illumination };

std::string_view to_string(PerturbationKind k);
PerturbationKind perturbation_kind_from_string(std::string_view name);

struct PerturbationSetting {
  PerturbationKind kind = PerturbationKind::random_target;
  double magnitude = 1.0;
};

/// Fixed appearance of one feature id.
Eigen::VectorXd base_descriptor(std::uint64_t appearance_seed, int id, int dim);

/// Appearance on one frame: base plus isotropic Gaussian jitter.
Eigen::VectorXd descriptor_of(const Eigen::VectorXd& base, double jitter, Rng& rng);

DemoSequence gen_demo(const DemoConfig& config);

DemoSequence apply_perturbation(const DemoSequence& demo, const PerturbationSetting& setting,
                                std::uint64_t seed);

/// Recomputes pixels and visibility of every frame from the simulator state;
/// descriptors are kept.
void render_frames(DemoSequence& demo);

/// Number of unordered C(n, 2) pairs; convenience for summaries.
inline std::size_t pair_count(std::size_t n) { return n < 2 ? 0 : n * (n - 1) / 2; }

/// World for closed-loop control: the tool features ride with the camera
/// (eye-in-hand), target and distractors are fixed in the world.
struct ServoScene {
  DemoConfig config;
  CameraModel camera;
  GroundTruth ground_truth;
  std::vector<SceneFeature> features;
  /// Camera-frame coordinates for tool features, world coordinates otherwise.
  std::vector<Eigen::Vector3d> positions;
  std::vector<Eigen::VectorXd> base_descriptors;

  bool camera_attached(std::size_t i) const { return features[i].role == FeatureRole::tool; }
  /// Position of feature i in the frame of `cam`.
  Eigen::Vector3d camera_point(std::size_t i, const CameraModel& cam) const {
    return camera_attached(i) ? positions[i] : cam.to_camera(positions[i]);
  }
};

ServoScene make_servo_scene(const DemoConfig& config);

/// Observation of the scene through `cam`, with pixel noise and descriptor
/// jitter drawn from `rng` according to the scene config.
Frame render(const ServoScene& scene, const CameraModel& cam, Rng& rng);

/// Applies a body-frame camera displacement: translation `v`, rotation
/// vector `w` (radians), both in the current camera frame.
CameraModel move_camera(const CameraModel& cam, const Eigen::Vector3d& v, const Eigen::Vector3d& w);

}  // namespace vgsil
