#include "vgsil/scene_sim.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "vgsil/error.hpp"

namespace vgsil {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

ImagePoint project_camera(const Eigen::Vector3d& x, const CameraModel& cam) {
  if (!(x.z() > 1e-6)) {
    throw Error(Errc::behind_camera, "depth " + std::to_string(x.z()) + " m");
  }
  return {cam.f * x.x() / x.z() + cam.cu, cam.f * x.y() / x.z() + cam.cv};
}

ImagePoint project(const Eigen::Vector3d& world, const CameraModel& cam) {
  return project_camera(cam.to_camera(world), cam);
}

std::string_view to_string(FeatureClass c) {
  switch (c) {
    case FeatureClass::point: return "point";
    case FeatureClass::segment_endpoint: return "segment_endpoint";
    case FeatureClass::conic_point: return "conic_point";
  }
  return "point";
}

FeatureClass feature_class_from_string(std::string_view name) {
  if (name == "point") return FeatureClass::point;
  if (name == "segment_endpoint") return FeatureClass::segment_endpoint;
  if (name == "conic_point") return FeatureClass::conic_point;
  throw Error(Errc::invalid_config, "unknown feature class '" + std::string(name) + "'");
}

std::string_view to_string(FeatureRole r) {
  switch (r) {
    case FeatureRole::tool: return "tool";
    case FeatureRole::target: return "target";
    case FeatureRole::distractor: return "distractor";
  }
  return "distractor";
}

FeatureRole feature_role_from_string(std::string_view name) {
  if (name == "tool") return FeatureRole::tool;
  if (name == "target") return FeatureRole::target;
  if (name == "distractor") return FeatureRole::distractor;
  throw Error(Errc::invalid_config, "unknown feature role '" + std::string(name) + "'");
}

std::string_view to_string(PerturbationKind k) {
  switch (k) {
    case PerturbationKind::random_target: return "random_target";
    case PerturbationKind::change_camera: return "change_camera";
    case PerturbationKind::occlusion: return "occlusion";
    case PerturbationKind::outside_fov: return "outside_fov";
    case PerturbationKind::change_illumination: return "change_illumination";
  }
  return "random_target";
}

PerturbationKind perturbation_kind_from_string(std::string_view name) {
  if (name == "random_target") return PerturbationKind::random_target;
  if (name == "change_camera") return PerturbationKind::change_camera;
  if (name == "occlusion") return PerturbationKind::occlusion;
  if (name == "outside_fov") return PerturbationKind::outside_fov;
  if (name == "change_illumination") return PerturbationKind::change_illumination;
  throw Error(Errc::invalid_config, "unknown perturbation '" + std::string(name) + "'");
}

void DemoConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(Errc::invalid_config, msg); };
  if (n_frames < 2) fail("n_frames must be >= 2");
  if (n_distractors < 0) fail("n_distractors must be >= 0");
  if (!(approach_rate > 0.0 && approach_rate < 1.0)) fail("approach_rate must be in (0, 1)");
  if (!(noise_px >= 0.0)) fail("noise_px must be >= 0");
  if (!(initial_error_px > 0.0)) fail("initial_error_px must be > 0");
  if (descriptor_dim < 2) fail("descriptor_dim must be >= 2");
  if (!(descriptor_jitter >= 0.0)) fail("descriptor_jitter must be >= 0");
  if (!(distractor_step_px >= 0.5)) fail("distractor_step_px must be >= 0.5");
  if (!(distractor_box_px >= 0.0)) fail("distractor_box_px must be >= 0");
}

Eigen::VectorXd base_descriptor(std::uint64_t appearance_seed, int id, int dim) {
  Rng rng(derive_seed(appearance_seed, 1000 + static_cast<std::uint64_t>(id)));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Eigen::VectorXd d(dim);
  for (int i = 0; i < dim; ++i) d(i) = unit(rng);
  return d;
}

Eigen::VectorXd descriptor_of(const Eigen::VectorXd& base, double jitter, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd d = base;
  for (Eigen::Index i = 0; i < d.size(); ++i) d(i) += jitter * normal(rng);
  return d;
}

namespace {

using Vec2 = Eigen::Vector2d;

ImagePoint pt(const Vec2& v) { return {v.x(), v.y()}; }

struct EntityPlan {
  FeatureRole role;
  FeatureClass cls;
  int n_points;
};

constexpr int kConicPoints = 5;

EntityPlan point_entity(FeatureRole r) { return {r, FeatureClass::point, 1}; }
EntityPlan segment_entity(FeatureRole r) { return {r, FeatureClass::segment_endpoint, 2}; }
EntityPlan conic_entity(FeatureRole r) { return {r, FeatureClass::conic_point, kConicPoints}; }

std::vector<EntityPlan> plan_entities(const DemoConfig& cfg) {
  std::vector<EntityPlan> plan;
  const auto d = FeatureRole::distractor;
  switch (cfg.kernel) {
    case KernelKind::p2p:
      plan = {point_entity(FeatureRole::tool), point_entity(FeatureRole::target)};
      for (int i = 0; i < cfg.n_distractors; ++i) plan.push_back(point_entity(d));
      break;
    case KernelKind::p2l:
      plan = {point_entity(FeatureRole::tool), segment_entity(FeatureRole::target)};
      for (int i = 0; i < cfg.n_distractors; ++i)
        plan.push_back(i % 2 == 0 ? point_entity(d) : segment_entity(d));
      break;
    case KernelKind::l2l:
      plan = {segment_entity(FeatureRole::tool), segment_entity(FeatureRole::target)};
      for (int i = 0; i < cfg.n_distractors; ++i) plan.push_back(segment_entity(d));
      break;
    case KernelKind::p2c:
      plan = {point_entity(FeatureRole::tool), conic_entity(FeatureRole::target)};
      for (int i = 0; i < cfg.n_distractors; ++i)
        plan.push_back(i % 2 == 0 ? point_entity(d) : conic_entity(d));
      break;
  }
  return plan;
}

/// Feature table with shuffled ids; features are returned sorted by id and
/// `entity_features[e]` lists indices into that table for entity e of the plan.
struct Identity {
  std::vector<SceneFeature> features;
  std::vector<std::vector<std::size_t>> entity_features;
};

Identity assign_ids(const std::vector<EntityPlan>& plan, std::uint64_t appearance_seed) {
  int n_features = 0;
  for (const auto& e : plan) n_features += e.n_points;
  Rng rng(derive_seed(appearance_seed, 4));
  std::vector<int> ids(static_cast<std::size_t>(n_features));
  std::iota(ids.begin(), ids.end(), 0);
  std::shuffle(ids.begin(), ids.end(), rng);
  std::vector<int> entity_ids(plan.size());
  std::iota(entity_ids.begin(), entity_ids.end(), 0);
  std::shuffle(entity_ids.begin(), entity_ids.end(), rng);

  Identity out;
  out.features.resize(static_cast<std::size_t>(n_features));
  out.entity_features.resize(plan.size());
  std::size_t k = 0;
  for (std::size_t e = 0; e < plan.size(); ++e) {
    for (int j = 0; j < plan[e].n_points; ++j, ++k) {
      const int id = ids[k];
      out.features[static_cast<std::size_t>(id)] = {id, entity_ids[e], plan[e].cls, plan[e].role};
      out.entity_features[e].push_back(static_cast<std::size_t>(id));
    }
  }
  return out;
}

Vec2 random_unit(Rng& rng) {
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  const double a = angle(rng);
  return {std::cos(a), std::sin(a)};
}

/// Pixel-space geometry of the demonstrated association on the first frame,
/// plus where each tool feature converges to.
struct TaskLayout {
  std::vector<Vec2> target;
  std::vector<Vec2> tool_start;
  std::vector<Vec2> tool_goal;
  double depth = 2.0;

  Vec2 tool_at(std::size_t k, double decay) const {
    return tool_goal[k] + decay * (tool_start[k] - tool_goal[k]);
  }
};

TaskLayout make_task_layout(const DemoConfig& cfg, Rng& rng) {
  std::uniform_real_distribution<double> cu(170.0, 470.0), cv(150.0, 330.0), depth(1.8, 2.2);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  TaskLayout t;
  t.depth = depth(rng);
  const Vec2 c(cu(rng), cv(rng));
  const double e0 = cfg.initial_error_px;
  switch (cfg.kernel) {
    case KernelKind::p2p: {
      t.target = {c};
      t.tool_goal = {c};
      t.tool_start = {c + e0 * random_unit(rng)};
      break;
    }
    case KernelKind::p2l: {
      const Vec2 dir = random_unit(rng);
      const Vec2 n(-dir.y(), dir.x());
      t.target = {c - 60.0 * dir, c + 60.0 * dir};
      const Vec2 foot = c + (60.0 * unit(rng) - 30.0) * dir;
      const double side = unit(rng) < 0.5 ? -1.0 : 1.0;
      t.tool_goal = {foot};
      t.tool_start = {foot + side * e0 * n};
      break;
    }
    case KernelKind::l2l: {
      const Vec2 dir = random_unit(rng);
      const Vec2 n(-dir.y(), dir.x());
      t.target = {c - 60.0 * dir, c + 60.0 * dir};
      const Vec2 f1 = c - (20.0 + 30.0 * unit(rng)) * dir;
      const Vec2 f2 = c + (20.0 + 30.0 * unit(rng)) * dir;
      const double side = unit(rng) < 0.5 ? -1.0 : 1.0;
      t.tool_goal = {f1, f2};
      t.tool_start = {f1 + side * e0 * n, f2 + side * e0 * (0.5 + 0.5 * unit(rng)) * n};
      break;
    }
    case KernelKind::p2c: {
      constexpr double radius = 50.0;
      const double phase = 2.0 * std::numbers::pi * unit(rng);
      for (int k = 0; k < kConicPoints; ++k) {
        const double a = phase + 2.0 * std::numbers::pi * k / kConicPoints;
        t.target.push_back(c + radius * Vec2(std::cos(a), std::sin(a)));
      }
      const Vec2 radial = random_unit(rng);
      const Vec2 on = c + radius * radial;
      t.tool_goal = {on};
      t.tool_start = {on + e0 * radial};
      break;
    }
  }
  return t;
}

double segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double len2 = ab.squaredNorm();
  const double s = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
  return (p - (a + s * ab)).norm();
}

/// Pixel offsets of a distractor entity's features around its anchor.
std::vector<Vec2> distractor_shape(const EntityPlan& e, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  switch (e.cls) {
    case FeatureClass::point: return {Vec2::Zero()};
    case FeatureClass::segment_endpoint: {
      const Vec2 dir = random_unit(rng);
      const double half = 30.0 + 20.0 * unit(rng);
      return {-half * dir, half * dir};
    }
    case FeatureClass::conic_point: {
      const double phase = 2.0 * std::numbers::pi * unit(rng);
      std::vector<Vec2> pts;
      for (int k = 0; k < kConicPoints; ++k) {
        const double a = phase + 2.0 * std::numbers::pi * k / kConicPoints;
        pts.emplace_back(35.0 * std::cos(a), 35.0 * std::sin(a));
      }
      return pts;
    }
  }
  return {};
}

struct DistractorLayout {
  Vec2 anchor;
  std::vector<Vec2> shape;
  double depth;
};

/// Rejection-samples distractor anchors that keep clear of the task features,
/// the tool path and each other for any walk inside the box.
std::vector<DistractorLayout> place_distractors(const DemoConfig& cfg, const CameraModel& cam,
                                                const std::vector<EntityPlan>& plan,
                                                const TaskLayout& task, Rng& rng) {
  const double box = cfg.distractor_box_px;
  const double clear_task = box + 28.0;
  const double clear_other = 2.0 * box + 10.0;
  std::uniform_real_distribution<double> depth(1.5, 2.5);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<DistractorLayout> out;
  std::vector<Vec2> placed;
  for (const auto& e : plan) {
    if (e.role != FeatureRole::distractor) continue;
    bool ok = false;
    for (int attempt = 0; attempt < 2000 && !ok; ++attempt) {
      DistractorLayout d{Vec2::Zero(), distractor_shape(e, rng), depth(rng)};
      double reach = 0.0;
      for (const auto& s : d.shape) reach = std::max(reach, s.norm());
      const double margin = reach + box + 8.0;
      d.anchor = {margin + (cam.width - 2 * margin) * unit(rng),
                  margin + (cam.height - 2 * margin) * unit(rng)};
      ok = true;
      for (const auto& s : d.shape) {
        const Vec2 p = d.anchor + s;
        for (const auto& q : task.target) ok = ok && (p - q).norm() >= clear_task;
        for (std::size_t k = 0; k < task.tool_start.size(); ++k)
          ok = ok && segment_distance(p, task.tool_start[k], task.tool_goal[k]) >= clear_task;
        for (const auto& q : placed) ok = ok && (p - q).norm() >= clear_other;
      }
      if (ok) {
        for (const auto& s : d.shape) placed.push_back(d.anchor + s);
        out.push_back(std::move(d));
      }
    }
    if (!ok) {
      throw Error(Errc::invalid_config, "cannot place " + std::to_string(cfg.n_distractors) +
                                            " distractors in the image");
    }
  }
  return out;
}

/// Bounded random walk; each step has length in [0.5, max_step] px and the
/// offset is reflected back into [-box, box] per axis.
std::vector<Vec2> random_walk(int n, double max_step, double box, Rng& rng) {
  std::uniform_real_distribution<double> len(0.5, max_step);
  std::vector<Vec2> walk(static_cast<std::size_t>(n), Vec2::Zero());
  for (int t = 1; t < n; ++t) {
    Vec2 o = walk[static_cast<std::size_t>(t - 1)] + len(rng) * random_unit(rng);
    for (int a = 0; a < 2; ++a) {
      if (o(a) > box) o(a) = 2 * box - o(a);
      if (o(a) < -box) o(a) = -2 * box - o(a);
    }
    walk[static_cast<std::size_t>(t)] = o;
  }
  return walk;
}

std::vector<std::size_t> role_indices(const std::vector<SceneFeature>& f, FeatureRole r) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < f.size(); ++i)
    if (f[i].role == r) out.push_back(i);
  return out;
}

/// Candidate-order ids of the demonstrated association.
GroundTruth ground_truth_for(KernelKind kind, const Identity& ident) {
  // Entity 0 is the tool, entity 1 the target.
  auto ids_of = [&](std::size_t e) {
    std::vector<int> ids;
    for (auto i : ident.entity_features[e]) ids.push_back(ident.features[i].id);
    std::sort(ids.begin(), ids.end());
    return ids;
  };
  std::vector<int> a = ids_of(0), b = ids_of(1);
  const bool symmetric = kind == KernelKind::p2p || kind == KernelKind::l2l;
  if (symmetric && b.front() < a.front()) std::swap(a, b);
  GroundTruth gt{kind, a};
  gt.feature_ids.insert(gt.feature_ids.end(), b.begin(), b.end());
  return gt;
}

bool all_in_bounds(const DemoSequence& demo, const std::vector<std::size_t>& idx,
                   const CameraModel& cam, double margin) {
  for (const auto& frame : demo.world) {
    for (auto i : idx) {
      const Eigen::Vector3d x = cam.to_camera(frame[i].position);
      if (x.z() <= 0.1) return false;
      const ImagePoint p = project_camera(x, cam);
      if (p.u < margin || p.v < margin || p.u >= cam.width - margin || p.v >= cam.height - margin)
        return false;
    }
  }
  return true;
}

Eigen::Matrix3d random_rotation(Rng& rng, double max_angle) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::Vector3d axis(normal(rng), normal(rng), normal(rng));
  axis.normalize();
  return Eigen::AngleAxisd(max_angle * (2.0 * unit(rng) - 1.0), axis).toRotationMatrix();
}

int window_length(double magnitude, int n_frames) {
  const int len = static_cast<int>(std::lround(magnitude * n_frames / 6.0));
  return std::clamp(len, 0, std::max(0, n_frames - 2));
}

}  // namespace

DemoSequence gen_demo(const DemoConfig& config) {
  config.validate();
  DemoSequence demo;
  demo.config = config;
  demo.seed = config.seed;

  const auto plan = plan_entities(config);
  const auto ident = assign_ids(plan, config.effective_appearance_seed());
  demo.features = ident.features;
  demo.ground_truth = ground_truth_for(config.kernel, ident);

  Rng layout_rng(derive_seed(config.seed, 1));
  const TaskLayout task = make_task_layout(config, layout_rng);
  const auto distractors = place_distractors(config, demo.camera, plan, task, layout_rng);
  std::vector<std::vector<Vec2>> walks;
  for (std::size_t d = 0; d < distractors.size(); ++d) {
    walks.push_back(random_walk(config.n_frames, config.distractor_step_px,
                                config.distractor_box_px, layout_rng));
  }

  const auto n_feat = demo.features.size();
  const auto n_frames = static_cast<std::size_t>(config.n_frames);
  demo.world.assign(n_frames, std::vector<WorldSample>(n_feat));
  Rng noise_rng(derive_seed(config.seed, 2));
  std::normal_distribution<double> normal(0.0, 1.0);
  const CameraModel& cam = demo.camera;
  auto to_world = [&](const Vec2& px, double z) {
    return Eigen::Vector3d(cam.rotation.transpose() * (cam.back_project(pt(px), z) - cam.translation));
  };

  for (std::size_t t = 0; t < n_frames; ++t) {
    const double decay = std::pow(config.approach_rate, static_cast<double>(t));
    auto& world = demo.world[t];
    std::size_t d = 0;
    for (std::size_t e = 0; e < plan.size(); ++e) {
      const auto& members = ident.entity_features[e];
      for (std::size_t k = 0; k < members.size(); ++k) {
        Vec2 px;
        double z = task.depth;
        if (plan[e].role == FeatureRole::tool) {
          px = task.tool_at(k, decay);
        } else if (plan[e].role == FeatureRole::target) {
          px = task.target[k];
        } else {
          px = distractors[d].anchor + distractors[d].shape[k] + walks[d][t];
          z = distractors[d].depth;
        }
        world[members[k]].position = to_world(px, z);
      }
      if (plan[e].role == FeatureRole::distractor) ++d;
    }
    for (auto& s : world) {
      s.noise = {config.noise_px * normal(noise_rng), config.noise_px * normal(noise_rng)};
    }
  }

  Rng desc_rng(derive_seed(config.seed, 3));
  std::vector<Eigen::VectorXd> bases;
  for (const auto& f : demo.features) {
    bases.push_back(base_descriptor(config.effective_appearance_seed(), f.id, config.descriptor_dim));
  }
  demo.frames.assign(n_frames, Frame(n_feat));
  for (std::size_t t = 0; t < n_frames; ++t) {
    for (std::size_t i = 0; i < n_feat; ++i) {
      auto& obs = demo.frames[t][i];
      obs.id = demo.features[i].id;
      obs.entity = demo.features[i].entity;
      obs.feature_class = demo.features[i].feature_class;
      obs.descriptor = descriptor_of(bases[i], config.descriptor_jitter, desc_rng);
    }
  }
  render_frames(demo);
  return demo;
}

void render_frames(DemoSequence& demo) {
  const auto& cam = demo.camera;
  for (std::size_t t = 0; t < demo.frames.size(); ++t) {
    for (std::size_t i = 0; i < demo.features.size(); ++i) {
      const auto& s = demo.world[t][i];
      auto& obs = demo.frames[t][i];
      const Eigen::Vector3d x = cam.to_camera(s.position);
      if (x.z() > 1e-6) {
        const ImagePoint p = project_camera(x, cam);
        obs.pixel = {p.u + s.noise.u, p.v + s.noise.v};
        obs.visible = !s.hidden && cam.in_bounds(obs.pixel);
      } else {
        obs.pixel = {-1.0, -1.0};
        obs.visible = false;
      }
    }
  }
}

DemoSequence apply_perturbation(const DemoSequence& demo, const PerturbationSetting& setting,
                                std::uint64_t seed) {
  if (!(setting.magnitude >= 0.0)) {
    throw Error(Errc::invalid_config, "perturbation magnitude must be >= 0");
  }
  DemoSequence out = demo;
  Rng rng(derive_seed(seed, 10 + static_cast<std::uint64_t>(setting.kind)));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double m = setting.magnitude;
  if (m == 0.0) return out;

  std::vector<std::size_t> task_idx = role_indices(out.features, FeatureRole::tool);
  const auto target_idx = role_indices(out.features, FeatureRole::target);
  task_idx.insert(task_idx.end(), target_idx.begin(), target_idx.end());
  const int n_frames = static_cast<int>(out.frames.size());

  switch (setting.kind) {
    case PerturbationKind::random_target: {
      // Rigid motion of the task object about the camera's viewing axis
      // through the target centroid, plus an in-plane translation; depths are
      // unchanged so the demonstrated error profile is preserved.
      const auto& cam = out.camera;
      Eigen::Vector3d pivot = Eigen::Vector3d::Zero();
      for (auto i : target_idx) pivot += out.world[0][i].position;
      pivot /= static_cast<double>(target_idx.size());
      const Eigen::Vector3d axis = cam.rotation.transpose().col(2);
      const double z = cam.to_camera(pivot).z();
      double scale = m;
      for (int attempt = 0; attempt < 200; ++attempt) {
        if (attempt > 0 && attempt % 40 == 0) scale *= 0.5;
        const Eigen::Matrix3d rot =
            Eigen::AngleAxisd(scale * 0.5 * (2.0 * unit(rng) - 1.0), axis).toRotationMatrix();
        const Vec2 shift = 120.0 * scale * std::sqrt(unit(rng)) * random_unit(rng);
        const Eigen::Vector3d offset =
            cam.rotation.transpose() * Eigen::Vector3d(shift.x() * z / cam.f, shift.y() * z / cam.f, 0.0);
        DemoSequence trial = out;
        for (auto& frame : trial.world) {
          for (auto i : task_idx) frame[i].position = rot * (frame[i].position - pivot) + pivot + offset;
        }
        if (all_in_bounds(trial, task_idx, cam, 5.0)) {
          out = std::move(trial);
          break;
        }
      }
      break;
    }
    case PerturbationKind::change_camera: {
      for (int attempt = 0; attempt < 200; ++attempt) {
        const Eigen::Matrix3d rot = random_rotation(rng, 0.08 * m);
        Eigen::Vector3d dir(unit(rng) - 0.5, unit(rng) - 0.5, unit(rng) - 0.5);
        const Eigen::Vector3d v = 0.15 * m * unit(rng) * dir.normalized();
        const Eigen::AngleAxisd aa(rot);
        const CameraModel cam = move_camera(out.camera, v, aa.angle() * aa.axis());
        if (all_in_bounds(out, task_idx, cam, 5.0)) {
          out.camera = cam;
          break;
        }
      }
      break;
    }
    case PerturbationKind::occlusion: {
      const int len = window_length(m, n_frames);
      if (len == 0) return out;
      const int n_ids = static_cast<int>(out.features.size());
      const int count = std::clamp(static_cast<int>(std::lround(m * n_ids / 5.0)), 1, n_ids);
      const int start = static_cast<int>(unit(rng) * (n_frames - len + 1)) % (n_frames - len + 1);
      const int first_id = static_cast<int>(unit(rng) * (n_ids - count + 1)) % (n_ids - count + 1);
      for (int t = start; t < start + len; ++t) {
        for (std::size_t i = 0; i < out.features.size(); ++i) {
          const int id = out.features[i].id;
          if (id >= first_id && id < first_id + count) out.world[static_cast<std::size_t>(t)][i].hidden = true;
        }
      }
      break;
    }
    case PerturbationKind::outside_fov: {
      const int len = std::max(1, window_length(m, n_frames));
      const int start = 1 + static_cast<int>(unit(rng) * (n_frames - len - 1)) % std::max(1, n_frames - len - 1);
      const auto& cam = out.camera;
      for (int t = start; t < std::min(n_frames, start + len); ++t) {
        auto& frame = out.world[static_cast<std::size_t>(t)];
        for (auto i : task_idx) {
          const double z = cam.to_camera(frame[i].position).z();
          frame[i].position += cam.rotation.transpose() *
                               Eigen::Vector3d(1.2 * cam.width * z / cam.f, 0.0, 0.0);
        }
      }
      break;
    }
    case PerturbationKind::change_illumination: {
      std::normal_distribution<double> normal(0.0, 1.0);
      for (auto& frame : out.frames)
        for (auto& obs : frame)
          for (Eigen::Index k = 0; k < obs.descriptor.size(); ++k) obs.descriptor(k) += m * normal(rng);
      return out;
    }
  }
  render_frames(out);
  return out;
}

CameraModel move_camera(const CameraModel& cam, const Eigen::Vector3d& v, const Eigen::Vector3d& w) {
  const double angle = w.norm();
  const Eigen::Matrix3d dr = angle > 0.0 ? Eigen::AngleAxisd(angle, w / angle).toRotationMatrix()
                                         : Eigen::Matrix3d::Identity();
  CameraModel out = cam;
  out.rotation = dr.transpose() * cam.rotation;
  out.translation = dr.transpose() * (cam.translation - v);
  return out;
}

ServoScene make_servo_scene(const DemoConfig& config) {
  config.validate();
  ServoScene scene;
  scene.config = config;
  const auto plan = plan_entities(config);
  const auto ident = assign_ids(plan, config.effective_appearance_seed());
  scene.features = ident.features;
  scene.ground_truth = ground_truth_for(config.kernel, ident);

  Rng layout_rng(derive_seed(config.seed, 1));
  const TaskLayout task = make_task_layout(config, layout_rng);
  const auto distractors = place_distractors(config, scene.camera, plan, task, layout_rng);

  const CameraModel& cam = scene.camera;
  scene.positions.assign(scene.features.size(), Eigen::Vector3d::Zero());
  std::size_t d = 0;
  for (std::size_t e = 0; e < plan.size(); ++e) {
    const auto& members = ident.entity_features[e];
    for (std::size_t k = 0; k < members.size(); ++k) {
      Eigen::Vector3d x;
      if (plan[e].role == FeatureRole::tool) {
        x = cam.back_project(pt(task.tool_start[k]), task.depth);
      } else if (plan[e].role == FeatureRole::target) {
        x = cam.rotation.transpose() * (cam.back_project(pt(task.target[k]), task.depth) - cam.translation);
      } else {
        const Vec2 px = distractors[d].anchor + distractors[d].shape[k];
        x = cam.rotation.transpose() *
            (cam.back_project(pt(px), distractors[d].depth) - cam.translation);
      }
      scene.positions[members[k]] = x;
    }
    if (plan[e].role == FeatureRole::distractor) ++d;
  }
  for (const auto& f : scene.features) {
    scene.base_descriptors.push_back(
        base_descriptor(config.effective_appearance_seed(), f.id, config.descriptor_dim));
  }
  return scene;
}

Frame render(const ServoScene& scene, const CameraModel& cam, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Frame frame(scene.features.size());
  for (std::size_t i = 0; i < scene.features.size(); ++i) {
    auto& obs = frame[i];
    obs.id = scene.features[i].id;
    obs.entity = scene.features[i].entity;
    obs.feature_class = scene.features[i].feature_class;
    const Eigen::Vector3d x = scene.camera_point(i, cam);
    const double nu = scene.config.noise_px * normal(rng);
    const double nv = scene.config.noise_px * normal(rng);
    if (x.z() > 1e-6) {
      const ImagePoint p = project_camera(x, cam);
      obs.pixel = {p.u + nu, p.v + nv};
      obs.visible = cam.in_bounds(obs.pixel);
    } else {
      obs.pixel = {-1.0, -1.0};
      obs.visible = false;
    }
    obs.descriptor = descriptor_of(scene.base_descriptors[i], scene.config.descriptor_jitter, rng);
  }
  return frame;
}

}  // namespace vgsil
