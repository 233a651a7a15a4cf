#pragma once

#include <filesystem>
#include <iosfwd>
#include <json.hpp>

#include "vgsil/metrics.hpp"
#include "vgsil/neural.hpp"
#include "vgsil/scene_sim.hpp"
#include "vgsil/servo.hpp"
#include "vgsil/trainer.hpp"

namespace vgsil::io {

using json = nlohmann::ordered_json;

json to_json(const CameraModel& cam);
CameraModel camera_from_json(const json& j);

/// Config readers fill missing keys with defaults and reject unknown ones.
json to_json(const DemoConfig& cfg);
DemoConfig demo_config_from_json(const json& j);

/// Top-level keys: camera, seed, ground_truth, frames (arrays of
/// {id, u, v, visible, descriptor, ...}), plus the config echo and the
/// simulator state needed to re-render perturbations.
json to_json(const DemoSequence& demo);
DemoSequence demo_from_json(const json& j);

/// {"input_dim", "hidden", "blocks": [{"name", "rows", "cols", "data"}]},
/// data in column-major order.
json to_json(const NetParams& params);
NetParams params_from_json(const json& j);

json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const json& j);

json to_json(const TrainedKernel& kernel);
TrainedKernel trained_kernel_from_json(const json& j);

json to_json(const EvalReport& report);

json to_json(const ServoConfig& cfg);
ServoConfig servo_config_from_json(const json& j);

/// epoch,loss,gcr_term,rsw_term,expected_quality
void write_loss_csv(std::ostream& os, const TrainedKernel& kernel);
/// frame,winner_ids,error_norm,correct
void write_eval_csv(std::ostream& os, const EvalReport& report);
/// step,q0..q{dof-1},error_norm,mode
void write_trajectory_csv(std::ostream& os, const Trajectory& traj);

json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const json& j);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace vgsil::io
