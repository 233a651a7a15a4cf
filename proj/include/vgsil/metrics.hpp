#pragma once

#include <optional>
#include <span>
#include <vector>

#include "vgsil/scene_sim.hpp"
#include "vgsil/trainer.hpp"

namespace vgsil {

/// Percentage of frames whose winner (as an id set) equals the ground truth.
/// Frames without a winner count as wrong.
double accuracy(std::span<const std::vector<int>> winners, const std::vector<int>& ground_truth);

/// Biased lag-k autocorrelation: full-series mean and full-series variance in
/// the denominator. Empty when the series has zero variance.
std::optional<double> autocorr(std::span<const double> series, int k);

/// Pearson correlation between x[0, n-k) and x[k, n). Empty when either
/// window has zero variance.
std::optional<double> lagged_correlation(std::span<const double> series, int k);

/// Selection consistency of an error-norm series at lag 2. Constant series
/// map to 1.0.
double con_acc(std::span<const double> error_norms, int k = 2);

struct EvalReport {
  double acc = 0.0;
  std::optional<double> con_acc;
  int n_frames = 0;
  std::vector<std::vector<int>> per_frame_winners;
  std::vector<double> error_norms;  ///< NaN when no winner
  std::vector<bool> correct;
  std::vector<bool> ground_truth_visible;

  /// Accuracy over frames where the whole ground-truth association is visible.
  double visible_accuracy() const;
};

EvalReport evaluate(const DemoSequence& demo, const TrainedKernel& trained);

}  // namespace vgsil
