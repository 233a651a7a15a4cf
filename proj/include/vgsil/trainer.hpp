#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "vgsil/geometry.hpp"
#include "vgsil/neural.hpp"
#include "vgsil/scene_sim.hpp"

namespace vgsil {

/// One hypothesized association. `frames`, `graphs`, `errors` and `b_trace`
/// are parallel and only cover frames where every member was visible.
struct CandidateInstance {
  std::vector<int> feature_ids;
  std::vector<std::vector<int>> grouping;
  std::vector<int> frames;
  std::vector<KernelGraph> graphs;
  std::vector<ErrorSignal> errors;
  std::vector<double> b_trace;
};

/// Enumerates every association of `kind` over the entities of `frame`
/// (visible or not). Returned candidates have ids and grouping only.
std::vector<CandidateInstance> build_candidates(const Frame& frame, KernelKind kind);

/// Graph and error of `candidate` on `frame`, or nothing when a member is
/// missing or invisible.
struct CandidateObservation {
  KernelGraph graph;
  ErrorSignal error;
};
std::optional<CandidateObservation> observe(const CandidateInstance& candidate, KernelKind kind,
                                            const Frame& frame, double width, double height);

/// Control-signal quality of an error-norm trace: weighted sum of the overall
/// decrease and a penalty on frame-to-frame jumps, both scaled by the peak.
double quality_score(std::span<const double> norms, double lambda_dec, double lambda_smooth);
double quality_score(std::span<const ErrorSignal> errors, double lambda_dec, double lambda_smooth);

struct Selection {
  Eigen::VectorXd g;
  int winner = 0;
};

/// Softmax over readout scores with max subtraction; ties go to the lowest index.
Selection select_out(std::span<const double> b);

struct TrainConfig {
  double alpha_gcr = 0.1;
  double alpha_rsw = 0.1;
  double lambda_dec = 1.0;
  double lambda_smooth = 1.0;
  double lr = 0.05;
  int epochs = 300;
  std::uint64_t seed = 1;
  /// Demonstrator confidence; readouts are divided by it inside the softmax.
  double alpha_conf = 1.0;
  int hidden = 32;
  int layers = 3;
  /// Global gradient-norm ceiling applied before each step; 0 disables.
  double grad_clip = 1.0;

  void validate() const;
};

/// Candidates of one demo with their graphs batched per frame.
struct TrainingSet {
  KernelKind kind = KernelKind::p2p;
  std::vector<CandidateInstance> candidates;
  std::vector<double> quality;
  struct FrameBatch {
    int frame = 0;
    std::vector<int> candidates;
    GraphBatch batch;
  };
  std::vector<FrameBatch> frames;
  int input_dim = 0;
};

TrainingSet prepare_training_set(const DemoSequence& demo, KernelKind kind, const TrainConfig& config);

struct LossTerms {
  double loss = 0.0;
  double gcr = 0.0;
  double rsw = 0.0;
  double expected_quality = 0.0;
};

/// Composite objective
///   L = -sum_t sum_j g_jt Q_j + alpha_gcr sum_t sum_j (b_j,t+1 - b_jt)^2
///       + alpha_rsw sum_t (1 - sum_j g_jt^2),
/// with g_t = softmax(b_t / alpha_conf) over the candidates visible at t.
/// When `grad` is non-null the exact parameter gradient is added to it.
/// `b_out`, when given, receives the per-frame readouts.
LossTerms loss(const TrainingSet& set, const NetParams& params, const TrainConfig& config,
               NetParams* grad = nullptr, std::vector<Eigen::VectorXd>* b_out = nullptr);

/// Same objective evaluated directly from readout scores, used by the
/// network-backed overload. `b[t]` holds the scores of set.frames[t].
LossTerms loss_from_scores(const TrainingSet& set, std::span<const Eigen::VectorXd> b,
                           const TrainConfig& config,
                           std::vector<Eigen::VectorXd>* db = nullptr);

struct TrainedKernel {
  KernelKind kind = KernelKind::p2p;
  NetParams params;
  TrainConfig config;
  double image_width = 640.0;
  double image_height = 480.0;
  /// One entry per epoch (before its update) plus the final state.
  std::vector<LossTerms> loss_trace;
};

TrainedKernel train(const DemoSequence& demo, KernelKind kind, const TrainConfig& config);

struct Inference {
  std::vector<int> winner_ids;
  Eigen::VectorXd g;
  ErrorSignal error;
  bool low_confidence = false;
  std::vector<std::vector<int>> candidate_ids;
};

/// Selects the association on a single frame and returns its error signal.
/// Throws `no_visible_candidates` when no candidate is fully visible.
Inference infer(const Frame& frame, const TrainedKernel& trained);

}  // namespace vgsil
