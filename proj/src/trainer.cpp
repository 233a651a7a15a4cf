#include "vgsil/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_map>

#include "vgsil/error.hpp"

namespace vgsil {

namespace {

constexpr double kEps = 1e-6;

struct Entity {
  FeatureClass cls;
  std::vector<int> ids;  // sorted
};

std::vector<Entity> entities_of(const Frame& frame) {
  std::map<int, Entity> by_entity;
  for (const auto& obs : frame) {
    auto [it, inserted] = by_entity.try_emplace(obs.entity, Entity{obs.feature_class, {}});
    it->second.ids.push_back(obs.id);
  }
  std::vector<Entity> out;
  for (auto& [key, e] : by_entity) {
    std::sort(e.ids.begin(), e.ids.end());
    out.push_back(std::move(e));
  }
  std::sort(out.begin(), out.end(), [](const Entity& a, const Entity& b) { return a.ids.front() < b.ids.front(); });
  return out;
}

std::vector<std::vector<int>> grouping_for(std::size_t first, std::size_t second) {
  std::vector<std::vector<int>> g(2);
  for (std::size_t i = 0; i < first; ++i) g[0].push_back(static_cast<int>(i));
  for (std::size_t i = 0; i < second; ++i) g[1].push_back(static_cast<int>(first + i));
  return g;
}

CandidateInstance make_candidate(const Entity& a, const Entity& b) {
  CandidateInstance c;
  c.feature_ids = a.ids;
  c.feature_ids.insert(c.feature_ids.end(), b.ids.begin(), b.ids.end());
  c.grouping = grouping_for(a.ids.size(), b.ids.size());
  return c;
}

using Lookup = std::unordered_map<int, const FeatureObservation*>;

Lookup lookup_of(const Frame& frame) {
  Lookup l;
  l.reserve(frame.size());
  for (const auto& obs : frame) l.emplace(obs.id, &obs);
  return l;
}

std::optional<CandidateObservation> observe_with(const CandidateInstance& cand, KernelKind kind,
                                                 const Lookup& lookup, double width, double height) {
  std::vector<const FeatureObservation*> members;
  for (int id : cand.feature_ids) {
    const auto it = lookup.find(id);
    if (it == lookup.end() || !it->second->visible) return std::nullopt;
    members.push_back(it->second);
  }
  const auto dim = members.front()->descriptor.size() + 2;
  Eigen::MatrixXd nodes(dim, static_cast<Eigen::Index>(members.size()));
  std::vector<ImagePoint> px;
  for (std::size_t i = 0; i < members.size(); ++i) {
    nodes.col(static_cast<Eigen::Index>(i)) = encode_node(members[i]->descriptor, members[i]->pixel, width, height);
    px.push_back(members[i]->pixel);
  }
  try {
    ErrorSignal err;
    switch (kind) {
      case KernelKind::p2p: err = p2p_error(px[0], px[1]); break;
      case KernelKind::p2l: err = p2l_error(px[0], line_through(px[1], px[2])); break;
      case KernelKind::l2l: err = l2l_error({px[0], px[1]}, line_through(px[2], px[3])); break;
      case KernelKind::p2c:
        err = p2c_error(px[0], conic_through(std::span<const ImagePoint>(px).subspan(1)));
        break;
    }
    return CandidateObservation{make_kernel_graph(kind, std::move(nodes), cand.grouping), std::move(err)};
  } catch (const Error& e) {
    if (e.code() == Errc::coincident_points) return std::nullopt;
    throw;
  }
}

Eigen::VectorXd softmax(const Eigen::VectorXd& s) {
  const double m = s.maxCoeff();
  Eigen::VectorXd g = (s.array() - m).exp();
  return g / g.sum();
}

}  // namespace

std::vector<CandidateInstance> build_candidates(const Frame& frame, KernelKind kind) {
  const auto entities = entities_of(frame);
  std::vector<const Entity*> points, segments, conics;
  for (const auto& e : entities) {
    if (e.cls == FeatureClass::point && e.ids.size() == 1) points.push_back(&e);
    if (e.cls == FeatureClass::segment_endpoint && e.ids.size() == 2) segments.push_back(&e);
    if (e.cls == FeatureClass::conic_point && e.ids.size() >= 5) conics.push_back(&e);
  }
  auto too_few = [&](const char* what) {
    throw Error(Errc::too_few_features, std::string(to_string(kind)) + " needs " + what);
  };
  std::vector<CandidateInstance> out;
  switch (kind) {
    case KernelKind::p2p:
      if (points.size() < 2) too_few("two points");
      for (std::size_t i = 0; i < points.size(); ++i)
        for (std::size_t j = i + 1; j < points.size(); ++j) out.push_back(make_candidate(*points[i], *points[j]));
      break;
    case KernelKind::p2l:
      if (points.empty() || segments.empty()) too_few("a point and a segment");
      for (const auto* p : points)
        for (const auto* s : segments) out.push_back(make_candidate(*p, *s));
      break;
    case KernelKind::l2l:
      if (segments.size() < 2) too_few("two segments");
      for (std::size_t i = 0; i < segments.size(); ++i)
        for (std::size_t j = i + 1; j < segments.size(); ++j)
          out.push_back(make_candidate(*segments[i], *segments[j]));
      break;
    case KernelKind::p2c:
      if (points.empty() || conics.empty()) too_few("a point and a conic");
      for (const auto* p : points)
        for (const auto* c : conics) out.push_back(make_candidate(*p, *c));
      break;
  }
  return out;
}

std::optional<CandidateObservation> observe(const CandidateInstance& candidate, KernelKind kind,
                                            const Frame& frame, double width, double height) {
  return observe_with(candidate, kind, lookup_of(frame), width, height);
}

double quality_score(std::span<const double> norms, double lambda_dec, double lambda_smooth) {
  if (norms.size() < 2) throw Error(Errc::single_frame_trace, "quality needs at least two frames");
  const double peak = *std::max_element(norms.begin(), norms.end()) + kEps;
  const double dec = (norms.front() - norms.back()) / peak;
  double jumps = 0.0;
  for (std::size_t t = 0; t + 1 < norms.size(); ++t) {
    const double d = norms[t + 1] - norms[t];
    jumps += d * d;
  }
  const double smooth = -jumps / (static_cast<double>(norms.size() - 1) * peak * peak);
  return lambda_dec * dec + lambda_smooth * smooth;
}

double quality_score(std::span<const ErrorSignal> errors, double lambda_dec, double lambda_smooth) {
  std::vector<double> norms;
  norms.reserve(errors.size());
  for (const auto& e : errors) norms.push_back(e.norm());
  return quality_score(norms, lambda_dec, lambda_smooth);
}

Selection select_out(std::span<const double> b) {
  if (b.empty()) throw Error(Errc::empty_input, "select_out needs at least one score");
  const Eigen::Map<const Eigen::VectorXd> s(b.data(), static_cast<Eigen::Index>(b.size()));
  Selection sel{softmax(s), 0};
  for (std::size_t j = 1; j < b.size(); ++j)
    if (b[j] > b[static_cast<std::size_t>(sel.winner)]) sel.winner = static_cast<int>(j);
  return sel;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(Errc::invalid_config, m); };
  if (!(alpha_gcr >= 0.0)) fail("alpha_gcr must be >= 0");
  if (!(alpha_rsw >= 0.0)) fail("alpha_rsw must be >= 0");
  if (!(lambda_dec >= 0.0) || !(lambda_smooth >= 0.0)) fail("lambda weights must be >= 0");
  if (!(lr > 0.0)) fail("lr must be > 0");
  if (epochs < 0) fail("epochs must be >= 0");
  if (!(alpha_conf > 0.0 && alpha_conf <= 1.0)) fail("alpha_conf must be in (0, 1]");
  if (hidden < 1) fail("hidden must be >= 1");
  if (layers < 1) fail("layers must be >= 1");
  if (!(grad_clip >= 0.0)) fail("grad_clip must be >= 0");
}

TrainingSet prepare_training_set(const DemoSequence& demo, KernelKind kind, const TrainConfig& config) {
  if (demo.frames.empty()) throw Error(Errc::invalid_config, "demo has no frames");
  TrainingSet set;
  set.kind = kind;
  set.candidates = build_candidates(demo.frames.front(), kind);
  set.input_dim = demo.config.descriptor_dim + 2;
  for (std::size_t t = 0; t < demo.frames.size(); ++t) {
    const auto lookup = lookup_of(demo.frames[t]);
    TrainingSet::FrameBatch fb;
    fb.frame = static_cast<int>(t);
    std::vector<KernelGraph> graphs;
    for (std::size_t j = 0; j < set.candidates.size(); ++j) {
      auto& cand = set.candidates[j];
      auto obs = observe_with(cand, kind, lookup, demo.camera.width, demo.camera.height);
      if (!obs) continue;
      obs->error.frame_index = static_cast<int>(t);
      cand.frames.push_back(static_cast<int>(t));
      cand.errors.push_back(obs->error);
      cand.graphs.push_back(obs->graph);
      graphs.push_back(std::move(obs->graph));
      fb.candidates.push_back(static_cast<int>(j));
    }
    if (fb.candidates.empty()) continue;
    fb.batch = GraphBatch(graphs);
    set.frames.push_back(std::move(fb));
  }
  for (const auto& cand : set.candidates) {
    set.quality.push_back(cand.errors.size() >= 2
                              ? quality_score(cand.errors, config.lambda_dec, config.lambda_smooth)
                              : 0.0);
  }
  return set;
}

LossTerms loss_from_scores(const TrainingSet& set, std::span<const Eigen::VectorXd> b,
                           const TrainConfig& config, std::vector<Eigen::VectorXd>* db) {
  if (b.size() != set.frames.size()) {
    throw Error(Errc::dimension_mismatch, "one score vector per frame batch expected");
  }
  LossTerms terms;
  if (db) {
    db->resize(b.size());
    for (std::size_t f = 0; f < b.size(); ++f) (*db)[f] = Eigen::VectorXd::Zero(b[f].size());
  }
  const double inv_temp = 1.0 / config.alpha_conf;
  for (std::size_t f = 0; f < set.frames.size(); ++f) {
    const auto& fb = set.frames[f];
    const Eigen::VectorXd g = softmax(b[f] * inv_temp);
    Eigen::VectorXd q(g.size());
    for (Eigen::Index j = 0; j < q.size(); ++j) q(j) = set.quality[static_cast<std::size_t>(fb.candidates[static_cast<std::size_t>(j)])];
    const double eq = g.dot(q);
    const double purity = g.squaredNorm();
    terms.expected_quality += eq;
    terms.rsw += 1.0 - purity;
    if (db) {
      const Eigen::VectorXd d_eq = -(g.array() * (q.array() - eq)).matrix();
      const Eigen::VectorXd d_rsw = -2.0 * (g.array() * (g.array() - purity)).matrix();
      (*db)[f] += (d_eq + config.alpha_rsw * d_rsw) * inv_temp;
    }
  }

  std::vector<int> prev_pos(set.candidates.size(), -1);
  std::vector<int> pos(set.candidates.size(), -1);
  for (std::size_t f = 0; f < set.frames.size(); ++f) {
    const auto& fb = set.frames[f];
    std::fill(pos.begin(), pos.end(), -1);
    for (std::size_t k = 0; k < fb.candidates.size(); ++k) pos[static_cast<std::size_t>(fb.candidates[k])] = static_cast<int>(k);
    const bool consecutive = f > 0 && set.frames[f - 1].frame + 1 == fb.frame;
    if (consecutive) {
      for (std::size_t k = 0; k < fb.candidates.size(); ++k) {
        const int p = prev_pos[static_cast<std::size_t>(fb.candidates[k])];
        if (p < 0) continue;
        const double d = b[f](static_cast<Eigen::Index>(k)) - b[f - 1](p);
        terms.gcr += d * d;
        if (db) {
          (*db)[f](static_cast<Eigen::Index>(k)) += 2.0 * config.alpha_gcr * d;
          (*db)[f - 1](p) -= 2.0 * config.alpha_gcr * d;
        }
      }
    }
    std::swap(prev_pos, pos);
  }
  terms.loss = -terms.expected_quality + config.alpha_gcr * terms.gcr + config.alpha_rsw * terms.rsw;
  return terms;
}

namespace {

LossTerms loss_with_workspace(const TrainingSet& set, const NetParams& params, const TrainConfig& config,
                              NetParams* grad, std::vector<Eigen::VectorXd>* b_out,
                              std::vector<ForwardCache>& caches) {
  std::vector<Eigen::VectorXd> b(set.frames.size());
  if (grad) caches.resize(set.frames.size());
  for (std::size_t f = 0; f < set.frames.size(); ++f) {
    b[f] = forward_batch(set.frames[f].batch, params, config.layers, grad ? &caches[f] : nullptr);
  }
  std::vector<Eigen::VectorXd> db;
  const LossTerms terms = loss_from_scores(set, b, config, grad ? &db : nullptr);
  if (grad) {
    for (std::size_t f = 0; f < set.frames.size(); ++f) {
      backward_batch(set.frames[f].batch, params, caches[f], db[f], *grad);
    }
  }
  if (b_out) *b_out = std::move(b);
  return terms;
}

}  // namespace

LossTerms loss(const TrainingSet& set, const NetParams& params, const TrainConfig& config,
               NetParams* grad, std::vector<Eigen::VectorXd>* b_out) {
  std::vector<ForwardCache> caches;
  return loss_with_workspace(set, params, config, grad, b_out, caches);
}

TrainedKernel train(const DemoSequence& demo, KernelKind kind, const TrainConfig& config) {
  config.validate();
  TrainingSet set = prepare_training_set(demo, kind, config);
  if (set.frames.empty()) throw Error(Errc::no_visible_candidates, "no candidate is visible on any frame");

  TrainedKernel out;
  out.kind = kind;
  out.config = config;
  out.image_width = demo.camera.width;
  out.image_height = demo.camera.height;
  out.params = NetParams::random(set.input_dim, config.hidden, derive_seed(config.seed, 7));

  NetParams grad = NetParams::zeros(set.input_dim, config.hidden);
  std::vector<ForwardCache> caches;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    grad.set_zero();
    out.loss_trace.push_back(loss_with_workspace(set, out.params, config, &grad, nullptr, caches));
    double step = config.lr;
    if (config.grad_clip > 0.0) {
      const double norm = grad.norm();
      if (norm > config.grad_clip) step *= config.grad_clip / norm;
    }
    out.params.axpy(-step, grad);
  }
  out.loss_trace.push_back(loss(set, out.params, config));
  return out;
}

Inference infer(const Frame& frame, const TrainedKernel& trained) {
  const auto candidates = build_candidates(frame, trained.kind);
  const auto lookup = lookup_of(frame);
  std::vector<KernelGraph> graphs;
  std::vector<ErrorSignal> errors;
  Inference out;
  for (const auto& cand : candidates) {
    auto obs = observe_with(cand, trained.kind, lookup, trained.image_width, trained.image_height);
    if (!obs) continue;
    graphs.push_back(std::move(obs->graph));
    errors.push_back(std::move(obs->error));
    out.candidate_ids.push_back(cand.feature_ids);
  }
  if (graphs.empty()) throw Error(Errc::no_visible_candidates, "every candidate has an invisible member");
  const GraphBatch batch(graphs);
  const Eigen::VectorXd b = forward_batch(batch, trained.params, trained.config.layers) / trained.config.alpha_conf;
  const Selection sel = select_out(std::span<const double>(b.data(), static_cast<std::size_t>(b.size())));
  out.g = sel.g;
  out.winner_ids = out.candidate_ids[static_cast<std::size_t>(sel.winner)];
  out.error = errors[static_cast<std::size_t>(sel.winner)];
  const auto m = static_cast<double>(graphs.size());
  out.low_confidence = graphs.size() >= 3 && sel.g.maxCoeff() < 2.0 / m;
  return out;
}

}  // namespace vgsil
