#include "vgsil/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "vgsil/error.hpp"

namespace vgsil {

namespace {

bool same_set(std::vector<int> a, std::vector<int> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  return a == b;
}

double mean(std::span<const double> x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

}  // namespace

double accuracy(std::span<const std::vector<int>> winners, const std::vector<int>& ground_truth) {
  if (winners.empty()) throw Error(Errc::empty_input, "accuracy needs at least one frame");
  const auto hits = std::count_if(winners.begin(), winners.end(), [&](const auto& w) {
    return !w.empty() && same_set(w, ground_truth);
  });
  return static_cast<double>(hits) * 100.0 / static_cast<double>(winners.size());
}

std::optional<double> autocorr(std::span<const double> x, int k) {
  const auto n = static_cast<int>(x.size());
  if (k < 1 || n <= k) {
    throw Error(Errc::invalid_config, "autocorr needs n > k >= 1 (n=" + std::to_string(n) +
                                          ", k=" + std::to_string(k) + ")");
  }
  const double m = mean(x);
  double den = 0.0;
  for (double v : x) den += (v - m) * (v - m);
  if (!(den > 0.0)) return std::nullopt;
  double num = 0.0;
  for (int t = 0; t + k < n; ++t) num += (x[t] - m) * (x[t + k] - m);
  return num / den;
}

std::optional<double> lagged_correlation(std::span<const double> x, int k) {
  const auto n = static_cast<int>(x.size());
  if (k < 1 || n <= k + 1) {
    throw Error(Errc::invalid_config, "lagged correlation needs n > k + 1");
  }
  const auto head = x.first(static_cast<std::size_t>(n - k));
  const auto tail = x.last(static_cast<std::size_t>(n - k));
  const double ma = mean(head), mb = mean(tail);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t t = 0; t < head.size(); ++t) {
    const double a = head[t] - ma, b = tail[t] - mb;
    sab += a * b;
    saa += a * a;
    sbb += b * b;
  }
  if (!(saa > 0.0) || !(sbb > 0.0)) return std::nullopt;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double con_acc(std::span<const double> norms, int k) {
  if (norms.size() < 3) throw Error(Errc::single_frame_trace, "conAcc needs at least 3 frames");
  const auto full = autocorr(norms, k);
  if (!full) return 1.0;
  if (static_cast<int>(norms.size()) > k + 1) {
    if (auto r = lagged_correlation(norms, k)) return *r;
  }
  return *full;
}

double EvalReport::visible_accuracy() const {
  int n = 0, hits = 0;
  for (std::size_t t = 0; t < correct.size(); ++t) {
    if (!ground_truth_visible[t]) continue;
    ++n;
    hits += correct[t] ? 1 : 0;
  }
  return n == 0 ? 0.0 : 100.0 * hits / n;
}

EvalReport evaluate(const DemoSequence& demo, const TrainedKernel& trained) {
  EvalReport report;
  report.n_frames = static_cast<int>(demo.frames.size());
  std::vector<double> series;
  for (const auto& frame : demo.frames) {
    bool gt_visible = true;
    for (int id : demo.ground_truth.feature_ids) {
      const auto it = std::find_if(frame.begin(), frame.end(), [&](const auto& o) { return o.id == id; });
      gt_visible = gt_visible && it != frame.end() && it->visible;
    }
    report.ground_truth_visible.push_back(gt_visible);
    try {
      const Inference inf = infer(frame, trained);
      report.per_frame_winners.push_back(inf.winner_ids);
      report.error_norms.push_back(inf.error.norm());
      report.correct.push_back(same_set(inf.winner_ids, demo.ground_truth.feature_ids));
      series.push_back(inf.error.norm());
    } catch (const Error& e) {
      if (e.code() != Errc::no_visible_candidates && e.code() != Errc::too_few_features) throw;
      report.per_frame_winners.emplace_back();
      report.error_norms.push_back(std::numeric_limits<double>::quiet_NaN());
      report.correct.push_back(false);
    }
  }
  report.acc = accuracy(report.per_frame_winners, demo.ground_truth.feature_ids);
  if (series.size() >= 3) report.con_acc = con_acc(series, 2);
  return report;
}

}  // namespace vgsil
