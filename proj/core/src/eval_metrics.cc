#include "psop/eval_metrics.h"

#include <algorithm>
#include <limits>
#include <set>

#include "psop/error.h"
#include "psop/trajectory_builder.h"

namespace psop {

FrameEvents EvalEvents::Totals() const {
  FrameEvents t;
  for (const auto& f : frames) {
    t.misses += f.misses;
    t.false_positives += f.false_positives;
    t.mismatches += f.mismatches;
    t.ground_truth += f.ground_truth;
    t.matched += f.matched;
    t.iou_sum += f.iou_sum;
  }
  return t;
}

std::vector<int> MaxWeightAssignment(std::span<const double> weights,
                                     std::size_t rows, std::size_t cols) {
  if (weights.size() != rows * cols) {
    throw Error(ErrorCode::kMetricInput, "weight matrix has the wrong size");
  }
  std::vector<int> assignment(rows, -1);
  if (rows == 0 || cols == 0) return assignment;

  // Hungarian method with potentials on a square cost matrix (1-based).
  const std::size_t n = std::max(rows, cols);
  auto cost = [&](std::size_t i, std::size_t j) -> double {
    if (i > rows || j > cols) return 0.0;
    const double w = weights[(i - 1) * cols + (j - 1)];
    return w > 0.0 ? -w : 0.0;
  };
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0, j) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  for (std::size_t j = 1; j <= n; ++j) {
    const std::size_t i = p[j];
    if (i == 0 || i > rows || j > cols) continue;
    if (weights[(i - 1) * cols + (j - 1)] > 0.0) {
      assignment[i - 1] = static_cast<int>(j - 1);
    }
  }
  return assignment;
}

FrameMatch MatchFrame(std::span<const LabeledBox> predictions,
                      std::span<const LabeledBox> ground_truth, double iou_min,
                      std::map<std::string, std::string>* last_match) {
  const std::size_t np = predictions.size();
  const std::size_t ng = ground_truth.size();
  std::vector<double> weights(np * ng, 0.0);
  for (std::size_t i = 0; i < np; ++i) {
    for (std::size_t j = 0; j < ng; ++j) {
      const double v = Iou(predictions[i].box, ground_truth[j].box);
      if (v >= iou_min && v > 0.0) weights[i * ng + j] = v;
    }
  }
  const auto assignment = MaxWeightAssignment(weights, np, ng);

  FrameMatch match;
  match.events.ground_truth = static_cast<std::int64_t>(ng);
  for (std::size_t i = 0; i < np; ++i) {
    if (assignment[i] < 0) continue;
    const auto j = static_cast<std::size_t>(assignment[i]);
    match.pairs.emplace_back(i, j);
    match.ious.push_back(weights[i * ng + j]);
  }
  match.events.matched = static_cast<std::int64_t>(match.pairs.size());
  match.events.misses = match.events.ground_truth - match.events.matched;
  match.events.false_positives =
      static_cast<std::int64_t>(np) - match.events.matched;
  for (double v : match.ious) match.events.iou_sum += v;

  if (last_match) {
    for (const auto& [i, j] : match.pairs) {
      const auto& gt_id = ground_truth[j].id;
      const auto& pred_id = predictions[i].id;
      auto it = last_match->find(gt_id);
      if (it != last_match->end() && it->second != pred_id) {
        ++match.events.mismatches;
      }
      (*last_match)[gt_id] = pred_id;
    }
  }
  return match;
}

EvalEvents EvaluateFrames(
    const std::map<FrameIndex, std::vector<LabeledBox>>& predictions,
    const std::map<FrameIndex, std::vector<LabeledBox>>& ground_truth,
    double iou_min) {
  std::set<FrameIndex> frames;
  for (const auto& [f, _] : predictions) frames.insert(f);
  for (const auto& [f, _] : ground_truth) frames.insert(f);
  static const std::vector<LabeledBox> kNone;
  std::map<std::string, std::string> last_match;
  EvalEvents events;
  for (FrameIndex f : frames) {
    auto p = predictions.find(f);
    auto g = ground_truth.find(f);
    FrameMatch m = MatchFrame(p != predictions.end() ? p->second : kNone,
                              g != ground_truth.end() ? g->second : kNone,
                              iou_min, &last_match);
    m.events.frame = f;
    events.frames.push_back(m.events);
  }
  return events;
}

std::optional<double> Sopa(const EvalEvents& events) {
  const FrameEvents t = events.Totals();
  if (t.ground_truth <= 0) return std::nullopt;
  return 1.0 - static_cast<double>(t.misses + t.false_positives + t.mismatches) /
                   static_cast<double>(t.ground_truth);
}

std::optional<double> Sopp(const EvalEvents& events) {
  const FrameEvents t = events.Totals();
  if (t.matched <= 0) return std::nullopt;
  return t.iou_sum / static_cast<double>(t.matched);
}

std::optional<double> Opr(const EvalEvents& events) {
  const FrameEvents t = events.Totals();
  if (t.matched <= 0) return std::nullopt;
  return static_cast<double>(t.false_positives) / static_cast<double>(t.matched);
}

std::int64_t Mp(const EvalEvents& events) {
  return std::count_if(events.frames.begin(), events.frames.end(),
                       [](const FrameEvents& f) {
                         return f.ground_truth > 0 && f.misses == 0;
                       });
}

double Purity(std::span<const std::size_t> cluster_of,
              std::span<const std::string> truth_ids) {
  if (cluster_of.size() != truth_ids.size()) {
    throw Error(ErrorCode::kMetricInput,
                "cluster assignment and truth ids differ in length");
  }
  if (cluster_of.empty()) {
    throw Error(ErrorCode::kMetricInput, "purity of an empty node set");
  }
  std::map<std::size_t, std::map<std::string_view, std::size_t>> counts;
  for (std::size_t i = 0; i < cluster_of.size(); ++i) {
    ++counts[cluster_of[i]][truth_ids[i]];
  }
  std::size_t majority_total = 0;
  for (const auto& [cluster, by_truth] : counts) {
    std::size_t best = 0;
    for (const auto& [id, c] : by_truth) best = std::max(best, c);
    majority_total += best;
  }
  return static_cast<double>(majority_total) /
         static_cast<double>(cluster_of.size());
}

}  // namespace psop
