#ifndef PSOP_EVAL_METRICS_H_
#define PSOP_EVAL_METRICS_H_

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "psop/stream_model.h"

namespace psop {

// Counts for one frame. matched <= ground_truth, iou_sum <= matched.
struct FrameEvents {
  FrameIndex frame = 0;
  std::int64_t misses = 0;
  std::int64_t false_positives = 0;
  std::int64_t mismatches = 0;
  std::int64_t ground_truth = 0;
  std::int64_t matched = 0;
  double iou_sum = 0.0;
};

struct EvalEvents {
  std::vector<FrameEvents> frames;

  FrameEvents Totals() const;
};

// A box with an identity: trajectory id for predictions, truth id for ground
// truth.
struct LabeledBox {
  Box2D box;
  std::string id;
};

struct FrameMatch {
  // (prediction index, ground-truth index)
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::vector<double> ious;
  FrameEvents events;
};

// Maximum-weight assignment on a rectangular weight matrix (rows x cols,
// row-major). Returns for every row the assigned column or -1. Entries that
// are not positive never produce an assignment.
std::vector<int> MaxWeightAssignment(std::span<const double> weights,
                                     std::size_t rows, std::size_t cols);

// One-to-one matching maximizing the total IOU over pairs with
// IOU >= iou_min. When `last_match` is given, a ground-truth identity whose
// matched prediction id differs from the one it last matched counts as a
// mismatch, and the map is updated.
FrameMatch MatchFrame(std::span<const LabeledBox> predictions,
                      std::span<const LabeledBox> ground_truth,
                      double iou_min = 0.5,
                      std::map<std::string, std::string>* last_match = nullptr);

// Matches every frame present in either input, in ascending frame order.
EvalEvents EvaluateFrames(
    const std::map<FrameIndex, std::vector<LabeledBox>>& predictions,
    const std::map<FrameIndex, std::vector<LabeledBox>>& ground_truth,
    double iou_min = 0.5);

// 1 - sum(misses + false positives + mismatches) / sum(ground truth).
// nullopt when there is no ground truth.
std::optional<double> Sopa(const EvalEvents& events);
// Mean IOU over matched pairs; nullopt when nothing matched.
std::optional<double> Sopp(const EvalEvents& events);
// False positives per matched pair; nullopt when nothing matched.
std::optional<double> Opr(const EvalEvents& events);
// Frames with ground truth and no miss.
std::int64_t Mp(const EvalEvents& events);

inline constexpr std::string_view kMpDefinition =
    "MP counts frames with at least one ground-truth sensitive object and no "
    "missed pixelation (m_t = 0 and g_t > 0)";

// Fraction of nodes carrying the majority truth id of their cluster.
double Purity(std::span<const std::size_t> cluster_of,
              std::span<const std::string> truth_ids);

}  // namespace psop

#endif  // PSOP_EVAL_METRICS_H_
