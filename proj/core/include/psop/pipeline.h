#ifndef PSOP_PIPELINE_H_
#define PSOP_PIPELINE_H_

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "psop/affinity_engine.h"
#include "psop/eval_metrics.h"
#include "psop/formats.h"
#include "psop/piap.h"
#include "psop/stream_model.h"
#include "psop/synth_stream.h"
#include "psop/trajectory_builder.h"

namespace psop {

struct PipelineConfig {
  StreamConfig stream;
  PapParams pap;
  RetentionPolicy retention;
  FalsePositiveRule false_positive;
  SmoothingParams smoothing;
  // Number of DPO classes clustered concurrently.
  int class_workers = 1;

  // Copies damping and iou_eps from `stream` into the per-module parameters.
  void Sync();
};

struct ClassStats {
  std::string object_class;
  std::size_t nodes = 0;
  std::size_t clusters = 0;
  std::size_t exclusion_repairs = 0;
  std::size_t non_converged_segments = 0;
};

struct PipelineResult {
  // Smoothed trajectories with their sensitivity flags.
  std::vector<Trajectory> trajectories;
  // One entry per smoothed point of every sensitive trajectory, sorted by
  // frame then trajectory id.
  std::vector<MaskEntry> masks;
  // Lineage of every clustered DPO detection.
  std::vector<ClusterAssignment> assignments;
  std::vector<ClassStats> class_stats;
  std::vector<std::string> warnings;
};

// segment -> per-class PIAP -> fragment merge -> false-positive elimination ->
// linking -> sensitivity filtering -> smoothing -> masks. IPO detections bypass
// clustering and are chained by overlap.
PipelineResult RunPipeline(const StreamHeader& header,
                           std::span<const DetectionRecord> records,
                           PipelineConfig config,
                           const SensitivityPolicy& policy);

// Groups mask boxes by frame.
std::map<FrameIndex, std::vector<Box2D>> MasksByFrame(
    std::span<const MaskEntry> masks);

struct EvalReport {
  EvalEvents events;
  std::optional<double> sopa;
  std::optional<double> sopp;
  std::optional<double> opr;
  std::int64_t mp = 0;
  std::int64_t frames_with_truth = 0;
  std::optional<double> purity;
  std::size_t predicted_clusters = 0;
  std::size_t truth_identities = 0;
};

// Scores masks against the sensitive truth objects. Purity is computed when
// cluster assignments are supplied (detections without a truth id are
// skipped; false positives count as their own identities).
EvalReport Evaluate(std::span<const MaskEntry> masks,
                    std::span<const TruthRecord> truth,
                    std::span<const ClusterAssignment> assignments = {},
                    double iou_min = 0.5);

// Treats trajectory points of sensitive trajectories as masks.
std::vector<MaskEntry> MasksFromTrajectories(
    std::span<const Trajectory> trajectories);

// Versioned JSON report; includes the MP definition and, when `per_frame`,
// every frame's event counts. Metrics that are not applicable are null.
std::string ReportToJson(const EvalReport& report, bool per_frame = false);

// Number of clusters holding two nodes of one frame.
std::size_t CountSameFrameViolations(std::span<const std::size_t> cluster_of,
                                     std::span<const FrameIndex> frames);

struct BenchRow {
  std::uint64_t seed = 0;
  std::size_t nodes = 0;
  std::size_t truth_identities = 0;
  double ap_purity = 0.0;
  double pap_purity = 0.0;
  double piap_purity = 0.0;
  std::size_t ap_clusters = 0;
  std::size_t pap_clusters = 0;
  std::size_t piap_clusters = 0;
  double ap_seconds = 0.0;
  double pap_seconds = 0.0;
  double piap_total_seconds = 0.0;
  // Propagation time of the last PIAP segment, and the node count it ran on.
  double piap_last_segment_seconds = 0.0;
  std::size_t piap_last_segment_nodes = 0;
  std::size_t piap_segments = 0;
  std::size_t pap_same_frame_violations = 0;
  std::size_t piap_same_frame_violations = 0;
  std::size_t pap_exclusion_repairs = 0;
  std::size_t piap_exclusion_repairs = 0;
};

struct BenchOptions {
  SynthConfig synth;
  PiapParams piap;
  int segment_len = 150;
  bool run_ap = true;
  bool run_pap = true;
  bool run_piap = true;
};

// Clusters one synthetic stream with batch AP (no position rule), batch PAP
// and incremental PIAP.
BenchRow BenchSeed(const BenchOptions& options, std::uint64_t seed);

}  // namespace psop

#endif  // PSOP_PIPELINE_H_
