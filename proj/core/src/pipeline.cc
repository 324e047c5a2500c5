#include "psop/pipeline.h"

#include <algorithm>
#include <chrono>
#include <future>
#include <map>
#include <set>
#include <tuple>

#include "json.hpp"
#include "psop/error.h"

namespace psop {
namespace {

using Clock = std::chrono::steady_clock;

double SecondsSince(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct ClassOutput {
  std::vector<Track> tracks;
  std::vector<ClusterAssignment> assignments;
  ClassStats stats;
  std::vector<std::string> warnings;
};

ClassOutput ClusterClass(const std::string& cls,
                         std::vector<DetectionRecord> records,
                         const PipelineConfig& config) {
  ClassOutput out;
  out.stats.object_class = cls;
  out.stats.nodes = records.size();
  PiapParams params{config.pap, config.retention};
  const auto segments = SegmentStream(records, config.stream.segment_len);
  PiapState state;
  for (const auto& segment : segments) {
    state = PiapStep(std::move(state), segment, params);
    if (!segment.records.empty() && !state.last_converged) {
      ++out.stats.non_converged_segments;
    }
  }
  out.stats.exclusion_repairs = state.total_exclusion_repairs;

  // Global ids follow record order, so labels[i] belongs to records[i].
  std::map<LineageLabel, Track> by_label;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    const LineageLabel label = state.labels[i];
    Track& track = by_label[label];
    if (track.id.empty()) {
      track.id = TrajectoryId(cls, label);
      track.object_class = cls;
      track.kind = ObjectKind::kDpo;
    }
    if (!track.detections.empty() && track.detections.back().frame == r.frame) {
      out.warnings.push_back("trajectory " + track.id +
                             " had two detections in frame " +
                             std::to_string(r.frame) + "; kept the first");
    } else {
      track.detections.push_back({r.frame, r.box, r.payload_text});
    }
    out.assignments.push_back({r.frame, cls, r.box, track.id, r.truth_id});
  }
  out.stats.clusters = by_label.size();
  for (auto& [label, track] : by_label) out.tracks.push_back(std::move(track));
  return out;
}

}  // namespace

void PipelineConfig::Sync() {
  pap.damping = stream.damping;
  false_positive.iou_eps = stream.iou_eps;
}

PipelineResult RunPipeline(const StreamHeader& header,
                           std::span<const DetectionRecord> records,
                           PipelineConfig config,
                           const SensitivityPolicy& policy) {
  config.stream.Validate();
  config.Sync();
  for (std::size_t i = 1; i < records.size(); ++i) {
    if (records[i].frame < records[i - 1].frame) {
      throw Error(ErrorCode::kUnsortedRecords,
                  "records not sorted by frame; first out-of-order index " +
                      std::to_string(i));
    }
  }

  std::vector<DetectionRecord> ipo;
  std::map<std::string, std::vector<DetectionRecord>> ipo_by_class;
  std::map<std::string, std::vector<DetectionRecord>> dpo_by_class;
  for (const auto& r : records) {
    if (!header.classes.empty()) ValidateRecord(r, header);
    if (r.kind == ObjectKind::kIpo) {
      ipo.push_back(r);
      ipo_by_class[r.object_class].push_back(r);
    } else {
      dpo_by_class[r.object_class].push_back(r);
    }
  }

  PipelineResult result;
  std::vector<Track> tracks;
  for (const auto& [cls, recs] : ipo_by_class) {
    auto t = BuildIpoTracks(recs, config.false_positive);
    tracks.insert(tracks.end(), std::make_move_iterator(t.begin()),
                  std::make_move_iterator(t.end()));
  }

  std::vector<std::future<ClassOutput>> pending;
  std::vector<ClassOutput> outputs;
  const auto policy_launch = config.class_workers > 1 ? std::launch::async
                                                      : std::launch::deferred;
  for (auto& [cls, recs] : dpo_by_class) {
    auto kept = ResolveDomainOverlap(ipo, recs, config.stream.iou_eps);
    pending.push_back(std::async(policy_launch, ClusterClass, cls,
                                 std::move(kept), std::cref(config)));
  }
  for (auto& f : pending) outputs.push_back(f.get());
  for (auto& out : outputs) {
    tracks.insert(tracks.end(), std::make_move_iterator(out.tracks.begin()),
                  std::make_move_iterator(out.tracks.end()));
    result.assignments.insert(result.assignments.end(), out.assignments.begin(),
                              out.assignments.end());
    result.class_stats.push_back(out.stats);
    result.warnings.insert(result.warnings.end(), out.warnings.begin(),
                           out.warnings.end());
  }
  std::stable_sort(result.assignments.begin(), result.assignments.end(),
                   [](const auto& a, const auto& b) { return a.frame < b.frame; });

  tracks = MergeInterleavedTracks(std::move(tracks), config.false_positive);
  tracks = EliminateFalsePositives(std::move(tracks), config.stream.segment_len,
                                   config.false_positive);

  std::vector<Trajectory> trajectories;
  for (const auto& track : tracks) {
    if (auto t = LinkTrackToTrajectory(track)) {
      trajectories.push_back(std::move(*t));
    }
  }
  SensitivityFilter filter(policy, config.stream.iou_eps);
  auto warnings = filter.Apply(trajectories);
  result.warnings.insert(result.warnings.end(), warnings.begin(),
                         warnings.end());

  for (auto& t : trajectories) {
    t.points = SmoothTrack(t.points, config.smoothing);
  }
  result.masks = MasksFromTrajectories(trajectories);
  result.trajectories = std::move(trajectories);
  return result;
}

std::vector<MaskEntry> MasksFromTrajectories(
    std::span<const Trajectory> trajectories) {
  std::vector<MaskEntry> masks;
  for (const auto& t : trajectories) {
    if (!t.sensitive) continue;
    for (const auto& p : t.points) {
      masks.push_back({p.frame, p.box, t.id, t.object_class});
    }
  }
  std::sort(masks.begin(), masks.end(), [](const auto& a, const auto& b) {
    return std::tie(a.frame, a.trajectory_id) <
           std::tie(b.frame, b.trajectory_id);
  });
  return masks;
}

std::map<FrameIndex, std::vector<Box2D>> MasksByFrame(
    std::span<const MaskEntry> masks) {
  std::map<FrameIndex, std::vector<Box2D>> out;
  for (const auto& m : masks) out[m.frame].push_back(m.box);
  return out;
}

EvalReport Evaluate(std::span<const MaskEntry> masks,
                    std::span<const TruthRecord> truth,
                    std::span<const ClusterAssignment> assignments,
                    double iou_min) {
  std::map<FrameIndex, std::vector<LabeledBox>> predictions;
  std::map<FrameIndex, std::vector<LabeledBox>> ground_truth;
  for (const auto& m : masks) {
    predictions[m.frame].push_back({m.box, m.trajectory_id});
  }
  std::set<std::string> identities;
  for (const auto& t : truth) {
    if (t.kind == ObjectKind::kDpo) identities.insert(t.truth_id);
    if (t.sensitive) ground_truth[t.frame].push_back({t.box, t.truth_id});
  }

  EvalReport report;
  report.events = EvaluateFrames(predictions, ground_truth, iou_min);
  report.sopa = Sopa(report.events);
  report.sopp = Sopp(report.events);
  report.opr = Opr(report.events);
  report.mp = Mp(report.events);
  report.frames_with_truth = static_cast<std::int64_t>(ground_truth.size());
  report.truth_identities = identities.size();

  std::map<std::string, std::size_t> cluster_index;
  std::vector<std::size_t> cluster_of;
  std::vector<std::string> truth_of;
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    const auto& a = assignments[i];
    cluster_index.emplace(a.trajectory_id, cluster_index.size());
    if (!a.truth_id) continue;
    cluster_of.push_back(cluster_index.at(a.trajectory_id));
    truth_of.push_back(*a.truth_id == kFalsePositiveTruthId
                           ? std::string(kFalsePositiveTruthId) + "@" +
                                 std::to_string(i)
                           : *a.truth_id);
  }
  report.predicted_clusters = cluster_index.size();
  if (!cluster_of.empty()) report.purity = Purity(cluster_of, truth_of);
  return report;
}

std::string ReportToJson(const EvalReport& report, bool per_frame) {
  using nlohmann::json;
  auto opt = [](const std::optional<double>& v) -> json {
    return v ? json(*v) : json(nullptr);
  };
  const FrameEvents t = report.events.Totals();
  json j{{"schema_version", kFormatVersion},
         {"sopa", opt(report.sopa)},
         {"sopp", opt(report.sopp)},
         {"opr", opt(report.opr)},
         {"mp", report.mp},
         {"mp_definition", std::string(kMpDefinition)},
         {"frames_with_truth", report.frames_with_truth},
         {"purity", opt(report.purity)},
         {"clusters",
          {{"predicted", report.predicted_clusters},
           {"truth", report.truth_identities}}},
         {"totals",
          {{"misses", t.misses},
           {"false_positives", t.false_positives},
           {"mismatches", t.mismatches},
           {"ground_truth", t.ground_truth},
           {"matched", t.matched},
           {"iou_sum", t.iou_sum}}}};
  if (per_frame) {
    json frames = json::array();
    for (const auto& f : report.events.frames) {
      frames.push_back({{"frame", f.frame},
                        {"m", f.misses},
                        {"fp", f.false_positives},
                        {"mm", f.mismatches},
                        {"g", f.ground_truth},
                        {"c", f.matched},
                        {"d_sum", f.iou_sum}});
    }
    j["frames"] = std::move(frames);
  }
  return j.dump(2);
}

std::size_t CountSameFrameViolations(std::span<const std::size_t> cluster_of,
                                     std::span<const FrameIndex> frames) {
  if (cluster_of.size() != frames.size()) {
    throw Error(ErrorCode::kMetricInput,
                "cluster assignment and frame list differ in length");
  }
  std::set<std::pair<std::size_t, FrameIndex>> seen;
  std::set<std::size_t> violating;
  for (std::size_t i = 0; i < cluster_of.size(); ++i) {
    if (!seen.emplace(cluster_of[i], frames[i]).second) {
      violating.insert(cluster_of[i]);
    }
  }
  return violating.size();
}

BenchRow BenchSeed(const BenchOptions& options, std::uint64_t seed) {
  SynthConfig synth = options.synth;
  synth.seed = seed;
  const SynthOutput stream = Generate(synth);

  std::vector<DetectionRecord> records;
  std::vector<std::string> truth;
  std::vector<FrameIndex> frames;
  std::set<std::string> identities;
  for (const auto& r : stream.records) {
    if (r.kind != ObjectKind::kDpo) continue;
    std::string id = r.truth_id.value_or("");
    if (id == kFalsePositiveTruthId) {
      id += "@" + std::to_string(records.size());
    } else {
      identities.insert(id);
    }
    truth.push_back(std::move(id));
    frames.push_back(r.frame);
    records.push_back(r);
  }

  BenchRow row;
  row.seed = seed;
  row.nodes = records.size();
  row.truth_identities = identities.size();
  if (records.empty()) return row;
  const PapParams& pap = options.piap.pap;

  if (options.run_ap) {
    const SimilarityMatrix sim = PlainSimilarity(records, pap);
    const auto start = Clock::now();
    const PapRun run = RunPap(sim, pap);
    row.ap_seconds = SecondsSince(start);
    row.ap_purity = Purity(run.result.exemplar_of, truth);
    row.ap_clusters = run.result.NumClusters();
  }
  if (options.run_pap) {
    const SimilarityMatrix sim = PositionedSimilarity(records, pap);
    const auto start = Clock::now();
    const PapRun run = RunPap(sim, pap);
    row.pap_seconds = SecondsSince(start);
    row.pap_purity = Purity(run.result.exemplar_of, truth);
    row.pap_clusters = run.result.NumClusters();
    row.pap_same_frame_violations =
        CountSameFrameViolations(run.result.exemplar_of, frames);
    row.pap_exclusion_repairs = run.result.exclusion_repairs;
  }
  if (options.run_piap) {
    const auto segments = SegmentStream(records, options.segment_len);
    PiapState state;
    const auto start = Clock::now();
    for (const auto& segment : segments) {
      state = PiapStep(std::move(state), segment, options.piap);
    }
    row.piap_total_seconds = SecondsSince(start);
    row.piap_last_segment_seconds = state.last_propagation_seconds;
    row.piap_last_segment_nodes = state.last_propagation_nodes;
    row.piap_segments = segments.size();
    row.piap_purity = Purity(state.labels, truth);
    row.piap_clusters = std::set<LineageLabel>(state.labels.begin(),
                                               state.labels.end())
                            .size();
    row.piap_same_frame_violations =
        CountSameFrameViolations(state.labels, frames);
    row.piap_exclusion_repairs = state.total_exclusion_repairs;
  }
  return row;
}

}  // namespace psop
