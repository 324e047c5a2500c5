#ifndef PSOP_TRAJECTORY_BUILDER_H_
#define PSOP_TRAJECTORY_BUILDER_H_

#include <cstddef>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "psop/stream_model.h"

namespace psop {

struct TrackPoint {
  FrameIndex frame = 0;
  Box2D box;

  friend bool operator==(const TrackPoint&, const TrackPoint&) = default;
};

// One detection attached to a track, before smoothing.
struct TrackDetection {
  FrameIndex frame = 0;
  Box2D box;
  std::optional<std::string> payload_text;
};

// Detections grouped under one identity (an IPO chain or a DPO cluster).
struct Track {
  std::string id;
  std::string object_class;
  ObjectKind kind = ObjectKind::kDpo;
  std::vector<TrackDetection> detections;  // sorted by frame
};

struct Trajectory {
  std::string id;
  std::string object_class;
  ObjectKind kind = ObjectKind::kDpo;
  std::vector<TrackPoint> points;  // strictly increasing frames
  bool sensitive = true;
  std::vector<std::string> payload_texts;
};

struct WhitelistAnchor {
  FrameIndex frame = 0;
  Box2D box;
};

struct SensitivityPolicy {
  std::vector<WhitelistAnchor> whitelist;
  std::vector<std::string> word_list;
  // Non-text DPO trajectories (faces) are pixelated unless whitelisted.
  bool default_dpo_face_sensitive = true;
  // DPO classes whose sensitivity is decided by the word list.
  std::set<std::string> text_classes = {"text"};
};

struct FalsePositiveRule {
  int min_support = 5;
  // Consecutive detections continue a chain only above this overlap.
  double iou_eps = 0.7;
  // Missing frames tolerated between two links of a chain.
  int max_gap = 4;
};

struct SmoothingParams {
  int window = 5;
  int gap_max = 4;
  double sigma = 1.0;
};

// Intersection over union; 0 for disjoint boxes.
double Iou(const Box2D& a, const Box2D& b);

// Drops every DPO detection overlapping a same-frame IPO detection with IOU
// strictly above `iou_eps`. Both inputs may be in any order; the surviving DPO
// records keep their relative order.
std::vector<DetectionRecord> ResolveDomainOverlap(
    std::span<const DetectionRecord> ipo, std::span<const DetectionRecord> dpo,
    double iou_eps);

// Links the detections of one IPO class into tracks: each detection continues
// the best-overlapping open track (IOU > iou_eps, at most max_gap missing
// frames), greedily by descending IOU, or opens a new track.
std::vector<Track> BuildIpoTracks(std::span<const DetectionRecord> records,
                                  const FalsePositiveRule& rule);

// Splits frame-sorted detections into chains of overlapping consecutive boxes.
std::vector<std::vector<TrackDetection>> SplitChains(
    std::span<const TrackDetection> detections, const FalsePositiveRule& rule);

// Within each segment [qN, qN + N - 1], keeps only the chains of a track with
// at least `min_support` detections. Tracks left empty are removed.
std::vector<Track> EliminateFalsePositives(std::vector<Track> tracks,
                                           int segment_len,
                                           const FalsePositiveRule& rule);

// Joins DPO tracks of one class that interleave in time. Their frame ranges
// must overlap, and in the merged frame order the hand-overs between them
// must be continuous: at most `max_gap` missing frames and IOU above
// `iou_eps`. Frames claimed by both tracks and discontinuous hand-overs are
// tolerated up to one per 40 detections; in a claimed frame the box that
// continues the track is kept. Clustering can split one person into
// alternating fragments, and two people seen together cannot pass the
// continuity test. Run this before false-positive elimination, which would
// otherwise cut each fragment into short chains. The merged track keeps the
// id of the fragment seen first.
std::vector<Track> MergeInterleavedTracks(std::vector<Track> tracks,
                                          const FalsePositiveRule& rule);

// Fills gaps of at most gap_max frames by linear interpolation, then applies a
// normalized Gaussian over `window` consecutive frames (reflected at the ends
// of each contiguous run). Longer gaps split the trajectory; nothing is
// extrapolated.
std::vector<TrackPoint> SmoothTrack(std::span<const TrackPoint> points,
                                    const SmoothingParams& params = {});

std::string TrajectoryId(std::string_view object_class, std::size_t lineage);

// Orders a track's detections into a trajectory. Throws kSameFrameMembers if
// two detections share a frame; returns nullopt for an empty track.
std::optional<Trajectory> LinkTrackToTrajectory(const Track& track);

// Marks trajectories sensitive or not. Whitelisting is sticky: once a
// trajectory id has been whitelisted it stays non-sensitive on later calls.
class SensitivityFilter {
 public:
  SensitivityFilter(SensitivityPolicy policy, double iou_eps);

  // Returns warnings for anchors that matched no detection.
  std::vector<std::string> Apply(std::vector<Trajectory>& trajectories);

  const std::set<std::string>& whitelisted() const { return whitelisted_; }

 private:
  bool TextIsSensitive(const Trajectory& t) const;

  SensitivityPolicy policy_;
  double iou_eps_;
  std::vector<std::string> folded_words_;
  std::set<std::string> whitelisted_;
};

std::vector<Trajectory> FilterSensitivity(std::vector<Trajectory> trajectories,
                                          const SensitivityPolicy& policy,
                                          double iou_eps,
                                          std::vector<std::string>* warnings =
                                              nullptr);

}  // namespace psop

#endif  // PSOP_TRAJECTORY_BUILDER_H_
