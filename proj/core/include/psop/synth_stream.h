#ifndef PSOP_SYNTH_STREAM_H_
#define PSOP_SYNTH_STREAM_H_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "psop/stream_model.h"
#include "psop/trajectory_builder.h"

namespace psop {

inline constexpr std::string_view kFalsePositiveTruthId = "FP";

struct SynthConfig {
  std::uint64_t seed = 1;
  int identities = 4;
  // Lifespans are drawn uniformly from [lifespan_min, lifespan_max] frames
  // unless `lifespans` lists an explicit [first, last] per identity.
  int lifespan_min = 150;
  int lifespan_max = 600;
  std::vector<std::pair<FrameIndex, FrameIndex>> lifespans;
  int embed_dim = 64;
  // Typical angle (radians) between a detection's embedding and its
  // identity's center.
  double noise_sigma = 0.2;
  // Maximum identities visible in one frame.
  int co_occurrence = 2;
  double fp_rate = 0.0;
  double fn_rate = 0.0;
  FrameIndex frames = 300;
  // Box random-walk step, pixels per frame.
  double motion = 1.0;
  // 0 draws identity centers uniformly on the sphere. A positive value draws
  // them around one shared direction at roughly this angle, producing
  // look-alike identities.
  double center_spread = 0.0;
  // With a positive spread, identity i is drawn around shared direction
  // i % lookalike_groups.
  int lookalike_groups = 1;

  std::string object_class = "face";
  int image_width = 640;
  int image_height = 360;
  double box_size = 48.0;
  int ipo_objects = 0;
  std::string ipo_class = "plate";
  // Identity index treated as the streamer: non-sensitive in the truth and
  // anchored by a whitelist entry at its first detection.
  std::optional<int> streamer;

  void Validate() const;
};

struct TruthRecord {
  FrameIndex frame = 0;
  std::string truth_id;
  std::string object_class;
  ObjectKind kind = ObjectKind::kDpo;
  Box2D box;
  bool sensitive = true;

  friend bool operator==(const TruthRecord&, const TruthRecord&) = default;
};

struct SynthOutput {
  StreamHeader header;
  std::vector<DetectionRecord> records;
  // Every true object in every frame it is visible, including frames where
  // its detection was dropped.
  std::vector<TruthRecord> truth;
  std::vector<WhitelistAnchor> whitelist;
};

struct GroundTruthReport {
  std::map<std::string, std::int64_t> per_identity;
  std::map<FrameIndex, std::int64_t> per_frame;
  std::int64_t true_detections = 0;
  std::int64_t false_positives = 0;
};

SynthOutput Generate(const SynthConfig& config);

// Aggregates the truth ids carried by a detection stream.
GroundTruthReport GroundTruthSummary(std::span<const DetectionRecord> records);

}  // namespace psop

#endif  // PSOP_SYNTH_STREAM_H_
