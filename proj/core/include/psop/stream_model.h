#ifndef PSOP_STREAM_MODEL_H_
#define PSOP_STREAM_MODEL_H_

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace psop {

using FrameIndex = std::int64_t;

// IPO: indiscriminate pixelation object, always pixelated, never clustered.
// DPO: discriminate pixelation object, clustered by embedding and filtered.
enum class ObjectKind { kIpo, kDpo };

std::string_view KindName(ObjectKind kind);
std::optional<ObjectKind> ParseKind(std::string_view name);

struct Box2D {
  double x = 0.0;
  double y = 0.0;
  double w = 1.0;
  double h = 1.0;

  double Area() const { return w * h; }
  bool Valid() const { return w > 0.0 && h > 0.0; }

  friend bool operator==(const Box2D&, const Box2D&) = default;
};

struct DetectionRecord {
  FrameIndex frame = 0;
  std::string object_class;
  ObjectKind kind = ObjectKind::kDpo;
  Box2D box;
  std::optional<std::vector<double>> embedding;
  std::optional<std::string> payload_text;
  double score = 1.0;
  std::optional<std::string> truth_id;

  friend bool operator==(const DetectionRecord&, const DetectionRecord&) =
      default;
};

struct ClassSpec {
  ObjectKind kind = ObjectKind::kDpo;
  // Zero for IPO classes.
  int embed_dim = 0;

  friend bool operator==(const ClassSpec&, const ClassSpec&) = default;
};

// First line of a detection file: declares the classes and their embedding
// dimensions.
struct StreamHeader {
  int version = 1;
  int fps = 30;
  std::map<std::string, ClassSpec> classes;

  friend bool operator==(const StreamHeader&, const StreamHeader&) = default;
};

struct Segment {
  std::int64_t index = 0;
  FrameIndex first_frame = 0;
  FrameIndex last_frame = 0;
  std::vector<DetectionRecord> records;
};

struct StreamConfig {
  int segment_len = 150;
  int fps = 30;
  double iou_eps = 0.7;
  double damping = 0.5;

  void Validate() const;
};

// Throws Error(kInvalidBox / kDimensionMismatch / kMissingEmbedding) if the
// record violates the header's declaration.
void ValidateRecord(const DetectionRecord& record, const StreamHeader& header);

// Slices a frame-sorted record list into fixed-length segments
// [qN, qN + N - 1]. Segments without detections are still emitted so that the
// segment index tracks wall-clock frames.
std::vector<Segment> SegmentStream(std::span<const DetectionRecord> records,
                                   int segment_len);

// Frame number at which frame `f` reaches the audience when every N frames are
// buffered, processed for N frames, and then released: always f + 2N.
FrameIndex BroadcastFrame(FrameIndex f, int segment_len, int fps);

}  // namespace psop

#endif  // PSOP_STREAM_MODEL_H_
