#include "psop/stream_model.h"

#include <string>

#include "psop/error.h"

namespace psop {

std::string_view KindName(ObjectKind kind) {
  return kind == ObjectKind::kIpo ? "IPO" : "DPO";
}

std::optional<ObjectKind> ParseKind(std::string_view name) {
  if (name == "IPO" || name == "ipo") return ObjectKind::kIpo;
  if (name == "DPO" || name == "dpo") return ObjectKind::kDpo;
  return std::nullopt;
}

void StreamConfig::Validate() const {
  if (segment_len <= 0) {
    throw Error(ErrorCode::kInvalidConfig, "segment_len must be positive");
  }
  if (fps <= 0) throw Error(ErrorCode::kInvalidConfig, "fps must be positive");
  if (!(iou_eps > 0.0 && iou_eps < 1.0)) {
    throw Error(ErrorCode::kInvalidConfig, "iou_eps must lie in (0, 1)");
  }
  if (!(damping >= 0.0 && damping < 1.0)) {
    throw Error(ErrorCode::kInvalidConfig, "damping must lie in [0, 1)");
  }
}

void ValidateRecord(const DetectionRecord& record, const StreamHeader& header) {
  if (record.frame < 0) {
    throw Error(ErrorCode::kInvalidBox, "negative frame index");
  }
  if (!record.box.Valid()) {
    throw Error(ErrorCode::kInvalidBox,
                "box width and height must be positive");
  }
  auto it = header.classes.find(record.object_class);
  if (it == header.classes.end()) {
    throw Error(ErrorCode::kUnknownClass,
                "class '" + record.object_class + "' not declared in header");
  }
  if (it->second.kind != record.kind) {
    throw Error(ErrorCode::kMalformedRecord,
                "kind disagrees with header for class '" +
                    record.object_class + "'");
  }
  if (record.kind == ObjectKind::kDpo) {
    if (!record.embedding) {
      throw Error(ErrorCode::kMissingEmbedding,
                  "DPO record of class '" + record.object_class +
                      "' has no embedding");
    }
    if (static_cast<int>(record.embedding->size()) != it->second.embed_dim) {
      throw Error(ErrorCode::kHeaderDimensionMismatch,
                  "embedding dimension " +
                      std::to_string(record.embedding->size()) +
                      " != declared " + std::to_string(it->second.embed_dim));
    }
  }
}

std::vector<Segment> SegmentStream(std::span<const DetectionRecord> records,
                                   int segment_len) {
  if (segment_len <= 0) {
    throw Error(ErrorCode::kInvalidConfig, "segment_len must be positive");
  }
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].frame < 0) {
      throw Error(ErrorCode::kUnsortedRecords,
                  "negative frame at record " + std::to_string(i));
    }
    if (i > 0 && records[i].frame < records[i - 1].frame) {
      throw Error(ErrorCode::kUnsortedRecords,
                  "records not sorted by frame; first out-of-order index " +
                      std::to_string(i));
    }
  }

  std::vector<Segment> segments;
  if (records.empty()) return segments;
  const FrameIndex n = segment_len;
  const std::int64_t count = records.back().frame / n + 1;
  segments.reserve(static_cast<std::size_t>(count));
  for (std::int64_t q = 0; q < count; ++q) {
    segments.push_back(Segment{q, q * n, q * n + n - 1, {}});
  }
  for (const auto& record : records) {
    segments[static_cast<std::size_t>(record.frame / n)].records.push_back(
        record);
  }
  return segments;
}

FrameIndex BroadcastFrame(FrameIndex f, int segment_len, int fps) {
  // Times are expressed in frames (seconds * fps), so fps cancels out.
  (void)fps;
  const FrameIndex n = segment_len;
  const FrameIndex segment_start = (f / n) * n;
  const FrameIndex sent = segment_start + n;
  const FrameIndex processed = sent + n;
  return processed + (f - segment_start);
}

}  // namespace psop
