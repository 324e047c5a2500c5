#ifndef PSOP_FORMATS_H_
#define PSOP_FORMATS_H_

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "psop/stream_model.h"
#include "psop/synth_stream.h"
#include "psop/trajectory_builder.h"

namespace psop {

inline constexpr int kFormatVersion = 1;

// Detection stream: a header line followed by one record per line.
//
//   {"version":1,"fps":30,"classes":{"face":{"kind":"DPO","embed_dim":512}}}
//   {"frame":0,"class":"face","kind":"DPO","box":{"x":..,"y":..,"w":..,"h":..},
//    "embedding":[...],"score":0.9,"truth_id":"id0"}
//
// Unknown fields are ignored. Errors carry the line number.
struct DetectionFile {
  StreamHeader header;
  std::vector<DetectionRecord> records;
};

DetectionFile ParseDetections(std::istream& in);
DetectionFile ReadDetections(const std::filesystem::path& path);
void WriteDetections(std::ostream& out, const StreamHeader& header,
                     std::span<const DetectionRecord> records);

// Header values that override the command-line stream configuration.
StreamConfig OverlayConfig(const StreamHeader& header, StreamConfig base);

// Truth sidecar: header {"version":1,"type":"truth"} then one object per
// visible true object per frame.
std::vector<TruthRecord> ParseTruth(std::istream& in);
std::vector<TruthRecord> ReadTruth(const std::filesystem::path& path);
void WriteTruth(std::ostream& out, std::span<const TruthRecord> truth);

// Whitelist: {"anchors":[{"frame":0,"box":{...}}]}
std::vector<WhitelistAnchor> ParseWhitelist(std::istream& in);
std::vector<WhitelistAnchor> ReadWhitelist(const std::filesystem::path& path);
void WriteWhitelist(std::ostream& out, std::span<const WhitelistAnchor> anchors);

// One word per line; blank lines and lines starting with '#' are skipped.
std::vector<std::string> ParseWordList(std::istream& in);
std::vector<std::string> ReadWordList(const std::filesystem::path& path);

struct MaskEntry {
  FrameIndex frame = 0;
  Box2D box;
  std::string trajectory_id;
  std::string object_class;

  friend bool operator==(const MaskEntry&, const MaskEntry&) = default;
};

// Masks: header {"version":1,"type":"masks"} then one box per line, sorted by
// frame.
std::vector<MaskEntry> ParseMasks(std::istream& in);
std::vector<MaskEntry> ReadMasks(const std::filesystem::path& path);
void WriteMasks(std::ostream& out, std::span<const MaskEntry> masks);

// Per-detection cluster membership, used for purity.
struct ClusterAssignment {
  FrameIndex frame = 0;
  std::string object_class;
  Box2D box;
  std::string trajectory_id;
  std::optional<std::string> truth_id;

  friend bool operator==(const ClusterAssignment&,
                         const ClusterAssignment&) = default;
};

std::vector<ClusterAssignment> ParseAssignments(std::istream& in);
std::vector<ClusterAssignment> ReadAssignments(const std::filesystem::path& path);
void WriteAssignments(std::ostream& out,
                      std::span<const ClusterAssignment> assignments);

// Trajectories: a single JSON document {"version":1,"trajectories":[...]}.
std::vector<Trajectory> ParseTrajectories(std::istream& in);
std::vector<Trajectory> ReadTrajectories(const std::filesystem::path& path);
void WriteTrajectories(std::ostream& out,
                       std::span<const Trajectory> trajectories);

// Writes to a sibling temporary file and renames it over `path`.
void WriteFileAtomic(const std::filesystem::path& path,
                     const std::string& contents);

}  // namespace psop

#endif  // PSOP_FORMATS_H_
