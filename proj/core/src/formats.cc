#include "psop/formats.h"

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "psop/error.h"

namespace psop {
namespace {

using nlohmann::json;

std::string At(std::size_t line) { return "line " + std::to_string(line) + ": "; }

json ParseLine(const std::string& text, std::size_t line) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kMalformedJson,
                At(line) + "column " + std::to_string(e.byte) + ": " +
                    e.what());
  }
}

json BoxToJson(const Box2D& b) {
  return json{{"x", b.x}, {"y", b.y}, {"w", b.w}, {"h", b.h}};
}

Box2D BoxFromJson(const json& j) {
  return Box2D{j.at("x").get<double>(), j.at("y").get<double>(),
               j.at("w").get<double>(), j.at("h").get<double>()};
}

// Runs `fn` translating nlohmann type/key errors into kMalformedRecord.
template <typename Fn>
auto Guard(std::size_t line, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(e.code(), At(line) + e.what());
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedRecord, At(line) + e.what());
  }
}

std::ifstream OpenIn(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::kIoOpen, "cannot open " + path.string());
  }
  return in;
}

// Non-empty lines with their 1-based numbers.
template <typename Fn>
void ForEachLine(std::istream& in, Fn&& fn) {
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    if (text.find_first_not_of(" \t") == std::string::npos) continue;
    fn(text, line);
  }
}

void ExpectHeader(const json& j, std::string_view type, std::size_t line) {
  if (!j.is_object() || !j.contains("version") ||
      j.value("type", std::string()) != type) {
    throw Error(ErrorCode::kMissingHeader,
                At(line) + "expected a '" + std::string(type) + "' header");
  }
}

}  // namespace

DetectionFile ParseDetections(std::istream& in) {
  DetectionFile file;
  bool have_header = false;
  FrameIndex last_frame = -1;
  ForEachLine(in, [&](const std::string& text, std::size_t line) {
    const json j = ParseLine(text, line);
    if (!have_header) {
      if (!j.is_object() || !j.contains("classes") || !j.contains("version")) {
        throw Error(ErrorCode::kMissingHeader,
                    At(line) + "first line must be the stream header");
      }
      Guard(line, [&] {
        file.header.version = j.at("version").get<int>();
        file.header.fps = j.value("fps", 30);
        for (const auto& [name, spec] : j.at("classes").items()) {
          const auto kind = ParseKind(spec.at("kind").get<std::string>());
          if (!kind) {
            throw Error(ErrorCode::kMalformedRecord,
                        "unknown kind for class '" + name + "'");
          }
          file.header.classes[name] =
              ClassSpec{*kind, spec.value("embed_dim", 0)};
        }
        return 0;
      });
      have_header = true;
      return;
    }
    DetectionRecord r = Guard(line, [&] {
      DetectionRecord rec;
      rec.frame = j.at("frame").get<FrameIndex>();
      rec.object_class = j.at("class").get<std::string>();
      auto cls = file.header.classes.find(rec.object_class);
      if (cls == file.header.classes.end()) {
        throw Error(ErrorCode::kUnknownClass,
                    "class '" + rec.object_class + "' not declared in header");
      }
      rec.kind = cls->second.kind;
      if (j.contains("kind")) {
        const auto kind = ParseKind(j.at("kind").get<std::string>());
        if (!kind) throw Error(ErrorCode::kMalformedRecord, "unknown kind");
        rec.kind = *kind;
      }
      rec.box = BoxFromJson(j.at("box"));
      if (j.contains("embedding") && !j.at("embedding").is_null()) {
        rec.embedding = j.at("embedding").get<std::vector<double>>();
      }
      if (j.contains("payload_text") && !j.at("payload_text").is_null()) {
        rec.payload_text = j.at("payload_text").get<std::string>();
      }
      rec.score = j.value("score", 1.0);
      if (j.contains("truth_id") && !j.at("truth_id").is_null()) {
        rec.truth_id = j.at("truth_id").get<std::string>();
      }
      ValidateRecord(rec, file.header);
      return rec;
    });
    if (r.frame < last_frame) {
      throw Error(ErrorCode::kUnsortedFrames,
                  At(line) + "frame " + std::to_string(r.frame) +
                      " follows frame " + std::to_string(last_frame));
    }
    last_frame = r.frame;
    file.records.push_back(std::move(r));
  });
  if (!have_header) {
    throw Error(ErrorCode::kMissingHeader, "detection file has no header");
  }
  return file;
}

DetectionFile ReadDetections(const std::filesystem::path& path) {
  auto in = OpenIn(path);
  return ParseDetections(in);
}

void WriteDetections(std::ostream& out, const StreamHeader& header,
                     std::span<const DetectionRecord> records) {
  json classes = json::object();
  for (const auto& [name, spec] : header.classes) {
    classes[name] = json{{"kind", KindName(spec.kind)},
                         {"embed_dim", spec.embed_dim}};
  }
  out << json{{"version", header.version},
              {"fps", header.fps},
              {"classes", classes}}
             .dump()
      << '\n';
  for (const auto& r : records) {
    json j{{"frame", r.frame},
           {"class", r.object_class},
           {"kind", KindName(r.kind)},
           {"box", BoxToJson(r.box)},
           {"score", r.score}};
    if (r.embedding) j["embedding"] = *r.embedding;
    if (r.payload_text) j["payload_text"] = *r.payload_text;
    if (r.truth_id) j["truth_id"] = *r.truth_id;
    out << j.dump() << '\n';
  }
}

StreamConfig OverlayConfig(const StreamHeader& header, StreamConfig base) {
  if (header.fps > 0) base.fps = header.fps;
  return base;
}

std::vector<TruthRecord> ParseTruth(std::istream& in) {
  std::vector<TruthRecord> out;
  bool have_header = false;
  ForEachLine(in, [&](const std::string& text, std::size_t line) {
    const json j = ParseLine(text, line);
    if (!have_header) {
      ExpectHeader(j, "truth", line);
      have_header = true;
      return;
    }
    out.push_back(Guard(line, [&] {
      TruthRecord t;
      t.frame = j.at("frame").get<FrameIndex>();
      t.truth_id = j.at("truth_id").get<std::string>();
      t.object_class = j.at("class").get<std::string>();
      const auto kind = ParseKind(j.value("kind", std::string("DPO")));
      if (!kind) throw Error(ErrorCode::kMalformedRecord, "unknown kind");
      t.kind = *kind;
      t.box = BoxFromJson(j.at("box"));
      t.sensitive = j.value("sensitive", true);
      return t;
    }));
  });
  if (!have_header) {
    throw Error(ErrorCode::kMissingHeader, "truth file has no header");
  }
  return out;
}

std::vector<TruthRecord> ReadTruth(const std::filesystem::path& path) {
  auto in = OpenIn(path);
  return ParseTruth(in);
}

void WriteTruth(std::ostream& out, std::span<const TruthRecord> truth) {
  out << json{{"version", kFormatVersion}, {"type", "truth"}}.dump() << '\n';
  for (const auto& t : truth) {
    out << json{{"frame", t.frame},
                {"truth_id", t.truth_id},
                {"class", t.object_class},
                {"kind", KindName(t.kind)},
                {"box", BoxToJson(t.box)},
                {"sensitive", t.sensitive}}
               .dump()
        << '\n';
  }
}

std::vector<WhitelistAnchor> ParseWhitelist(std::istream& in) {
  std::stringstream buffer;
  buffer << in.rdbuf();
  const json j = ParseLine(buffer.str(), 1);
  return Guard(1, [&] {
    std::vector<WhitelistAnchor> anchors;
    for (const auto& a : j.at("anchors")) {
      anchors.push_back({a.at("frame").get<FrameIndex>(), BoxFromJson(a.at("box"))});
    }
    return anchors;
  });
}

std::vector<WhitelistAnchor> ReadWhitelist(const std::filesystem::path& path) {
  auto in = OpenIn(path);
  return ParseWhitelist(in);
}

void WriteWhitelist(std::ostream& out,
                    std::span<const WhitelistAnchor> anchors) {
  json list = json::array();
  for (const auto& a : anchors) {
    list.push_back(json{{"frame", a.frame}, {"box", BoxToJson(a.box)}});
  }
  out << json{{"version", kFormatVersion}, {"anchors", list}}.dump(2) << '\n';
}

std::vector<std::string> ParseWordList(std::istream& in) {
  std::vector<std::string> words;
  std::string text;
  while (std::getline(in, text)) {
    if (!text.empty() && text.back() == '\r') text.pop_back();
    const auto b = text.find_first_not_of(" \t");
    if (b == std::string::npos || text[b] == '#') continue;
    const auto e = text.find_last_not_of(" \t");
    words.push_back(text.substr(b, e - b + 1));
  }
  return words;
}

std::vector<std::string> ReadWordList(const std::filesystem::path& path) {
  auto in = OpenIn(path);
  return ParseWordList(in);
}

std::vector<MaskEntry> ParseMasks(std::istream& in) {
  std::vector<MaskEntry> out;
  bool have_header = false;
  ForEachLine(in, [&](const std::string& text, std::size_t line) {
    const json j = ParseLine(text, line);
    if (!have_header) {
      ExpectHeader(j, "masks", line);
      have_header = true;
      return;
    }
    out.push_back(Guard(line, [&] {
      return MaskEntry{j.at("frame").get<FrameIndex>(), BoxFromJson(j.at("box")),
                       j.at("trajectory_id").get<std::string>(),
                       j.value("class", std::string())};
    }));
  });
  if (!have_header) {
    throw Error(ErrorCode::kMissingHeader, "masks file has no header");
  }
  return out;
}

std::vector<MaskEntry> ReadMasks(const std::filesystem::path& path) {
  auto in = OpenIn(path);
  return ParseMasks(in);
}

void WriteMasks(std::ostream& out, std::span<const MaskEntry> masks) {
  out << json{{"version", kFormatVersion}, {"type", "masks"}}.dump() << '\n';
  for (const auto& m : masks) {
    out << json{{"frame", m.frame},
                {"box", BoxToJson(m.box)},
                {"trajectory_id", m.trajectory_id},
                {"class", m.object_class}}
               .dump()
        << '\n';
  }
}

std::vector<ClusterAssignment> ParseAssignments(std::istream& in) {
  std::vector<ClusterAssignment> out;
  bool have_header = false;
  ForEachLine(in, [&](const std::string& text, std::size_t line) {
    const json j = ParseLine(text, line);
    if (!have_header) {
      ExpectHeader(j, "clusters", line);
      have_header = true;
      return;
    }
    out.push_back(Guard(line, [&] {
      ClusterAssignment a;
      a.frame = j.at("frame").get<FrameIndex>();
      a.object_class = j.at("class").get<std::string>();
      a.box = BoxFromJson(j.at("box"));
      a.trajectory_id = j.at("trajectory_id").get<std::string>();
      if (j.contains("truth_id") && !j.at("truth_id").is_null()) {
        a.truth_id = j.at("truth_id").get<std::string>();
      }
      return a;
    }));
  });
  if (!have_header) {
    throw Error(ErrorCode::kMissingHeader, "clusters file has no header");
  }
  return out;
}

std::vector<ClusterAssignment> ReadAssignments(
    const std::filesystem::path& path) {
  auto in = OpenIn(path);
  return ParseAssignments(in);
}

void WriteAssignments(std::ostream& out,
                      std::span<const ClusterAssignment> assignments) {
  out << json{{"version", kFormatVersion}, {"type", "clusters"}}.dump() << '\n';
  for (const auto& a : assignments) {
    json j{{"frame", a.frame},
           {"class", a.object_class},
           {"box", BoxToJson(a.box)},
           {"trajectory_id", a.trajectory_id}};
    if (a.truth_id) j["truth_id"] = *a.truth_id;
    out << j.dump() << '\n';
  }
}

std::vector<Trajectory> ParseTrajectories(std::istream& in) {
  std::stringstream buffer;
  buffer << in.rdbuf();
  const json j = ParseLine(buffer.str(), 1);
  return Guard(1, [&] {
    std::vector<Trajectory> out;
    for (const auto& t : j.at("trajectories")) {
      Trajectory traj;
      traj.id = t.at("id").get<std::string>();
      traj.object_class = t.at("class").get<std::string>();
      const auto kind = ParseKind(t.at("kind").get<std::string>());
      if (!kind) throw Error(ErrorCode::kMalformedRecord, "unknown kind");
      traj.kind = *kind;
      traj.sensitive = t.at("sensitive").get<bool>();
      for (const auto& p : t.at("points")) {
        traj.points.push_back({p.at("frame").get<FrameIndex>(),
                               BoxFromJson(p.at("box"))});
      }
      if (t.contains("payload_texts")) {
        traj.payload_texts = t.at("payload_texts").get<std::vector<std::string>>();
      }
      out.push_back(std::move(traj));
    }
    return out;
  });
}

std::vector<Trajectory> ReadTrajectories(const std::filesystem::path& path) {
  auto in = OpenIn(path);
  return ParseTrajectories(in);
}

void WriteTrajectories(std::ostream& out,
                       std::span<const Trajectory> trajectories) {
  json list = json::array();
  for (const auto& t : trajectories) {
    json points = json::array();
    for (const auto& p : t.points) {
      points.push_back(json{{"frame", p.frame}, {"box", BoxToJson(p.box)}});
    }
    json j{{"id", t.id},
           {"class", t.object_class},
           {"kind", KindName(t.kind)},
           {"sensitive", t.sensitive},
           {"points", points}};
    if (!t.payload_texts.empty()) j["payload_texts"] = t.payload_texts;
    list.push_back(std::move(j));
  }
  out << json{{"version", kFormatVersion}, {"trajectories", list}}.dump()
      << '\n';
}

void WriteFileAtomic(const std::filesystem::path& path,
                     const std::string& contents) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIoOpen, "cannot write " + tmp.string());
    out << contents;
    out.flush();
    if (!out) throw Error(ErrorCode::kIoOpen, "short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    throw Error(ErrorCode::kIoOpen,
                "cannot rename " + tmp.string() + ": " + ec.message());
  }
}

}  // namespace psop
