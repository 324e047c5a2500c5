#include "psop/formats.h"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "psop/error.h"
#include "unit/test_util.h"

namespace psop {
namespace {

ErrorCode CodeOf(const std::string& text) {
  std::istringstream in(text);
  try {
    ParseDetections(in);
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error for: " << text;
  return ErrorCode::kInvalidArgument;
}

std::string MessageOf(const std::string& text) {
  std::istringstream in(text);
  try {
    ParseDetections(in);
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

const char kHeader[] =
    R"({"version":1,"fps":25,"classes":{"face":{"kind":"DPO","embed_dim":2},)"
    R"("plate":{"kind":"IPO"}}})"
    "\n";

TEST(Detections, RoundTrip) {
  StreamHeader header = testing::FaceHeader(3);
  header.fps = 24;
  header.classes["plate"] = ClassSpec{ObjectKind::kIpo, 0};
  std::vector<DetectionRecord> recs = {
      testing::Dpo(0, {0.1, 0.7071067811865476, -0.3}, "id0", {1.5, 2, 3, 4}),
      testing::Ipo(0, {5, 6, 7, 8}),
      testing::Dpo(2, {1, 0, 0})};
  recs[1].score = 0.25;
  recs[2].payload_text = "hi";
  std::ostringstream out;
  WriteDetections(out, header, recs);
  std::istringstream in(out.str());
  const auto file = ParseDetections(in);
  EXPECT_EQ(file.header.fps, 24);
  EXPECT_EQ(file.header.classes.at("face").embed_dim, 3);
  EXPECT_EQ(file.header.classes.at("plate").kind, ObjectKind::kIpo);
  EXPECT_EQ(file.records, recs);
}

TEST(Detections, HeaderOnlyIsEmpty) {
  std::istringstream in(kHeader);
  const auto file = ParseDetections(in);
  EXPECT_TRUE(file.records.empty());
  EXPECT_EQ(file.header.fps, 25);
  EXPECT_EQ(OverlayConfig(file.header, StreamConfig{}).fps, 25);
}

TEST(Detections, ErrorCodes) {
  const std::string h = kHeader;
  EXPECT_EQ(CodeOf(""), ErrorCode::kMissingHeader);
  EXPECT_EQ(CodeOf(R"({"frame":0})" "\n"), ErrorCode::kMissingHeader);
  EXPECT_EQ(CodeOf(h + "{not json\n"), ErrorCode::kMalformedJson);
  EXPECT_EQ(CodeOf(h + R"({"frame":0,"class":"face","box":{"x":0,"y":0,"w":1,"h":1}})" "\n"),
            ErrorCode::kMissingEmbedding);
  EXPECT_EQ(CodeOf(h + R"({"frame":0,"class":"face","box":{"x":0,"y":0,"w":1,"h":1},"embedding":[1,0,0]})" "\n"),
            ErrorCode::kHeaderDimensionMismatch);
  EXPECT_EQ(CodeOf(h + R"({"frame":0,"class":"car","box":{"x":0,"y":0,"w":1,"h":1}})" "\n"),
            ErrorCode::kUnknownClass);
  EXPECT_EQ(CodeOf(h + R"({"frame":0,"class":"plate"})" "\n"),
            ErrorCode::kMalformedRecord);
  EXPECT_EQ(CodeOf(h + R"({"frame":3,"class":"plate","box":{"x":0,"y":0,"w":1,"h":1}})" "\n"
                       R"({"frame":2,"class":"plate","box":{"x":0,"y":0,"w":1,"h":1}})" "\n"),
            ErrorCode::kUnsortedFrames);
}

TEST(Detections, ErrorsNameTheLine) {
  const std::string text =
      std::string(kHeader) + "\n" +
      R"({"frame":0,"class":"face","box":{"x":0,"y":0,"w":1,"h":1}})" "\n";
  EXPECT_NE(MessageOf(text).find("line 3"), std::string::npos) << MessageOf(text);
}

TEST(Truth, RoundTrip) {
  std::vector<TruthRecord> truth(2);
  truth[0] = {4, "id0", "face", ObjectKind::kDpo, {1, 2, 3, 4}, false};
  truth[1] = {5, "p1", "plate", ObjectKind::kIpo, {9, 9, 2, 2}, true};
  std::ostringstream out;
  WriteTruth(out, truth);
  std::istringstream in(out.str());
  EXPECT_EQ(ParseTruth(in), truth);

  std::istringstream missing(R"({"frame":0})" "\n");
  EXPECT_THROW(ParseTruth(missing), Error);
}

TEST(Whitelist, RoundTrip) {
  const std::vector<WhitelistAnchor> anchors = {{0, {1, 2, 3, 4}}, {7, {0, 0, 5, 5}}};
  std::ostringstream out;
  WriteWhitelist(out, anchors);
  std::istringstream in(out.str());
  const auto back = ParseWhitelist(in);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].frame, 7);
  EXPECT_EQ(back[0].box, anchors[0].box);
}

TEST(WordList, SkipsBlanksAndComments) {
  std::istringstream in("# header\nalpha\n\n  \nbeta\r\n#x\n");
  EXPECT_EQ(ParseWordList(in), (std::vector<std::string>{"alpha", "beta"}));
}

TEST(Masks, RoundTrip) {
  const std::vector<MaskEntry> masks = {{0, {1, 1, 2, 2}, "face#0", "face"},
                                        {3, {0.5, 4, 6, 7}, "plate#2", "plate"}};
  std::ostringstream out;
  WriteMasks(out, masks);
  std::istringstream in(out.str());
  EXPECT_EQ(ParseMasks(in), masks);
}

TEST(Assignments, RoundTrip) {
  const std::vector<ClusterAssignment> a = {
      {0, "face", {1, 1, 2, 2}, "face#0", "id0"},
      {1, "face", {1, 1, 2, 2}, "face#1", std::nullopt}};
  std::ostringstream out;
  WriteAssignments(out, a);
  std::istringstream in(out.str());
  EXPECT_EQ(ParseAssignments(in), a);
}

TEST(Trajectories, RoundTrip) {
  Trajectory t;
  t.id = "text#3";
  t.object_class = "text";
  t.sensitive = false;
  t.points = {{2, {1, 2, 3, 4}}, {3, {1.25, 2, 3, 4}}};
  t.payload_texts = {"a", "b"};
  std::ostringstream out;
  WriteTrajectories(out, std::vector{t});
  std::istringstream in(out.str());
  const auto back = ParseTrajectories(in);
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].id, t.id);
  EXPECT_EQ(back[0].object_class, t.object_class);
  EXPECT_EQ(back[0].sensitive, false);
  EXPECT_EQ(back[0].points, t.points);
  EXPECT_EQ(back[0].payload_texts, t.payload_texts);
}

TEST(Files, AtomicWriteAndMissingFile) {
  const auto dir = std::filesystem::temp_directory_path() / "psop_formats_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "out.txt";
  WriteFileAtomic(path, "first");
  WriteFileAtomic(path, "second");
  std::ifstream in(path);
  std::string text((std::istreambuf_iterator<char>(in)), {});
  EXPECT_EQ(text, "second");
  EXPECT_FALSE(std::filesystem::exists(dir / "out.txt.tmp"));
  try {
    ReadDetections(dir / "does_not_exist.jsonl");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIoOpen);
    EXPECT_EQ(e.exit_code(), 70);
  }
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace psop
