// psop: synthetic streams, incremental clustering, privacy masks and metrics.

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "psop/error.h"
#include "psop/formats.h"
#include "psop/image.h"
#include "psop/pipeline.h"
#include "psop/synth_stream.h"

namespace fs = std::filesystem;

namespace {

struct GlobalOptions {
  psop::StreamConfig stream;
  std::uint64_t seed = 1;
};

void PrintWarnings(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
}

template <typename Writer, typename Data>
void WriteAtomic(const fs::path& path, Writer writer, const Data& data) {
  std::ostringstream out;
  writer(out, data);
  psop::WriteFileAtomic(path, out.str());
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
  psop::SynthConfig config;
  fs::path out = "detections.jsonl";
  fs::path truth;
  fs::path whitelist;
  int streamer = -1;
};

void AddSynth(CLI::App& app, SynthArgs& a) {
  auto* cmd = app.add_subcommand("synth", "Generate a synthetic detection stream");
  cmd->add_option("-o,--out", a.out, "Detection JSONL output");
  cmd->add_option("--truth", a.truth, "Truth sidecar output")->required();
  cmd->add_option("--whitelist-out", a.whitelist,
                  "Whitelist output (requires --streamer)");
  cmd->add_option("--identities", a.config.identities)->capture_default_str();
  cmd->add_option("--frames", a.config.frames)->capture_default_str();
  cmd->add_option("--embed-dim", a.config.embed_dim)->capture_default_str();
  cmd->add_option("--noise-sigma", a.config.noise_sigma)->capture_default_str();
  cmd->add_option("--co-occurrence", a.config.co_occurrence)
      ->capture_default_str();
  cmd->add_option("--lifespan-min", a.config.lifespan_min)->capture_default_str();
  cmd->add_option("--lifespan-max", a.config.lifespan_max)->capture_default_str();
  cmd->add_option("--fp-rate", a.config.fp_rate)->capture_default_str();
  cmd->add_option("--fn-rate", a.config.fn_rate)->capture_default_str();
  cmd->add_option("--motion", a.config.motion)->capture_default_str();
  cmd->add_option("--center-spread", a.config.center_spread)
      ->capture_default_str();
  cmd->add_option("--lookalike-groups", a.config.lookalike_groups)
      ->capture_default_str();
  cmd->add_option("--class", a.config.object_class)->capture_default_str();
  cmd->add_option("--ipo-objects", a.config.ipo_objects)->capture_default_str();
  cmd->add_option("--ipo-class", a.config.ipo_class)->capture_default_str();
  cmd->add_option("--box-size", a.config.box_size)->capture_default_str();
  cmd->add_option("--streamer", a.streamer,
                  "Identity index marked non-sensitive and whitelisted");
}

int RunSynth(const GlobalOptions& g, SynthArgs& a) {
  a.config.seed = g.seed;
  if (a.streamer >= 0) a.config.streamer = a.streamer;
  psop::SynthOutput out = psop::Generate(a.config);
  out.header.fps = g.stream.fps;
  std::ostringstream det;
  psop::WriteDetections(det, out.header, out.records);
  psop::WriteFileAtomic(a.out, det.str());
  WriteAtomic(a.truth, [](std::ostream& o, const auto& t) { psop::WriteTruth(o, t); },
              out.truth);
  if (!a.whitelist.empty()) {
    WriteAtomic(a.whitelist,
                [](std::ostream& o, const auto& w) { psop::WriteWhitelist(o, w); },
                out.whitelist);
  }
  const auto summary = psop::GroundTruthSummary(out.records);
  std::cerr << "wrote " << out.records.size() << " detections ("
            << summary.true_detections << " true, " << summary.false_positives
            << " false positives) over " << a.config.frames << " frames\n";
  return 0;
}

// ---------------------------------------------------------------- shared

struct PipelineArgs {
  fs::path in;
  fs::path whitelist;
  fs::path words;
  fs::path trajectories = "trajectories.json";
  fs::path masks = "masks.jsonl";
  fs::path assignments;
  fs::path frames_dir;
  fs::path out_frames_dir;
  double blur_sigma = 6.0;
  int workers = 1;
  int window = 4;
  bool keep_all = false;
};

psop::PipelineConfig MakeConfig(const GlobalOptions& g, const PipelineArgs& a,
                                const psop::StreamHeader& header) {
  psop::PipelineConfig config;
  config.stream = psop::OverlayConfig(header, g.stream);
  config.class_workers = a.workers;
  config.pap.workers = 1;
  config.retention = a.keep_all ? psop::RetentionPolicy::KeepAll()
                                : psop::RetentionPolicy{a.window};
  config.Sync();
  return config;
}

// Frame files are named by their integer frame index, e.g. 000042.ppm.
std::map<psop::FrameIndex, fs::path> ListFrames(const fs::path& dir) {
  if (!fs::is_directory(dir)) {
    throw psop::Error(psop::ErrorCode::kIoOpen,
                      "frames directory not found: " + dir.string());
  }
  std::map<psop::FrameIndex, fs::path> frames;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() != ".ppm") continue;
    const std::string stem = entry.path().stem().string();
    psop::FrameIndex f = 0;
    auto [ptr, ec] = std::from_chars(stem.data(), stem.data() + stem.size(), f);
    if (ec != std::errc() || ptr != stem.data() + stem.size()) continue;
    frames[f] = entry.path();
  }
  return frames;
}

void BlurFrames(const PipelineArgs& a, const std::vector<psop::MaskEntry>& masks,
                std::vector<std::string>& warnings) {
  const fs::path out_dir =
      a.out_frames_dir.empty() ? a.frames_dir / "blurred" : a.out_frames_dir;
  fs::create_directories(out_dir);
  const auto boxes = psop::MasksByFrame(masks);
  for (const auto& [frame, path] : ListFrames(a.frames_dir)) {
    psop::Image image = psop::ReadPpm(path);
    if (auto it = boxes.find(frame); it != boxes.end()) {
      image = psop::BlurRegions(image, it->second, a.blur_sigma, &warnings);
    }
    std::ostringstream out;
    psop::WritePpm(out, image);
    psop::WriteFileAtomic(out_dir / path.filename(), out.str());
  }
}

// ---------------------------------------------------------------- pipeline

void AddPipeline(CLI::App& app, PipelineArgs& a) {
  auto* cmd = app.add_subcommand(
      "pipeline", "Cluster, build trajectories, filter and emit masks");
  cmd->add_option("-i,--in", a.in, "Detection JSONL")->required();
  cmd->add_option("--whitelist", a.whitelist, "Whitelist JSON");
  cmd->add_option("--words", a.words, "Sensitive word list");
  cmd->add_option("--trajectories", a.trajectories, "Trajectories JSON output")
      ->capture_default_str();
  cmd->add_option("--masks", a.masks, "Masks JSONL output")
      ->capture_default_str();
  cmd->add_option("--assignments", a.assignments,
                  "Per-detection cluster assignment output");
  cmd->add_option("--frames-dir", a.frames_dir,
                  "Directory of <frame>.ppm files to blur");
  cmd->add_option("--out-frames-dir", a.out_frames_dir,
                  "Blurred frame output (default <frames-dir>/blurred)");
  cmd->add_option("--blur-sigma", a.blur_sigma)->capture_default_str();
  cmd->add_option("--workers", a.workers, "Classes clustered concurrently")
      ->capture_default_str();
  cmd->add_option("--window", a.window, "Retention window in segments")
      ->capture_default_str();
  cmd->add_flag("--keep-all", a.keep_all, "Retain every node");
}

int RunPipelineCmd(const GlobalOptions& g, const PipelineArgs& a) {
  const psop::DetectionFile file = psop::ReadDetections(a.in);
  psop::SensitivityPolicy policy;
  if (!a.whitelist.empty()) policy.whitelist = psop::ReadWhitelist(a.whitelist);
  if (!a.words.empty()) policy.word_list = psop::ReadWordList(a.words);

  psop::PipelineResult result = psop::RunPipeline(
      file.header, file.records, MakeConfig(g, a, file.header), policy);
  WriteAtomic(a.trajectories,
              [](std::ostream& o, const auto& t) { psop::WriteTrajectories(o, t); },
              result.trajectories);
  WriteAtomic(a.masks, [](std::ostream& o, const auto& m) { psop::WriteMasks(o, m); },
              result.masks);
  if (!a.assignments.empty()) {
    WriteAtomic(a.assignments,
                [](std::ostream& o, const auto& c) { psop::WriteAssignments(o, c); },
                result.assignments);
  }
  if (!a.frames_dir.empty()) BlurFrames(a, result.masks, result.warnings);
  PrintWarnings(result.warnings);

  std::size_t sensitive = 0;
  for (const auto& t : result.trajectories) sensitive += t.sensitive ? 1 : 0;
  std::cerr << result.trajectories.size() << " trajectories (" << sensitive
            << " sensitive), " << result.masks.size() << " mask boxes\n";
  for (const auto& s : result.class_stats) {
    std::cerr << "  " << s.object_class << ": " << s.nodes << " detections, "
              << s.clusters << " clusters";
    if (s.non_converged_segments > 0) {
      std::cerr << ", " << s.non_converged_segments
                << " segments hit the iteration cap";
    }
    std::cerr << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------- cluster

struct ClusterArgs {
  PipelineArgs pipeline;
  fs::path out = "clusters.jsonl";
  std::string mode = "piap";
};

void AddCluster(CLI::App& app, ClusterArgs& a) {
  auto* cmd = app.add_subcommand("cluster", "Cluster DPO detections only");
  cmd->add_option("-i,--in", a.pipeline.in, "Detection JSONL")->required();
  cmd->add_option("-o,--out", a.out, "Cluster assignment JSONL output")
      ->capture_default_str();
  cmd->add_option("--mode", a.mode, "piap (incremental), pap or ap (batch)")
      ->check(CLI::IsMember({"piap", "pap", "ap"}))
      ->capture_default_str();
  cmd->add_option("--window", a.pipeline.window)->capture_default_str();
  cmd->add_flag("--keep-all", a.pipeline.keep_all);
}

int RunCluster(const GlobalOptions& g, const ClusterArgs& a) {
  const psop::DetectionFile file = psop::ReadDetections(a.pipeline.in);
  const psop::PipelineConfig config = MakeConfig(g, a.pipeline, file.header);
  std::map<std::string, std::vector<psop::DetectionRecord>> by_class;
  for (const auto& r : file.records) {
    psop::ValidateRecord(r, file.header);
    if (r.kind == psop::ObjectKind::kDpo) by_class[r.object_class].push_back(r);
  }

  std::vector<psop::ClusterAssignment> out;
  for (const auto& [cls, records] : by_class) {
    std::vector<std::size_t> cluster_of;
    if (a.mode == "piap") {
      const psop::PiapState state = psop::RunPiap(
          psop::SegmentStream(records, config.stream.segment_len),
          {config.pap, config.retention});
      cluster_of = state.labels;
    } else {
      const auto sim = a.mode == "pap"
                           ? psop::PositionedSimilarity(records, config.pap)
                           : psop::PlainSimilarity(records, config.pap);
      const psop::PapRun run = psop::RunPap(sim, config.pap);
      if (!run.result.converged) {
        std::cerr << "warning: " << cls << " did not converge in "
                  << run.result.iterations << " iterations\n";
      }
      cluster_of = run.result.exemplar_of;
    }
    for (std::size_t i = 0; i < records.size(); ++i) {
      out.push_back({records[i].frame, cls, records[i].box,
                     psop::TrajectoryId(cls, cluster_of[i]),
                     records[i].truth_id});
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& x, const auto& y) { return x.frame < y.frame; });
  WriteAtomic(a.out,
              [](std::ostream& o, const auto& c) { psop::WriteAssignments(o, c); },
              out);
  return 0;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  fs::path masks;
  fs::path trajectories;
  fs::path truth;
  fs::path assignments;
  fs::path out;
  double iou_min = 0.5;
  bool per_frame = false;
};

void AddEval(CLI::App& app, EvalArgs& a) {
  auto* cmd = app.add_subcommand("eval", "Score masks against ground truth");
  auto* m = cmd->add_option("--masks", a.masks, "Masks JSONL");
  auto* t = cmd->add_option("--trajectories", a.trajectories,
                            "Trajectories JSON (sensitive points become masks)");
  m->excludes(t);
  cmd->add_option("--truth", a.truth, "Truth sidecar")->required();
  cmd->add_option("--assignments", a.assignments,
                  "Cluster assignments, enables purity");
  cmd->add_option("-o,--out", a.out, "Report output (default stdout)");
  cmd->add_option("--iou-min", a.iou_min, "Minimum IOU for a match")
      ->capture_default_str();
  cmd->add_flag("--per-frame", a.per_frame, "Include per-frame events");
}

int RunEval(const EvalArgs& a) {
  if (a.masks.empty() == a.trajectories.empty()) {
    throw psop::Error(psop::ErrorCode::kInvalidArgument,
                      "eval needs exactly one of --masks or --trajectories");
  }
  const std::vector<psop::MaskEntry> masks =
      a.masks.empty()
          ? psop::MasksFromTrajectories(psop::ReadTrajectories(a.trajectories))
          : psop::ReadMasks(a.masks);
  const auto truth = psop::ReadTruth(a.truth);
  std::vector<psop::ClusterAssignment> assignments;
  if (!a.assignments.empty()) assignments = psop::ReadAssignments(a.assignments);
  const psop::EvalReport report =
      psop::Evaluate(masks, truth, assignments, a.iou_min);
  const std::string json = psop::ReportToJson(report, a.per_frame) + "\n";
  if (a.out.empty()) {
    std::cout << json;
  } else {
    psop::WriteFileAtomic(a.out, json);
  }
  return 0;
}

// ---------------------------------------------------------------- bench

struct BenchArgs {
  psop::SynthConfig synth;
  int seeds = 5;
  int window = 4;
  bool keep_all = false;
  std::vector<std::string> modes = {"ap", "pap", "piap"};
  bool json = false;
};

void AddBench(CLI::App& app, BenchArgs& a) {
  auto* cmd = app.add_subcommand(
      "bench", "Compare AP, PAP and PIAP purity and time on synthetic streams");
  cmd->add_option("--seeds", a.seeds, "Seeds starting at --seed")
      ->capture_default_str();
  cmd->add_option("--identities", a.synth.identities)->capture_default_str();
  cmd->add_option("--frames", a.synth.frames)->capture_default_str();
  cmd->add_option("--embed-dim", a.synth.embed_dim)->capture_default_str();
  cmd->add_option("--noise-sigma", a.synth.noise_sigma)->capture_default_str();
  cmd->add_option("--co-occurrence", a.synth.co_occurrence)
      ->capture_default_str();
  cmd->add_option("--lifespan-min", a.synth.lifespan_min)->capture_default_str();
  cmd->add_option("--lifespan-max", a.synth.lifespan_max)->capture_default_str();
  cmd->add_option("--center-spread", a.synth.center_spread)
      ->capture_default_str();
  cmd->add_option("--lookalike-groups", a.synth.lookalike_groups)
      ->capture_default_str();
  cmd->add_option("--fp-rate", a.synth.fp_rate)->capture_default_str();
  cmd->add_option("--fn-rate", a.synth.fn_rate)->capture_default_str();
  cmd->add_option("--window", a.window)->capture_default_str();
  cmd->add_flag("--keep-all", a.keep_all);
  cmd->add_option("--modes", a.modes, "Subset of ap, pap, piap")
      ->check(CLI::IsMember({"ap", "pap", "piap"}));
  cmd->add_flag("--json", a.json, "Emit JSON lines instead of a table");
}

using Json = nlohmann::json;

int RunBench(const GlobalOptions& g, const BenchArgs& a) {
  psop::BenchOptions options;
  options.synth = a.synth;
  options.segment_len = g.stream.segment_len;
  options.piap.pap.damping = g.stream.damping;
  options.piap.retention = a.keep_all ? psop::RetentionPolicy::KeepAll()
                                      : psop::RetentionPolicy{a.window};
  auto has = [&](const char* m) {
    return std::find(a.modes.begin(), a.modes.end(), m) != a.modes.end();
  };
  options.run_ap = has("ap");
  options.run_pap = has("pap");
  options.run_piap = has("piap");

  if (!a.json) {
    std::cout << "seed   nodes  ids  ap_pur  pap_pur  piap_pur  ap_s     pap_s    "
                 "piap_seg_s  piap_seg_n  violations\n";
  }
  // Modes that were not run print "-" in the table and null in JSON.
  auto cell = [](bool ran, double v, int precision, int width) {
    std::ostringstream out;
    out << std::left << std::setw(width);
    if (ran) {
      std::ostringstream num;
      num << std::fixed << std::setprecision(precision) << v;
      out << num.str();
    } else {
      out << "-";
    }
    return out.str();
  };
  auto value = [](bool ran, auto v) { return ran ? Json(v) : Json(nullptr); };
  std::size_t violations = 0;
  for (int k = 0; k < a.seeds; ++k) {
    const auto row = psop::BenchSeed(options, g.seed + k);
    violations += row.pap_same_frame_violations + row.piap_same_frame_violations;
    const bool ap = options.run_ap, pap = options.run_pap, piap = options.run_piap;
    if (a.json) {
      const Json line = {
          {"seed", row.seed},
          {"nodes", row.nodes},
          {"truth_identities", row.truth_identities},
          {"ap_purity", value(ap, row.ap_purity)},
          {"pap_purity", value(pap, row.pap_purity)},
          {"piap_purity", value(piap, row.piap_purity)},
          {"ap_clusters", value(ap, row.ap_clusters)},
          {"pap_clusters", value(pap, row.pap_clusters)},
          {"piap_clusters", value(piap, row.piap_clusters)},
          {"ap_seconds", value(ap, row.ap_seconds)},
          {"pap_seconds", value(pap, row.pap_seconds)},
          {"piap_last_segment_seconds", value(piap, row.piap_last_segment_seconds)},
          {"piap_last_segment_nodes", value(piap, row.piap_last_segment_nodes)},
          {"same_frame_violations",
           row.pap_same_frame_violations + row.piap_same_frame_violations}};
      std::cout << line.dump() << "\n";
    } else {
      std::cout << std::left << std::setw(7) << row.seed << std::setw(7) << row.nodes
                << std::setw(5) << row.truth_identities << cell(ap, row.ap_purity, 3, 8)
                << cell(pap, row.pap_purity, 3, 9) << cell(piap, row.piap_purity, 3, 10)
                << cell(ap, row.ap_seconds, 4, 9) << cell(pap, row.pap_seconds, 4, 9)
                << cell(piap, row.piap_last_segment_seconds, 4, 12)
                << std::setw(12)
                << (piap ? std::to_string(row.piap_last_segment_nodes) : "-")
                << row.pap_same_frame_violations + row.piap_same_frame_violations
                << "\n";
    }
  }
  return violations == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Streaming privacy masking with incremental positioned clustering"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions g;
  app.add_option("--segment-len", g.stream.segment_len, "Frames per segment")
      ->capture_default_str();
  app.add_option("--fps", g.stream.fps)->capture_default_str();
  app.add_option("--iou-eps", g.stream.iou_eps, "Overlap threshold")
      ->capture_default_str();
  app.add_option("--damping", g.stream.damping, "Message damping")
      ->capture_default_str();
  app.add_option("--seed", g.seed)->capture_default_str();

  SynthArgs synth;
  PipelineArgs pipeline;
  ClusterArgs cluster;
  EvalArgs eval;
  BenchArgs bench;
  AddSynth(app, synth);
  AddCluster(app, cluster);
  AddPipeline(app, pipeline);
  AddEval(app, eval);
  AddBench(app, bench);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return static_cast<int>(psop::ErrorCode::kInvalidArgument);
  }

  try {
    g.stream.Validate();
    const std::string cmd = app.get_subcommands().front()->get_name();
    if (cmd == "synth") return RunSynth(g, synth);
    if (cmd == "cluster") return RunCluster(g, cluster);
    if (cmd == "pipeline") return RunPipelineCmd(g, pipeline);
    if (cmd == "eval") return RunEval(eval);
    if (cmd == "bench") return RunBench(g, bench);
  } catch (const psop::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
