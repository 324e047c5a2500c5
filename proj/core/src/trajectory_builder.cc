#include "psop/trajectory_builder.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <optional>
#include <tuple>

#include "psop/error.h"

namespace psop {
namespace {

std::string Fold(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) {
    return static_cast<char>(std::tolower(c));
  });
  return out;
}

// Half-sample symmetric index into [0, n).
std::size_t Reflect(std::int64_t i, std::int64_t n) {
  const std::int64_t period = 2 * n;
  std::int64_t m = i % period;
  if (m < 0) m += period;
  if (m >= n) m = period - 1 - m;
  return static_cast<std::size_t>(m);
}

std::vector<TrackPoint> GaussianRun(std::span<const TrackPoint> run,
                                    const SmoothingParams& params) {
  const int radius = std::max(0, params.window / 2);
  std::vector<double> kernel;
  double total = 0.0;
  for (int k = -radius; k <= radius; ++k) {
    const double w = std::exp(-0.5 * k * k / (params.sigma * params.sigma));
    kernel.push_back(w);
    total += w;
  }
  for (double& w : kernel) w /= total;

  const auto n = static_cast<std::int64_t>(run.size());
  std::vector<TrackPoint> out(run.begin(), run.end());
  for (std::int64_t t = 0; t < n; ++t) {
    double x = 0, y = 0, w = 0, h = 0;
    for (int k = -radius; k <= radius; ++k) {
      const auto& b = run[Reflect(t + k, n)].box;
      const double kw = kernel[static_cast<std::size_t>(k + radius)];
      x += kw * b.x;
      y += kw * b.y;
      w += kw * b.w;
      h += kw * b.h;
    }
    out[static_cast<std::size_t>(t)].box = Box2D{x, y, w, h};
  }
  return out;
}

}  // namespace

double Iou(const Box2D& a, const Box2D& b) {
  const double ix = std::max(0.0, std::min(a.x + a.w, b.x + b.w) -
                                      std::max(a.x, b.x));
  const double iy = std::max(0.0, std::min(a.y + a.h, b.y + b.h) -
                                      std::max(a.y, b.y));
  const double inter = ix * iy;
  const double uni = a.Area() + b.Area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

std::vector<DetectionRecord> ResolveDomainOverlap(
    std::span<const DetectionRecord> ipo, std::span<const DetectionRecord> dpo,
    double iou_eps) {
  std::map<FrameIndex, std::vector<const Box2D*>> ipo_by_frame;
  for (const auto& r : ipo) ipo_by_frame[r.frame].push_back(&r.box);
  std::vector<DetectionRecord> kept;
  kept.reserve(dpo.size());
  for (const auto& r : dpo) {
    bool covered = false;
    if (auto it = ipo_by_frame.find(r.frame); it != ipo_by_frame.end()) {
      for (const Box2D* b : it->second) {
        if (Iou(*b, r.box) > iou_eps) {
          covered = true;
          break;
        }
      }
    }
    if (!covered) kept.push_back(r);
  }
  return kept;
}

std::vector<Track> BuildIpoTracks(std::span<const DetectionRecord> records,
                                  const FalsePositiveRule& rule) {
  std::vector<Track> tracks;
  std::size_t begin = 0;
  while (begin < records.size()) {
    const FrameIndex frame = records[begin].frame;
    std::size_t end = begin;
    while (end < records.size() && records[end].frame == frame) ++end;

    struct Pair {
      double iou;
      std::size_t track;
      std::size_t det;
    };
    std::vector<Pair> pairs;
    for (std::size_t t = 0; t < tracks.size(); ++t) {
      const auto& last = tracks[t].detections.back();
      if (frame - last.frame - 1 > rule.max_gap) continue;
      for (std::size_t d = begin; d < end; ++d) {
        const double v = Iou(last.box, records[d].box);
        if (v > rule.iou_eps) pairs.push_back({v, t, d});
      }
    }
    std::sort(pairs.begin(), pairs.end(), [](const Pair& x, const Pair& y) {
      return std::tie(y.iou, x.track, x.det) < std::tie(x.iou, y.track, y.det);
    });
    std::vector<bool> track_used(tracks.size(), false);
    std::vector<bool> det_used(end - begin, false);
    for (const auto& p : pairs) {
      if (track_used[p.track] || det_used[p.det - begin]) continue;
      track_used[p.track] = true;
      det_used[p.det - begin] = true;
      const auto& r = records[p.det];
      tracks[p.track].detections.push_back({r.frame, r.box, r.payload_text});
    }
    for (std::size_t d = begin; d < end; ++d) {
      if (det_used[d - begin]) continue;
      const auto& r = records[d];
      Track t;
      t.id = TrajectoryId(r.object_class, tracks.size());
      t.object_class = r.object_class;
      t.kind = ObjectKind::kIpo;
      t.detections.push_back({r.frame, r.box, r.payload_text});
      tracks.push_back(std::move(t));
    }
    begin = end;
  }
  return tracks;
}

std::vector<std::vector<TrackDetection>> SplitChains(
    std::span<const TrackDetection> detections, const FalsePositiveRule& rule) {
  std::vector<std::vector<TrackDetection>> chains;
  for (const auto& d : detections) {
    if (!chains.empty()) {
      const auto& last = chains.back().back();
      if (d.frame - last.frame - 1 <= rule.max_gap &&
          Iou(last.box, d.box) > rule.iou_eps) {
        chains.back().push_back(d);
        continue;
      }
    }
    chains.push_back({d});
  }
  return chains;
}

std::vector<Track> EliminateFalsePositives(std::vector<Track> tracks,
                                           int segment_len,
                                           const FalsePositiveRule& rule) {
  if (segment_len <= 0) {
    throw Error(ErrorCode::kInvalidConfig, "segment_len must be positive");
  }
  std::vector<Track> out;
  for (auto& track : tracks) {
    std::map<FrameIndex, std::vector<TrackDetection>> by_segment;
    for (auto& d : track.detections) {
      by_segment[d.frame / segment_len].push_back(std::move(d));
    }
    std::vector<TrackDetection> kept;
    for (auto& [segment, dets] : by_segment) {
      std::stable_sort(dets.begin(), dets.end(),
                       [](const auto& a, const auto& b) {
                         return a.frame < b.frame;
                       });
      for (auto& chain : SplitChains(dets, rule)) {
        if (static_cast<int>(chain.size()) < rule.min_support) continue;
        for (auto& d : chain) kept.push_back(std::move(d));
      }
    }
    if (kept.empty()) continue;
    track.detections = std::move(kept);
    out.push_back(std::move(track));
  }
  return out;
}

namespace {

// Merged detections of `a` and `b` when they interleave, otherwise nothing.
// In a frame both fragments claim, the box continuing from the last kept
// detection wins and the other is dropped. Such conflicts and discontinuous
// hand-overs together may not exceed one per 40 detections, which leaves room
// for the odd false positive inside either fragment.
std::optional<std::vector<TrackDetection>> InterleavedUnion(
    const Track& a, const Track& b, const FalsePositiveRule& rule) {
  if (a.detections.empty() || b.detections.empty()) return std::nullopt;
  if (a.detections.front().frame > b.detections.back().frame ||
      b.detections.front().frame > a.detections.back().frame) {
    return std::nullopt;
  }
  struct Tagged {
    const TrackDetection* det;
    bool from_a;
  };
  std::vector<Tagged> all;
  all.reserve(a.detections.size() + b.detections.size());
  for (const auto& d : a.detections) all.push_back({&d, true});
  for (const auto& d : b.detections) all.push_back({&d, false});
  std::stable_sort(all.begin(), all.end(), [](const Tagged& x, const Tagged& y) {
    return x.det->frame < y.det->frame;
  });

  const std::size_t budget = all.size() / 40;
  std::size_t faults = 0;
  std::size_t good_handovers = 0;
  std::vector<Tagged> kept;
  for (std::size_t i = 0; i < all.size(); ++i) {
    Tagged cur = all[i];
    if (i + 1 < all.size() && all[i + 1].det->frame == cur.det->frame) {
      if (++faults > budget) return std::nullopt;
      const Tagged other = all[++i];
      const TrackDetection* anchor = nullptr;
      if (!kept.empty()) {
        anchor = kept.back().det;
      } else if (i + 1 < all.size()) {
        anchor = all[i + 1].det;
      }
      if (anchor != nullptr && Iou(anchor->box, other.det->box) > Iou(anchor->box, cur.det->box)) {
        cur = other;
      }
    }
    if (!kept.empty() && kept.back().from_a != cur.from_a) {
      const TrackDetection& prev = *kept.back().det;
      if (cur.det->frame - prev.frame - 1 > rule.max_gap ||
          !(Iou(prev.box, cur.det->box) > rule.iou_eps)) {
        if (++faults > budget) return std::nullopt;
      } else {
        ++good_handovers;
      }
    }
    kept.push_back(cur);
  }
  if (good_handovers == 0) return std::nullopt;
  std::vector<TrackDetection> out;
  out.reserve(kept.size());
  for (const auto& k : kept) out.push_back(*k.det);
  return out;
}

}  // namespace

std::vector<Track> MergeInterleavedTracks(std::vector<Track> tracks,
                                          const FalsePositiveRule& rule) {
  std::stable_sort(tracks.begin(), tracks.end(), [](const Track& a, const Track& b) {
    const FrameIndex fa = a.detections.empty() ? 0 : a.detections.front().frame;
    const FrameIndex fb = b.detections.empty() ? 0 : b.detections.front().frame;
    return fa < fb;
  });
  bool merged = true;
  while (merged) {
    merged = false;
    for (std::size_t i = 0; i < tracks.size() && !merged; ++i) {
      if (tracks[i].kind != ObjectKind::kDpo) continue;
      for (std::size_t j = i + 1; j < tracks.size(); ++j) {
        if (tracks[j].kind != ObjectKind::kDpo ||
            tracks[j].object_class != tracks[i].object_class) {
          continue;
        }
        auto joined = InterleavedUnion(tracks[i], tracks[j], rule);
        if (!joined) continue;
        tracks[i].detections = std::move(*joined);
        tracks.erase(tracks.begin() + static_cast<std::ptrdiff_t>(j));
        merged = true;
        break;
      }
    }
  }
  return tracks;
}

std::vector<TrackPoint> SmoothTrack(std::span<const TrackPoint> points,
                                    const SmoothingParams& params) {
  std::vector<TrackPoint> out;
  std::vector<TrackPoint> run;
  auto flush = [&] {
    if (run.empty()) return;
    auto smoothed = GaussianRun(run, params);
    out.insert(out.end(), smoothed.begin(), smoothed.end());
    run.clear();
  };
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!run.empty()) {
      const TrackPoint& prev = run.back();
      const FrameIndex missing = points[i].frame - prev.frame - 1;
      if (missing > params.gap_max) {
        flush();
      } else {
        for (FrameIndex m = 1; m <= missing; ++m) {
          const double t = static_cast<double>(m) / static_cast<double>(missing + 1);
          const Box2D& a = prev.box;
          const Box2D& b = points[i].box;
          run.push_back({prev.frame + m,
                         Box2D{a.x + t * (b.x - a.x), a.y + t * (b.y - a.y),
                               a.w + t * (b.w - a.w), a.h + t * (b.h - a.h)}});
        }
      }
    }
    run.push_back(points[i]);
  }
  flush();
  return out;
}

std::string TrajectoryId(std::string_view object_class, std::size_t lineage) {
  return std::string(object_class) + "#" + std::to_string(lineage);
}

std::optional<Trajectory> LinkTrackToTrajectory(const Track& track) {
  if (track.detections.empty()) return std::nullopt;
  std::vector<TrackDetection> dets = track.detections;
  std::stable_sort(dets.begin(), dets.end(), [](const auto& a, const auto& b) {
    return a.frame < b.frame;
  });
  Trajectory t;
  t.id = track.id;
  t.object_class = track.object_class;
  t.kind = track.kind;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    if (i > 0 && dets[i].frame == dets[i - 1].frame) {
      throw Error(ErrorCode::kSameFrameMembers,
                  "track " + track.id + " has two detections in frame " +
                      std::to_string(dets[i].frame));
    }
    t.points.push_back({dets[i].frame, dets[i].box});
    if (dets[i].payload_text) t.payload_texts.push_back(*dets[i].payload_text);
  }
  return t;
}

SensitivityFilter::SensitivityFilter(SensitivityPolicy policy, double iou_eps)
    : policy_(std::move(policy)), iou_eps_(iou_eps) {
  for (const auto& w : policy_.word_list) {
    if (!w.empty()) folded_words_.push_back(Fold(w));
  }
}

bool SensitivityFilter::TextIsSensitive(const Trajectory& t) const {
  for (const auto& text : t.payload_texts) {
    const std::string folded = Fold(text);
    for (const auto& w : folded_words_) {
      if (folded.find(w) != std::string::npos) return true;
    }
  }
  return false;
}

std::vector<std::string> SensitivityFilter::Apply(
    std::vector<Trajectory>& trajectories) {
  std::vector<std::string> warnings;
  for (const auto& anchor : policy_.whitelist) {
    const Trajectory* best = nullptr;
    double best_iou = -1.0;
    for (const auto& t : trajectories) {
      if (t.kind != ObjectKind::kDpo) continue;
      auto it = std::lower_bound(
          t.points.begin(), t.points.end(), anchor.frame,
          [](const TrackPoint& p, FrameIndex f) { return p.frame < f; });
      if (it == t.points.end() || it->frame != anchor.frame) continue;
      const double v = Iou(it->box, anchor.box);
      if (v >= iou_eps_ && v > best_iou) {
        best_iou = v;
        best = &t;
      }
    }
    if (best) {
      whitelisted_.insert(best->id);
    } else {
      warnings.push_back("whitelist anchor at frame " +
                         std::to_string(anchor.frame) +
                         " matched no detection; ignored");
    }
  }
  policy_.whitelist.clear();

  for (auto& t : trajectories) {
    if (t.kind == ObjectKind::kIpo) {
      t.sensitive = true;
    } else if (whitelisted_.contains(t.id)) {
      t.sensitive = false;
    } else if (policy_.text_classes.contains(t.object_class)) {
      t.sensitive = TextIsSensitive(t);
    } else {
      t.sensitive = policy_.default_dpo_face_sensitive;
    }
  }
  return warnings;
}

std::vector<Trajectory> FilterSensitivity(std::vector<Trajectory> trajectories,
                                          const SensitivityPolicy& policy,
                                          double iou_eps,
                                          std::vector<std::string>* warnings) {
  SensitivityFilter filter(policy, iou_eps);
  auto w = filter.Apply(trajectories);
  if (warnings) warnings->insert(warnings->end(), w.begin(), w.end());
  return trajectories;
}

}  // namespace psop
