#include "psop/piap.h"

#include <algorithm>
#include <chrono>
#include <map>
#include <set>
#include <tuple>

#include "psop/error.h"

namespace psop {
namespace {

using Clock = std::chrono::steady_clock;

void RegisterNodes(PiapState& state, std::span<const DetectionRecord> records,
                   std::int64_t segment_index) {
  for (const auto& r : records) {
    state.node_ids.push_back(state.next_global_id++);
    state.frames.push_back(r.frame);
    state.segments.push_back(segment_index);
  }
  state.labels.resize(state.next_global_id, 0);
}

// Carries lineage labels from the retained nodes' previous clusters to the
// new clusters: the largest overlaps claim labels first, and clusters with no
// claim open a new lineage.
void AssignLineage(PiapState& state, std::size_t old_count) {
  struct Claim {
    std::size_t votes;
    LineageLabel label;
    std::size_t exemplar;
  };
  std::vector<Claim> claims;
  for (const auto& [exemplar, members] : state.result.clusters) {
    std::map<LineageLabel, std::size_t> votes;
    for (std::size_t m : members) {
      if (m < old_count) ++votes[state.LabelOfRetained(m)];
    }
    for (const auto& [label, count] : votes) {
      bool clash = false;
      if (auto it = state.frozen_frames.find(label);
          it != state.frozen_frames.end()) {
        for (std::size_t m : members) {
          if (it->second.contains(state.frames[m])) {
            clash = true;
            break;
          }
        }
      }
      if (!clash) claims.push_back({count, label, exemplar});
    }
  }
  std::sort(claims.begin(), claims.end(), [](const Claim& x, const Claim& y) {
    return std::tie(y.votes, x.label, x.exemplar) <
           std::tie(x.votes, y.label, y.exemplar);
  });
  std::map<std::size_t, LineageLabel> label_of_cluster;
  std::set<LineageLabel> taken;
  for (const auto& c : claims) {
    if (label_of_cluster.contains(c.exemplar) || taken.contains(c.label)) {
      continue;
    }
    label_of_cluster[c.exemplar] = c.label;
    taken.insert(c.label);
  }
  for (const auto& [exemplar, members] : state.result.clusters) {
    auto it = label_of_cluster.find(exemplar);
    const LineageLabel label =
        it != label_of_cluster.end() ? it->second : state.next_label++;
    for (std::size_t m : members) state.labels[state.node_ids[m]] = label;
  }
}

void Propagate(PiapState& state, const PiapParams& params,
               std::size_t old_count) {
  const auto start = Clock::now();
  PapRun run = RunPap(state.similarity, params.pap, std::move(state.messages));
  state.last_propagation_seconds =
      std::chrono::duration<double>(Clock::now() - start).count();
  state.last_propagation_nodes = state.similarity.size();
  state.messages = std::move(run.state);
  state.result = std::move(run.result);
  state.last_converged = state.result.converged;
  state.last_iterations = state.result.iterations;
  state.total_exclusion_repairs += state.result.exclusion_repairs;
  AssignLineage(state, old_count);
}

template <typename T>
std::vector<T> Select(const std::vector<T>& v,
                      const std::vector<std::size_t>& keep) {
  std::vector<T> out;
  out.reserve(keep.size());
  for (std::size_t k : keep) out.push_back(v[k]);
  return out;
}

Eigen::MatrixXd SelectSquare(const Eigen::MatrixXd& m,
                             const std::vector<std::size_t>& keep) {
  const auto n = static_cast<Eigen::Index>(keep.size());
  Eigen::MatrixXd out(n, n);
  for (Eigen::Index c = 0; c < n; ++c) {
    for (Eigen::Index r = 0; r < n; ++r) {
      out(r, c) = m(static_cast<Eigen::Index>(keep[static_cast<std::size_t>(r)]),
                    static_cast<Eigen::Index>(keep[static_cast<std::size_t>(c)]));
    }
  }
  return out;
}

}  // namespace

PiapState InitFirstSegment(std::span<const DetectionRecord> records,
                           const PiapParams& params,
                           std::int64_t segment_index) {
  return PiapStep(PiapState{}, records, params, segment_index);
}

std::optional<std::size_t> NearestPredecessor(
    const Eigen::RowVectorXd& unit_embedding, const EmbeddingMatrix& old_rows) {
  if (old_rows.rows() == 0) return std::nullopt;
  const Eigen::VectorXd sims = old_rows * unit_embedding.transpose();
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < sims.size(); ++i) {
    if (sims(i) > sims(best)) best = i;
  }
  return static_cast<std::size_t>(best);
}

MessageState ExtendMessages(const MessageState& previous,
                            std::span<const std::size_t> predecessor) {
  const Eigen::Index old_n = previous.r.rows();
  const Eigen::Index new_n = old_n + static_cast<Eigen::Index>(predecessor.size());
  for (std::size_t p : predecessor) {
    if (static_cast<Eigen::Index>(p) >= old_n) {
      throw Error(ErrorCode::kPiapStateMismatch,
                  "predecessor index out of range");
    }
  }
  MessageState out = MessageState::Zeros(static_cast<std::size_t>(new_n));
  out.iteration = previous.iteration;
  auto extend = [&](const Eigen::MatrixXd& src, Eigen::MatrixXd& dst) {
    dst.topLeftCorner(old_n, old_n) = src;
    for (std::size_t t = 0; t < predecessor.size(); ++t) {
      const Eigen::Index row = old_n + static_cast<Eigen::Index>(t);
      const auto p = static_cast<Eigen::Index>(predecessor[t]);
      dst.block(row, 0, 1, old_n) = src.row(p);
      dst.block(0, row, old_n, 1) = src.col(p);
    }
  };
  extend(previous.r, out.r);
  extend(previous.a, out.a);
  return out;
}

PiapState ExtendState(const PiapState& previous,
                      std::span<const DetectionRecord> records,
                      const PiapParams& params) {
  PiapState state = previous;
  const std::size_t old_count = previous.size();
  const auto old_n = static_cast<Eigen::Index>(old_count);
  const auto m = static_cast<Eigen::Index>(records.size());
  if (m == 0) return state;
  if (previous.similarity.s.rows() != old_n ||
      previous.messages.size() != old_count ||
      previous.embeddings.rows() != old_n) {
    throw Error(ErrorCode::kPiapStateMismatch,
                "state matrices do not match the node registry");
  }

  const EmbeddingMatrix fresh = NormalizeEmbeddings(records);
  if (old_n > 0 && fresh.cols() != previous.embeddings.cols()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "segment embedding dimension differs from retained nodes");
  }
  const std::int64_t segment_index = previous.segment_counter + 1;
  RegisterNodes(state, records, segment_index);

  const Eigen::Index n = old_n + m;
  state.embeddings.resize(n, fresh.cols());
  if (old_n > 0) state.embeddings.topRows(old_n) = previous.embeddings;
  state.embeddings.bottomRows(m) = fresh;

  // Only the rows touching new nodes need fresh dot products.
  Eigen::MatrixXd s(n, n);
  if (old_n > 0) s.topLeftCorner(old_n, old_n) = previous.similarity.s;
  const Eigen::MatrixXd cross = fresh * state.embeddings.transpose();
  for (Eigen::Index t = 0; t < m; ++t) {
    const Eigen::Index i = old_n + t;
    for (Eigen::Index k = 0; k <= i; ++k) {
      double v = std::clamp(cross(t, k), -1.0, 1.0) - 1.0;
      if (k != i && state.frames[static_cast<std::size_t>(k)] ==
                        state.frames[static_cast<std::size_t>(i)]) {
        v = params.pap.same_frame_penalty;
      }
      s(i, k) = v;
      s(k, i) = v;
    }
  }
  state.similarity.s = std::move(s);
  state.similarity.frame_of = state.frames;
  ApplyPreference(state.similarity, params.pap);

  std::vector<std::size_t> predecessor;
  if (old_n > 0) {
    predecessor.reserve(records.size());
    for (Eigen::Index t = 0; t < m; ++t) {
      predecessor.push_back(
          *NearestPredecessor(fresh.row(t), previous.embeddings));
    }
    state.messages = ExtendMessages(previous.messages, predecessor);
  } else {
    state.messages = MessageState::Zeros(static_cast<std::size_t>(n));
  }
  state.m_prev = old_count;
  state.segment_counter = segment_index;
  return state;
}

PiapState PiapStep(PiapState state, std::span<const DetectionRecord> records,
                   const PiapParams& params, std::int64_t segment_index) {
  if (segment_index <= state.segment_counter) {
    throw Error(ErrorCode::kPiapStateMismatch,
                "segments must be fed in increasing order");
  }
  if (records.empty()) {
    state.segment_counter = segment_index;
    return state;
  }
  const std::size_t old_count = state.size();
  // With no retained nodes this is the first-segment path: zero messages.
  state.segment_counter = segment_index - 1;
  state = ExtendState(state, records, params);
  Propagate(state, params, old_count);
  return PruneState(std::move(state), params.retention);
}

PiapState PiapStep(PiapState state, const Segment& segment,
                   const PiapParams& params) {
  return PiapStep(std::move(state), segment.records, params, segment.index);
}

PiapState PruneState(PiapState state, const RetentionPolicy& policy) {
  if (!policy.window_segments || state.empty()) return state;
  const std::int64_t oldest_kept =
      state.segment_counter - *policy.window_segments + 1;
  const std::size_t n = state.size();

  std::set<std::size_t> live_exemplars;
  for (const auto& [exemplar, members] : state.result.clusters) {
    for (std::size_t m : members) {
      if (state.segments[m] >= oldest_kept) {
        live_exemplars.insert(exemplar);
        break;
      }
    }
  }
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < n; ++i) {
    if (state.segments[i] >= oldest_kept || live_exemplars.contains(i)) {
      keep.push_back(i);
    }
  }
  if (keep.size() == n) return state;

  std::vector<std::size_t> new_index(n, n);
  for (std::size_t t = 0; t < keep.size(); ++t) new_index[keep[t]] = t;

  PiapState out;
  out.node_ids = Select(state.node_ids, keep);
  out.frames = Select(state.frames, keep);
  out.segments = Select(state.segments, keep);
  out.embeddings.resize(static_cast<Eigen::Index>(keep.size()),
                        state.embeddings.cols());
  for (std::size_t t = 0; t < keep.size(); ++t) {
    out.embeddings.row(static_cast<Eigen::Index>(t)) =
        state.embeddings.row(static_cast<Eigen::Index>(keep[t]));
  }
  out.similarity.s = SelectSquare(state.similarity.s, keep);
  out.similarity.preference = state.similarity.preference;
  out.similarity.frame_of = out.frames;
  out.messages.r = SelectSquare(state.messages.r, keep);
  out.messages.a = SelectSquare(state.messages.a, keep);
  out.messages.iteration = state.messages.iteration;

  out.result.converged = state.result.converged;
  out.result.iterations = state.result.iterations;
  out.result.exclusion_repairs = state.result.exclusion_repairs;
  out.result.exemplar_of.resize(keep.size());
  for (std::size_t t = 0; t < keep.size(); ++t) {
    const std::size_t ex = new_index[state.result.exemplar_of[keep[t]]];
    out.result.exemplar_of[t] = ex;
    out.result.clusters[ex].push_back(t);
  }

  out.m_prev = keep.size();
  out.segment_counter = state.segment_counter;
  out.next_global_id = state.next_global_id;
  for (std::size_t i = 0; i < n; ++i) {
    if (new_index[i] == n) {
      state.frozen_frames[state.labels[state.node_ids[i]]].insert(
          state.frames[i]);
    }
  }
  out.frozen_frames = std::move(state.frozen_frames);
  out.labels = std::move(state.labels);
  out.next_label = state.next_label;
  out.last_propagation_seconds = state.last_propagation_seconds;
  out.last_propagation_nodes = state.last_propagation_nodes;
  out.last_converged = state.last_converged;
  out.last_iterations = state.last_iterations;
  out.total_exclusion_repairs = state.total_exclusion_repairs;
  return out;
}

PiapState RunPiap(std::span<const Segment> segments, const PiapParams& params) {
  PiapState state;
  for (const auto& segment : segments) {
    state = PiapStep(std::move(state), segment, params);
  }
  return state;
}

}  // namespace psop
