#ifndef PSOP_PIAP_H_
#define PSOP_PIAP_H_

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <vector>

#include "psop/affinity_engine.h"
#include "psop/stream_model.h"

namespace psop {

// Which nodes survive a segment boundary. Exemplars whose cluster still has a
// retained member are always kept.
struct RetentionPolicy {
  // Keep nodes from the most recent `window_segments` segments; nullopt keeps
  // everything.
  std::optional<int> window_segments = 4;

  static RetentionPolicy KeepAll() { return RetentionPolicy{std::nullopt}; }
};

struct PiapParams {
  PapParams pap;
  RetentionPolicy retention;
};

using LineageLabel = std::size_t;

// Incremental clustering state for one DPO class.
//
// Nodes are identified by a global id assigned in arrival order. Only the
// retained subset is held in the matrices; `labels` keeps the lineage label of
// every node ever seen, frozen once the node is pruned.
struct PiapState {
  std::vector<std::size_t> node_ids;
  std::vector<FrameIndex> frames;
  std::vector<std::int64_t> segments;
  EmbeddingMatrix embeddings;

  SimilarityMatrix similarity;
  MessageState messages;
  ClusterResult result;
  // Retained node count at the previous segment boundary.
  std::size_t m_prev = 0;

  std::int64_t segment_counter = -1;
  std::size_t next_global_id = 0;
  std::vector<LineageLabel> labels;
  LineageLabel next_label = 0;
  // Frames already occupied by pruned nodes of each lineage; a cluster may
  // not inherit a lineage whose pruned history shares one of its frames.
  std::map<LineageLabel, std::set<FrameIndex>> frozen_frames;

  // Diagnostics of the latest propagation.
  double last_propagation_seconds = 0.0;
  std::size_t last_propagation_nodes = 0;
  bool last_converged = true;
  int last_iterations = 0;
  std::size_t total_exclusion_repairs = 0;

  std::size_t size() const { return node_ids.size(); }
  bool empty() const { return node_ids.empty(); }
  // Lineage label of the cluster each retained node currently belongs to.
  LineageLabel LabelOfRetained(std::size_t local) const {
    return labels[node_ids[local]];
  }
};

// Clusters the first segment from zero messages. An empty segment yields an
// empty state; the next non-empty segment initializes it.
PiapState InitFirstSegment(std::span<const DetectionRecord> records,
                           const PiapParams& params,
                           std::int64_t segment_index = 0);

// Old node (local index) most similar to `unit_embedding`; ties go to the
// lowest index. nullopt when there are no old nodes, meaning zero
// initialization.
std::optional<std::size_t> NearestPredecessor(
    const Eigen::RowVectorXd& unit_embedding, const EmbeddingMatrix& old_rows);

// Grows the messages from M to M + m nodes. `predecessor[t]` is the old node
// standing in for new node M + t: new rows copy its row over the old columns,
// new columns copy its column over the old rows, and the new-new block is
// zero.
MessageState ExtendMessages(const MessageState& previous,
                            std::span<const std::size_t> predecessor);

// Appends `records` to `previous` (similarity, messages, registry) without
// propagating.
PiapState ExtendState(const PiapState& previous,
                      std::span<const DetectionRecord> records,
                      const PiapParams& params);

// One segment: extend, propagate to convergence, finalize exemplars, update
// lineage labels and apply the retention policy.
PiapState PiapStep(PiapState state, std::span<const DetectionRecord> records,
                   const PiapParams& params, std::int64_t segment_index);
PiapState PiapStep(PiapState state, const Segment& segment,
                   const PiapParams& params);

PiapState PruneState(PiapState state, const RetentionPolicy& policy);

// Runs PiapStep over every segment of a stream of one class and returns the
// final state; `labels` then holds a label for every record in input order.
PiapState RunPiap(std::span<const Segment> segments, const PiapParams& params);

}  // namespace psop

#endif  // PSOP_PIAP_H_
