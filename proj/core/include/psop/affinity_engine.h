#ifndef PSOP_AFFINITY_ENGINE_H_
#define PSOP_AFFINITY_ENGINE_H_

#include <cstddef>
#include <map>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "psop/stream_model.h"

namespace psop {

struct Preference {
  enum class Mode { kMedian, kFixed };
  Mode mode = Mode::kMedian;
  double value = 0.0;  // used when mode == kFixed

  static Preference Median() { return {}; }
  static Preference Fixed(double v) { return {Mode::kFixed, v}; }
};

struct PapParams {
  double damping = 0.5;
  int max_iter = 200;
  int conv_window = 15;
  Preference preference;
  // Similarity forced between two detections of the same frame.
  double same_frame_penalty = -1.0;
  // Row/column blocks of one sweep are split across this many threads.
  int workers = 1;
  // Some inputs make the messages oscillate at low damping. When the exemplar
  // set is still changing after `escalate_after` sweeps at the current
  // damping, it is raised by `damping_step` (capped at `damping_max`). Zero
  // disables escalation.
  int escalate_after = 50;
  double damping_step = 0.1;
  double damping_max = 0.9;
  // Message passing can settle into a fixed point that scatters one identity
  // over many singleton exemplars. When set, the final assignment is passed
  // through RefineExemplars.
  bool refine_exemplars = true;

  void Validate() const;
};

// Unit-normalized embeddings, one per row.
using EmbeddingMatrix = Eigen::MatrixXd;

struct SimilarityMatrix {
  // n x n; the diagonal holds the preference.
  Eigen::MatrixXd s;
  double preference = 0.0;
  // Frame of every node. Empty for classic (position-free) similarity, in
  // which case the classic availability rule is used.
  std::vector<FrameIndex> frame_of;

  std::size_t size() const { return static_cast<std::size_t>(s.rows()); }
  bool positioned() const { return !frame_of.empty(); }
};

struct MessageState {
  Eigen::MatrixXd r;
  Eigen::MatrixXd a;
  int iteration = 0;

  static MessageState Zeros(std::size_t n);
  std::size_t size() const { return static_cast<std::size_t>(r.rows()); }
};

struct ClusterResult {
  std::vector<std::size_t> exemplar_of;
  // exemplar -> members (ascending, exemplar included)
  std::map<std::size_t, std::vector<std::size_t>> clusters;
  bool converged = false;
  int iterations = 0;
  // Damping in effect when the run stopped.
  double final_damping = 0.0;
  // Nodes the message passing left sharing a frame with a cluster-mate and
  // that finalization had to move. Zero when the positioned messages alone
  // already separated every same-frame pair.
  std::size_t exclusion_repairs = 0;
  // Exemplars removed by RefineExemplars.
  std::size_t demoted_exemplars = 0;

  std::size_t NumClusters() const { return clusters.size(); }
};

struct PapRun {
  MessageState state;
  ClusterResult result;
};

// Unit-normalizes the embeddings of `records`. Throws kDimensionMismatch,
// kZeroNormEmbedding or kEmptyInput, naming the offending record index.
EmbeddingMatrix NormalizeEmbeddings(std::span<const DetectionRecord> records);

// Cosine similarity minus one between every pair of rows; pairs sharing a
// frame get `params.same_frame_penalty`. Pass empty `frames` for the classic
// construction. The diagonal is set to the preference.
SimilarityMatrix BuildSimilarity(const EmbeddingMatrix& unit_rows,
                                 std::span<const FrameIndex> frames,
                                 const PapParams& params);

SimilarityMatrix PositionedSimilarity(std::span<const DetectionRecord> records,
                                      const PapParams& params);
SimilarityMatrix PlainSimilarity(std::span<const DetectionRecord> records,
                                 const PapParams& params);

// Median of the off-diagonal entries, skipping pairs that share a frame. Falls
// back to `same_frame_penalty` when every pair shares a frame (or n < 2).
double MedianPreference(const Eigen::MatrixXd& s,
                        std::span<const FrameIndex> frames,
                        double same_frame_penalty);

// Writes the preference selected by `params` onto the diagonal.
void ApplyPreference(SimilarityMatrix& sim, const PapParams& params);

// r*(i,k) = s(i,k) - max_{k' != k} (a(i,k') + s(i,k')), blended as
// r = damping * r_old + (1 - damping) * r*. Every candidate is computed from
// the incoming state.
MessageState UpdateResponsibilities(const SimilarityMatrix& sim,
                                    const MessageState& state, double damping,
                                    int workers = 1);
void UpdateResponsibilitiesInPlace(const SimilarityMatrix& sim,
                                   MessageState& state, double damping,
                                   int workers = 1);

// Availability update with same-frame repulsion: support from nodes sharing
// i's frame is subtracted instead of added. With no shared frames this is the
// classic rule. The diagonal uses the classic self-availability.
MessageState UpdateAvailabilitiesPositioned(std::span<const FrameIndex> frame_of,
                                            const MessageState& state,
                                            double damping, int workers = 1);
void UpdateAvailabilitiesPositionedInPlace(std::span<const FrameIndex> frame_of,
                                           MessageState& state, double damping,
                                           int workers = 1);

MessageState UpdateAvailabilitiesClassic(const MessageState& state,
                                         double damping, int workers = 1);
void UpdateAvailabilitiesClassicInPlace(MessageState& state, double damping,
                                        int workers = 1);

// Row-wise argmax of r + a (ties to the lowest index). Nodes choosing
// themselves are exemplars; every other node is re-pointed to the exemplar
// with the highest similarity. For positioned similarities, same-frame
// cluster-mates left by the messages are moved to the best conflict-free
// exemplar, or promoted to their own exemplar.
ClusterResult CriterionAndExemplars(const SimilarityMatrix& sim,
                                    const MessageState& state);

// Greedy ascent on the net similarity sum_i s(i, exemplar(i)). An exemplar is
// demoted when moving each of its members to the best remaining exemplar
// raises the total; for positioned similarities a member may only move to a
// cluster holding no node of its frame. Each pass scores every exemplar,
// then applies the demotions by decreasing gain, rescoring each against the
// clusters as they stand. Stops when no demotion gains.
void RefineExemplars(const SimilarityMatrix& sim, ClusterResult& result);

// Nodes with positive self-evidence r(k,k) + a(k,k), sorted ascending. This
// is the set watched for convergence; the final assignment uses the argmax
// rule above.
std::vector<std::size_t> CurrentExemplars(const MessageState& state);

// Alternates responsibility and availability sweeps until the exemplar set is
// stable for `conv_window` iterations or `max_iter` is reached. `initial`
// warm-starts the messages; zeros when omitted.
PapRun RunPap(const SimilarityMatrix& sim, const PapParams& params);
PapRun RunPap(const SimilarityMatrix& sim, const PapParams& params,
              MessageState initial);

}  // namespace psop

#endif  // PSOP_AFFINITY_ENGINE_H_
