#include "psop/affinity_engine.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <string>
#include <unordered_map>

#include "parallel.h"
#include "psop/error.h"

namespace psop {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Dense frame ids in [0, count) so per-frame sums can live in a flat vector.
struct DenseFrames {
  std::vector<std::size_t> id;
  std::size_t count = 0;
};

DenseFrames Densify(std::span<const FrameIndex> frames) {
  DenseFrames out;
  out.id.resize(frames.size());
  std::unordered_map<FrameIndex, std::size_t> seen;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    auto [it, inserted] = seen.emplace(frames[i], seen.size());
    out.id[i] = it->second;
  }
  out.count = seen.size();
  return out;
}

void CheckSameSize(const MessageState& state) {
  if (state.r.rows() != state.r.cols() || state.a.rows() != state.a.cols() ||
      state.r.rows() != state.a.rows()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "responsibility and availability matrices disagree in shape");
  }
}

}  // namespace

void PapParams::Validate() const {
  if (!(damping >= 0.0 && damping < 1.0)) {
    throw Error(ErrorCode::kInvalidConfig, "damping must lie in [0, 1)");
  }
  if (max_iter <= 0 || conv_window <= 0) {
    throw Error(ErrorCode::kInvalidConfig,
                "max_iter and conv_window must be positive");
  }
  if (escalate_after < 0 || !(damping_step >= 0.0) ||
      !(damping_max >= 0.0 && damping_max < 1.0)) {
    throw Error(ErrorCode::kInvalidConfig,
                "escalate_after, damping_step and damping_max out of range");
  }
}

MessageState MessageState::Zeros(std::size_t n) {
  const auto m = static_cast<Eigen::Index>(n);
  return MessageState{Eigen::MatrixXd::Zero(m, m), Eigen::MatrixXd::Zero(m, m),
                      0};
}

EmbeddingMatrix NormalizeEmbeddings(std::span<const DetectionRecord> records) {
  if (records.empty()) return EmbeddingMatrix(0, 0);
  std::size_t dim = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!records[i].embedding || records[i].embedding->empty()) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "record " + std::to_string(i) + " has no embedding");
    }
    if (i == 0) dim = records[i].embedding->size();
    if (records[i].embedding->size() != dim) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "record " + std::to_string(i) + " has dimension " +
                      std::to_string(records[i].embedding->size()) +
                      ", expected " + std::to_string(dim));
    }
  }
  EmbeddingMatrix out(static_cast<Eigen::Index>(records.size()),
                      static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& e = *records[i].embedding;
    Eigen::Map<const Eigen::RowVectorXd> v(e.data(),
                                           static_cast<Eigen::Index>(dim));
    const double norm = v.norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) {
      throw Error(ErrorCode::kZeroNormEmbedding,
                  "record " + std::to_string(i) +
                      " has a zero-norm or non-finite embedding");
    }
    out.row(static_cast<Eigen::Index>(i)) = v / norm;
  }
  return out;
}

double MedianPreference(const Eigen::MatrixXd& s,
                        std::span<const FrameIndex> frames,
                        double same_frame_penalty) {
  const Eigen::Index n = s.rows();
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(n * std::max<Eigen::Index>(n - 1, 0)));
  const bool positioned = !frames.empty();
  for (Eigen::Index k = 0; k < n; ++k) {
    for (Eigen::Index i = 0; i < n; ++i) {
      if (i == k) continue;
      if (positioned && frames[static_cast<std::size_t>(i)] ==
                            frames[static_cast<std::size_t>(k)]) {
        continue;
      }
      values.push_back(s(i, k));
    }
  }
  if (values.empty()) return same_frame_penalty;
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + mid, values.end());
  const double upper = values[mid];
  if (values.size() % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + mid);
  return 0.5 * (lower + upper);
}

void ApplyPreference(SimilarityMatrix& sim, const PapParams& params) {
  sim.preference =
      params.preference.mode == Preference::Mode::kFixed
          ? params.preference.value
          : MedianPreference(sim.s, sim.frame_of, params.same_frame_penalty);
  sim.s.diagonal().setConstant(sim.preference);
}

SimilarityMatrix BuildSimilarity(const EmbeddingMatrix& unit_rows,
                                 std::span<const FrameIndex> frames,
                                 const PapParams& params) {
  const Eigen::Index n = unit_rows.rows();
  if (!frames.empty() && static_cast<Eigen::Index>(frames.size()) != n) {
    throw Error(ErrorCode::kDimensionMismatch,
                "frame list length differs from node count");
  }
  SimilarityMatrix sim;
  sim.s.resize(n, n);
  if (n > 0) {
    Eigen::MatrixXd gram = unit_rows * unit_rows.transpose();
    for (Eigen::Index k = 0; k < n; ++k) {
      for (Eigen::Index i = k; i < n; ++i) {
        const double v = std::clamp(gram(i, k), -1.0, 1.0) - 1.0;
        sim.s(i, k) = v;
        sim.s(k, i) = v;
      }
    }
  }
  sim.frame_of.assign(frames.begin(), frames.end());
  if (!frames.empty()) {
    std::unordered_map<FrameIndex, std::vector<Eigen::Index>> by_frame;
    for (Eigen::Index i = 0; i < n; ++i) {
      by_frame[frames[static_cast<std::size_t>(i)]].push_back(i);
    }
    for (const auto& [frame, members] : by_frame) {
      for (Eigen::Index i : members) {
        for (Eigen::Index k : members) {
          if (i != k) sim.s(i, k) = params.same_frame_penalty;
        }
      }
    }
  }
  ApplyPreference(sim, params);
  return sim;
}

SimilarityMatrix PositionedSimilarity(std::span<const DetectionRecord> records,
                                      const PapParams& params) {
  if (records.empty()) {
    throw Error(ErrorCode::kEmptyInput, "no records to build similarity from");
  }
  std::vector<FrameIndex> frames;
  frames.reserve(records.size());
  for (const auto& r : records) frames.push_back(r.frame);
  return BuildSimilarity(NormalizeEmbeddings(records), frames, params);
}

SimilarityMatrix PlainSimilarity(std::span<const DetectionRecord> records,
                                 const PapParams& params) {
  if (records.empty()) {
    throw Error(ErrorCode::kEmptyInput, "no records to build similarity from");
  }
  return BuildSimilarity(NormalizeEmbeddings(records), {}, params);
}

void UpdateResponsibilitiesInPlace(const SimilarityMatrix& sim,
                                   MessageState& state, double damping,
                                   int workers) {
  CheckSameSize(state);
  const Eigen::Index n = sim.s.rows();
  if (state.r.rows() != n) {
    throw Error(ErrorCode::kDimensionMismatch,
                "message state does not match similarity size");
  }
  const auto& s = sim.s;
  auto& r = state.r;
  const auto& a = state.a;
  internal::ParallelBlocks(
      static_cast<std::size_t>(n), workers, [&](std::size_t b, std::size_t e) {
        const auto lo = static_cast<Eigen::Index>(b);
        const auto hi = static_cast<Eigen::Index>(e);
        std::vector<double> max1(e - b, kNegInf);
        std::vector<double> max2(e - b, kNegInf);
        std::vector<Eigen::Index> arg1(e - b, -1);
        for (Eigen::Index k = 0; k < n; ++k) {
          for (Eigen::Index i = lo; i < hi; ++i) {
            const auto j = static_cast<std::size_t>(i - lo);
            const double v = a(i, k) + s(i, k);
            if (v > max1[j]) {
              max2[j] = max1[j];
              max1[j] = v;
              arg1[j] = k;
            } else if (v > max2[j]) {
              max2[j] = v;
            }
          }
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          for (Eigen::Index i = lo; i < hi; ++i) {
            const auto j = static_cast<std::size_t>(i - lo);
            double competitor = (k == arg1[j]) ? max2[j] : max1[j];
            // A single node has no competitor.
            if (competitor == kNegInf) competitor = 0.0;
            const double candidate = s(i, k) - competitor;
            r(i, k) = damping * r(i, k) + (1.0 - damping) * candidate;
          }
        }
      });
  ++state.iteration;
}

MessageState UpdateResponsibilities(const SimilarityMatrix& sim,
                                    const MessageState& state, double damping,
                                    int workers) {
  MessageState next = state;
  UpdateResponsibilitiesInPlace(sim, next, damping, workers);
  next.iteration = state.iteration;
  return next;
}

void UpdateAvailabilitiesPositionedInPlace(std::span<const FrameIndex> frame_of,
                                           MessageState& state, double damping,
                                           int workers) {
  CheckSameSize(state);
  const Eigen::Index n = state.r.rows();
  if (static_cast<Eigen::Index>(frame_of.size()) != n) {
    throw Error(ErrorCode::kDimensionMismatch,
                "frame list length differs from message state size");
  }
  const DenseFrames frames = Densify(frame_of);
  const auto& r = state.r;
  auto& a = state.a;
  internal::ParallelBlocks(
      static_cast<std::size_t>(n), workers, [&](std::size_t b, std::size_t e) {
        std::vector<double> frame_support(frames.count, 0.0);
        for (auto k = static_cast<Eigen::Index>(b);
             k < static_cast<Eigen::Index>(e); ++k) {
          std::fill(frame_support.begin(), frame_support.end(), 0.0);
          double total = 0.0;
          for (Eigen::Index i = 0; i < n; ++i) {
            const double p = std::max(0.0, r(i, k));
            total += p;
            frame_support[frames.id[static_cast<std::size_t>(i)]] += p;
          }
          const double self_r = r(k, k);
          const double self_p = std::max(0.0, self_r);
          const std::size_t fk = frames.id[static_cast<std::size_t>(k)];
          for (Eigen::Index i = 0; i < n; ++i) {
            double candidate;
            if (i == k) {
              candidate = total - self_p;
            } else {
              const std::size_t fi = frames.id[static_cast<std::size_t>(i)];
              const double own = std::max(0.0, r(i, k));
              // Everything outside {i} u peers(i) u {k}.
              const double excluded =
                  frame_support[fi] + (fi != fk ? self_p : 0.0);
              const double others = total - excluded;
              // Support k receives from i's same-frame peers.
              const double peers = frame_support[fi] - own;
              candidate = std::min(0.0, self_r + others - peers);
            }
            a(i, k) = damping * a(i, k) + (1.0 - damping) * candidate;
          }
        }
      });
}

MessageState UpdateAvailabilitiesPositioned(std::span<const FrameIndex> frame_of,
                                            const MessageState& state,
                                            double damping, int workers) {
  MessageState next = state;
  UpdateAvailabilitiesPositionedInPlace(frame_of, next, damping, workers);
  return next;
}

void UpdateAvailabilitiesClassicInPlace(MessageState& state, double damping,
                                        int workers) {
  CheckSameSize(state);
  const Eigen::Index n = state.r.rows();
  const auto& r = state.r;
  auto& a = state.a;
  internal::ParallelBlocks(
      static_cast<std::size_t>(n), workers, [&](std::size_t b, std::size_t e) {
        for (auto k = static_cast<Eigen::Index>(b);
             k < static_cast<Eigen::Index>(e); ++k) {
          double others = 0.0;
          for (Eigen::Index i = 0; i < n; ++i) {
            if (i != k) others += std::max(0.0, r(i, k));
          }
          const double self_r = r(k, k);
          for (Eigen::Index i = 0; i < n; ++i) {
            const double candidate =
                i == k ? others
                       : std::min(0.0, self_r + others - std::max(0.0, r(i, k)));
            a(i, k) = damping * a(i, k) + (1.0 - damping) * candidate;
          }
        }
      });
}

MessageState UpdateAvailabilitiesClassic(const MessageState& state,
                                         double damping, int workers) {
  MessageState next = state;
  UpdateAvailabilitiesClassicInPlace(next, damping, workers);
  return next;
}

namespace {

std::vector<Eigen::Index> RowArgmax(const MessageState& state) {
  const Eigen::Index n = state.r.rows();
  std::vector<double> best(static_cast<std::size_t>(n), kNegInf);
  std::vector<Eigen::Index> arg(static_cast<std::size_t>(n), 0);
  for (Eigen::Index k = 0; k < n; ++k) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double c = state.r(i, k) + state.a(i, k);
      const auto j = static_cast<std::size_t>(i);
      if (c > best[j]) {
        best[j] = c;
        arg[j] = k;
      }
    }
  }
  return arg;
}

// Moves same-frame cluster-mates apart. Returns the number of nodes moved.
std::size_t RepairSameFrame(const SimilarityMatrix& sim,
                            std::vector<std::size_t>& exemplar_of) {
  const std::size_t n = exemplar_of.size();
  const auto& s = sim.s;
  auto sv = [&](std::size_t i, std::size_t k) {
    return s(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
  };
  // exemplar -> frame -> members
  std::map<std::size_t, std::map<FrameIndex, std::vector<std::size_t>>> slots;
  for (std::size_t i = 0; i < n; ++i) {
    slots[exemplar_of[i]][sim.frame_of[i]].push_back(i);
  }
  std::vector<std::size_t> evicted;
  for (auto& [ex, frames] : slots) {
    for (auto& [frame, members] : frames) {
      if (members.size() < 2) continue;
      std::size_t keep = members.front();
      if (std::find(members.begin(), members.end(), ex) != members.end()) {
        keep = ex;
      } else {
        for (std::size_t m : members) {
          if (sv(m, ex) > sv(keep, ex)) keep = m;
        }
      }
      for (std::size_t m : members) {
        if (m != keep) evicted.push_back(m);
      }
      members.assign(1, keep);
    }
  }
  std::sort(evicted.begin(), evicted.end());
  for (std::size_t i : evicted) {
    const FrameIndex f = sim.frame_of[i];
    std::size_t best = i;
    double best_s = sim.preference;
    for (const auto& [ex, frames] : slots) {
      if (frames.contains(f)) continue;
      const double v = sv(i, ex);
      if (v > best_s) {
        best_s = v;
        best = ex;
      }
    }
    exemplar_of[i] = best;
    slots[best][f].push_back(i);
  }
  return evicted.size();
}

}  // namespace

std::vector<std::size_t> CurrentExemplars(const MessageState& state) {
  CheckSameSize(state);
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < state.size(); ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    if (state.r(kk, kk) + state.a(kk, kk) > 0.0) out.push_back(k);
  }
  return out;
}

ClusterResult CriterionAndExemplars(const SimilarityMatrix& sim,
                                    const MessageState& state) {
  CheckSameSize(state);
  const std::size_t n = sim.size();
  if (state.size() != n) {
    throw Error(ErrorCode::kDimensionMismatch,
                "message state does not match similarity size");
  }
  ClusterResult result;
  result.iterations = state.iteration;
  if (n == 0) return result;

  const auto arg = RowArgmax(state);
  std::vector<std::size_t> exemplars;
  for (std::size_t i = 0; i < n; ++i) {
    if (arg[i] == static_cast<Eigen::Index>(i)) exemplars.push_back(i);
  }
  if (exemplars.empty()) {
    // Nobody chose itself: the most chosen node (lowest index on ties) is
    // the sole exemplar.
    std::vector<std::size_t> votes(n, 0);
    for (auto k : arg) ++votes[static_cast<std::size_t>(k)];
    exemplars.push_back(static_cast<std::size_t>(
        std::max_element(votes.begin(), votes.end()) - votes.begin()));
  }

  result.exemplar_of.assign(n, 0);
  std::vector<bool> is_exemplar(n, false);
  for (auto e : exemplars) is_exemplar[e] = true;
  for (std::size_t i = 0; i < n; ++i) {
    if (is_exemplar[i]) {
      result.exemplar_of[i] = i;
      continue;
    }
    std::size_t best = exemplars.front();
    for (auto e : exemplars) {
      if (sim.s(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(e)) >
          sim.s(static_cast<Eigen::Index>(i),
                static_cast<Eigen::Index>(best))) {
        best = e;
      }
    }
    result.exemplar_of[i] = best;
  }

  if (sim.positioned()) {
    result.exclusion_repairs = RepairSameFrame(sim, result.exemplar_of);
  }
  for (std::size_t i = 0; i < n; ++i) {
    result.clusters[result.exemplar_of[i]].push_back(i);
  }
  return result;
}

void RefineExemplars(const SimilarityMatrix& sim, ClusterResult& result) {
  const std::size_t n = result.exemplar_of.size();
  if (n == 0) return;
  auto sv = [&](std::size_t i, std::size_t k) {
    return sim.s(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
  };
  std::map<std::size_t, std::vector<std::size_t>> members;
  std::map<std::size_t, std::set<FrameIndex>> frames;
  for (std::size_t i = 0; i < n; ++i) {
    members[result.exemplar_of[i]].push_back(i);
    if (sim.positioned()) frames[result.exemplar_of[i]].insert(sim.frame_of[i]);
  }

  // Gain of dissolving `e`, with the chosen destination of every member.
  std::vector<std::size_t> dest;
  auto score = [&](std::size_t e, std::vector<std::size_t>& to) {
    to.clear();
    double gain = 0.0;
    for (std::size_t m : members.at(e)) {
      std::size_t best = e;
      double best_s = -std::numeric_limits<double>::infinity();
      for (const auto& [k, _] : members) {
        if (k == e) continue;
        if (sim.positioned() && frames.at(k).contains(sim.frame_of[m])) continue;
        const double v = sv(m, k);
        if (v > best_s) {
          best_s = v;
          best = k;
        }
      }
      if (best == e) return -std::numeric_limits<double>::infinity();
      gain += best_s - sv(m, e);
      to.push_back(best);
    }
    return gain;
  };

  constexpr double kMinGain = 1e-12;
  for (bool changed = true; changed && members.size() > 1;) {
    changed = false;
    std::vector<std::pair<double, std::size_t>> ranked;
    for (const auto& [e, _] : members) {
      const double g = score(e, dest);
      if (g > kMinGain) ranked.push_back({g, e});
    }
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (const auto& [_, e] : ranked) {
      if (members.size() < 2 || !members.contains(e)) continue;
      if (!(score(e, dest) > kMinGain)) continue;
      const auto moving = std::move(members.at(e));
      members.erase(e);
      frames.erase(e);
      for (std::size_t idx = 0; idx < moving.size(); ++idx) {
        const std::size_t m = moving[idx];
        result.exemplar_of[m] = dest[idx];
        members[dest[idx]].push_back(m);
        if (sim.positioned()) frames[dest[idx]].insert(sim.frame_of[m]);
      }
      ++result.demoted_exemplars;
      changed = true;
    }
  }
  result.clusters.clear();
  for (std::size_t i = 0; i < n; ++i) {
    result.clusters[result.exemplar_of[i]].push_back(i);
  }
}

PapRun RunPap(const SimilarityMatrix& sim, const PapParams& params) {
  return RunPap(sim, params, MessageState::Zeros(sim.size()));
}

PapRun RunPap(const SimilarityMatrix& sim, const PapParams& params,
              MessageState initial) {
  params.Validate();
  const std::size_t n = sim.size();
  if (initial.size() != n) {
    throw Error(ErrorCode::kDimensionMismatch,
                "initial message state does not match similarity size");
  }
  PapRun run{std::move(initial), {}};
  run.state.iteration = 0;
  if (n == 0) {
    run.result.converged = true;
    return run;
  }

  double damping = params.damping;
  auto sweep = [&] {
    UpdateResponsibilitiesInPlace(sim, run.state, damping, params.workers);
    if (sim.positioned()) {
      UpdateAvailabilitiesPositionedInPlace(sim.frame_of, run.state, damping,
                                            params.workers);
    } else {
      UpdateAvailabilitiesClassicInPlace(run.state, damping, params.workers);
    }
  };

  bool converged = false;
  if (n == 1) {
    sweep();
    converged = true;
  } else {
    std::vector<std::size_t> previous;
    int stable = 0;
    int at_this_damping = 0;
    for (int it = 0; it < params.max_iter; ++it) {
      sweep();
      auto current = CurrentExemplars(run.state);
      if (!current.empty() && current == previous) {
        if (++stable >= params.conv_window) {
          converged = true;
          break;
        }
      } else {
        stable = 0;
      }
      previous = std::move(current);
      if (params.escalate_after > 0 && ++at_this_damping >= params.escalate_after &&
          damping < params.damping_max) {
        damping = std::min(params.damping_max, damping + params.damping_step);
        at_this_damping = 0;
      }
    }
  }
  run.result = CriterionAndExemplars(sim, run.state);
  if (params.refine_exemplars) RefineExemplars(sim, run.result);
  run.result.converged = converged;
  run.result.final_damping = damping;
  return run;
}

}  // namespace psop
