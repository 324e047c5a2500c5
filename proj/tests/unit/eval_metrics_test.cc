#include "psop/eval_metrics.h"

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "psop/error.h"
#include "psop/trajectory_builder.h"

namespace psop {
namespace {

EvalEvents Events(std::vector<FrameEvents> frames) {
  EvalEvents e;
  e.frames = std::move(frames);
  return e;
}

FrameEvents Ev(std::int64_t m, std::int64_t fp, std::int64_t mm, std::int64_t g,
               std::int64_t c, double d) {
  FrameEvents f;
  f.misses = m;
  f.false_positives = fp;
  f.mismatches = mm;
  f.ground_truth = g;
  f.matched = c;
  f.iou_sum = d;
  return f;
}

// Best total IOU over every injective pairing, by exhaustive enumeration.
double BruteForceBest(const std::vector<LabeledBox>& p,
                      const std::vector<LabeledBox>& g, double iou_min) {
  std::vector<int> slot(std::max(p.size(), g.size()));
  std::iota(slot.begin(), slot.end(), 0);
  double best = 0.0;
  do {
    double total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const auto j = static_cast<std::size_t>(slot[i]);
      if (j >= g.size()) continue;
      const double v = Iou(p[i].box, g[j].box);
      if (v >= iou_min) total += v;
    }
    best = std::max(best, total);
  } while (std::next_permutation(slot.begin(), slot.end()));
  return best;
}

TEST(MatchFrame, ExactPredictions) {
  const std::vector<LabeledBox> boxes = {{{0, 0, 10, 10}, "a"},
                                         {{50, 50, 10, 10}, "b"}};
  const auto m = MatchFrame(boxes, boxes);
  EXPECT_EQ(m.events.matched, 2);
  EXPECT_EQ(m.events.misses, 0);
  EXPECT_EQ(m.events.false_positives, 0);
  EXPECT_EQ(m.events.mismatches, 0);
  for (double v : m.ious) EXPECT_DOUBLE_EQ(v, 1.0);
}

TEST(MatchFrame, LonePrediction) {
  const auto m = MatchFrame(std::vector<LabeledBox>{{{0, 0, 1, 1}, "p"}}, {});
  EXPECT_EQ(m.events.false_positives, 1);
  EXPECT_EQ(m.events.ground_truth, 0);
}

TEST(MaxWeightAssignment, CrossedWeights) {
  const std::vector<double> w = {0.9, 0.6, 0.55, 0.8};
  const auto a = MaxWeightAssignment(w, 2, 2);
  EXPECT_EQ(a, (std::vector<int>{0, 1}));
  EXPECT_NEAR(w[0] + w[3], 1.7, 1e-15);
}

TEST(MaxWeightAssignment, RectangularAndNonPositive) {
  const std::vector<double> w = {0.0, 0.3, 0.0, 0.0, 0.0, 0.0};
  const auto a = MaxWeightAssignment(w, 2, 3);
  EXPECT_EQ(a, (std::vector<int>{1, -1}));
}

TEST(MatchFrame, EqualsBruteForceOnRandomFrames) {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> pos(0, 40), size(8, 20);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<LabeledBox> p, g;
    const int np = static_cast<int>(rng() % 7), ng = static_cast<int>(rng() % 7);
    for (int i = 0; i < np; ++i) p.push_back({{pos(rng), pos(rng), size(rng), size(rng)}, "p"});
    for (int i = 0; i < ng; ++i) g.push_back({{pos(rng), pos(rng), size(rng), size(rng)}, "g"});
    const auto m = MatchFrame(p, g, 0.3);
    const double want = BruteForceBest(p, g, 0.3);
    EXPECT_NEAR(m.events.iou_sum, want, 1e-9) << "trial " << trial;
    EXPECT_EQ(m.events.matched + m.events.misses, ng);
    EXPECT_EQ(m.events.matched + m.events.false_positives, np);
  }
}

TEST(MatchFrame, IdentitySwitchCountsOnce) {
  std::map<std::string, std::string> last;
  const LabeledBox gt{{0, 0, 10, 10}, "x"};
  MatchFrame(std::vector<LabeledBox>{{gt.box, "t1"}}, std::vector{gt}, 0.5, &last);
  auto m = MatchFrame(std::vector<LabeledBox>{{gt.box, "t2"}}, std::vector{gt}, 0.5,
                      &last);
  EXPECT_EQ(m.events.mismatches, 1);
  m = MatchFrame(std::vector<LabeledBox>{{gt.box, "t2"}}, std::vector{gt}, 0.5, &last);
  EXPECT_EQ(m.events.mismatches, 0);
}

TEST(MatchFrame, BelowThresholdIsMissAndFalsePositive) {
  const auto m = MatchFrame(std::vector<LabeledBox>{{{0, 0, 10, 10}, "p"}},
                            std::vector<LabeledBox>{{{6, 0, 10, 10}, "g"}});
  EXPECT_EQ(m.events.misses, 1);
  EXPECT_EQ(m.events.false_positives, 1);
}

TEST(Sopa, Examples) {
  EXPECT_DOUBLE_EQ(*Sopa(Events({Ev(0, 0, 0, 10, 10, 10)})), 1.0);
  EXPECT_NEAR(*Sopa(Events({Ev(1, 1, 1, 10, 9, 9)})), 0.7, 1e-15);
  EXPECT_NEAR(*Sopa(Events({Ev(4, 4, 4, 10, 6, 6)})), -0.2, 1e-15);
  EXPECT_FALSE(Sopa(Events({Ev(0, 3, 0, 0, 0, 0)})).has_value());
}

TEST(Sopp, Examples) {
  EXPECT_DOUBLE_EQ(*Sopp(Events({Ev(0, 0, 0, 2, 2, 2.0)})), 1.0);
  EXPECT_NEAR(*Sopp(Events({Ev(0, 0, 0, 2, 2, 1.4)})), 0.7, 1e-15);
  EXPECT_DOUBLE_EQ(*Sopp(Events({Ev(0, 0, 0, 1, 1, 0.5)})), 0.5);
  EXPECT_FALSE(Sopp(Events({Ev(1, 0, 0, 1, 0, 0)})).has_value());
}

TEST(Opr, Examples) {
  EXPECT_DOUBLE_EQ(*Opr(Events({Ev(0, 0, 0, 10, 10, 10)})), 0.0);
  EXPECT_DOUBLE_EQ(*Opr(Events({Ev(0, 2, 0, 10, 10, 10)})), 0.2);
  EXPECT_DOUBLE_EQ(*Opr(Events({Ev(0, 10, 0, 10, 10, 10)})), 1.0);
  EXPECT_FALSE(Opr(Events({})).has_value());
}

TEST(Mp, Examples) {
  EXPECT_EQ(Mp(Events({Ev(0, 0, 0, 1, 1, 1), Ev(0, 0, 0, 2, 2, 2)})), 2);
  EXPECT_EQ(Mp(Events({Ev(1, 0, 0, 1, 0, 0), Ev(0, 0, 0, 2, 2, 2)})), 1);
  EXPECT_EQ(Mp(Events({Ev(0, 4, 0, 0, 0, 0)})), 0);
}

TEST(Metrics, FrameOrderDoesNotMatter) {
  auto a = Events({Ev(1, 0, 1, 3, 2, 1.5), Ev(0, 2, 0, 4, 4, 3.2), Ev(0, 0, 0, 0, 0, 0)});
  auto b = a;
  std::reverse(b.frames.begin(), b.frames.end());
  EXPECT_EQ(*Sopa(a), *Sopa(b));
  EXPECT_EQ(*Sopp(a), *Sopp(b));
  EXPECT_EQ(*Opr(a), *Opr(b));
  EXPECT_EQ(Mp(a), Mp(b));
}

TEST(EvaluateFrames, CoversFramesFromEitherSide) {
  std::map<FrameIndex, std::vector<LabeledBox>> pred, gt;
  pred[1] = {{{0, 0, 10, 10}, "t"}};
  gt[2] = {{{0, 0, 10, 10}, "x"}};
  const auto ev = EvaluateFrames(pred, gt);
  ASSERT_EQ(ev.frames.size(), 2u);
  EXPECT_EQ(ev.frames[0].frame, 1);
  EXPECT_EQ(ev.Totals().false_positives, 1);
  EXPECT_EQ(ev.Totals().misses, 1);
}

TEST(Purity, Examples) {
  EXPECT_DOUBLE_EQ(Purity(std::vector<std::size_t>{0, 0, 1},
                          std::vector<std::string>{"a", "a", "b"}),
                   1.0);
  EXPECT_NEAR(Purity(std::vector<std::size_t>{0, 0, 0},
                     std::vector<std::string>{"a", "a", "b"}),
              2.0 / 3.0, 1e-15);
  EXPECT_DOUBLE_EQ(Purity(std::vector<std::size_t>{0, 1, 2},
                          std::vector<std::string>{"a", "a", "b"}),
                   1.0);
  EXPECT_THROW(Purity(std::vector<std::size_t>{0}, std::vector<std::string>{}),
               Error);
}

}  // namespace
}  // namespace psop
