#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "casdet/error.hpp"
#include "casdet/evaluation.hpp"
#include "oracles.hpp"

namespace casdet {
namespace {

TEST(Rasterize, WholeRecordingAndEmpty) {
  const FrameGrid g{469, 0.032};
  const auto all = rasterize_labels({{LabelKind::kWheeze, 0.0, 469 * 0.032}}, g);
  EXPECT_EQ(std::count(all.begin(), all.end(), 1), 469);
  const auto none = rasterize_labels({}, g);
  EXPECT_EQ(std::count(none.begin(), none.end(), 0), 469);
}

TEST(Rasterize, HalfTileIsPositive) {
  const FrameGrid g{4, 0.032};
  EXPECT_EQ(rasterize_labels({{LabelKind::kCas, 0.048, 0.1}}, g), (std::vector<int>{0, 1, 1, 0}));
  EXPECT_EQ(rasterize_labels({{LabelKind::kCas, 0.049, 0.1}}, g), (std::vector<int>{0, 0, 1, 0}));
}

TEST(Rasterize, IgnoresNonCasAndUnitesOverlaps) {
  const FrameGrid g{4, 0.032};
  EXPECT_EQ(rasterize_labels({{LabelKind::kInhalation, 0.0, 0.128}}, g), (std::vector<int>(4, 0)));
  // Two quarter-tile pieces together cover half of step 1.
  EXPECT_EQ(rasterize_labels({{LabelKind::kWheeze, 0.032, 0.040}, {LabelKind::kWheeze, 0.040, 0.048}}, g),
            (std::vector<int>{0, 1, 0, 0}));
}

TEST(Confusion, Examples) {
  const std::vector<int> v{1, 0, 1, 1, 0};
  const auto same = segment_confusion(v, v);
  EXPECT_EQ(same.fp + same.fn, 0u);
  EXPECT_EQ(same.tp + same.tn, 5u);
  const auto c = segment_confusion(std::vector<int>(10, 1), std::vector<int>(10, 0));
  EXPECT_EQ(c.fp, 10u);
  EXPECT_THROW(segment_confusion({1}, {1, 0}), ShapeError);
}

TEST(Confusion, MatchesScalarLoop) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> a(200), b(200);
    for (auto& x : a) x = static_cast<int>(rng() % 2);
    for (auto& x : b) x = static_cast<int>(rng() % 2);
    SegmentConfusion want;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a[i] && b[i]) ++want.tp;
      if (!a[i] && !b[i]) ++want.tn;
      if (a[i] && !b[i]) ++want.fp;
      if (!a[i] && b[i]) ++want.fn;
    }
    EXPECT_EQ(segment_confusion(a, b), want);
  }
}

TEST(SegmentMetrics, Arithmetic) {
  const auto m = segment_metrics({50, 30, 10, 10});
  EXPECT_NEAR(*m.acc, 0.8, 1e-12);
  EXPECT_NEAR(*m.ppv, 50.0 / 60.0, 1e-12);
  EXPECT_NEAR(*m.sen, 50.0 / 60.0, 1e-12);
  EXPECT_NEAR(*m.spe, 0.75, 1e-12);
  EXPECT_NEAR(*m.f1, 50.0 / 60.0, 1e-12);
  const auto perfect = segment_metrics({5, 7, 0, 0});
  EXPECT_EQ(*perfect.acc, 1.0);
  EXPECT_EQ(*perfect.f1, 1.0);
  EXPECT_FALSE(segment_metrics({0, 4, 0, 0}).ppv.has_value());
}

TEST(SegmentMetrics, F1IdentityIsExact) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 200; ++i) {
    const SegmentConfusion c{rng() % 50 + 1, rng() % 50, rng() % 50, rng() % 50};
    EXPECT_EQ(*segment_metrics(c).f1, 2.0 * c.tp / (2.0 * c.tp + c.fp + c.fn));
  }
}

TEST(Roc, Extremes) {
  const std::vector<int> truth{0, 0, 1, 1, 0, 1};
  const std::vector<double> sep{0.1, 0.2, 0.8, 0.9, 0.3, 0.7};
  EXPECT_DOUBLE_EQ(roc_auc(sep, truth).auc, 1.0);
  std::vector<double> inv(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) inv[i] = 1.0 - truth[i];
  EXPECT_DOUBLE_EQ(roc_auc(inv, truth).auc, 0.0);
  const RocCurve c = roc_auc(sep, truth);
  EXPECT_EQ(c.points.front().fpr, 0.0);
  EXPECT_EQ(c.points.back().tpr, 1.0);
  EXPECT_THROW(roc_auc({0.5, 0.6}, {1, 1}), DataError);
}

TEST(Roc, RandomScoresNearHalf) {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> s(10000);
  std::vector<int> t(10000);
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = u(rng);
    t[i] = static_cast<int>(rng() % 2);
  }
  EXPECT_NEAR(roc_auc(s, t).auc, 0.5, 0.05);
}

TEST(Roc, EqualsMannWhitneyWithTies) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 5 + rng() % 300;
    std::vector<double> s(n);
    std::vector<int> t(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng() % 20) / 20.0;
      t[i] = static_cast<int>(rng() % 2);
    }
    t[0] = 0;
    t[1] = 1;
    EXPECT_NEAR(roc_auc(s, t).auc, casdet::testing::mann_whitney_auc(s, t), 1e-9);
  }
}

TEST(Roc, InvariantUnderMonotoneTransform) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> s(500), tr(500);
  std::vector<int> t(500);
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = u(rng);
    tr[i] = std::exp(3.0 * s[i]) - 7.0;
    t[i] = static_cast<int>(rng() % 2);
  }
  EXPECT_NEAR(roc_auc(s, t).auc, roc_auc(tr, t).auc, 1e-12);
}

TEST(Jaccard, Examples) {
  EXPECT_DOUBLE_EQ(jaccard({1.0, 2.0}, {1.0, 2.0}), 1.0);
  EXPECT_DOUBLE_EQ(jaccard({0.0, 1.0}, {2.0, 3.0}), 0.0);
  EXPECT_NEAR(jaccard({0.0, 2.0}, {1.0, 3.0}), 1.0 / 3.0, 1e-12);
  EXPECT_DOUBLE_EQ(jaccard({1.0, 1.0}, {1.0, 1.0}), 0.0);
}

TEST(Jaccard, SymmetricAndBounded) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  for (int i = 0; i < 1000; ++i) {
    double a0 = u(rng), a1 = u(rng), b0 = u(rng), b1 = u(rng);
    if (a0 > a1) std::swap(a0, a1);
    if (b0 > b1) std::swap(b0, b1);
    const double j = jaccard({a0, a1}, {b0, b1});
    EXPECT_EQ(j, jaccard({b0, b1}, {a0, a1}));
    EXPECT_GE(j, 0.0);
    EXPECT_LE(j, 1.0);
    if (j == 1.0) EXPECT_TRUE(a0 == b0 && a1 == b1);
  }
}

TEST(Match, Examples) {
  const std::vector<LabelEvent> label{{LabelKind::kWheeze, 1.0, 2.0}};
  EXPECT_EQ(match_events({{1.1, 2.0, 0.0}}, label), (EventCounts{1, 0, 0}));
  EXPECT_EQ(match_events({{1.8, 2.8, 0.0}}, label), (EventCounts{0, 1, 1}));
  EXPECT_EQ(match_events({}, label), (EventCounts{0, 0, 1}));
  EXPECT_EQ(match_events({{1.0, 2.0, 0.0}}, {}), (EventCounts{0, 1, 0}));
}

TEST(Match, HalfOverlapTieMatchesBothLabels) {
  // The prediction covers exactly half of itself with each label.
  const std::vector<LabelEvent> labels{{LabelKind::kWheeze, 0.0, 1.0}, {LabelKind::kWheeze, 1.0, 2.0}};
  const MatchResult r = match_events_detailed({{0.0, 2.0, 0.0}}, labels);
  EXPECT_EQ(r.matched_labels, 2u);
  EXPECT_EQ(r.matched_predictions, 1u);
  EXPECT_EQ(r.counts, (EventCounts{1, 0, 0}));
}

TEST(Match, AgreesWithPairwiseOracle) {
  std::mt19937_64 rng(14);
  std::uniform_real_distribution<double> start(0.0, 14.0), len(0.05, 1.5);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<LabelEvent> labels;
    double t = 0.0;
    const std::size_t nl = rng() % 5;
    for (std::size_t i = 0; i < nl; ++i) {
      t += len(rng);
      const double e = t + len(rng);
      labels.push_back({LabelKind::kWheeze, t, e});
      t = e;
    }
    std::vector<DetectedEvent> preds;
    const std::size_t np = rng() % 5;
    for (std::size_t i = 0; i < np; ++i) {
      const double s = start(rng) * t / 14.0;
      preds.push_back({s, s + len(rng), 0.0});
    }
    std::sort(preds.begin(), preds.end(),
              [](const DetectedEvent& a, const DetectedEvent& b) { return a.t_start < b.t_start; });
    const MatchResult r = match_events_detailed(preds, labels);
    EXPECT_EQ(r.counts, casdet::testing::pairwise_match(preds, labels)) << trial;
    EXPECT_LE(r.counts.tp, std::min(labels.size(), preds.size()));
    EXPECT_EQ(r.counts.fn, labels.size() - r.matched_labels);
    EXPECT_EQ(r.counts.fp, preds.size() - r.matched_predictions);
  }
}

TEST(EventMetrics, Conventions) {
  const auto ok = event_metrics({1, 0, 0});
  EXPECT_EQ(*ok.ppv, 1.0);
  EXPECT_EQ(*ok.sen, 1.0);
  EXPECT_EQ(*ok.f1, 1.0);
  const auto zero = event_metrics({0, 3, 2});
  EXPECT_EQ(*zero.ppv, 0.0);
  EXPECT_EQ(*zero.sen, 0.0);
  EXPECT_EQ(*zero.f1, 0.0);
  EXPECT_FALSE(event_metrics({0, 0, 0}).ppv.has_value());
}

TEST(SelectThreshold, Examples) {
  EXPECT_DOUBLE_EQ(select_threshold({0.0, 1.0, 1.0, 0.0}, {0, 1, 1, 0}), 0.5);
  EXPECT_DOUBLE_EQ(select_threshold({0.2, 0.8}, {0, 1}), 0.5);
  EXPECT_THROW(select_threshold({}, {}), DataError);
}

TEST(SelectThreshold, AtLeastAsGoodAsFineGrid) {
  std::mt19937_64 rng(15);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> p(1000);
    std::vector<int> t(1000);
    for (std::size_t i = 0; i < p.size(); ++i) {
      t[i] = static_cast<int>(rng() % 2);
      p[i] = std::clamp(0.5 * u(rng) + 0.3 * t[i], 0.0, 1.0);
    }
    const double chosen = select_threshold(p, t);
    const double grid = casdet::testing::grid_best_threshold(p, t, 100000);
    EXPECT_GE(segment_accuracy(p, t, chosen), segment_accuracy(p, t, grid));
    // Every threshold in the chosen gap scores the same, the grid lands in
    // it or in an equally good one.
    EXPECT_NEAR(segment_accuracy(p, t, chosen), segment_accuracy(p, t, grid), 1e-12);
  }
}

TEST(Reference, ReferenceMultiPathFigures) {
  EXPECT_DOUBLE_EQ(kMultiPathReference.seg_acc, 0.884);
  EXPECT_DOUBLE_EQ(kMultiPathReference.seg_sen, 0.505);
  EXPECT_DOUBLE_EQ(kMultiPathReference.seg_f1, 0.575);
  EXPECT_DOUBLE_EQ(kMultiPathReference.evt_ppv, 0.498);
  EXPECT_DOUBLE_EQ(kMultiPathReference.evt_sen, 0.432);
  EXPECT_DOUBLE_EQ(kMultiPathReference.evt_f1, 0.530);
}

}  // namespace
}  // namespace casdet
