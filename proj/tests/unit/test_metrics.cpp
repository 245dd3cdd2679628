#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "maskfuse/error.hpp"
#include "maskfuse/metrics.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace mf = maskfuse;

namespace {

mf::LabelMap Labels(int w, int h, std::vector<mf::ClassId> v) {
  mf::LabelMap m(w, h, 0);
  m.labels = std::move(v);
  return m;
}

mf::ConfusionMatrix Tally(const std::vector<mf::LabelMap>& gt,
                          const std::vector<mf::LabelMap>& pred, int n) {
  mf::ConfusionMatrix cm(n);
  for (std::size_t f = 0; f < gt.size(); ++f) mf::accumulate_confusion(gt[f], pred[f], cm);
  return cm;
}

// Prediction that copies gt with some pixels flipped.
mf::LabelMap Perturb(std::mt19937_64& rng, const mf::LabelMap& gt, int classes, double rate) {
  mf::LabelMap p = gt;
  std::bernoulli_distribution flip(rate);
  std::uniform_int_distribution<int> cls(0, classes - 1);
  for (auto& v : p.labels) {
    if (flip(rng)) v = static_cast<mf::ClassId>(cls(rng));
  }
  return p;
}

}  // namespace

TEST(Confusion, TwoClassExample) {
  const auto gt = Labels(2, 2, {0, 0, 1, 1});
  const auto pred = Labels(2, 2, {0, 1, 1, 1});
  const auto cm = Tally({gt}, {pred}, 2);
  EXPECT_EQ(cm.at(0, 0), 1u);
  EXPECT_EQ(cm.at(0, 1), 1u);
  EXPECT_EQ(cm.at(1, 1), 2u);
  const auto ious = mf::per_class_iou(cm);
  EXPECT_DOUBLE_EQ(*ious[0], 0.5);
  EXPECT_DOUBLE_EQ(*ious[1], 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(mf::miou(cm), (0.5 + 2.0 / 3.0) / 2.0);
  EXPECT_DOUBLE_EQ(mf::fwiou(cm), 0.5 * 0.5 + 0.5 * 2.0 / 3.0);
}

TEST(Confusion, PerfectPrediction) {
  std::mt19937_64 rng(3);
  const auto gt = mft::RandomLabels(rng, 7, 5, 4, 0.1);
  const auto cm = Tally({gt}, {gt}, 4);
  EXPECT_DOUBLE_EQ(mf::miou(cm), 1.0);
  EXPECT_DOUBLE_EQ(mf::fwiou(cm), 1.0);
}

TEST(Confusion, IgnoreGroundTruthNotCounted) {
  const auto gt = Labels(3, 1, {255, 0, 255});
  const auto pred = Labels(3, 1, {1, 0, 2});
  const auto cm = Tally({gt}, {pred}, 3);
  EXPECT_EQ(cm.total(), 1u);
  EXPECT_DOUBLE_EQ(mf::miou(cm), 1.0);
}

TEST(Confusion, IgnorePredictionIsRejectedAndCountsAsMiss) {
  const auto gt = Labels(2, 1, {0, 0});
  const auto pred = Labels(2, 1, {0, 255});
  const auto cm = Tally({gt}, {pred}, 1);
  EXPECT_EQ(cm.rejected(), 1u);
  EXPECT_EQ(cm.at(0, cm.reject_column()), 1u);
  EXPECT_DOUBLE_EQ(mf::miou(cm), 0.5);
}

TEST(Confusion, OutOfRangePredictionRejected) {
  const auto cm = Tally({Labels(1, 1, {1})}, {Labels(1, 1, {9})}, 2);
  EXPECT_EQ(cm.rejected(), 1u);
}

TEST(Confusion, OutOfRangeGroundTruthThrows) {
  mf::ConfusionMatrix cm(2);
  EXPECT_THROW(mf::accumulate_confusion(Labels(1, 1, {5}), Labels(1, 1, {0}), cm), mf::Error);
}

TEST(Confusion, DimensionMismatchThrows) {
  mf::ConfusionMatrix cm(2);
  try {
    mf::accumulate_confusion(Labels(2, 1, {0, 0}), Labels(1, 2, {0, 0}), cm);
    FAIL();
  } catch (const mf::Error& e) {
    EXPECT_EQ(e.code(), mf::ErrorCode::kDimension);
  }
}

TEST(Confusion, EmptyIsUndefined) {
  mf::ConfusionMatrix cm(3);
  try {
    mf::miou(cm);
    FAIL();
  } catch (const mf::Error& e) {
    EXPECT_EQ(e.code(), mf::ErrorCode::kUndefinedMetric);
  }
  EXPECT_THROW(mf::fwiou(cm), mf::Error);
}

TEST(Confusion, AbsentClassesExcludedFromMean) {
  // Class 2 never appears in gt or pred.
  const auto cm = Tally({Labels(2, 1, {0, 1})}, {Labels(2, 1, {0, 1})}, 3);
  EXPECT_FALSE(mf::per_class_iou(cm)[2].has_value());
  EXPECT_DOUBLE_EQ(mf::miou(cm), 1.0);
}

TEST(Confusion, FalsePositiveOnlyClassCountsAsZero) {
  const auto cm = Tally({Labels(2, 1, {0, 0})}, {Labels(2, 1, {0, 1})}, 2);
  EXPECT_DOUBLE_EQ(*mf::per_class_iou(cm)[1], 0.0);
  EXPECT_DOUBLE_EQ(mf::miou(cm), 0.25);
}

TEST(Confusion, MatchesPixelSetOracle) {
  std::mt19937_64 rng(21);
  for (int it = 0; it < 500; ++it) {
    const int n = std::uniform_int_distribution<int>(1, 5)(rng);
    const int w = std::uniform_int_distribution<int>(1, 8)(rng);
    const int h = std::uniform_int_distribution<int>(1, 8)(rng);
    const int frames = std::uniform_int_distribution<int>(1, 4)(rng);
    std::vector<mf::LabelMap> gt, pred;
    for (int f = 0; f < frames; ++f) {
      gt.push_back(mft::RandomLabels(rng, w, h, n, 0.1));
      pred.push_back(mft::RandomLabels(rng, w, h, n, 0.05));
    }
    const auto cm = Tally(gt, pred, n);
    const auto expected = oracle::MeanScores(gt, pred, n);
    const auto ious = mf::per_class_iou(cm);
    const auto oracle_ious = oracle::ClassIous(gt, pred, n);
    for (int c = 0; c < n; ++c) {
      ASSERT_EQ(ious[c].has_value(), oracle_ious[c].has_value());
      if (ious[c]) ASSERT_NEAR(*ious[c], *oracle_ious[c], 1e-12);
    }
    if (!expected.miou) {
      ASSERT_THROW(mf::miou(cm), mf::Error);
      continue;
    }
    ASSERT_NEAR(mf::miou(cm), *expected.miou, 1e-12);
    ASSERT_NEAR(mf::fwiou(cm), *expected.fwiou, 1e-12);
  }
}

TEST(Confusion, MergeEqualsJointTally) {
  std::mt19937_64 rng(22);
  std::vector<mf::LabelMap> gt, pred;
  for (int f = 0; f < 6; ++f) {
    gt.push_back(mft::RandomLabels(rng, 5, 5, 3, 0.1));
    pred.push_back(mft::RandomLabels(rng, 5, 5, 3));
  }
  auto a = Tally({gt.begin(), gt.begin() + 2}, {pred.begin(), pred.begin() + 2}, 3);
  const auto b = Tally({gt.begin() + 2, gt.end()}, {pred.begin() + 2, pred.end()}, 3);
  a.Merge(b);
  EXPECT_EQ(a, Tally(gt, pred, 3));
}

TEST(VideoConsistency, PerfectIsOne) {
  std::mt19937_64 rng(23);
  std::vector<mf::LabelMap> gt;
  for (int f = 0; f < 5; ++f) gt.push_back(mft::RandomLabels(rng, 4, 4, 3));
  for (int n : {1, 2, 5}) {
    const auto v = mf::vc_n(gt, gt, n);
    if (v) EXPECT_DOUBLE_EQ(*v, 1.0);
  }
}

TEST(VideoConsistency, ShortClipUndefined) {
  std::vector<mf::LabelMap> gt(3, Labels(1, 1, {0}));
  EXPECT_FALSE(mf::vc_n(gt, gt, 4).has_value());
  EXPECT_TRUE(mf::vc_n(gt, gt, 3).has_value());
  EXPECT_THROW(mf::vc_n(gt, gt, 0), mf::Error);
}

TEST(VideoConsistency, SingleFlickerBreaksWindow) {
  std::vector<mf::LabelMap> gt(4, Labels(2, 1, {0, 1}));
  auto pred = gt;
  pred[1].labels[0] = 1;
  // Windows of 2: [0,1] and [1,2] lose pixel 0; [2,3] is clean.
  EXPECT_DOUBLE_EQ(*mf::vc_n(gt, pred, 2), (0.5 + 0.5 + 1.0) / 3.0);
}

TEST(VideoConsistency, UnstableGroundTruthSkipped) {
  std::vector<mf::LabelMap> gt{Labels(1, 1, {0}), Labels(1, 1, {1})};
  EXPECT_FALSE(mf::vc_n(gt, gt, 2).has_value());
}

TEST(VideoConsistency, WindowOfOneIsMeanPixelAccuracy) {
  std::mt19937_64 rng(24);
  for (int it = 0; it < 100; ++it) {
    std::vector<mf::LabelMap> gt, pred;
    double acc = 0;
    for (int f = 0; f < 3; ++f) {
      gt.push_back(mft::RandomLabels(rng, 6, 6, 3));
      pred.push_back(Perturb(rng, gt.back(), 3, 0.3));
      int ok = 0;
      for (std::size_t i = 0; i < 36; ++i) ok += gt[f].labels[i] == pred[f].labels[i];
      acc += ok / 36.0;
    }
    ASSERT_NEAR(*mf::vc_n(gt, pred, 1), acc / 3.0, 1e-12);
  }
}

TEST(VideoConsistency, MatchesWindowOracle) {
  std::mt19937_64 rng(25);
  for (int it = 0; it < 500; ++it) {
    const int frames = std::uniform_int_distribution<int>(1, 6)(rng);
    const int w = std::uniform_int_distribution<int>(1, 6)(rng);
    const int h = std::uniform_int_distribution<int>(1, 6)(rng);
    std::vector<mf::LabelMap> gt, pred;
    auto base = mft::RandomLabels(rng, w, h, 3, 0.1);
    for (int f = 0; f < frames; ++f) {
      base = Perturb(rng, base, 3, 0.1);
      gt.push_back(base);
      pred.push_back(Perturb(rng, base, 3, 0.2));
    }
    for (int n = 1; n <= 4; ++n) {
      const auto got = mf::vc_n(gt, pred, n);
      const auto want = oracle::VideoConsistency(gt, pred, n);
      ASSERT_EQ(got.has_value(), want.has_value());
      if (got) ASSERT_NEAR(*got, *want, 1e-12);
    }
  }
}

TEST(VideoConsistency, MvcAveragesClipsAndWarns) {
  std::vector<mf::LabelMap> gt(2, Labels(1, 1, {0}));
  std::vector<mf::LabelMap> bad(2, Labels(1, 1, {1}));
  std::vector<mf::LabelMap> short_gt(1, Labels(1, 1, {0}));
  const std::vector<mf::ClipView> clips{{gt, gt}, {gt, bad}, {short_gt, short_gt}};
  const std::vector<int> ns{2, 3};
  const auto r = mf::mvc(clips, ns);
  EXPECT_DOUBLE_EQ(r.scores.at(2), 0.5);
  EXPECT_FALSE(r.scores.count(3));
  ASSERT_EQ(r.warnings.size(), 1u);
  EXPECT_NE(r.warnings[0].find("mVC_3"), std::string::npos);
}

TEST(Band, HalfPlane) {
  mf::LabelMap gt(8, 4, 0);
  for (int y = 0; y < 4; ++y)
    for (int x = 4; x < 8; ++x) gt.at(x, y) = 1;
  for (int r : {1, 2}) {
    const auto band = mf::boundary_band_dense(gt, r);
    for (int y = 0; y < 4; ++y) {
      for (int x = 0; x < 8; ++x) {
        const bool expected = x >= 4 - r && x < 4 + r;
        ASSERT_EQ(band[y * 8 + x] != 0, expected) << x << "," << y << " r=" << r;
      }
    }
    EXPECT_EQ(mf::mask_area(mf::boundary_band(gt, r).mask), static_cast<std::size_t>(8 * r));
  }
}

TEST(Band, UniformAndImageEdgesGiveNoBand) {
  EXPECT_EQ(mf::mask_area(mf::boundary_band(mf::LabelMap(5, 5, 3), 2).mask), 0u);
}

TEST(Band, IgnoreExcludedButNeighborsCount) {
  const auto gt = Labels(3, 1, {0, 255, 0});
  const auto band = mf::boundary_band_dense(gt, 1);
  EXPECT_EQ(band, (std::vector<std::uint8_t>{1, 0, 1}));
}

TEST(Band, RadiusBelowOneRejected) {
  EXPECT_THROW(mf::boundary_band(mf::LabelMap(2, 2, 0), 0), mf::Error);
  EXPECT_THROW(mf::boundary_band(mf::LabelMap(2, 2, 0), -1), mf::Error);
}

TEST(Band, MatchesErosionOracleAndGrowsWithRadius) {
  std::mt19937_64 rng(27);
  for (int it = 0; it < 500; ++it) {
    const int w = std::uniform_int_distribution<int>(1, 10)(rng);
    const int h = std::uniform_int_distribution<int>(1, 10)(rng);
    const auto gt = (it % 2) ? mft::RandomRegions(rng, w, h, 4) : mft::RandomLabels(rng, w, h, 3, 0.1);
    std::vector<std::uint8_t> prev;
    for (int r = 1; r <= 4; ++r) {
      const auto band = mf::boundary_band_dense(gt, r);
      ASSERT_EQ(band, oracle::ErosionBand(gt, r)) << "r=" << r;
      ASSERT_EQ(mf::rle_decode(mf::boundary_band(gt, r).mask), band);
      if (!prev.empty()) {
        for (std::size_t i = 0; i < band.size(); ++i) ASSERT_LE(prev[i], band[i]);
      }
      prev = band;
    }
  }
}

TEST(BoundaryIou, Examples) {
  mf::LabelMap gt(4, 1, 0);
  gt.labels = {0, 0, 1, 1};
  EXPECT_DOUBLE_EQ(*mf::boundary_iou_frame(gt, gt, 1), 1.0);
  // Band is pixels 1 and 2; one matches.
  const auto pred = Labels(4, 1, {0, 0, 0, 1});
  EXPECT_DOUBLE_EQ(*mf::boundary_iou_frame(gt, pred, 1), 1.0 / 3.0);
  EXPECT_FALSE(mf::boundary_iou_frame(mf::LabelMap(3, 3, 1), mf::LabelMap(3, 3, 0), 2).has_value());
}

TEST(BoundaryIou, UndefinedWhenEveryFrameBandless) {
  std::vector<mf::LabelMap> gt(2, mf::LabelMap(3, 3, 1));
  try {
    mf::mbiou(gt, gt, 2);
    FAIL();
  } catch (const mf::Error& e) {
    EXPECT_EQ(e.code(), mf::ErrorCode::kUndefinedMetric);
  }
}

TEST(BoundaryIou, MatchesOracle) {
  std::mt19937_64 rng(28);
  for (int it = 0; it < 500; ++it) {
    const int w = std::uniform_int_distribution<int>(1, 8)(rng);
    const int h = std::uniform_int_distribution<int>(1, 8)(rng);
    const int r = std::uniform_int_distribution<int>(1, 3)(rng);
    std::vector<mf::LabelMap> gt, pred;
    for (int f = 0; f < 3; ++f) {
      gt.push_back(mft::RandomRegions(rng, w, h, 3));
      pred.push_back(Perturb(rng, gt.back(), 3, 0.3));
    }
    const auto want = oracle::MeanBoundaryIou(gt, pred, r);
    if (!want) {
      ASSERT_THROW(mf::mbiou(gt, pred, r), mf::Error);
      continue;
    }
    ASSERT_NEAR(mf::mbiou(gt, pred, r), *want, 1e-12);
  }
}

TEST(BoundaryIou, InvariantOutsideBand) {
  std::mt19937_64 rng(29);
  for (int it = 0; it < 200; ++it) {
    const auto gt = mft::RandomRegions(rng, 8, 8, 3);
    const auto pred = Perturb(rng, gt, 3, 0.3);
    const auto band = mf::boundary_band_dense(gt, 1);
    auto changed = pred;
    for (std::size_t i = 0; i < band.size(); ++i) {
      if (!band[i]) changed.labels[i] = static_cast<mf::ClassId>((pred.labels[i] + 1) % 3);
    }
    const auto a = mf::boundary_iou_frame(gt, pred, 1);
    const auto b = mf::boundary_iou_frame(gt, changed, 1);
    ASSERT_EQ(a.has_value(), b.has_value());
    if (a) ASSERT_DOUBLE_EQ(*a, *b);
  }
}

TEST(BoundaryIou, TallyMergeIsAssociative) {
  std::mt19937_64 rng(30);
  std::vector<mf::LabelMap> gt, pred;
  for (int f = 0; f < 9; ++f) {
    gt.push_back(mft::RandomRegions(rng, 6, 6, 3));
    pred.push_back(Perturb(rng, gt.back(), 3, 0.2));
  }
  auto part = [&](int a, int b) {
    return mf::boundary_tally(std::span(gt).subspan(a, b - a), std::span(pred).subspan(a, b - a), 2);
  };
  auto left = part(0, 3);
  auto mid = part(3, 6);
  mid.Merge(part(6, 9));
  left.Merge(mid);
  auto right = part(0, 3);
  right.Merge(part(3, 6));
  right.Merge(part(6, 9));
  const auto whole = part(0, 9);
  EXPECT_EQ(left.frames, whole.frames);
  EXPECT_NEAR(left.score_sum, whole.score_sum, 1e-12);
  EXPECT_NEAR(right.score_sum, whole.score_sum, 1e-12);
}

TEST(Summarize, MergesClipsAndWarns) {
  std::mt19937_64 rng(31);
  mf::EvalConfig cfg;
  cfg.vc_n = {2, 16};
  std::vector<mf::ClipEvaluation> clips;
  std::vector<mf::LabelMap> all_gt, all_pred;
  for (int c = 0; c < 3; ++c) {
    std::vector<mf::LabelMap> gt, pred;
    for (int f = 0; f < 4; ++f) {
      gt.push_back(mft::RandomRegions(rng, 6, 6, 3));
      pred.push_back(Perturb(rng, gt.back(), 3, 0.2));
    }
    all_gt.insert(all_gt.end(), gt.begin(), gt.end());
    all_pred.insert(all_pred.end(), pred.begin(), pred.end());
    clips.push_back(mf::evaluate_clip(gt, pred, 3, cfg));
  }
  const auto report = mf::summarize(clips, 3, cfg);
  const auto expected = oracle::MeanScores(all_gt, all_pred, 3);
  EXPECT_NEAR(report.miou, *expected.miou, 1e-12);
  EXPECT_NEAR(report.fwiou, *expected.fwiou, 1e-12);
  EXPECT_EQ(report.clip_count, 3u);
  EXPECT_EQ(report.frame_count, 12u);
  EXPECT_TRUE(report.mvc.count(2));
  EXPECT_FALSE(report.mvc.count(16));
  ASSERT_EQ(report.warnings.size(), 1u);
  if (auto b = oracle::MeanBoundaryIou(all_gt, all_pred, 2)) {
    EXPECT_NEAR(*report.mbiou, *b, 1e-12);
  }
}

TEST(Summarize, BandlessDatasetOmitsBoundaryScore) {
  std::vector<mf::LabelMap> gt(2, mf::LabelMap(3, 3, 0));
  const std::vector<mf::ClipEvaluation> clips{mf::evaluate_clip(gt, gt, 1, {})};
  const auto report = mf::summarize(clips, 1, {});
  EXPECT_FALSE(report.mbiou.has_value());
  EXPECT_DOUBLE_EQ(report.miou, 1.0);
  EXPECT_FALSE(report.warnings.empty());
}

TEST(EvalConfig, RejectsBadValues) {
  mf::EvalConfig cfg;
  cfg.vc_n = {0};
  EXPECT_THROW(cfg.Validate(), mf::Error);
  cfg = {};
  cfg.boundary_radius = 0;
  EXPECT_THROW(cfg.Validate(), mf::Error);
}
