#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "maskfuse/error.hpp"
#include "maskfuse/filtering.hpp"
#include "test_util.hpp"

namespace mf = maskfuse;

namespace {

mf::ProbMask Uniform(int w, int h, double v) {
  return {w, h, std::vector<double>(static_cast<std::size_t>(w) * h, v)};
}

// Two dense binarizations compared pixel by pixel.
double DenseStability(const mf::ProbMask& p, double offset) {
  const double hi = 1.0 / (1.0 + std::exp(-offset));
  const double lo = 1.0 / (1.0 + std::exp(offset));
  std::size_t inter = 0, uni = 0;
  for (double v : p.probs) {
    const bool a = v >= hi, b = v >= lo;
    inter += a && b;
    uni += a || b;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / uni;
}

mf::Masklet Scored(mf::MaskletId id, double pred_iou, double stability,
                   std::vector<std::uint8_t> grid = {1, 0, 0, 0}) {
  return mf::Masklet::Make(mft::Encode(grid, 2, 2), 0, id, pred_iou, stability);
}

mf::MaskletSet RandomSet(std::mt19937_64& rng, int n) {
  mf::MaskletSet s;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    auto g = mft::RandomBlobGrid(rng, 6, 6);
    g[static_cast<std::size_t>(i) % g.size()] = 1;
    // Coarse scores so threshold ties occur.
    const double a = std::round(u(rng) * 20) / 20, b = std::round(u(rng) * 20) / 20;
    s.masklets.push_back(mf::Masklet::Make(mft::Encode(g, 6, 6), 0, i, a, b));
  }
  return s;
}

std::vector<mf::MaskletId> Ids(const mf::MaskletSet& s) {
  std::vector<mf::MaskletId> ids;
  for (const auto& m : s.masklets) ids.push_back(m.masklet_id);
  return ids;
}

}  // namespace

TEST(Stability, AllOnesIsOne) {
  for (double off : {0.1, 0.9, 3.0}) EXPECT_DOUBLE_EQ(mf::stability_score(Uniform(4, 4, 1.0), off), 1.0);
}

TEST(Stability, BothBinarizationsEmptyIsOne) {
  // 0.1 lies below sigmoid(-0.9) ~ 0.289, so neither level selects a pixel.
  EXPECT_DOUBLE_EQ(mf::stability_score(Uniform(4, 4, 0.1), 0.9), 1.0);
}

TEST(Stability, JustBelowHalfSplitsTheLevels) {
  // sigmoid(-0.9) <= 0.5 - eps < sigmoid(0.9): low mask full, high mask empty.
  EXPECT_DOUBLE_EQ(mf::stability_score(Uniform(4, 4, 0.5 - 1e-9), 0.9), 0.0);
}

TEST(Stability, MatchesDenseOracle) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int it = 0; it < 1000; ++it) {
    const int w = std::uniform_int_distribution<int>(1, 16)(rng);
    const int h = std::uniform_int_distribution<int>(1, 16)(rng);
    mf::ProbMask p{w, h, {}};
    for (int i = 0; i < w * h; ++i) p.probs.push_back(u(rng));
    ASSERT_DOUBLE_EQ(mf::stability_score(p, 0.9), DenseStability(p, 0.9));
  }
}

TEST(Stability, ProbabilityOutOfRangeRejected) {
  EXPECT_THROW(mf::stability_score(Uniform(1, 1, 1.5), 0.9), mf::Error);
}

TEST(Filter, DefaultsMatchPublishedSettings) {
  const mf::FilterConfig cfg;
  EXPECT_EQ(cfg.pred_iou_thresh, 0.6);
  EXPECT_EQ(cfg.stability_thresh, 0.8);
  EXPECT_EQ(cfg.stability_offset, 0.9);
  EXPECT_FALSE(cfg.dedup_iou.has_value());
}

TEST(Filter, BelowPredIouDropped) {
  const mf::MaskletSet s{0, {Scored(1, 0.59, 0.9)}};
  EXPECT_TRUE(mf::filter_masklets(s, {}).masklets.empty());
}

TEST(Filter, ThresholdsInclusive) {
  const mf::MaskletSet s{0, {Scored(1, 0.6, 0.8)}};
  EXPECT_EQ(mf::filter_masklets(s, {}).masklets.size(), 1u);
}

TEST(Filter, MatchesPredicateOracle) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int it = 0; it < 1000; ++it) {
    const mf::MaskletSet s = RandomSet(rng, std::uniform_int_distribution<int>(0, 12)(rng));
    mf::FilterConfig cfg;
    cfg.pred_iou_thresh = std::round(u(rng) * 20) / 20;
    cfg.stability_thresh = std::round(u(rng) * 20) / 20;
    std::vector<mf::MaskletId> expected;
    for (const auto& m : s.masklets) {
      if (m.pred_iou >= cfg.pred_iou_thresh && m.stability >= cfg.stability_thresh) {
        expected.push_back(m.masklet_id);
      }
    }
    ASSERT_EQ(Ids(mf::filter_masklets(s, cfg)), expected);
  }
}

TEST(Filter, IdempotentAndMonotone) {
  std::mt19937_64 rng(6);
  for (int it = 0; it < 500; ++it) {
    const mf::MaskletSet s = RandomSet(rng, 10);
    mf::FilterConfig cfg;
    if (it % 2) cfg.dedup_iou = 0.5;
    const auto once = mf::filter_masklets(s, cfg);
    ASSERT_EQ(mf::filter_masklets(once, cfg), once);
    mf::FilterConfig stricter = cfg;
    stricter.pred_iou_thresh = 0.75;
    ASSERT_LE(mf::filter_masklets(s, stricter).masklets.size(), once.masklets.size());
    stricter = cfg;
    stricter.stability_thresh = 0.95;
    ASSERT_LE(mf::filter_masklets(s, stricter).masklets.size(), once.masklets.size());
  }
}

TEST(Filter, DedupKeepsHigherScoreInInputOrder) {
  const std::vector<std::uint8_t> a{1, 1, 0, 0}, b{0, 0, 1, 1};
  const mf::MaskletSet s{0, {Scored(1, 0.7, 0.9, a), Scored(2, 0.9, 0.9, a), Scored(3, 0.8, 0.9, b)}};
  mf::FilterConfig cfg;
  cfg.dedup_iou = 0.9;
  EXPECT_EQ(Ids(mf::filter_masklets(s, cfg)), (std::vector<mf::MaskletId>{2, 3}));
  cfg.dedup_iou.reset();
  EXPECT_EQ(Ids(mf::filter_masklets(s, cfg)), (std::vector<mf::MaskletId>{1, 2, 3}));
}

TEST(Filter, InvalidConfigRejected) {
  mf::FilterConfig cfg;
  cfg.pred_iou_thresh = 1.5;
  EXPECT_THROW(mf::filter_masklets({}, cfg), mf::Error);
  cfg = {};
  cfg.stability_offset = 0.0;
  EXPECT_THROW(cfg.Validate(), mf::Error);
}
