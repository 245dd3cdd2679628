#include "maskfuse/filtering.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "maskfuse/error.hpp"

namespace maskfuse {

namespace {

bool InUnit(double v) { return v >= 0.0 && v <= 1.0; }

}  // namespace

void FilterConfig::Validate() const {
  Require(InUnit(pred_iou_thresh), ErrorCode::kConfig, "pred_iou threshold must be in [0,1]");
  Require(InUnit(stability_thresh), ErrorCode::kConfig, "stability threshold must be in [0,1]");
  Require(stability_offset > 0.0 && std::isfinite(stability_offset), ErrorCode::kConfig,
          "stability offset must be a positive real");
  if (dedup_iou) {
    Require(InUnit(*dedup_iou), ErrorCode::kConfig, "dedup IoU threshold must be in [0,1]");
  }
}

void ProbMask::Validate() const {
  Require(probs.size() == static_cast<std::size_t>(width) * height, ErrorCode::kDimension,
          "probability mask size does not match its dimensions");
  for (double v : probs) {
    Require(InUnit(v), ErrorCode::kValidation, "probability outside [0,1]");
  }
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double stability_score_at_levels(const ProbMask& p, double high_level, double low_level) {
  p.Validate();
  std::size_t high = 0, low = 0;
  for (double v : p.probs) {
    high += v >= high_level;
    low += v >= low_level;
  }
  // With high_level >= low_level the high set is contained in the low set,
  // so intersection = |high| and union = |low|.
  if (high_level < low_level) std::swap(high, low);
  if (low == 0) return 1.0;
  return static_cast<double>(high) / static_cast<double>(low);
}

double stability_score(const ProbMask& p, double offset) {
  Require(offset > 0.0, ErrorCode::kConfig, "stability offset must be positive");
  return stability_score_at_levels(p, sigmoid(offset), sigmoid(-offset));
}

MaskletSet filter_masklets(const MaskletSet& set, const FilterConfig& cfg) {
  cfg.Validate();
  std::vector<std::size_t> passing;
  for (std::size_t i = 0; i < set.masklets.size(); ++i) {
    const Masklet& m = set.masklets[i];
    if (m.pred_iou >= cfg.pred_iou_thresh && m.stability >= cfg.stability_thresh) {
      passing.push_back(i);
    }
  }
  if (cfg.dedup_iou) {
    std::vector<std::size_t> by_score = passing;
    std::stable_sort(by_score.begin(), by_score.end(), [&](std::size_t a, std::size_t b) {
      return set.masklets[a].pred_iou > set.masklets[b].pred_iou;
    });
    std::vector<std::size_t> kept;
    for (std::size_t idx : by_score) {
      const bool duplicate = std::any_of(kept.begin(), kept.end(), [&](std::size_t k) {
        return mask_iou(set.masklets[idx].mask, set.masklets[k].mask) >= *cfg.dedup_iou;
      });
      if (!duplicate) kept.push_back(idx);
    }
    std::sort(kept.begin(), kept.end());
    passing = std::move(kept);
  }
  MaskletSet out;
  out.frame_index = set.frame_index;
  out.masklets.reserve(passing.size());
  for (std::size_t i : passing) out.masklets.push_back(set.masklets[i]);
  return out;
}

}  // namespace maskfuse
