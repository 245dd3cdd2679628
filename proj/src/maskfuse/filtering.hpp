#ifndef MASKFUSE_FILTERING_HPP_
#define MASKFUSE_FILTERING_HPP_

#include <optional>
#include <vector>

#include "maskfuse/mask_model.hpp"

namespace maskfuse {

struct FilterConfig {
  double pred_iou_thresh = 0.6;
  double stability_thresh = 0.8;
  // Logit-space offset; binarization levels are sigmoid(+offset) and sigmoid(-offset).
  double stability_offset = 0.9;
  std::optional<double> dedup_iou;

  void Validate() const;
  friend bool operator==(const FilterConfig&, const FilterConfig&) = default;
};

struct ProbMask {
  int width = 0;
  int height = 0;
  std::vector<double> probs;

  void Validate() const;
};

double sigmoid(double x);

// IoU between {p >= sigmoid(offset)} and {p >= sigmoid(-offset)}.
double stability_score(const ProbMask& p, double offset);
// Same dual-threshold IoU with explicit probability-space levels.
double stability_score_at_levels(const ProbMask& p, double high_level, double low_level);

// Inclusive thresholds; optional greedy duplicate suppression by pred_iou.
MaskletSet filter_masklets(const MaskletSet& set, const FilterConfig& cfg);

}  // namespace maskfuse

#endif  // MASKFUSE_FILTERING_HPP_
