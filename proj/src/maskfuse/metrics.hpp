#ifndef MASKFUSE_METRICS_HPP_
#define MASKFUSE_METRICS_HPP_

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "maskfuse/mask_model.hpp"

namespace maskfuse {

// Rows are ground-truth classes, columns predicted classes, plus one extra
// column for predictions that are ignore or out of range while the ground
// truth is valid. Pixels with ignore ground truth are not counted.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes = 0);

  int num_classes() const { return num_classes_; }
  std::uint64_t at(int gt, int pred) const { return counts_[Index(gt, pred)]; }
  std::uint64_t& at(int gt, int pred) { return counts_[Index(gt, pred)]; }
  // Column index used for ignore/out-of-range predictions.
  int reject_column() const { return num_classes_; }
  std::uint64_t rejected() const;
  std::uint64_t total() const;

  std::uint64_t true_positives(int c) const { return at(c, c); }
  std::uint64_t false_positives(int c) const;
  std::uint64_t false_negatives(int c) const;

  void Merge(const ConfusionMatrix& other);

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::size_t Index(int gt, int pred) const {
    return static_cast<std::size_t>(gt) * (num_classes_ + 1) + pred;
  }

  int num_classes_ = 0;
  std::vector<std::uint64_t> counts_;
};

void accumulate_confusion(const LabelMap& gt, const LabelMap& pred, ConfusionMatrix& cm);

// IoU per class; nullopt for classes with tp + fp + fn == 0.
std::vector<std::optional<double>> per_class_iou(const ConfusionMatrix& cm);
// Mean over classes with tp + fp + fn > 0. Throws kUndefinedMetric when cm is empty.
double miou(const ConfusionMatrix& cm);
// Ground-truth frequency weighted IoU. Throws kUndefinedMetric when cm is empty.
double fwiou(const ConfusionMatrix& cm);

// Video consistency over sliding windows of n frames. Returns nullopt when the
// clip is shorter than n or no window has a stable ground-truth pixel.
std::optional<double> vc_n(std::span<const LabelMap> gt_frames,
                           std::span<const LabelMap> pred_frames, int n);

struct ClipView {
  std::span<const LabelMap> gt;
  std::span<const LabelMap> pred;
};

struct MvcResult {
  std::map<int, double> scores;
  std::vector<std::string> warnings;
};

// Unweighted mean of per-clip vc_n over eligible clips, per n.
MvcResult mvc(std::span<const ClipView> clips, std::span<const int> n_values);

struct BoundaryBand {
  BinaryMask mask;
};

// Pixels whose Chebyshev neighborhood of the given radius (clipped to the
// image) holds a different ground-truth label. Ignore pixels are excluded.
BoundaryBand boundary_band(const LabelMap& gt, int kernel_radius);
// Dense form of the same band, one byte per pixel.
std::vector<std::uint8_t> boundary_band_dense(const LabelMap& gt, int kernel_radius);

struct BoundaryTally {
  double score_sum = 0.0;
  std::size_t frames = 0;

  void Merge(const BoundaryTally& o) {
    score_sum += o.score_sum;
    frames += o.frames;
  }
};

// Per-frame boundary IoU, nullopt when the frame has an empty band.
std::optional<double> boundary_iou_frame(const LabelMap& gt, const LabelMap& pred, int kernel_radius);
BoundaryTally boundary_tally(std::span<const LabelMap> gt_frames,
                             std::span<const LabelMap> pred_frames, int kernel_radius);
// Mean over frames with a nonempty band; throws kUndefinedMetric otherwise.
double mbiou(std::span<const LabelMap> gt_frames, std::span<const LabelMap> pred_frames,
             int kernel_radius);

struct EvalConfig {
  std::vector<int> vc_n = {8, 16};
  int boundary_radius = 2;

  void Validate() const;
  friend bool operator==(const EvalConfig&, const EvalConfig&) = default;
};

struct MetricsReport {
  double miou = 0.0;
  double fwiou = 0.0;
  std::optional<double> mbiou;
  std::map<int, double> mvc;
  std::vector<std::optional<double>> per_class_iou;
  std::size_t clip_count = 0;
  std::size_t frame_count = 0;
  std::vector<std::string> warnings;
  ConfusionMatrix confusion;
};

// Everything a clip contributes to a report; mergeable in clip order.
struct ClipEvaluation {
  ConfusionMatrix confusion;
  BoundaryTally boundary;
  std::map<int, std::optional<double>> vc;
  std::size_t frames = 0;
};

ClipEvaluation evaluate_clip(std::span<const LabelMap> gt_frames,
                             std::span<const LabelMap> pred_frames, int num_classes,
                             const EvalConfig& cfg);

MetricsReport summarize(std::span<const ClipEvaluation> clips, int num_classes,
                        const EvalConfig& cfg);

}  // namespace maskfuse

#endif  // MASKFUSE_METRICS_HPP_
