#include "maskfuse/metrics.hpp"

#include <algorithm>
#include <numeric>

#include "maskfuse/error.hpp"

namespace maskfuse {

namespace {

void RequireSameShape(const LabelMap& a, const LabelMap& b) {
  Require(a.width == b.width && a.height == b.height && a.labels.size() == b.labels.size(),
          ErrorCode::kDimension,
          "label maps differ in size: " + std::to_string(a.width) + "x" + std::to_string(a.height) +
              " vs " + std::to_string(b.width) + "x" + std::to_string(b.height));
}

void RequireAligned(std::span<const LabelMap> gt, std::span<const LabelMap> pred) {
  Require(gt.size() == pred.size(), ErrorCode::kInvalidArgument,
          "ground truth and prediction sequences differ in length");
  for (std::size_t i = 0; i < gt.size(); ++i) RequireSameShape(gt[i], pred[i]);
}

}  // namespace

ConfusionMatrix::ConfusionMatrix(int num_classes)
    : num_classes_(num_classes),
      counts_(static_cast<std::size_t>(num_classes) * (num_classes + 1), 0) {
  Require(num_classes >= 0, ErrorCode::kInvalidArgument, "negative class count");
}

std::uint64_t ConfusionMatrix::rejected() const {
  std::uint64_t n = 0;
  for (int g = 0; g < num_classes_; ++g) n += at(g, reject_column());
  return n;
}

std::uint64_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

std::uint64_t ConfusionMatrix::false_positives(int c) const {
  std::uint64_t n = 0;
  for (int g = 0; g < num_classes_; ++g) {
    if (g != c) n += at(g, c);
  }
  return n;
}

std::uint64_t ConfusionMatrix::false_negatives(int c) const {
  std::uint64_t n = 0;
  for (int p = 0; p <= num_classes_; ++p) {
    if (p != c) n += at(c, p);
  }
  return n;
}

void ConfusionMatrix::Merge(const ConfusionMatrix& other) {
  Require(other.num_classes_ == num_classes_, ErrorCode::kInvalidArgument,
          "cannot merge confusion matrices of different class counts");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

void accumulate_confusion(const LabelMap& gt, const LabelMap& pred, ConfusionMatrix& cm) {
  RequireSameShape(gt, pred);
  const int n = cm.num_classes();
  const ClassId gt_ignore = gt.ignore_label;
  for (std::size_t i = 0; i < gt.labels.size(); ++i) {
    const ClassId g = gt.labels[i];
    if (g == gt_ignore) continue;
    if (g >= n) {
      Fail(ErrorCode::kValidation, "ground-truth label " + std::to_string(g) +
                                       " outside [0," + std::to_string(n) + ")");
    }
    const ClassId p = pred.labels[i];
    const int col = (p == pred.ignore_label || p >= n) ? cm.reject_column() : p;
    ++cm.at(g, col);
  }
}

std::vector<std::optional<double>> per_class_iou(const ConfusionMatrix& cm) {
  std::vector<std::optional<double>> out(static_cast<std::size_t>(cm.num_classes()));
  for (int c = 0; c < cm.num_classes(); ++c) {
    const std::uint64_t tp = cm.true_positives(c);
    const std::uint64_t denom = tp + cm.false_positives(c) + cm.false_negatives(c);
    if (denom > 0) out[c] = static_cast<double>(tp) / static_cast<double>(denom);
  }
  return out;
}

double miou(const ConfusionMatrix& cm) {
  Require(cm.total() > 0, ErrorCode::kUndefinedMetric, "mIoU undefined: no valid ground-truth pixels");
  double sum = 0.0;
  int present = 0;
  for (const auto& iou : per_class_iou(cm)) {
    if (!iou) continue;
    sum += *iou;
    ++present;
  }
  return sum / present;
}

double fwiou(const ConfusionMatrix& cm) {
  const std::uint64_t total = cm.total();
  Require(total > 0, ErrorCode::kUndefinedMetric, "FWIoU undefined: no valid ground-truth pixels");
  const auto ious = per_class_iou(cm);
  double sum = 0.0;
  for (int c = 0; c < cm.num_classes(); ++c) {
    const std::uint64_t support = cm.true_positives(c) + cm.false_negatives(c);
    if (support == 0 || !ious[c]) continue;
    sum += static_cast<double>(support) / static_cast<double>(total) * *ious[c];
  }
  return sum;
}

std::optional<double> vc_n(std::span<const LabelMap> gt_frames,
                           std::span<const LabelMap> pred_frames, int n) {
  Require(n >= 1, ErrorCode::kInvalidArgument, "vc_n needs n >= 1");
  RequireAligned(gt_frames, pred_frames);
  const std::size_t frames = gt_frames.size();
  if (frames < static_cast<std::size_t>(n) || frames == 0) return std::nullopt;
  const std::size_t pixels = gt_frames[0].labels.size();
  for (const LabelMap& g : gt_frames) {
    Require(g.labels.size() == pixels, ErrorCode::kDimension, "frame sizes differ within a clip");
  }
  // Per pixel: length of the constant-gt run ending at the current frame, and
  // of the run of correct predictions within it.
  std::vector<std::uint32_t> gt_run(pixels, 0), ok_run(pixels, 0);
  const auto need = static_cast<std::uint32_t>(n);
  double sum = 0.0;
  std::size_t windows = 0;
  for (std::size_t t = 0; t < frames; ++t) {
    const ClassId* g = gt_frames[t].labels.data();
    const ClassId* p = pred_frames[t].labels.data();
    const ClassId* g_prev = t > 0 ? gt_frames[t - 1].labels.data() : nullptr;
    const ClassId ignore = gt_frames[t].ignore_label;
    std::uint64_t stable = 0, stable_ok = 0;
    for (std::size_t i = 0; i < pixels; ++i) {
      const bool same = g_prev != nullptr && g_prev[i] == g[i];
      const bool correct = p[i] == g[i];
      gt_run[i] = same ? gt_run[i] + 1 : 1;
      ok_run[i] = correct ? (same ? ok_run[i] + 1 : 1) : 0;
      if (gt_run[i] >= need && g[i] != ignore) {
        ++stable;
        stable_ok += ok_run[i] >= need;
      }
    }
    if (t + 1 >= need && stable > 0) {
      sum += static_cast<double>(stable_ok) / static_cast<double>(stable);
      ++windows;
    }
  }
  if (windows == 0) return std::nullopt;
  return sum / static_cast<double>(windows);
}

MvcResult mvc(std::span<const ClipView> clips, std::span<const int> n_values) {
  MvcResult result;
  for (int n : n_values) {
    double sum = 0.0;
    std::size_t eligible = 0;
    for (const ClipView& clip : clips) {
      if (auto v = vc_n(clip.gt, clip.pred, n)) {
        sum += *v;
        ++eligible;
      }
    }
    if (eligible == 0) {
      result.warnings.push_back("mVC_" + std::to_string(n) + " omitted: no clip with at least " +
                                std::to_string(n) + " frames and a stable ground-truth pixel");
      continue;
    }
    result.scores[n] = sum / static_cast<double>(eligible);
  }
  return result;
}

std::vector<std::uint8_t> boundary_band_dense(const LabelMap& gt, int kernel_radius) {
  Require(kernel_radius >= 1, ErrorCode::kInvalidArgument, "boundary kernel radius must be >= 1");
  const int w = gt.width, h = gt.height;
  const std::size_t n = static_cast<std::size_t>(w) * h;
  std::vector<ClassId> row_min(n), row_max(n);
  const int r = kernel_radius;
  for (int y = 0; y < h; ++y) {
    const ClassId* src = gt.labels.data() + static_cast<std::size_t>(y) * w;
    ClassId* mn = row_min.data() + static_cast<std::size_t>(y) * w;
    ClassId* mx = row_max.data() + static_cast<std::size_t>(y) * w;
    for (int x = 0; x < w; ++x) {
      const int lo = std::max(0, x - r), hi = std::min(w - 1, x + r);
      ClassId a = src[lo], b = src[lo];
      for (int k = lo + 1; k <= hi; ++k) {
        a = std::min(a, src[k]);
        b = std::max(b, src[k]);
      }
      mn[x] = a;
      mx[x] = b;
    }
  }
  std::vector<std::uint8_t> band(n, 0);
  const ClassId ignore = gt.ignore_label;
  for (int y = 0; y < h; ++y) {
    const int lo = std::max(0, y - r), hi = std::min(h - 1, y + r);
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      if (gt.labels[i] == ignore) continue;
      ClassId a = row_min[static_cast<std::size_t>(lo) * w + x];
      ClassId b = row_max[static_cast<std::size_t>(lo) * w + x];
      for (int k = lo + 1; k <= hi && a == b; ++k) {
        a = std::min(a, row_min[static_cast<std::size_t>(k) * w + x]);
        b = std::max(b, row_max[static_cast<std::size_t>(k) * w + x]);
      }
      band[i] = a != b;
    }
  }
  return band;
}

BoundaryBand boundary_band(const LabelMap& gt, int kernel_radius) {
  const std::vector<std::uint8_t> dense = boundary_band_dense(gt, kernel_radius);
  return {rle_encode(dense, gt.width, gt.height)};
}

std::optional<double> boundary_iou_frame(const LabelMap& gt, const LabelMap& pred,
                                         int kernel_radius) {
  RequireSameShape(gt, pred);
  const std::vector<std::uint8_t> band = boundary_band_dense(gt, kernel_radius);
  std::uint64_t band_size = 0, agree = 0;
  for (std::size_t i = 0; i < band.size(); ++i) {
    if (!band[i]) continue;
    ++band_size;
    agree += gt.labels[i] == pred.labels[i];
  }
  if (band_size == 0) return std::nullopt;
  // |M∩B| = |O∩B| = |B| under the agreement-set reading of label intersection.
  return static_cast<double>(agree) / static_cast<double>(2 * band_size - agree);
}

BoundaryTally boundary_tally(std::span<const LabelMap> gt_frames,
                             std::span<const LabelMap> pred_frames, int kernel_radius) {
  RequireAligned(gt_frames, pred_frames);
  BoundaryTally tally;
  for (std::size_t i = 0; i < gt_frames.size(); ++i) {
    if (auto s = boundary_iou_frame(gt_frames[i], pred_frames[i], kernel_radius)) {
      tally.score_sum += *s;
      ++tally.frames;
    }
  }
  return tally;
}

double mbiou(std::span<const LabelMap> gt_frames, std::span<const LabelMap> pred_frames,
             int kernel_radius) {
  const BoundaryTally tally = boundary_tally(gt_frames, pred_frames, kernel_radius);
  Require(tally.frames > 0, ErrorCode::kUndefinedMetric, "mBIoU undefined: every frame is bandless");
  return tally.score_sum / static_cast<double>(tally.frames);
}

void EvalConfig::Validate() const {
  Require(boundary_radius >= 1, ErrorCode::kConfig, "boundary radius must be >= 1");
  for (int n : vc_n) Require(n >= 1, ErrorCode::kConfig, "vc window lengths must be >= 1");
}

ClipEvaluation evaluate_clip(std::span<const LabelMap> gt_frames,
                             std::span<const LabelMap> pred_frames, int num_classes,
                             const EvalConfig& cfg) {
  cfg.Validate();
  RequireAligned(gt_frames, pred_frames);
  ClipEvaluation eval{ConfusionMatrix(num_classes), {}, {}, gt_frames.size()};
  for (std::size_t i = 0; i < gt_frames.size(); ++i) {
    accumulate_confusion(gt_frames[i], pred_frames[i], eval.confusion);
  }
  eval.boundary = boundary_tally(gt_frames, pred_frames, cfg.boundary_radius);
  for (int n : cfg.vc_n) eval.vc[n] = vc_n(gt_frames, pred_frames, n);
  return eval;
}

MetricsReport summarize(std::span<const ClipEvaluation> clips, int num_classes,
                        const EvalConfig& cfg) {
  MetricsReport report;
  report.confusion = ConfusionMatrix(num_classes);
  BoundaryTally boundary;
  for (const ClipEvaluation& c : clips) {
    report.confusion.Merge(c.confusion);
    boundary.Merge(c.boundary);
    report.frame_count += c.frames;
  }
  report.clip_count = clips.size();
  report.miou = miou(report.confusion);
  report.fwiou = fwiou(report.confusion);
  report.per_class_iou = per_class_iou(report.confusion);
  if (boundary.frames > 0) {
    report.mbiou = boundary.score_sum / static_cast<double>(boundary.frames);
  } else {
    report.warnings.push_back("mBIoU omitted: every frame is bandless");
  }
  for (int n : cfg.vc_n) {
    double sum = 0.0;
    std::size_t eligible = 0;
    for (const ClipEvaluation& c : clips) {
      auto it = c.vc.find(n);
      if (it != c.vc.end() && it->second) {
        sum += *it->second;
        ++eligible;
      }
    }
    if (eligible == 0) {
      report.warnings.push_back("mVC_" + std::to_string(n) + " omitted: no eligible clip");
      continue;
    }
    report.mvc[n] = sum / static_cast<double>(eligible);
  }
  return report;
}

}  // namespace maskfuse
