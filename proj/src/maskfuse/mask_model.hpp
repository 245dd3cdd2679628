#ifndef MASKFUSE_MASK_MODEL_HPP_
#define MASKFUSE_MASK_MODEL_HPP_

#include <cstdint>
#include <span>
#include <vector>

namespace maskfuse {

using ClassId = std::uint16_t;
using MaskletId = std::int64_t;

inline constexpr ClassId kDefaultIgnoreLabel = 255;

// Dense per-frame class assignment, row-major. Holds semantic predictions,
// ground truth and refined outputs alike.
struct LabelMap {
  int width = 0;
  int height = 0;
  ClassId ignore_label = kDefaultIgnoreLabel;
  std::vector<ClassId> labels;

  LabelMap() = default;
  LabelMap(int w, int h, ClassId fill, ClassId ignore = kDefaultIgnoreLabel);

  std::size_t size() const { return labels.size(); }
  ClassId at(int x, int y) const { return labels[static_cast<std::size_t>(y) * width + x]; }
  ClassId& at(int x, int y) { return labels[static_cast<std::size_t>(y) * width + x]; }

  // Throws kValidation if any label is neither < num_classes nor ignore.
  void Validate(int num_classes) const;

  friend bool operator==(const LabelMap&, const LabelMap&) = default;
};

// A half-open foreground run [begin, begin + length) in row-major pixel order.
struct Run {
  std::size_t begin;
  std::size_t length;
};

// Binary mask stored as uncompressed run-length counts.
//
// Counts alternate background/foreground runs in ROW-major order (unlike
// COCO, which is column-major) and always start with a background run. The
// first count is zero exactly when the first pixel is foreground; every other
// count is strictly positive. Counts sum to width * height.
class BinaryMask {
 public:
  BinaryMask() = default;

  // Validates counts against the invariants above; throws kFormat.
  static BinaryMask FromCounts(int width, int height, std::vector<std::uint32_t> counts);
  // Runs must be sorted, non-overlapping and inside the grid; adjacent runs
  // are coalesced.
  static BinaryMask FromRuns(int width, int height, std::span<const Run> runs);

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width_) * height_; }
  const std::vector<std::uint32_t>& counts() const { return counts_; }

  // Foreground runs in ascending order.
  std::vector<Run> ForegroundRuns() const;

  template <typename Fn>
  void ForEachForegroundRun(Fn&& fn) const {
    std::size_t pos = 0;
    for (std::size_t i = 0; i < counts_.size(); ++i) {
      if (i % 2 == 1 && counts_[i] > 0) fn(pos, static_cast<std::size_t>(counts_[i]));
      pos += counts_[i];
    }
  }

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  BinaryMask(int width, int height, std::vector<std::uint32_t> counts)
      : width_(width), height_(height), counts_(std::move(counts)) {}

  friend BinaryMask rle_encode(std::span<const std::uint8_t>, int, int);

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint32_t> counts_;
};

BinaryMask rle_encode(std::span<const std::uint8_t> dense, int width, int height);
std::vector<std::uint8_t> rle_decode(const BinaryMask& mask);

// |a ∩ b| / |a ∪ b|, 1.0 when both are empty. Throws kDimension on mismatch.
double mask_iou(const BinaryMask& a, const BinaryMask& b);
std::size_t mask_area(const BinaryMask& mask);
BinaryMask mask_complement(const BinaryMask& mask);

struct Masklet {
  BinaryMask mask;
  int frame_index = 0;
  MaskletId masklet_id = 0;
  double pred_iou = 1.0;
  double stability = 1.0;
  std::size_t area = 0;

  // Computes the cached area and checks score ranges (kValidation).
  static Masklet Make(BinaryMask mask, int frame_index, MaskletId id, double pred_iou,
                      double stability);

  friend bool operator==(const Masklet&, const Masklet&) = default;
};

struct MaskletSet {
  int frame_index = 0;
  std::vector<Masklet> masklets;

  friend bool operator==(const MaskletSet&, const MaskletSet&) = default;
};

}  // namespace maskfuse

#endif  // MASKFUSE_MASK_MODEL_HPP_
