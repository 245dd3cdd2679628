#include "maskfuse/mask_model.hpp"

#include <algorithm>
#include <limits>
#include <string>

#include "maskfuse/error.hpp"

namespace maskfuse {

LabelMap::LabelMap(int w, int h, ClassId fill, ClassId ignore)
    : width(w), height(h), ignore_label(ignore),
      labels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {
  Require(w >= 0 && h >= 0, ErrorCode::kInvalidArgument, "negative label map dimensions");
}

void LabelMap::Validate(int num_classes) const {
  Require(labels.size() == static_cast<std::size_t>(width) * height, ErrorCode::kValidation,
          "label map holds " + std::to_string(labels.size()) + " labels for " +
              std::to_string(width) + "x" + std::to_string(height));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const ClassId c = labels[i];
    if (c != ignore_label && c >= num_classes) {
      Fail(ErrorCode::kValidation, "label " + std::to_string(c) + " at pixel " +
                                       std::to_string(i) + " is outside [0," +
                                       std::to_string(num_classes) + ") and not ignore");
    }
  }
}

BinaryMask BinaryMask::FromCounts(int width, int height, std::vector<std::uint32_t> counts) {
  Require(width >= 0 && height >= 0, ErrorCode::kFormat, "negative mask dimensions");
  const std::size_t expected = static_cast<std::size_t>(width) * height;
  std::size_t total = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (counts[i] == 0 && i != 0) {
      Fail(ErrorCode::kFormat, "rle count " + std::to_string(i) + " is zero; only a leading zero is allowed");
    }
    total += counts[i];
  }
  if (counts.size() == 1 && counts[0] == 0 && expected != 0) {
    Fail(ErrorCode::kFormat, "rle holds a lone zero count");
  }
  Require(total == expected, ErrorCode::kFormat,
          "rle counts sum to " + std::to_string(total) + ", expected " + std::to_string(expected));
  if (expected == 0) counts.clear();
  return BinaryMask(width, height, std::move(counts));
}

BinaryMask BinaryMask::FromRuns(int width, int height, std::span<const Run> runs) {
  const std::size_t n = static_cast<std::size_t>(width) * height;
  std::vector<std::uint32_t> counts;
  std::size_t pos = 0;
  bool in_fg = false;
  for (const Run& r : runs) {
    if (r.length == 0) continue;
    Require(r.begin >= pos && r.begin + r.length <= n, ErrorCode::kInvalidArgument,
            "foreground runs must be sorted, disjoint and inside the grid");
    if (in_fg && r.begin == pos) {
      counts.back() += static_cast<std::uint32_t>(r.length);
    } else {
      counts.push_back(static_cast<std::uint32_t>(r.begin - pos));
      counts.push_back(static_cast<std::uint32_t>(r.length));
    }
    pos = r.begin + r.length;
    in_fg = true;
  }
  if (pos < n) counts.push_back(static_cast<std::uint32_t>(n - pos));
  if (counts.empty() && n > 0) counts.push_back(static_cast<std::uint32_t>(n));
  return BinaryMask(width, height, std::move(counts));
}

std::vector<Run> BinaryMask::ForegroundRuns() const {
  std::vector<Run> runs;
  runs.reserve(counts_.size() / 2);
  ForEachForegroundRun([&](std::size_t b, std::size_t len) { runs.push_back({b, len}); });
  return runs;
}

BinaryMask rle_encode(std::span<const std::uint8_t> dense, int width, int height) {
  Require(width >= 0 && height >= 0 &&
              dense.size() == static_cast<std::size_t>(width) * static_cast<std::size_t>(height),
          ErrorCode::kFormat,
          "dense grid holds " + std::to_string(dense.size()) + " pixels for " +
              std::to_string(width) + "x" + std::to_string(height));
  std::vector<std::uint32_t> counts;
  if (dense.empty()) return BinaryMask(width, height, {});
  bool current = false;
  std::uint32_t run = 0;
  for (std::uint8_t v : dense) {
    const bool fg = v != 0;
    if (fg != current) {
      counts.push_back(run);
      run = 0;
      current = fg;
    }
    ++run;
  }
  counts.push_back(run);
  return BinaryMask(width, height, std::move(counts));
}

std::vector<std::uint8_t> rle_decode(const BinaryMask& mask) {
  std::vector<std::uint8_t> dense(mask.pixel_count(), 0);
  mask.ForEachForegroundRun([&](std::size_t b, std::size_t len) {
    std::fill_n(dense.begin() + static_cast<std::ptrdiff_t>(b), len, std::uint8_t{1});
  });
  return dense;
}

std::size_t mask_area(const BinaryMask& mask) {
  std::size_t area = 0;
  mask.ForEachForegroundRun([&](std::size_t, std::size_t len) { area += len; });
  return area;
}

double mask_iou(const BinaryMask& a, const BinaryMask& b) {
  Require(a.width() == b.width() && a.height() == b.height(), ErrorCode::kDimension,
          "mask_iou on " + std::to_string(a.width()) + "x" + std::to_string(a.height()) +
              " vs " + std::to_string(b.width()) + "x" + std::to_string(b.height()));
  const std::vector<Run> ra = a.ForegroundRuns();
  const std::vector<Run> rb = b.ForegroundRuns();
  std::size_t area_a = 0, area_b = 0, inter = 0;
  for (const Run& r : ra) area_a += r.length;
  for (const Run& r : rb) area_b += r.length;
  std::size_t i = 0, j = 0;
  while (i < ra.size() && j < rb.size()) {
    const std::size_t a_end = ra[i].begin + ra[i].length;
    const std::size_t b_end = rb[j].begin + rb[j].length;
    const std::size_t lo = std::max(ra[i].begin, rb[j].begin);
    const std::size_t hi = std::min(a_end, b_end);
    if (hi > lo) inter += hi - lo;
    if (a_end < b_end) {
      ++i;
    } else {
      ++j;
    }
  }
  const std::size_t uni = area_a + area_b - inter;
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

BinaryMask mask_complement(const BinaryMask& mask) {
  if (mask.pixel_count() == 0) return mask;
  std::vector<std::uint32_t> counts = mask.counts();
  if (counts.front() == 0) {
    counts.erase(counts.begin());
  } else {
    counts.insert(counts.begin(), 0);
  }
  return BinaryMask::FromCounts(mask.width(), mask.height(), std::move(counts));
}

Masklet Masklet::Make(BinaryMask mask, int frame_index, MaskletId id, double pred_iou,
                      double stability) {
  Require(pred_iou >= 0.0 && pred_iou <= 1.0, ErrorCode::kValidation,
          "masklet " + std::to_string(id) + ": pred_iou " + std::to_string(pred_iou) +
              " outside [0,1]");
  Require(stability >= 0.0 && stability <= 1.0, ErrorCode::kValidation,
          "masklet " + std::to_string(id) + ": stability " + std::to_string(stability) +
              " outside [0,1]");
  Masklet m;
  m.area = mask_area(mask);
  m.mask = std::move(mask);
  m.frame_index = frame_index;
  m.masklet_id = id;
  m.pred_iou = pred_iou;
  m.stability = stability;
  return m;
}

}  // namespace maskfuse
