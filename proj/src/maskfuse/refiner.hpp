#ifndef MASKFUSE_REFINER_HPP_
#define MASKFUSE_REFINER_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "maskfuse/mask_model.hpp"
#include "maskfuse/tracker.hpp"

namespace maskfuse {

enum class VoteScope { kPerFrame, kPerTrack };
enum class OverlapOrder { kAreaDesc, kPredIouAsc };

std::string_view to_string(VoteScope scope);
std::string_view to_string(OverlapOrder order);
VoteScope parse_vote_scope(std::string_view name);
OverlapOrder parse_overlap_order(std::string_view name);

struct RefineConfig {
  VoteScope vote_scope = VoteScope::kPerFrame;
  // Later writes overwrite earlier ones; area_desc paints the smallest
  // masklet last.
  OverlapOrder overlap_order = OverlapOrder::kAreaDesc;
  double min_vote_fraction = 0.0;

  void Validate() const;
  friend bool operator==(const RefineConfig&, const RefineConfig&) = default;
};

// Per-class pixel tally of a label map under a mask, ignore excluded.
class ClassHistogram {
 public:
  void Add(ClassId c, std::uint64_t n = 1);
  void Merge(const ClassHistogram& other);
  std::uint64_t total() const { return total_; }
  std::uint64_t count(ClassId c) const { return c < counts_.size() ? counts_[c] : 0; }

  // Smallest class id among the maxima.
  std::optional<ClassId> argmax() const;

 private:
  std::vector<std::uint64_t> counts_;
  std::uint64_t total_ = 0;
};

struct Vote {
  ClassId class_id = 0;
  double fraction = 0.0;

  friend bool operator==(const Vote&, const Vote&) = default;
};

ClassHistogram class_histogram(const BinaryMask& mask, const LabelMap& s);
// (ignore_label, 0.0) when the histogram is empty.
Vote vote_from_histogram(const ClassHistogram& hist, ClassId ignore_label);

// Majority class of s under m, ignore pixels excluded, smallest id on ties.
// Throws kContract for an empty mask and kDimension on size mismatch.
Vote predominant_class(const BinaryMask& m, const LabelMap& s);

struct TrackVotes {
  std::unordered_map<int, Vote> by_track;
  std::unordered_map<MaskletId, int> track_of;
};

// Indices of set.masklets in paint order.
std::vector<std::size_t> paint_order(const MaskletSet& set, OverlapOrder order);

// Writes `cls` under `mask`. When `protect` is given, pixels that hold
// protect->ignore_label in `protect` are left untouched.
void paint_mask(LabelMap& canvas, const BinaryMask& mask, ClassId cls,
                const LabelMap* protect = nullptr);

LabelMap refine_frame(const LabelMap& s, const MaskletSet& masklets, const RefineConfig& cfg,
                      const TrackVotes* track_votes = nullptr);

// Pools per-class counts over every member masklet of each track.
TrackVotes pool_track_votes(std::span<const LabelMap> preds, std::span<const MaskletSet> masklets,
                            std::span<const MaskletTrack> tracks);

// preds[i] and masklets[i] describe the same frame.
std::vector<LabelMap> refine_clip(std::span<const LabelMap> preds,
                                  std::span<const MaskletSet> masklets,
                                  std::span<const MaskletTrack> tracks, const RefineConfig& cfg);

}  // namespace maskfuse

#endif  // MASKFUSE_REFINER_HPP_
