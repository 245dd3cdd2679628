#include "maskfuse/refiner.hpp"

#include <algorithm>
#include <string>

#include "maskfuse/error.hpp"

namespace maskfuse {

std::string_view to_string(VoteScope scope) {
  return scope == VoteScope::kPerFrame ? "per_frame" : "per_track";
}

std::string_view to_string(OverlapOrder order) {
  return order == OverlapOrder::kAreaDesc ? "area_desc" : "pred_iou_asc";
}

VoteScope parse_vote_scope(std::string_view name) {
  if (name == "per_frame") return VoteScope::kPerFrame;
  if (name == "per_track") return VoteScope::kPerTrack;
  Fail(ErrorCode::kConfig, "unknown vote scope '" + std::string(name) + "'");
}

OverlapOrder parse_overlap_order(std::string_view name) {
  if (name == "area_desc") return OverlapOrder::kAreaDesc;
  if (name == "pred_iou_asc") return OverlapOrder::kPredIouAsc;
  Fail(ErrorCode::kConfig, "unknown overlap order '" + std::string(name) + "'");
}

void RefineConfig::Validate() const {
  Require(min_vote_fraction >= 0.0 && min_vote_fraction <= 1.0, ErrorCode::kConfig,
          "min vote fraction must be in [0,1]");
}

void ClassHistogram::Add(ClassId c, std::uint64_t n) {
  if (c >= counts_.size()) counts_.resize(static_cast<std::size_t>(c) + 1, 0);
  counts_[c] += n;
  total_ += n;
}

void ClassHistogram::Merge(const ClassHistogram& other) {
  if (other.counts_.size() > counts_.size()) counts_.resize(other.counts_.size(), 0);
  for (std::size_t c = 0; c < other.counts_.size(); ++c) counts_[c] += other.counts_[c];
  total_ += other.total_;
}

std::optional<ClassId> ClassHistogram::argmax() const {
  if (total_ == 0) return std::nullopt;
  std::size_t best = 0;
  for (std::size_t c = 1; c < counts_.size(); ++c) {
    if (counts_[c] > counts_[best]) best = c;
  }
  return static_cast<ClassId>(best);
}

namespace {

void RequireSameShape(const BinaryMask& m, const LabelMap& s) {
  Require(m.width() == s.width && m.height() == s.height, ErrorCode::kDimension,
          "mask is " + std::to_string(m.width()) + "x" + std::to_string(m.height()) +
              ", label map is " + std::to_string(s.width) + "x" + std::to_string(s.height));
}

}  // namespace

ClassHistogram class_histogram(const BinaryMask& mask, const LabelMap& s) {
  RequireSameShape(mask, s);
  // Dense tally for the 8-bit range covers every PNG-backed map.
  std::uint64_t small[256] = {0};
  ClassHistogram hist;
  const ClassId ignore = s.ignore_label;
  mask.ForEachForegroundRun([&](std::size_t begin, std::size_t len) {
    const ClassId* p = s.labels.data() + begin;
    for (std::size_t i = 0; i < len; ++i) {
      const ClassId c = p[i];
      if (c == ignore) continue;
      if (c < 256) {
        ++small[c];
      } else {
        hist.Add(c);
      }
    }
  });
  for (int c = 0; c < 256; ++c) {
    if (small[c]) hist.Add(static_cast<ClassId>(c), small[c]);
  }
  return hist;
}

Vote vote_from_histogram(const ClassHistogram& hist, ClassId ignore_label) {
  const auto winner = hist.argmax();
  if (!winner) return {ignore_label, 0.0};
  return {*winner, static_cast<double>(hist.count(*winner)) / static_cast<double>(hist.total())};
}

Vote predominant_class(const BinaryMask& m, const LabelMap& s) {
  RequireSameShape(m, s);
  Require(mask_area(m) > 0, ErrorCode::kContract, "predominant_class on an empty mask");
  return vote_from_histogram(class_histogram(m, s), s.ignore_label);
}

std::vector<std::size_t> paint_order(const MaskletSet& set, OverlapOrder order) {
  std::vector<std::size_t> idx(set.masklets.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  if (order == OverlapOrder::kAreaDesc) {
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return set.masklets[a].area > set.masklets[b].area;
    });
  } else {
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return set.masklets[a].pred_iou < set.masklets[b].pred_iou;
    });
  }
  return idx;
}

void paint_mask(LabelMap& canvas, const BinaryMask& mask, ClassId cls, const LabelMap* protect) {
  Require(mask.width() == canvas.width && mask.height() == canvas.height, ErrorCode::kDimension,
          "masklet and label map dimensions differ");
  ClassId* out = canvas.labels.data();
  if (protect == nullptr) {
    mask.ForEachForegroundRun([&](std::size_t b, std::size_t len) { std::fill_n(out + b, len, cls); });
    return;
  }
  const ClassId* src = protect->labels.data();
  const ClassId ignore = protect->ignore_label;
  mask.ForEachForegroundRun([&](std::size_t b, std::size_t len) {
    for (std::size_t i = b; i < b + len; ++i) {
      if (src[i] != ignore) out[i] = cls;
    }
  });
}

LabelMap refine_frame(const LabelMap& s, const MaskletSet& masklets, const RefineConfig& cfg,
                      const TrackVotes* track_votes) {
  cfg.Validate();
  LabelMap r = s;
  for (std::size_t i : paint_order(masklets, cfg.overlap_order)) {
    const Masklet& m = masklets.masklets[i];
    RequireSameShape(m.mask, s);
    if (m.area == 0) continue;
    std::optional<Vote> vote;
    if (cfg.vote_scope == VoteScope::kPerTrack && track_votes != nullptr) {
      if (auto t = track_votes->track_of.find(m.masklet_id); t != track_votes->track_of.end()) {
        if (auto v = track_votes->by_track.find(t->second); v != track_votes->by_track.end()) {
          vote = v->second;
        }
      }
    }
    if (!vote) vote = predominant_class(m.mask, s);
    if (vote->class_id == s.ignore_label) continue;
    if (vote->fraction < cfg.min_vote_fraction) continue;
    paint_mask(r, m.mask, vote->class_id, &s);
  }
  return r;
}

TrackVotes pool_track_votes(std::span<const LabelMap> preds, std::span<const MaskletSet> masklets,
                            std::span<const MaskletTrack> tracks) {
  Require(preds.size() == masklets.size(), ErrorCode::kInvalidArgument,
          "prediction and masklet sequences differ in length");
  TrackVotes votes;
  votes.track_of = track_index(tracks);
  std::unordered_map<int, ClassHistogram> pooled;
  ClassId ignore = kDefaultIgnoreLabel;
  for (std::size_t f = 0; f < preds.size(); ++f) {
    ignore = preds[f].ignore_label;
    for (const Masklet& m : masklets[f].masklets) {
      auto t = votes.track_of.find(m.masklet_id);
      if (t == votes.track_of.end()) continue;
      pooled[t->second].Merge(class_histogram(m.mask, preds[f]));
    }
  }
  for (auto& [track, hist] : pooled) votes.by_track[track] = vote_from_histogram(hist, ignore);
  return votes;
}

std::vector<LabelMap> refine_clip(std::span<const LabelMap> preds,
                                  std::span<const MaskletSet> masklets,
                                  std::span<const MaskletTrack> tracks, const RefineConfig& cfg) {
  cfg.Validate();
  Require(preds.size() == masklets.size(), ErrorCode::kInvalidArgument,
          "prediction and masklet sequences differ in length");
  std::optional<TrackVotes> votes;
  if (cfg.vote_scope == VoteScope::kPerTrack) votes = pool_track_votes(preds, masklets, tracks);
  std::vector<LabelMap> out;
  out.reserve(preds.size());
  for (std::size_t f = 0; f < preds.size(); ++f) {
    out.push_back(refine_frame(preds[f], masklets[f], cfg, votes ? &*votes : nullptr));
  }
  return out;
}

}  // namespace maskfuse
