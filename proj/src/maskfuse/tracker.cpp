#include "maskfuse/tracker.hpp"

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <tuple>

#include "maskfuse/error.hpp"

namespace maskfuse {

void TrackerConfig::Validate() const {
  Require(window_size >= 1, ErrorCode::kConfig, "window size must be >= 1");
  Require(match_iou_thresh >= 0.0 && match_iou_thresh <= 1.0, ErrorCode::kConfig,
          "match IoU threshold must be in [0,1]");
}

std::vector<MatchPair> greedy_iou_match(std::span<const Masklet* const> prev,
                                        std::span<const Masklet* const> next, double threshold) {
  std::vector<MatchPair> candidates;
  for (std::size_t i = 0; i < prev.size(); ++i) {
    for (std::size_t j = 0; j < next.size(); ++j) {
      const double iou = mask_iou(prev[i]->mask, next[j]->mask);
      if (iou >= threshold) candidates.push_back({i, j, iou});
    }
  }
  auto key = [&](const MatchPair& p) {
    return std::make_tuple(-p.iou, prev[p.prev]->frame_index, prev[p.prev]->masklet_id,
                           next[p.next]->frame_index, next[p.next]->masklet_id);
  };
  std::sort(candidates.begin(), candidates.end(),
            [&](const MatchPair& a, const MatchPair& b) { return key(a) < key(b); });
  std::vector<bool> prev_used(prev.size(), false), next_used(next.size(), false);
  std::vector<MatchPair> matches;
  for (const MatchPair& c : candidates) {
    if (prev_used[c.prev] || next_used[c.next]) continue;
    prev_used[c.prev] = next_used[c.next] = true;
    matches.push_back(c);
  }
  return matches;
}

namespace {

std::vector<const Masklet*> Pointers(const MaskletSet& set) {
  std::vector<const Masklet*> out;
  out.reserve(set.masklets.size());
  for (const Masklet& m : set.masklets) out.push_back(&m);
  return out;
}

}  // namespace

std::vector<MaskletTrack> build_tracks(std::span<const MaskletSet> frames, const TrackerConfig& cfg) {
  cfg.Validate();
  std::vector<MaskletTrack> tracks;
  // Track index of each masklet on the previously processed frame.
  std::vector<int> prev_tracks;
  const MaskletSet* prev_set = nullptr;
  for (const MaskletSet& set : frames) {
    Require(prev_set == nullptr || set.frame_index > prev_set->frame_index,
            ErrorCode::kInvalidArgument, "frames must be ordered by frame_index");
    std::vector<int> cur_tracks(set.masklets.size(), -1);
    const bool linkable = prev_set != nullptr && set.frame_index == prev_set->frame_index + 1 &&
                          set.frame_index / cfg.window_size == prev_set->frame_index / cfg.window_size;
    if (linkable) {
      const auto prev_ptrs = Pointers(*prev_set);
      const auto cur_ptrs = Pointers(set);
      for (const MatchPair& m : greedy_iou_match(prev_ptrs, cur_ptrs, cfg.match_iou_thresh)) {
        cur_tracks[m.next] = prev_tracks[m.prev];
      }
    }
    for (std::size_t j = 0; j < set.masklets.size(); ++j) {
      if (cur_tracks[j] < 0) {
        cur_tracks[j] = static_cast<int>(tracks.size());
        tracks.push_back({static_cast<int>(tracks.size()), {}});
      }
      tracks[cur_tracks[j]].members.push_back({set.frame_index, set.masklets[j].masklet_id});
    }
    prev_tracks = std::move(cur_tracks);
    prev_set = &set;
  }
  return tracks;
}

std::vector<MaskletTrack> stitch_windows(std::vector<MaskletTrack> tracks,
                                         std::span<const MaskletSet> frames,
                                         const TrackerConfig& cfg) {
  cfg.Validate();
  std::map<std::pair<int, MaskletId>, const Masklet*> lookup;
  int max_frame = -1;
  for (const MaskletSet& set : frames) {
    for (const Masklet& m : set.masklets) lookup[{set.frame_index, m.masklet_id}] = &m;
    max_frame = std::max(max_frame, set.frame_index);
  }
  auto masklet_of = [&](const TrackMember& member) {
    auto it = lookup.find({member.frame_index, member.masklet_id});
    Require(it != lookup.end(), ErrorCode::kInvalidArgument,
            "track member " + std::to_string(member.masklet_id) + " not found in frames");
    return it->second;
  };

  std::sort(tracks.begin(), tracks.end(),
            [](const MaskletTrack& a, const MaskletTrack& b) { return a.track_id < b.track_id; });
  std::vector<std::optional<MaskletTrack>> live(tracks.begin(), tracks.end());

  for (int boundary = cfg.window_size; boundary <= max_frame; boundary += cfg.window_size) {
    std::vector<std::size_t> ending, starting;
    for (std::size_t i = 0; i < live.size(); ++i) {
      if (!live[i] || live[i]->members.empty()) continue;
      if (live[i]->last_frame() == boundary - 1) ending.push_back(i);
      if (live[i]->first_frame() == boundary) starting.push_back(i);
    }
    if (ending.empty() || starting.empty()) continue;
    std::vector<const Masklet*> prev, next;
    for (std::size_t i : ending) prev.push_back(masklet_of(live[i]->members.back()));
    for (std::size_t i : starting) next.push_back(masklet_of(live[i]->members.front()));
    for (const MatchPair& m : greedy_iou_match(prev, next, cfg.match_iou_thresh)) {
      MaskletTrack& earlier = *live[ending[m.prev]];
      MaskletTrack& later = *live[starting[m.next]];
      earlier.members.insert(earlier.members.end(), later.members.begin(), later.members.end());
      live[starting[m.next]].reset();
    }
  }
  std::vector<MaskletTrack> out;
  for (auto& t : live) {
    if (t) out.push_back(std::move(*t));
  }
  return out;
}

std::vector<MaskletTrack> track_clip(std::span<const MaskletSet> frames, const TrackerConfig& cfg) {
  std::vector<MaskletTrack> tracks = build_tracks(frames, cfg);
  if (cfg.stitch) tracks = stitch_windows(std::move(tracks), frames, cfg);
  return tracks;
}

std::unordered_map<MaskletId, int> track_index(std::span<const MaskletTrack> tracks) {
  std::unordered_map<MaskletId, int> index;
  for (const MaskletTrack& t : tracks) {
    for (const TrackMember& m : t.members) index[m.masklet_id] = t.track_id;
  }
  return index;
}

}  // namespace maskfuse
