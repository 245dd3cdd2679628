#ifndef MASKFUSE_TRACKER_HPP_
#define MASKFUSE_TRACKER_HPP_

#include <span>
#include <unordered_map>
#include <vector>

#include "maskfuse/mask_model.hpp"

namespace maskfuse {

struct TrackerConfig {
  int window_size = 32;
  double match_iou_thresh = 0.5;
  // Merge identities across window boundaries; off means identities restart
  // with every window.
  bool stitch = false;

  void Validate() const;
  friend bool operator==(const TrackerConfig&, const TrackerConfig&) = default;
};

struct TrackMember {
  int frame_index = 0;
  MaskletId masklet_id = 0;

  friend bool operator==(const TrackMember&, const TrackMember&) = default;
};

struct MaskletTrack {
  int track_id = 0;
  std::vector<TrackMember> members;  // ascending frame_index, one per frame

  int first_frame() const { return members.front().frame_index; }
  int last_frame() const { return members.back().frame_index; }

  friend bool operator==(const MaskletTrack&, const MaskletTrack&) = default;
};

// Links masklets on adjacent frames of the same window by greedy IoU
// matching. Track ids are assigned in creation order (frame, then input order).
std::vector<MaskletTrack> build_tracks(std::span<const MaskletSet> frames, const TrackerConfig& cfg);

// Merges tracks ending on the last frame of a window with tracks starting on
// the first frame of the next, matching the two boundary masks greedily.
// The merged track keeps the earlier id. Output is sorted by track_id.
std::vector<MaskletTrack> stitch_windows(std::vector<MaskletTrack> tracks,
                                         std::span<const MaskletSet> frames,
                                         const TrackerConfig& cfg);

// build_tracks followed by stitch_windows when cfg.stitch is set.
std::vector<MaskletTrack> track_clip(std::span<const MaskletSet> frames, const TrackerConfig& cfg);

std::unordered_map<MaskletId, int> track_index(std::span<const MaskletTrack> tracks);

struct MatchPair {
  std::size_t prev;
  std::size_t next;
  double iou;
};

// Greedy bipartite matching: highest IoU first, each side used once, pairs
// below the threshold left unmatched. Ties resolve by (frame_index,
// masklet_id) of prev, then of next.
std::vector<MatchPair> greedy_iou_match(std::span<const Masklet* const> prev,
                                        std::span<const Masklet* const> next, double threshold);

}  // namespace maskfuse

#endif  // MASKFUSE_TRACKER_HPP_
