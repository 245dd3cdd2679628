#ifndef MASKFUSE_INGEST_HPP_
#define MASKFUSE_INGEST_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "maskfuse/mask_model.hpp"

namespace maskfuse {

namespace fs = std::filesystem;

struct FrameEntry {
  int frame_index = 0;
  std::optional<fs::path> gt_path;
  std::optional<fs::path> pred_path;
  std::optional<fs::path> masklet_path;
  std::optional<fs::path> feature_path;

  friend bool operator==(const FrameEntry&, const FrameEntry&) = default;
};

// One video clip. Paths are absolute once loaded; the manifest file stores
// them relative to its own directory.
struct ClipManifest {
  std::string clip_id;
  int width = 0;
  int height = 0;
  int num_classes = 0;
  ClassId ignore_label = kDefaultIgnoreLabel;
  // Clip-wide masklet stream; per-frame masklet_path entries are merged in.
  std::optional<fs::path> masklet_path;
  std::vector<FrameEntry> frames;

  void Validate() const;
  // Distinct masklet files referenced by the clip, in first-use order.
  std::vector<fs::path> MaskletFiles() const;

  friend bool operator==(const ClipManifest&, const ClipManifest&) = default;
};

struct Dataset {
  std::vector<ClipManifest> clips;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

// Accepts a single clip object or {"clips": [...]}.
Dataset read_manifest(const fs::path& path);
// Always writes the {"clips": [...]} form, with paths relative to the
// manifest's directory where possible.
void write_manifest(const Dataset& dataset, const fs::path& path);

// Dense per-pixel features, row-major and pixel-major: the dim values of
// pixel (x, y) are contiguous.
struct FeatureMap {
  int width = 0;
  int height = 0;
  int dim = 0;
  std::vector<float> values;

  std::span<const float> at(int x, int y) const {
    return {values.data() + (static_cast<std::size_t>(y) * width + x) * dim,
            static_cast<std::size_t>(dim)};
  }
  std::span<float> at(int x, int y) {
    return {values.data() + (static_cast<std::size_t>(y) * width + x) * dim,
            static_cast<std::size_t>(dim)};
  }

  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;
};

LabelMap read_labelmap(const fs::path& path, ClassId ignore_label = kDefaultIgnoreLabel);
void write_labelmap(const LabelMap& map, const fs::path& path);

struct MaskletReadOptions {
  std::optional<int> width;
  std::optional<int> height;
  std::optional<int> frame_count;
};

// Grouped by frame_index ascending; record order is kept within a frame.
std::vector<MaskletSet> read_masklets(const fs::path& path, const MaskletReadOptions& opts = {});
void write_masklets(std::span<const MaskletSet> frames, const fs::path& path);

// Parses one JSONL record; exposed for validation tooling.
Masklet parse_masklet_record(std::string_view line);
std::string format_masklet_record(const Masklet& m);

// Dense per-frame view: element i holds the masklets of frame i (possibly empty).
std::vector<MaskletSet> masklets_by_frame(std::vector<MaskletSet> sets, int frame_count);

FeatureMap read_featuremap(const fs::path& path);
void write_featuremap(const FeatureMap& map, const fs::path& path);

// Little-endian helpers shared by the binary formats.
void append_u32_le(std::vector<std::uint8_t>& out, std::uint32_t v);
void append_f32_le(std::vector<std::uint8_t>& out, float v);
std::uint32_t load_u32_le(const std::uint8_t* p);
float load_f32_le(const std::uint8_t* p);
std::vector<std::uint8_t> read_file_bytes(const fs::path& path);
void write_file_bytes(const fs::path& path, std::span<const std::uint8_t> bytes);

}  // namespace maskfuse

#endif  // MASKFUSE_INGEST_HPP_
