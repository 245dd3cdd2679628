#ifndef MASKFUSE_SYNTH_HPP_
#define MASKFUSE_SYNTH_HPP_

#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <unordered_map>
#include <vector>

#include "maskfuse/classifier.hpp"
#include "maskfuse/ingest.hpp"
#include "maskfuse/mask_model.hpp"
#include "maskfuse/tracker.hpp"

namespace maskfuse {

enum class ShapeKind { kRectangle, kEllipse };

struct PerturbConfig {
  int boundary_jitter_radius = 0;
  double label_noise_rate = 0.0;
  double class_swap_rate = 0.0;

  friend bool operator==(const PerturbConfig&, const PerturbConfig&) = default;
};

struct SynthConfig {
  std::uint64_t seed = 0;
  int width = 128;
  int height = 128;
  int frames = 40;
  int num_objects = 5;
  int num_classes = 124;
  // Per-axis speed in pixels/frame, with a random sign.
  double min_speed = 0.5;
  double max_speed = 3.0;
  int min_size = 12;
  int max_size = 40;
  std::vector<ShapeKind> shape_kinds = {ShapeKind::kRectangle, ShapeKind::kEllipse};
  PerturbConfig perturb;
  int feature_dim = 64;
  double feature_separation = 4.0;
  int feature_stride = 4;
  // Class centers are shared by every clip generated with the same value.
  std::uint64_t feature_seed = 0x6d61736b66757365ULL;

  void Validate() const;
};

struct SynthObject {
  ShapeKind kind = ShapeKind::kRectangle;
  ClassId class_id = 0;
  double x = 0, y = 0;  // top-left corner
  double w = 0, h = 0;
  double vx = 0, vy = 0;
};

// Per-pixel object index + 1, 0 for background.
struct InstanceMap {
  int width = 0;
  int height = 0;
  std::vector<std::uint16_t> ids;

  friend bool operator==(const InstanceMap&, const InstanceMap&) = default;
};

struct SynthClip {
  std::vector<SynthObject> objects;  // initial state
  std::vector<LabelMap> gt;
  std::vector<InstanceMap> instances;
};

// Constant-velocity objects reflecting at the borders; later objects occlude
// earlier ones; background is class 0.
SynthClip generate_clip(const SynthConfig& cfg);

// Per object and frame: dilate or erode by up to the jitter radius, swap the
// whole object's class with class_swap_rate; then flip pixels to a uniform
// random class with label_noise_rate.
std::vector<LabelMap> perturb_prediction(const SynthClip& clip, const PerturbConfig& perturb,
                                         int num_classes, std::uint64_t seed);

struct ScoreModel {
  // Beta(alpha, beta) per score; an infinite alpha means a constant 1.0.
  double pred_iou_alpha = 8.0;
  double pred_iou_beta = 2.0;
  double stability_alpha = 8.0;
  double stability_beta = 2.0;

  static ScoreModel Perfect() {
    const double inf = std::numeric_limits<double>::infinity();
    return {inf, 1.0, inf, 1.0};
  }
};

// Labels 4-connected components of equal nonzero id. Returns one component
// label per pixel (0 = background, components numbered from 1 in raster
// order) and the instance id of each component.
struct Components {
  std::vector<std::uint32_t> labels;
  std::vector<std::uint16_t> instance_of;  // index 0 unused
};
Components connected_components(const InstanceMap& map);

struct OracleMasklets {
  std::vector<MaskletSet> frames;  // one set per frame, possibly empty
  std::vector<MaskletTrack> tracks;  // track_id == instance id
  std::unordered_map<MaskletId, int> instance_of;
};

// One masklet per visible object per frame, the union of that object's
// connected components. Scores are drawn from the score model.
OracleMasklets oracle_masklets(std::span<const InstanceMap> instances, const ScoreModel& scores,
                               std::uint64_t seed);

// Class centers: random unit directions scaled so every pair lies at least
// `separation` apart (sigma = 1).
std::vector<std::vector<double>> class_centers(int num_classes, int dim, double separation,
                                               std::uint64_t seed);

// Feature grid at cfg.feature_stride: center of the pixel's class plus
// standard Gaussian noise. Cells sample the label at their center pixel.
FeatureMap generate_features(const LabelMap& labels,
                             const std::vector<std::vector<double>>& centers, int stride,
                             std::uint64_t seed);

// Pooled masklet features labeled with the masklet's majority ground-truth
// class; masklets whose majority is ignore are skipped.
std::vector<LabeledVector> labeled_vectors(const MaskletSet& masklets, const FeatureMap& features,
                                           const LabelMap& gt);

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

struct SynthWriteOptions {
  int clips = 1;
  bool write_features = true;
  ScoreModel scores;
};

// Writes manifest.json plus gt/pred PNGs, masklets.jsonl and MFEA features
// per clip under out_dir. Returns the dataset as written.
Dataset write_synth_dataset(const SynthConfig& cfg, const SynthWriteOptions& opts,
                            const std::filesystem::path& out_dir);

}  // namespace maskfuse

#endif  // MASKFUSE_SYNTH_HPP_
