#ifndef MASKFUSE_CLASSIFIER_HPP_
#define MASKFUSE_CLASSIFIER_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "maskfuse/ingest.hpp"
#include "maskfuse/mask_model.hpp"
#include "maskfuse/refiner.hpp"

namespace maskfuse {

struct FeatureVector {
  std::vector<double> values;

  int dim() const { return static_cast<int>(values.size()); }
  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

// Mean feature over the mask. The mask is sampled onto the feature grid by
// nearest neighbor (the center pixel of each stride cell); when no cell
// survives, the cell holding the mask centroid is used. Frame dimensions must
// be integer multiples of the feature grid (kConfig otherwise).
FeatureVector pool_features(const BinaryMask& m, const FeatureMap& f);

// One hidden rectifier layer followed by softmax. Weights are row-major:
// w1 is d_hidden x d_in, w2 is num_classes x d_hidden.
struct MlpModel {
  int d_in = 0;
  int d_hidden = 0;
  int num_classes = 0;
  std::vector<double> w1, b1, w2, b2;
  std::optional<double> final_loss;

  static MlpModel Zeros(int d_in, int d_hidden, int num_classes);
  void Validate() const;
  std::size_t parameter_count() const { return w1.size() + b1.size() + w2.size() + b2.size(); }

  friend bool operator==(const MlpModel&, const MlpModel&) = default;
};

std::vector<double> mlp_forward(const MlpModel& model, std::span<const double> v);
ClassId mlp_predict(const MlpModel& model, std::span<const double> v);

struct LabeledVector {
  FeatureVector x;
  ClassId label = 0;
};

struct MlpGradient {
  std::vector<double> w1, b1, w2, b2;
};

// Mean cross-entropy over the batch; fills `grad` when given.
double mlp_loss(const MlpModel& model, std::span<const LabeledVector> batch,
                MlpGradient* grad = nullptr);

struct TrainConfig {
  double learning_rate = 1e-3;
  int epochs = 50;
  int batch_size = 256;
  std::uint64_t seed = 0;
  int d_hidden = 256;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void Validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct TrainResult {
  MlpModel model;
  std::vector<double> epoch_losses;  // mean mini-batch loss per epoch
};

// Mini-batch Adam on mean cross-entropy. Glorot-uniform weights, zero biases,
// per-epoch shuffle; all randomness from cfg.seed. Throws kDivergence on a
// non-finite loss.
TrainResult mlp_train(std::span<const LabeledVector> dataset, int num_classes,
                      const TrainConfig& cfg);

// "MMLP" magic, u32 LE d_in, d_hidden, num_classes, then f32 LE w1, b1, w2, b2.
void save_model(const MlpModel& model, const std::filesystem::path& path);
MlpModel load_model(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_model(const MlpModel& model);
MlpModel decode_model(std::span<const std::uint8_t> bytes);

// Paints each masklet with its class over `base` (or an all-ignore canvas)
// in the given overlap order. classes[i] belongs to masklets.masklets[i].
LabelMap compose_segmentation(const MaskletSet& masklets, std::span<const ClassId> classes,
                              const LabelMap* base, int width, int height,
                              ClassId ignore_label = kDefaultIgnoreLabel,
                              OverlapOrder order = OverlapOrder::kAreaDesc);

}  // namespace maskfuse

#endif  // MASKFUSE_CLASSIFIER_HPP_
