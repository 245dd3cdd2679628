#include "maskfuse/classifier.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <random>
#include <string>

#include "maskfuse/error.hpp"

namespace maskfuse {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

// Calls fn(y, x_begin, x_end) for every row-aligned piece of the mask.
template <typename Fn>
void ForEachRowSpan(const BinaryMask& m, Fn&& fn) {
  const std::size_t w = static_cast<std::size_t>(m.width());
  m.ForEachForegroundRun([&](std::size_t begin, std::size_t len) {
    std::size_t pos = begin;
    const std::size_t end = begin + len;
    while (pos < end) {
      const std::size_t y = pos / w;
      const std::size_t row_end = std::min(end, (y + 1) * w);
      fn(y, pos - y * w, row_end - y * w);
      pos = row_end;
    }
  });
}

}  // namespace

FeatureVector pool_features(const BinaryMask& m, const FeatureMap& f) {
  Require(f.width > 0 && f.height > 0 && f.dim > 0, ErrorCode::kConfig, "empty feature map");
  Require(m.width() % f.width == 0 && m.height() % f.height == 0, ErrorCode::kConfig,
          "mask " + std::to_string(m.width()) + "x" + std::to_string(m.height()) +
              " is not an integer multiple of feature grid " + std::to_string(f.width) + "x" +
              std::to_string(f.height));
  const std::size_t sx = static_cast<std::size_t>(m.width() / f.width);
  const std::size_t sy = static_cast<std::size_t>(m.height() / f.height);
  const std::size_t off_x = sx / 2, off_y = sy / 2;

  std::vector<double> sum(static_cast<std::size_t>(f.dim), 0.0);
  std::size_t cells = 0;
  double sum_x = 0.0, sum_y = 0.0;
  std::size_t area = 0;
  ForEachRowSpan(m, [&](std::size_t y, std::size_t x0, std::size_t x1) {
    const std::size_t n = x1 - x0;
    area += n;
    sum_y += static_cast<double>(y) * static_cast<double>(n);
    sum_x += (static_cast<double>(x0) + static_cast<double>(x1 - 1)) * static_cast<double>(n) / 2.0;
    if (y % sy != off_y) return;
    // First sampled column >= x0.
    std::size_t x = x0 - x0 % sx + off_x;
    if (x < x0) x += sx;
    for (; x < x1; x += sx) {
      const auto cell = f.at(static_cast<int>(x / sx), static_cast<int>(y / sy));
      for (std::size_t k = 0; k < cell.size(); ++k) sum[k] += cell[k];
      ++cells;
    }
  });
  Require(area > 0, ErrorCode::kContract, "pool_features on an empty mask");
  if (cells == 0) {
    const auto cx = static_cast<std::size_t>(std::floor(sum_x / static_cast<double>(area)));
    const auto cy = static_cast<std::size_t>(std::floor(sum_y / static_cast<double>(area)));
    const auto cell = f.at(static_cast<int>(cx / sx), static_cast<int>(cy / sy));
    return {std::vector<double>(cell.begin(), cell.end())};
  }
  for (double& v : sum) v /= static_cast<double>(cells);
  return {std::move(sum)};
}

MlpModel MlpModel::Zeros(int d_in, int d_hidden, int num_classes) {
  MlpModel m;
  m.d_in = d_in;
  m.d_hidden = d_hidden;
  m.num_classes = num_classes;
  m.w1.assign(static_cast<std::size_t>(d_hidden) * d_in, 0.0);
  m.b1.assign(static_cast<std::size_t>(d_hidden), 0.0);
  m.w2.assign(static_cast<std::size_t>(num_classes) * d_hidden, 0.0);
  m.b2.assign(static_cast<std::size_t>(num_classes), 0.0);
  return m;
}

void MlpModel::Validate() const {
  Require(d_in > 0 && d_hidden > 0 && num_classes > 0, ErrorCode::kInvalidArgument,
          "MLP dimensions must be positive");
  Require(w1.size() == static_cast<std::size_t>(d_hidden) * d_in &&
              b1.size() == static_cast<std::size_t>(d_hidden) &&
              w2.size() == static_cast<std::size_t>(num_classes) * d_hidden &&
              b2.size() == static_cast<std::size_t>(num_classes),
          ErrorCode::kInvalidArgument, "MLP parameter shapes are inconsistent");
  for (const auto* p : {&w1, &b1, &w2, &b2}) {
    for (double v : *p) Require(std::isfinite(v), ErrorCode::kData, "non-finite MLP parameter");
  }
}

namespace {

// Forward pass for a batch stored row-per-sample. Fills pre-activations,
// hidden activations and probabilities.
void Forward(const MlpModel& model, const RowMatrix& x, RowMatrix& z1, RowMatrix& h,
             RowMatrix& probs) {
  const ConstMatMap w1(model.w1.data(), model.d_hidden, model.d_in);
  const ConstMatMap w2(model.w2.data(), model.num_classes, model.d_hidden);
  const ConstVecMap b1(model.b1.data(), model.d_hidden);
  const ConstVecMap b2(model.b2.data(), model.num_classes);
  z1 = x * w1.transpose();
  z1.rowwise() += b1.transpose();
  h = z1.cwiseMax(0.0);
  probs = h * w2.transpose();
  probs.rowwise() += b2.transpose();
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    auto row = probs.row(r);
    const double mx = row.maxCoeff();
    row = (row.array() - mx).exp();
    row /= row.sum();
  }
}

}  // namespace

std::vector<double> mlp_forward(const MlpModel& model, std::span<const double> v) {
  Require(v.size() == static_cast<std::size_t>(model.d_in), ErrorCode::kDimension,
          "feature vector has dim " + std::to_string(v.size()) + ", model expects " +
              std::to_string(model.d_in));
  RowMatrix x = ConstMatMap(v.data(), 1, model.d_in);
  RowMatrix z1, h, probs;
  Forward(model, x, z1, h, probs);
  return std::vector<double>(probs.data(), probs.data() + probs.size());
}

ClassId mlp_predict(const MlpModel& model, std::span<const double> v) {
  const std::vector<double> p = mlp_forward(model, v);
  return static_cast<ClassId>(std::max_element(p.begin(), p.end()) - p.begin());
}

double mlp_loss(const MlpModel& model, std::span<const LabeledVector> batch, MlpGradient* grad) {
  Require(!batch.empty(), ErrorCode::kInvalidArgument, "empty batch");
  const Eigen::Index n = static_cast<Eigen::Index>(batch.size());
  RowMatrix x(n, model.d_in);
  for (Eigen::Index i = 0; i < n; ++i) {
    const LabeledVector& s = batch[static_cast<std::size_t>(i)];
    Require(s.x.dim() == model.d_in, ErrorCode::kDimension, "sample dimension mismatch");
    Require(s.label < model.num_classes, ErrorCode::kInvalidArgument,
            "label " + std::to_string(s.label) + " >= num_classes");
    x.row(i) = ConstVecMap(s.x.values.data(), model.d_in).transpose();
  }
  RowMatrix z1, h, probs;
  Forward(model, x, z1, h, probs);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    loss -= std::log(std::max(probs(i, batch[static_cast<std::size_t>(i)].label), 1e-300));
  }
  loss /= static_cast<double>(n);
  if (grad == nullptr) return loss;

  RowMatrix dz2 = probs;
  for (Eigen::Index i = 0; i < n; ++i) dz2(i, batch[static_cast<std::size_t>(i)].label) -= 1.0;
  dz2 /= static_cast<double>(n);
  const ConstMatMap w2(model.w2.data(), model.num_classes, model.d_hidden);
  RowMatrix dz1 = (dz2 * w2).cwiseProduct((z1.array() > 0.0).cast<double>().matrix());

  grad->w1.resize(model.w1.size());
  grad->b1.resize(model.b1.size());
  grad->w2.resize(model.w2.size());
  grad->b2.resize(model.b2.size());
  MatMap(grad->w1.data(), model.d_hidden, model.d_in) = dz1.transpose() * x;
  VecMap(grad->b1.data(), model.d_hidden) = dz1.colwise().sum().transpose();
  MatMap(grad->w2.data(), model.num_classes, model.d_hidden) = dz2.transpose() * h;
  VecMap(grad->b2.data(), model.num_classes) = dz2.colwise().sum().transpose();
  return loss;
}

void TrainConfig::Validate() const {
  Require(learning_rate > 0 && epochs > 0 && batch_size > 0 && d_hidden > 0, ErrorCode::kConfig,
          "learning rate, epochs, batch size and hidden width must be positive");
  Require(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1 && epsilon > 0, ErrorCode::kConfig,
          "Adam moments must be in [0,1) and epsilon positive");
}

namespace {

struct AdamState {
  std::vector<double> m, v;
};

void AdamStep(std::vector<double>& param, const std::vector<double>& g, AdamState& s,
              const TrainConfig& cfg, double bias1, double bias2) {
  if (s.m.empty()) {
    s.m.assign(param.size(), 0.0);
    s.v.assign(param.size(), 0.0);
  }
  for (std::size_t i = 0; i < param.size(); ++i) {
    s.m[i] = cfg.beta1 * s.m[i] + (1.0 - cfg.beta1) * g[i];
    s.v[i] = cfg.beta2 * s.v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
    const double m_hat = s.m[i] / bias1;
    const double v_hat = s.v[i] / bias2;
    param[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
  }
}

void GlorotUniform(std::vector<double>& w, int fan_in, int fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (double& v : w) v = dist(rng);
}

}  // namespace

TrainResult mlp_train(std::span<const LabeledVector> dataset, int num_classes,
                      const TrainConfig& cfg) {
  cfg.Validate();
  Require(!dataset.empty(), ErrorCode::kInvalidArgument, "empty training set");
  Require(num_classes > 0, ErrorCode::kInvalidArgument, "num_classes must be positive");
  const int d_in = dataset.front().x.dim();
  Require(d_in > 0, ErrorCode::kInvalidArgument, "zero-dimensional features");
  for (const LabeledVector& s : dataset) {
    Require(s.x.dim() == d_in, ErrorCode::kDimension, "training vectors differ in dimension");
    Require(s.label < num_classes, ErrorCode::kInvalidArgument,
            "training label " + std::to_string(s.label) + " >= num_classes");
  }

  std::mt19937_64 rng(cfg.seed);
  TrainResult result;
  MlpModel& model = result.model;
  model = MlpModel::Zeros(d_in, cfg.d_hidden, num_classes);
  GlorotUniform(model.w1, d_in, cfg.d_hidden, rng);
  GlorotUniform(model.w2, cfg.d_hidden, num_classes, rng);

  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<LabeledVector> batch;
  MlpGradient grad;
  AdamState s_w1, s_b1, s_w2, s_b2;
  std::uint64_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(dataset[order[i]]);
      const double loss = mlp_loss(model, batch, &grad);
      if (!std::isfinite(loss)) {
        Fail(ErrorCode::kDivergence, "training diverged at epoch " + std::to_string(epoch + 1));
      }
      ++step;
      const double bias1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      const double bias2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      AdamStep(model.w1, grad.w1, s_w1, cfg, bias1, bias2);
      AdamStep(model.b1, grad.b1, s_b1, cfg, bias1, bias2);
      AdamStep(model.w2, grad.w2, s_w2, cfg, bias1, bias2);
      AdamStep(model.b2, grad.b2, s_b2, cfg, bias1, bias2);
      epoch_loss += loss;
      ++batches;
    }
    result.epoch_losses.push_back(epoch_loss / static_cast<double>(batches));
  }
  const double final_loss = mlp_loss(model, dataset);
  if (!std::isfinite(final_loss)) {
    Fail(ErrorCode::kDivergence, "training diverged at epoch " + std::to_string(cfg.epochs));
  }
  model.final_loss = final_loss;
  return result;
}

namespace {
constexpr char kModelMagic[4] = {'M', 'M', 'L', 'P'};
}  // namespace

std::vector<std::uint8_t> encode_model(const MlpModel& model) {
  model.Validate();
  std::vector<std::uint8_t> bytes(std::begin(kModelMagic), std::end(kModelMagic));
  append_u32_le(bytes, static_cast<std::uint32_t>(model.d_in));
  append_u32_le(bytes, static_cast<std::uint32_t>(model.d_hidden));
  append_u32_le(bytes, static_cast<std::uint32_t>(model.num_classes));
  for (const auto* p : {&model.w1, &model.b1, &model.w2, &model.b2}) {
    for (double v : *p) append_f32_le(bytes, static_cast<float>(v));
  }
  return bytes;
}

MlpModel decode_model(std::span<const std::uint8_t> bytes) {
  Require(bytes.size() >= 16 && std::memcmp(bytes.data(), kModelMagic, 4) == 0, ErrorCode::kFormat,
          "not an MMLP model file");
  const std::uint32_t d_in = load_u32_le(bytes.data() + 4);
  const std::uint32_t d_hidden = load_u32_le(bytes.data() + 8);
  const std::uint32_t classes = load_u32_le(bytes.data() + 12);
  Require(d_in > 0 && d_hidden > 0 && classes > 0 && d_in <= 1u << 20 && d_hidden <= 1u << 20 &&
              classes <= 1u << 16,
          ErrorCode::kFormat, "implausible MMLP dimensions");
  MlpModel model = MlpModel::Zeros(static_cast<int>(d_in), static_cast<int>(d_hidden),
                                   static_cast<int>(classes));
  const std::size_t expected = 16 + 4 * model.parameter_count();
  Require(bytes.size() == expected, ErrorCode::kFormat,
          "MMLP payload is " + std::to_string(bytes.size()) + " bytes, expected " +
              std::to_string(expected));
  const std::uint8_t* p = bytes.data() + 16;
  for (auto* vec : {&model.w1, &model.b1, &model.w2, &model.b2}) {
    for (double& v : *vec) {
      v = load_f32_le(p);
      p += 4;
    }
  }
  model.Validate();
  return model;
}

void save_model(const MlpModel& model, const std::filesystem::path& path) {
  write_file_bytes(path, encode_model(model));
}

MlpModel load_model(const std::filesystem::path& path) {
  try {
    return decode_model(read_file_bytes(path));
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

LabelMap compose_segmentation(const MaskletSet& masklets, std::span<const ClassId> classes,
                              const LabelMap* base, int width, int height, ClassId ignore_label,
                              OverlapOrder order) {
  Require(classes.size() == masklets.masklets.size(), ErrorCode::kInvalidArgument,
          "one class per masklet required");
  LabelMap out;
  if (base != nullptr) {
    Require(base->width == width && base->height == height, ErrorCode::kDimension,
            "base prediction dimensions differ from the frame");
    out = *base;
  } else {
    out = LabelMap(width, height, ignore_label, ignore_label);
  }
  for (std::size_t i : paint_order(masklets, order)) {
    if (classes[i] == out.ignore_label) continue;
    paint_mask(out, masklets.masklets[i].mask, classes[i]);
  }
  return out;
}

}  // namespace maskfuse
