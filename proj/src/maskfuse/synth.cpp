#include "maskfuse/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <random>
#include <string>

#include "maskfuse/error.hpp"
#include "maskfuse/refiner.hpp"

namespace maskfuse {

namespace {

std::uint64_t SplitMix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Stream tags for derive_seed.
enum Stream : std::uint64_t {
  kObjects = 1,
  kPerturb = 2,
  kScores = 3,
  kFeatures = 4,
  kClip = 5,
};

bool InUnit(double v) { return v >= 0.0 && v <= 1.0; }

// Max (dilate) or min (erode) filter of a 0/1 image over a Chebyshev window,
// restricted to the rectangle [x0,x1) x [y0,y1). Out-of-image neighbors are
// ignored, so the image border never erodes.
void SquareFilter(std::vector<std::uint8_t>& img, int w, int h, int radius, bool dilate, int x0,
                  int x1, int y0, int y1) {
  if (radius <= 0) return;
  std::vector<std::uint8_t> tmp(img);
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      const int lo = std::max(0, x - radius), hi = std::min(w - 1, x + radius);
      std::uint8_t v = dilate ? 0 : 1;
      for (int k = lo; k <= hi; ++k) {
        const std::uint8_t s = img[static_cast<std::size_t>(y) * w + k];
        v = dilate ? std::max(v, s) : std::min(v, s);
      }
      tmp[static_cast<std::size_t>(y) * w + x] = v;
    }
  }
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      const int lo = std::max(0, y - radius), hi = std::min(h - 1, y + radius);
      std::uint8_t v = dilate ? 0 : 1;
      for (int k = lo; k <= hi; ++k) {
        const std::uint8_t s = tmp[static_cast<std::size_t>(k) * w + x];
        v = dilate ? std::max(v, s) : std::min(v, s);
      }
      img[static_cast<std::size_t>(y) * w + x] = v;
    }
  }
}

double SampleBeta(double alpha, double beta, std::mt19937_64& rng) {
  if (std::isinf(alpha)) return 1.0;
  std::gamma_distribution<double> ga(alpha, 1.0), gb(beta, 1.0);
  const double a = ga(rng), b = gb(rng);
  if (a + b <= 0.0) return 0.5;
  return std::clamp(a / (a + b), 0.0, 1.0);
}

bool Covers(const SynthObject& o, double px, double py) {
  if (o.kind == ShapeKind::kRectangle) {
    return px >= o.x && px < o.x + o.w && py >= o.y && py < o.y + o.h;
  }
  const double rx = o.w / 2.0, ry = o.h / 2.0;
  const double dx = (px - (o.x + rx)) / rx, dy = (py - (o.y + ry)) / ry;
  return dx * dx + dy * dy <= 1.0;
}

void Advance(double& pos, double& vel, double extent, int limit) {
  pos += vel;
  const double max_pos = static_cast<double>(limit) - extent;
  if (pos < 0.0) {
    pos = -pos;
    vel = -vel;
  } else if (pos > max_pos) {
    pos = 2.0 * max_pos - pos;
    vel = -vel;
  }
  pos = std::clamp(pos, 0.0, std::max(0.0, max_pos));
}

std::string FrameName(int i, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%05d.%s", i, ext);
  return buf;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return SplitMix64(seed ^ SplitMix64(stream));
}

void SynthConfig::Validate() const {
  Require(width > 0 && height > 0 && frames >= 0 && num_objects >= 0, ErrorCode::kConfig,
          "synth dimensions, frames and object count must be non-negative");
  Require(num_classes >= 1 && num_classes <= 254, ErrorCode::kConfig,
          "synth num_classes must be in [1,254]");
  Require(num_objects < 65535, ErrorCode::kConfig, "too many objects");
  Require(min_speed >= 0 && max_speed >= min_speed, ErrorCode::kConfig, "invalid speed range");
  Require(min_size >= 1 && max_size >= min_size, ErrorCode::kConfig, "invalid object size range");
  Require(num_objects == 0 || (min_size <= width && min_size <= height), ErrorCode::kConfig,
          "objects must fit inside the frame");
  Require(!shape_kinds.empty(), ErrorCode::kConfig, "no shape kinds given");
  Require(perturb.boundary_jitter_radius >= 0, ErrorCode::kConfig, "negative jitter radius");
  Require(InUnit(perturb.label_noise_rate) && InUnit(perturb.class_swap_rate), ErrorCode::kConfig,
          "perturbation rates must be in [0,1]");
  Require(feature_dim >= 1 && feature_separation >= 0 && feature_stride >= 1, ErrorCode::kConfig,
          "invalid feature settings");
}

SynthClip generate_clip(const SynthConfig& cfg) {
  cfg.Validate();
  std::mt19937_64 rng(derive_seed(cfg.seed, kObjects));
  SynthClip clip;
  for (int k = 0; k < cfg.num_objects; ++k) {
    SynthObject o;
    o.kind = cfg.shape_kinds[std::uniform_int_distribution<std::size_t>(0, cfg.shape_kinds.size() - 1)(rng)];
    o.class_id = cfg.num_classes > 1
                     ? static_cast<ClassId>(std::uniform_int_distribution<int>(1, cfg.num_classes - 1)(rng))
                     : ClassId{0};
    o.w = std::uniform_int_distribution<int>(cfg.min_size, std::min(cfg.max_size, cfg.width))(rng);
    o.h = std::uniform_int_distribution<int>(cfg.min_size, std::min(cfg.max_size, cfg.height))(rng);
    o.x = std::uniform_real_distribution<double>(0.0, cfg.width - o.w)(rng);
    o.y = std::uniform_real_distribution<double>(0.0, cfg.height - o.h)(rng);
    std::uniform_real_distribution<double> speed(cfg.min_speed, cfg.max_speed);
    std::bernoulli_distribution sign(0.5);
    o.vx = speed(rng) * (sign(rng) ? 1.0 : -1.0);
    o.vy = speed(rng) * (sign(rng) ? 1.0 : -1.0);
    clip.objects.push_back(o);
  }
  std::vector<SynthObject> state = clip.objects;
  const std::size_t n = static_cast<std::size_t>(cfg.width) * cfg.height;
  for (int t = 0; t < cfg.frames; ++t) {
    InstanceMap inst{cfg.width, cfg.height, std::vector<std::uint16_t>(n, 0)};
    LabelMap gt(cfg.width, cfg.height, 0);
    for (std::size_t k = 0; k < state.size(); ++k) {
      const SynthObject& o = state[k];
      const int x0 = std::max(0, static_cast<int>(std::floor(o.x)));
      const int x1 = std::min(cfg.width, static_cast<int>(std::ceil(o.x + o.w)) + 1);
      const int y0 = std::max(0, static_cast<int>(std::floor(o.y)));
      const int y1 = std::min(cfg.height, static_cast<int>(std::ceil(o.y + o.h)) + 1);
      for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
          if (!Covers(o, x + 0.5, y + 0.5)) continue;
          const std::size_t i = static_cast<std::size_t>(y) * cfg.width + x;
          inst.ids[i] = static_cast<std::uint16_t>(k + 1);
          gt.labels[i] = o.class_id;
        }
      }
    }
    clip.instances.push_back(std::move(inst));
    clip.gt.push_back(std::move(gt));
    for (SynthObject& o : state) {
      Advance(o.x, o.vx, o.w, cfg.width);
      Advance(o.y, o.vy, o.h, cfg.height);
    }
  }
  return clip;
}

std::vector<LabelMap> perturb_prediction(const SynthClip& clip, const PerturbConfig& perturb,
                                         int num_classes, std::uint64_t seed) {
  Require(perturb.boundary_jitter_radius >= 0 && InUnit(perturb.label_noise_rate) &&
              InUnit(perturb.class_swap_rate),
          ErrorCode::kConfig, "invalid perturbation settings");
  Require(num_classes >= 1, ErrorCode::kConfig, "num_classes must be positive");
  std::mt19937_64 rng(derive_seed(seed, kPerturb));
  const int radius = perturb.boundary_jitter_radius;
  std::vector<LabelMap> out;
  out.reserve(clip.gt.size());
  for (std::size_t t = 0; t < clip.gt.size(); ++t) {
    const LabelMap& gt = clip.gt[t];
    const InstanceMap& inst = clip.instances[t];
    const int w = gt.width, h = gt.height;
    LabelMap pred(w, h, 0, gt.ignore_label);
    std::vector<std::uint8_t> region(gt.labels.size());
    for (std::size_t k = 0; k < clip.objects.size(); ++k) {
      const auto id = static_cast<std::uint16_t>(k + 1);
      const ClassId cls = clip.objects[k].class_id;
      // Draws happen for every object so the stream does not depend on visibility.
      const int r = std::uniform_int_distribution<int>(-radius, radius)(rng);
      ClassId paint = cls;
      if (std::bernoulli_distribution(perturb.class_swap_rate)(rng) && num_classes > 1) {
        const int other = std::uniform_int_distribution<int>(0, num_classes - 2)(rng);
        paint = static_cast<ClassId>(other >= cls ? other + 1 : other);
      }
      int x0 = w, x1 = -1, y0 = h, y1 = -1;
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const std::size_t i = static_cast<std::size_t>(y) * w + x;
          region[i] = inst.ids[i] == id;
          if (region[i]) {
            x0 = std::min(x0, x);
            x1 = std::max(x1, x);
            y0 = std::min(y0, y);
            y1 = std::max(y1, y);
          }
        }
      }
      if (x1 < 0) continue;
      const int pad = std::abs(r);
      const int bx0 = std::max(0, x0 - pad), bx1 = std::min(w, x1 + pad + 1);
      const int by0 = std::max(0, y0 - pad), by1 = std::min(h, y1 + pad + 1);
      if (r > 0) {
        SquareFilter(region, w, h, r, true, bx0, bx1, by0, by1);
      } else if (r < 0) {
        // Erode against the ground-truth class region so same-class
        // neighbors do not open gaps away from class boundaries.
        std::vector<std::uint8_t> same(gt.labels.size(), 0);
        for (int y = by0; y < by1; ++y) {
          for (int x = bx0; x < bx1; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            same[i] = gt.labels[i] == cls;
          }
        }
        // Pixels just outside the padded box count as matching.
        for (int y = 0; y < h; ++y) {
          for (int x = 0; x < w; ++x) {
            if (y >= by0 && y < by1 && x >= bx0 && x < bx1) continue;
            same[static_cast<std::size_t>(y) * w + x] = 1;
          }
        }
        SquareFilter(same, w, h, pad, false, bx0, bx1, by0, by1);
        for (int y = by0; y < by1; ++y) {
          for (int x = bx0; x < bx1; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            region[i] = region[i] && same[i];
          }
        }
      }
      for (int y = by0; y < by1; ++y) {
        for (int x = bx0; x < bx1; ++x) {
          const std::size_t i = static_cast<std::size_t>(y) * w + x;
          if (region[i]) pred.labels[i] = paint;
        }
      }
      std::fill(region.begin(), region.end(), std::uint8_t{0});
    }
    if (perturb.label_noise_rate > 0.0) {
      std::bernoulli_distribution flip(perturb.label_noise_rate);
      std::uniform_int_distribution<int> any_class(0, num_classes - 1);
      for (ClassId& c : pred.labels) {
        if (flip(rng)) c = static_cast<ClassId>(any_class(rng));
      }
    }
    out.push_back(std::move(pred));
  }
  return out;
}

Components connected_components(const InstanceMap& map) {
  const int w = map.width, h = map.height;
  const std::size_t n = static_cast<std::size_t>(w) * h;
  std::vector<std::uint32_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0u);
  auto find = [&](std::uint32_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  auto unite = [&](std::uint32_t a, std::uint32_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (a < b) std::swap(a, b);
    parent[a] = b;
  };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto i = static_cast<std::uint32_t>(static_cast<std::size_t>(y) * w + x);
      const std::uint16_t id = map.ids[i];
      if (id == 0) continue;
      if (x > 0 && map.ids[i - 1] == id) unite(i, i - 1);
      if (y > 0 && map.ids[i - w] == id) unite(i, i - static_cast<std::uint32_t>(w));
    }
  }
  Components comps;
  comps.labels.assign(n, 0);
  comps.instance_of.push_back(0);
  std::vector<std::uint32_t> root_label(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (map.ids[i] == 0) continue;
    const std::uint32_t root = find(static_cast<std::uint32_t>(i));
    if (root_label[root] == 0) {
      root_label[root] = static_cast<std::uint32_t>(comps.instance_of.size());
      comps.instance_of.push_back(map.ids[i]);
    }
    comps.labels[i] = root_label[root];
  }
  return comps;
}

OracleMasklets oracle_masklets(std::span<const InstanceMap> instances, const ScoreModel& scores,
                               std::uint64_t seed) {
  std::mt19937_64 rng(derive_seed(seed, kScores));
  OracleMasklets out;
  std::map<int, MaskletTrack> tracks;
  MaskletId next_id = 0;
  for (std::size_t t = 0; t < instances.size(); ++t) {
    const InstanceMap& map = instances[t];
    const Components comps = connected_components(map);
    // Runs per instance, built from its components in raster order.
    std::map<std::uint16_t, std::vector<Run>> runs;
    for (std::size_t i = 0; i < comps.labels.size(); ++i) {
      const std::uint32_t c = comps.labels[i];
      if (c == 0) continue;
      std::vector<Run>& r = runs[comps.instance_of[c]];
      if (!r.empty() && r.back().begin + r.back().length == i) {
        ++r.back().length;
      } else {
        r.push_back({i, 1});
      }
    }
    MaskletSet set;
    set.frame_index = static_cast<int>(t);
    for (auto& [instance, r] : runs) {
      const double pred_iou = SampleBeta(scores.pred_iou_alpha, scores.pred_iou_beta, rng);
      const double stability = SampleBeta(scores.stability_alpha, scores.stability_beta, rng);
      const MaskletId id = next_id++;
      set.masklets.push_back(Masklet::Make(BinaryMask::FromRuns(map.width, map.height, r),
                                           static_cast<int>(t), id, pred_iou, stability));
      out.instance_of[id] = instance;
      MaskletTrack& track = tracks[instance];
      track.track_id = instance;
      track.members.push_back({static_cast<int>(t), id});
    }
    out.frames.push_back(std::move(set));
  }
  for (auto& [id, track] : tracks) out.tracks.push_back(std::move(track));
  return out;
}

std::vector<std::vector<double>> class_centers(int num_classes, int dim, double separation,
                                               std::uint64_t seed) {
  Require(num_classes >= 1 && dim >= 1 && separation >= 0, ErrorCode::kConfig,
          "invalid class-center settings");
  std::mt19937_64 rng(derive_seed(seed, kFeatures));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<double>> dirs(static_cast<std::size_t>(num_classes),
                                        std::vector<double>(static_cast<std::size_t>(dim)));
  for (auto& d : dirs) {
    double norm = 0.0;
    do {
      norm = 0.0;
      for (double& v : d) {
        v = normal(rng);
        norm += v * v;
      }
    } while (norm == 0.0);
    norm = std::sqrt(norm);
    for (double& v : d) v /= norm;
  }
  double min_dist = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < dirs.size(); ++a) {
    for (std::size_t b = a + 1; b < dirs.size(); ++b) {
      double d2 = 0.0;
      for (int k = 0; k < dim; ++k) {
        const double diff = dirs[a][k] - dirs[b][k];
        d2 += diff * diff;
      }
      min_dist = std::min(min_dist, std::sqrt(d2));
    }
  }
  Require(min_dist > 0.0, ErrorCode::kData, "degenerate class directions");
  const double scale = std::isinf(min_dist) ? separation : separation / min_dist;
  for (auto& d : dirs) {
    for (double& v : d) v *= scale;
  }
  return dirs;
}

FeatureMap generate_features(const LabelMap& labels,
                             const std::vector<std::vector<double>>& centers, int stride,
                             std::uint64_t seed) {
  Require(stride >= 1 && labels.width % stride == 0 && labels.height % stride == 0,
          ErrorCode::kConfig,
          "frame " + std::to_string(labels.width) + "x" + std::to_string(labels.height) +
              " is not a multiple of feature stride " + std::to_string(stride));
  Require(!centers.empty(), ErrorCode::kConfig, "no class centers");
  const int dim = static_cast<int>(centers.front().size());
  FeatureMap f;
  f.width = labels.width / stride;
  f.height = labels.height / stride;
  f.dim = dim;
  f.values.resize(static_cast<std::size_t>(f.width) * f.height * dim);
  std::mt19937_64 rng(derive_seed(seed, kFeatures));
  std::normal_distribution<double> noise(0.0, 1.0);
  const int off = stride / 2;
  for (int cy = 0; cy < f.height; ++cy) {
    for (int cx = 0; cx < f.width; ++cx) {
      const ClassId c = labels.at(cx * stride + off, cy * stride + off);
      const std::vector<double>* mu = c < centers.size() ? &centers[c] : nullptr;
      auto cell = f.at(cx, cy);
      for (int k = 0; k < dim; ++k) {
        cell[k] = static_cast<float>((mu ? (*mu)[k] : 0.0) + noise(rng));
      }
    }
  }
  return f;
}

std::vector<LabeledVector> labeled_vectors(const MaskletSet& masklets, const FeatureMap& features,
                                           const LabelMap& gt) {
  std::vector<LabeledVector> out;
  for (const Masklet& m : masklets.masklets) {
    const Vote vote = predominant_class(m.mask, gt);
    if (vote.class_id == gt.ignore_label) continue;
    out.push_back({pool_features(m.mask, features), vote.class_id});
  }
  return out;
}

Dataset write_synth_dataset(const SynthConfig& cfg, const SynthWriteOptions& opts,
                            const std::filesystem::path& out_dir) {
  cfg.Validate();
  Require(opts.clips >= 1, ErrorCode::kConfig, "need at least one clip");
  if (opts.write_features) {
    Require(cfg.width % cfg.feature_stride == 0 && cfg.height % cfg.feature_stride == 0,
            ErrorCode::kConfig, "frame size must be a multiple of the feature stride");
  }
  const fs::path root = fs::absolute(out_dir).lexically_normal();
  fs::create_directories(root);
  std::vector<std::vector<double>> centers;
  if (opts.write_features) {
    centers = class_centers(cfg.num_classes, cfg.feature_dim, cfg.feature_separation, cfg.feature_seed);
  }
  Dataset ds;
  for (int c = 0; c < opts.clips; ++c) {
    SynthConfig clip_cfg = cfg;
    clip_cfg.seed = derive_seed(cfg.seed, kClip + static_cast<std::uint64_t>(c) * 16);
    const SynthClip clip = generate_clip(clip_cfg);
    const std::vector<LabelMap> pred =
        perturb_prediction(clip, cfg.perturb, cfg.num_classes, clip_cfg.seed);
    const OracleMasklets oracle = oracle_masklets(clip.instances, opts.scores, clip_cfg.seed);

    char name[32];
    std::snprintf(name, sizeof(name), "clip_%04d", c);
    const fs::path dir = root / name;
    ClipManifest m;
    m.clip_id = name;
    m.width = cfg.width;
    m.height = cfg.height;
    m.num_classes = cfg.num_classes;
    m.ignore_label = kDefaultIgnoreLabel;
    m.masklet_path = dir / "masklets.jsonl";
    write_masklets(oracle.frames, *m.masklet_path);
    for (int t = 0; t < cfg.frames; ++t) {
      FrameEntry e;
      e.frame_index = t;
      e.gt_path = dir / "gt" / FrameName(t, "png");
      e.pred_path = dir / "pred" / FrameName(t, "png");
      write_labelmap(clip.gt[t], *e.gt_path);
      write_labelmap(pred[t], *e.pred_path);
      if (opts.write_features) {
        e.feature_path = dir / "features" / FrameName(t, "mfea");
        write_featuremap(generate_features(clip.gt[t], centers, cfg.feature_stride,
                                           derive_seed(clip_cfg.seed, static_cast<std::uint64_t>(t) + 1000)),
                         *e.feature_path);
      }
      m.frames.push_back(std::move(e));
    }
    ds.clips.push_back(std::move(m));
  }
  write_manifest(ds, root / "manifest.json");
  return ds;
}

}  // namespace maskfuse
