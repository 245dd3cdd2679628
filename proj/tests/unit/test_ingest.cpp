#include <gtest/gtest.h>

#include <png.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <random>

#include "maskfuse/error.hpp"
#include "maskfuse/ingest.hpp"
#include "maskfuse/synth.hpp"
#include "test_util.hpp"

namespace mf = maskfuse;
namespace fs = std::filesystem;

namespace {

// Minimal libpng writer for fixtures the library itself refuses to produce.
void WriteRawPng(const fs::path& path, int w, int h, int color_type, int depth,
                 const std::vector<std::uint8_t>& rows) {
  FILE* fp = std::fopen(path.c_str(), "wb");
  ASSERT_NE(fp, nullptr);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    FAIL() << "libpng error";
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, w, h, depth, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  if (color_type == PNG_COLOR_TYPE_PALETTE) {
    std::vector<png_color> pal(256);
    for (int i = 0; i < 256; ++i) pal[i] = {static_cast<png_byte>(i), 0, 0};
    png_set_PLTE(png, info, pal.data(), 256);
  }
  png_write_info(png, info);
  const std::size_t stride = rows.size() / h;
  for (int y = 0; y < h; ++y) {
    png_write_row(png, const_cast<png_bytep>(rows.data() + y * stride));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

std::vector<std::uint8_t> Bytes(const fs::path& p) { return mf::read_file_bytes(p); }

void WriteText(const fs::path& p, const std::string& s) {
  std::ofstream(p, std::ios::binary) << s;
}

mf::ErrorCode CodeOf(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const mf::Error& e) {
    return e.code();
  }
  return mf::ErrorCode::kInternal;
}

std::string MessageOf(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(LabelMapPng, IdentityTranscode) {
  mft::TempDir dir("png");
  const fs::path p = dir.path() / "a.png";
  WriteRawPng(p, 2, 2, PNG_COLOR_TYPE_GRAY, 8, {0, 1, 2, 255});
  const mf::LabelMap m = mf::read_labelmap(p);
  EXPECT_EQ(m.width, 2);
  EXPECT_EQ(m.height, 2);
  EXPECT_EQ(m.labels, (std::vector<mf::ClassId>{0, 1, 2, 255}));
}

TEST(LabelMapPng, PaletteIndicesVerbatim) {
  mft::TempDir dir("png");
  const fs::path p = dir.path() / "pal.png";
  WriteRawPng(p, 3, 1, PNG_COLOR_TYPE_PALETTE, 8, {7, 0, 200});
  EXPECT_EQ(mf::read_labelmap(p).labels, (std::vector<mf::ClassId>{7, 0, 200}));
}

TEST(LabelMapPng, RgbRejected) {
  mft::TempDir dir("png");
  const fs::path p = dir.path() / "rgb.png";
  WriteRawPng(p, 1, 1, PNG_COLOR_TYPE_RGB, 8, {1, 2, 3});
  const std::string msg = MessageOf([&] { mf::read_labelmap(p); });
  EXPECT_NE(msg.find("expected single-channel"), std::string::npos) << msg;
  EXPECT_EQ(CodeOf([&] { mf::read_labelmap(p); }), mf::ErrorCode::kFormat);
}

TEST(LabelMapPng, SixteenBitRejected) {
  mft::TempDir dir("png");
  const fs::path p = dir.path() / "g16.png";
  WriteRawPng(p, 1, 1, PNG_COLOR_TYPE_GRAY, 16, {0, 5});
  const std::string msg = MessageOf([&] { mf::read_labelmap(p); });
  EXPECT_NE(msg.find("8-bit"), std::string::npos) << msg;
}

TEST(LabelMapPng, LabelAbove255IsRangeError) {
  mft::TempDir dir("png");
  mf::LabelMap m(1, 1, 300, 255);
  EXPECT_EQ(CodeOf([&] { mf::write_labelmap(m, dir.path() / "x.png"); }), mf::ErrorCode::kRange);
}

TEST(LabelMapPng, FuzzRoundTripFixedPoint) {
  mft::TempDir dir("png");
  std::mt19937_64 rng(21);
  for (int it = 0; it < 300; ++it) {
    const int w = std::uniform_int_distribution<int>(1, 40)(rng);
    const int h = std::uniform_int_distribution<int>(1, 40)(rng);
    const mf::LabelMap m = (it % 2) ? mft::RandomLabels(rng, w, h, 256) : mft::RandomRegions(rng, w, h, 20);
    const fs::path a = dir.path() / "a.png", b = dir.path() / "b.png";
    mf::write_labelmap(m, a);
    const mf::LabelMap back = mf::read_labelmap(a);
    ASSERT_EQ(back.labels, m.labels);
    mf::write_labelmap(back, b);
    ASSERT_EQ(Bytes(a), Bytes(b));
  }
}

TEST(Masklets, RecordRoundTrip) {
  const auto mask = mft::Encode({0, 1, 1, 0, 1, 0}, 3, 2);
  const mf::Masklet m = mf::Masklet::Make(mask, 4, 17, 0.75, 0.5);
  const std::string line = mf::format_masklet_record(m);
  EXPECT_EQ(mf::parse_masklet_record(line), m);
}

TEST(Masklets, PredIouOutOfRangeRejected) {
  EXPECT_EQ(CodeOf([] {
              mf::parse_masklet_record(
                  R"({"frame_index":0,"masklet_id":1,"pred_iou":1.2,"stability":0.9,"width":2,"height":2,"counts":[1,2,1]})");
            }),
            mf::ErrorCode::kValidation);
}

TEST(Masklets, BadCountsRejected) {
  EXPECT_EQ(CodeOf([] {
              mf::parse_masklet_record(
                  R"({"frame_index":0,"masklet_id":1,"pred_iou":0.9,"stability":0.9,"width":2,"height":2,"counts":[1,2]})");
            }),
            mf::ErrorCode::kFormat);
}

TEST(Masklets, ZeroAreaRejected) {
  EXPECT_EQ(CodeOf([] {
              mf::parse_masklet_record(
                  R"({"frame_index":0,"masklet_id":1,"pred_iou":0.9,"stability":0.9,"width":2,"height":2,"counts":[4]})");
            }),
            mf::ErrorCode::kValidation);
}

TEST(Masklets, DimensionMismatchWithManifestRejected) {
  mft::TempDir dir("jsonl");
  const fs::path p = dir.path() / "m.jsonl";
  WriteText(p, R"({"frame_index":0,"masklet_id":1,"pred_iou":0.9,"stability":0.9,"width":2,"height":2,"counts":[1,2,1]})"
               "\n");
  EXPECT_NO_THROW(mf::read_masklets(p, {2, 2, 1}));
  const std::string msg = MessageOf([&] { mf::read_masklets(p, {3, 2, 1}); });
  EXPECT_NE(msg.find("m.jsonl:1"), std::string::npos) << msg;
}

TEST(Masklets, DuplicateIdRejected) {
  mft::TempDir dir("jsonl");
  const fs::path p = dir.path() / "m.jsonl";
  const std::string rec = R"({"frame_index":0,"masklet_id":1,"pred_iou":0.9,"stability":0.9,"width":2,"height":2,"counts":[1,2,1]})";
  WriteText(p, rec + "\n" + rec + "\n");
  EXPECT_EQ(CodeOf([&] { mf::read_masklets(p); }), mf::ErrorCode::kValidation);
}

TEST(Masklets, SynthFixtureCountAndArea) {
  mft::TempDir dir("jsonl");
  mf::SynthConfig cfg;
  cfg.seed = 4;
  cfg.frames = 200;
  cfg.num_objects = 5;
  const mf::SynthClip clip = mf::generate_clip(cfg);
  const mf::OracleMasklets oracle = mf::oracle_masklets(clip.instances, {}, 4);
  std::size_t expected_count = 0, expected_area = 0;
  for (const auto& inst : clip.instances) {
    std::set<std::uint16_t> ids;
    for (auto v : inst.ids) {
      if (v) {
        ids.insert(v);
        ++expected_area;
      }
    }
    expected_count += ids.size();
  }
  ASSERT_GE(expected_count, 900u);
  const fs::path p = dir.path() / "fixture.jsonl";
  mf::write_masklets(oracle.frames, p);
  const auto sets = mf::read_masklets(p, {cfg.width, cfg.height, cfg.frames});
  std::size_t count = 0, area = 0;
  for (const auto& s : sets) {
    for (const auto& m : s.masklets) {
      ++count;
      area += m.area;
    }
  }
  EXPECT_EQ(count, expected_count);
  EXPECT_EQ(area, expected_area);
}

TEST(Masklets, StreamRoundTripBytes) {
  mft::TempDir dir("jsonl");
  std::mt19937_64 rng(3);
  std::vector<mf::MaskletSet> sets;
  mf::MaskletId id = 0;
  for (int f = 0; f < 20; ++f) {
    mf::MaskletSet s{f, {}};
    for (int k = 0; k < 3; ++k) {
      auto g = mft::RandomBlobGrid(rng, 9, 7);
      g[0] = 1;
      s.masklets.push_back(mf::Masklet::Make(mft::Encode(g, 9, 7), f, id++,
                                             std::uniform_real_distribution<double>(0, 1)(rng),
                                             std::uniform_real_distribution<double>(0, 1)(rng)));
    }
    sets.push_back(s);
  }
  const fs::path a = dir.path() / "a.jsonl", b = dir.path() / "b.jsonl";
  mf::write_masklets(sets, a);
  const auto back = mf::read_masklets(a);
  EXPECT_EQ(back, sets);
  mf::write_masklets(back, b);
  EXPECT_EQ(Bytes(a), Bytes(b));
}

TEST(Masklets, ByFrameFillsGaps) {
  mf::MaskletSet s{2, {mf::Masklet::Make(mft::Encode({1}, 1, 1), 2, 0, 1, 1)}};
  const auto dense = mf::masklets_by_frame({s}, 4);
  ASSERT_EQ(dense.size(), 4u);
  EXPECT_TRUE(dense[0].masklets.empty());
  EXPECT_EQ(dense[2].masklets.size(), 1u);
  EXPECT_EQ(dense[3].frame_index, 3);
}

TEST(FeatureMapFile, OneByOneByFour) {
  mft::TempDir dir("mfea");
  std::vector<std::uint8_t> bytes{'M', 'F', 'E', 'A'};
  for (std::uint32_t v : {1u, 1u, 4u}) mf::append_u32_le(bytes, v);
  for (float v : {1.f, 2.f, 3.f, 4.f}) mf::append_f32_le(bytes, v);
  const fs::path p = dir.path() / "f.mfea";
  mf::write_file_bytes(p, bytes);
  const mf::FeatureMap f = mf::read_featuremap(p);
  EXPECT_EQ(f.dim, 4);
  EXPECT_EQ(f.values, (std::vector<float>{1, 2, 3, 4}));
}

TEST(FeatureMapFile, TruncationReported) {
  mft::TempDir dir("mfea");
  std::vector<std::uint8_t> bytes{'M', 'F', 'E', 'A'};
  for (std::uint32_t v : {2u, 2u, 8u}) mf::append_u32_le(bytes, v);
  for (int i = 0; i < 31; ++i) mf::append_f32_le(bytes, 0.5f);
  const fs::path p = dir.path() / "t.mfea";
  mf::write_file_bytes(p, bytes);
  EXPECT_EQ(CodeOf([&] { mf::read_featuremap(p); }), mf::ErrorCode::kFormat);
  const std::string msg = MessageOf([&] { mf::read_featuremap(p); });
  EXPECT_NE(msg.find("truncated"), std::string::npos) << msg;
}

TEST(FeatureMapFile, NonFiniteIsDataError) {
  mft::TempDir dir("mfea");
  std::vector<std::uint8_t> bytes{'M', 'F', 'E', 'A'};
  for (std::uint32_t v : {1u, 1u, 2u}) mf::append_u32_le(bytes, v);
  mf::append_f32_le(bytes, 1.f);
  mf::append_f32_le(bytes, std::numeric_limits<float>::quiet_NaN());
  const fs::path p = dir.path() / "n.mfea";
  mf::write_file_bytes(p, bytes);
  EXPECT_EQ(CodeOf([&] { mf::read_featuremap(p); }), mf::ErrorCode::kData);
}

TEST(FeatureMapFile, BadMagic) {
  mft::TempDir dir("mfea");
  std::vector<std::uint8_t> bytes{'M', 'F', 'E', 'X'};
  for (std::uint32_t v : {1u, 1u, 1u}) mf::append_u32_le(bytes, v);
  mf::append_f32_le(bytes, 1.f);
  const fs::path p = dir.path() / "m.mfea";
  mf::write_file_bytes(p, bytes);
  EXPECT_EQ(CodeOf([&] { mf::read_featuremap(p); }), mf::ErrorCode::kFormat);
}

TEST(FeatureMapFile, RandomRoundTrip) {
  mft::TempDir dir("mfea");
  std::mt19937_64 rng(8);
  std::normal_distribution<float> nd(0.f, 10.f);
  for (int it = 0; it < 100; ++it) {
    mf::FeatureMap f;
    f.width = std::uniform_int_distribution<int>(1, 9)(rng);
    f.height = std::uniform_int_distribution<int>(1, 9)(rng);
    f.dim = std::uniform_int_distribution<int>(1, 12)(rng);
    f.values.resize(static_cast<std::size_t>(f.width) * f.height * f.dim);
    for (float& v : f.values) v = nd(rng);
    const fs::path a = dir.path() / "a.mfea", b = dir.path() / "b.mfea";
    mf::write_featuremap(f, a);
    const mf::FeatureMap back = mf::read_featuremap(a);
    ASSERT_EQ(back, f);
    mf::write_featuremap(back, b);
    ASSERT_EQ(Bytes(a), Bytes(b));
  }
}

TEST(Manifest, SingleClipFormResolvesRelativePaths) {
  mft::TempDir dir("manifest");
  WriteText(dir.path() / "clip.json", R"({
    "clip_id": "c0", "width": 4, "height": 2, "num_classes": 3, "ignore_label": 255,
    "frames": [{"frame_index": 0, "gt_path": "gt/0.png", "pred_path": "pred/0.png"}]
  })");
  const mf::Dataset ds = mf::read_manifest(dir.path() / "clip.json");
  ASSERT_EQ(ds.clips.size(), 1u);
  EXPECT_EQ(ds.clips[0].clip_id, "c0");
  EXPECT_EQ(*ds.clips[0].frames[0].gt_path, fs::absolute(dir.path() / "gt/0.png").lexically_normal());
  EXPECT_FALSE(ds.clips[0].frames[0].feature_path.has_value());
}

TEST(Manifest, RoundTrip) {
  mft::TempDir dir("manifest");
  mf::Dataset ds;
  for (int c = 0; c < 3; ++c) {
    mf::ClipManifest m;
    m.clip_id = "clip" + std::to_string(c);
    m.width = 8;
    m.height = 6;
    m.num_classes = 10;
    m.ignore_label = 255;
    m.masklet_path = dir.path() / m.clip_id / "masklets.jsonl";
    for (int f = 0; f < 4; ++f) {
      mf::FrameEntry e;
      e.frame_index = f;
      e.gt_path = dir.path() / m.clip_id / ("gt" + std::to_string(f) + ".png");
      if (f % 2) e.feature_path = dir.path() / m.clip_id / ("f" + std::to_string(f) + ".mfea");
      m.frames.push_back(e);
    }
    ds.clips.push_back(m);
  }
  mf::write_manifest(ds, dir.path() / "manifest.json");
  const auto first = Bytes(dir.path() / "manifest.json");
  const mf::Dataset back = mf::read_manifest(dir.path() / "manifest.json");
  EXPECT_EQ(back, ds);
  mf::write_manifest(back, dir.path() / "manifest.json");
  EXPECT_EQ(Bytes(dir.path() / "manifest.json"), first);
}

TEST(Manifest, FrameIndexMustStartAtZeroAndIncrease) {
  mf::ClipManifest m;
  m.clip_id = "c";
  m.width = 2;
  m.height = 2;
  m.num_classes = 3;
  m.frames = {{1, {}, {}, {}, {}}};
  EXPECT_EQ(CodeOf([&] { m.Validate(); }), mf::ErrorCode::kValidation);
  m.frames = {{0, {}, {}, {}, {}}, {0, {}, {}, {}, {}}};
  EXPECT_EQ(CodeOf([&] { m.Validate(); }), mf::ErrorCode::kValidation);
}

TEST(Manifest, TooManyClassesForIgnore255) {
  mf::ClipManifest m;
  m.clip_id = "c";
  m.width = 2;
  m.height = 2;
  m.num_classes = 255;
  m.ignore_label = 255;
  EXPECT_EQ(CodeOf([&] { m.Validate(); }), mf::ErrorCode::kValidation);
}
