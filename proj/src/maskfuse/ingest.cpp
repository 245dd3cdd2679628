#include "maskfuse/ingest.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include <json.hpp>

#include "maskfuse/error.hpp"

namespace maskfuse {

using nlohmann::json;

namespace {

std::optional<fs::path> OptionalPath(const json& j, const char* key, const fs::path& base) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  fs::path p = j.at(key).get<std::string>();
  if (p.is_relative()) p = base / p;
  return p.lexically_normal();
}

std::string RelativeTo(const fs::path& p, const fs::path& base) {
  if (base.empty()) return p.generic_string();
  const fs::path rel = p.lexically_relative(base);
  if (rel.empty() || *rel.begin() == "..") return p.generic_string();
  return rel.generic_string();
}

ClipManifest ParseClip(const json& j, const fs::path& base) {
  ClipManifest clip;
  try {
    clip.clip_id = j.at("clip_id").get<std::string>();
    clip.width = j.at("width").get<int>();
    clip.height = j.at("height").get<int>();
    clip.num_classes = j.at("num_classes").get<int>();
    const int ignore = j.value("ignore_label", static_cast<int>(kDefaultIgnoreLabel));
    Require(ignore >= 0 && ignore <= 255, ErrorCode::kValidation,
            "ignore_label " + std::to_string(ignore) + " outside [0,255]");
    clip.ignore_label = static_cast<ClassId>(ignore);
    clip.masklet_path = OptionalPath(j, "masklet_path", base);
    for (const json& f : j.at("frames")) {
      FrameEntry e;
      e.frame_index = f.at("frame_index").get<int>();
      e.gt_path = OptionalPath(f, "gt_path", base);
      e.pred_path = OptionalPath(f, "pred_path", base);
      e.masklet_path = OptionalPath(f, "masklet_path", base);
      e.feature_path = OptionalPath(f, "feature_path", base);
      clip.frames.push_back(std::move(e));
    }
  } catch (const json::exception& ex) {
    Fail(ErrorCode::kFormat, std::string("manifest: ") + ex.what());
  }
  clip.Validate();
  return clip;
}

json ClipToJson(const ClipManifest& clip, const fs::path& base) {
  json j;
  j["clip_id"] = clip.clip_id;
  j["width"] = clip.width;
  j["height"] = clip.height;
  j["num_classes"] = clip.num_classes;
  j["ignore_label"] = clip.ignore_label;
  if (clip.masklet_path) j["masklet_path"] = RelativeTo(*clip.masklet_path, base);
  json frames = json::array();
  for (const FrameEntry& e : clip.frames) {
    json f;
    f["frame_index"] = e.frame_index;
    if (e.gt_path) f["gt_path"] = RelativeTo(*e.gt_path, base);
    if (e.pred_path) f["pred_path"] = RelativeTo(*e.pred_path, base);
    if (e.masklet_path) f["masklet_path"] = RelativeTo(*e.masklet_path, base);
    if (e.feature_path) f["feature_path"] = RelativeTo(*e.feature_path, base);
    frames.push_back(std::move(f));
  }
  j["frames"] = std::move(frames);
  return j;
}

using FilePtr = std::unique_ptr<std::FILE, int (*)(std::FILE*)>;

FilePtr OpenFile(const fs::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode), &std::fclose);
  Require(f != nullptr, ErrorCode::kIo, "cannot open " + path.string());
  return f;
}

struct PngErrorState {
  char message[256] = {0};
};

void PngError(png_structp png, png_const_charp msg) {
  auto* state = static_cast<PngErrorState*>(png_get_error_ptr(png));
  std::snprintf(state->message, sizeof(state->message), "%s", msg);
  longjmp(png_jmpbuf(png), 1);
}

void PngWarning(png_structp, png_const_charp) {}

// Everything touched between setjmp and a possible longjmp is plain data
// owned by the caller.
struct PngReadResult {
  png_uint_32 width = 0;
  png_uint_32 height = 0;
  int bit_depth = 0;
  int color_type = 0;
  bool header_only_failure = false;
};

// Reads header, then rows into `pixels` if the format is acceptable.
// Returns false with state.message set on libpng failure.
bool PngReadRaw(std::FILE* fp, PngReadResult& out, std::vector<png_byte>& pixels,
                std::vector<png_bytep>& rows, PngErrorState& state) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &state, PngError, PngWarning);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    return false;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  out.width = png_get_image_width(png, info);
  out.height = png_get_image_height(png, info);
  out.bit_depth = png_get_bit_depth(png, info);
  out.color_type = png_get_color_type(png, info);
  const bool single_channel =
      out.color_type == PNG_COLOR_TYPE_GRAY || out.color_type == PNG_COLOR_TYPE_PALETTE;
  if (!single_channel || out.bit_depth != 8) {
    out.header_only_failure = true;
    png_destroy_read_struct(&png, &info, nullptr);
    return true;
  }
  png_set_interlace_handling(png);
  png_read_update_info(png, info);
  pixels.resize(static_cast<std::size_t>(out.width) * out.height);
  rows.resize(out.height);
  for (png_uint_32 y = 0; y < out.height; ++y) rows[y] = pixels.data() + std::size_t{y} * out.width;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return true;
}

bool PngWriteRaw(std::FILE* fp, png_uint_32 width, png_uint_32 height,
                 std::vector<png_bytep>& rows, PngErrorState& state) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &state, PngError, PngWarning);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    return false;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return false;
  }
  png_init_io(png, fp);
  png_set_compression_level(png, 3);
  png_set_IHDR(png, info, width, height, 8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

std::string ColorTypeName(int color_type) {
  switch (color_type) {
    case PNG_COLOR_TYPE_GRAY: return "grayscale";
    case PNG_COLOR_TYPE_PALETTE: return "palette";
    case PNG_COLOR_TYPE_RGB: return "RGB";
    case PNG_COLOR_TYPE_RGB_ALPHA: return "RGBA";
    case PNG_COLOR_TYPE_GRAY_ALPHA: return "gray+alpha";
  }
  return "unknown";
}

}  // namespace

void ClipManifest::Validate() const {
  Require(width > 0 && height > 0, ErrorCode::kValidation,
          "clip " + clip_id + ": dimensions must be positive");
  Require(num_classes > 0 && num_classes <= 256, ErrorCode::kValidation,
          "clip " + clip_id + ": num_classes must be in [1,256]");
  if (ignore_label == 255) {
    Require(num_classes <= 254, ErrorCode::kValidation,
            "clip " + clip_id + ": num_classes must be <= 254 when ignore_label is 255");
  }
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (i == 0) {
      Require(frames[0].frame_index == 0, ErrorCode::kValidation,
              "clip " + clip_id + ": frame_index must start at 0");
    } else {
      Require(frames[i].frame_index > frames[i - 1].frame_index, ErrorCode::kValidation,
              "clip " + clip_id + ": frame_index must be strictly increasing (entry " +
                  std::to_string(i) + ")");
    }
  }
}

std::vector<fs::path> ClipManifest::MaskletFiles() const {
  std::vector<fs::path> files;
  auto add = [&](const fs::path& p) {
    if (std::find(files.begin(), files.end(), p) == files.end()) files.push_back(p);
  };
  if (masklet_path) add(*masklet_path);
  for (const FrameEntry& e : frames) {
    if (e.masklet_path) add(*e.masklet_path);
  }
  return files;
}

Dataset read_manifest(const fs::path& path) {
  std::ifstream in(path);
  Require(in.good(), ErrorCode::kIo, "cannot open manifest " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& ex) {
    Fail(ErrorCode::kFormat, "manifest " + path.string() + ": " + ex.what());
  }
  const fs::path base = fs::absolute(path).parent_path();
  Dataset ds;
  if (j.is_object() && j.contains("clips")) {
    for (const json& c : j.at("clips")) ds.clips.push_back(ParseClip(c, base));
  } else {
    ds.clips.push_back(ParseClip(j, base));
  }
  return ds;
}

void write_manifest(const Dataset& dataset, const fs::path& path) {
  const fs::path base = fs::absolute(path).parent_path().lexically_normal();
  json clips = json::array();
  for (const ClipManifest& c : dataset.clips) clips.push_back(ClipToJson(c, base));
  json j;
  j["clips"] = std::move(clips);
  if (!base.empty()) fs::create_directories(base);
  std::ofstream out(path);
  Require(out.good(), ErrorCode::kIo, "cannot write manifest " + path.string());
  out << j.dump(2) << '\n';
}

LabelMap read_labelmap(const fs::path& path, ClassId ignore_label) {
  FilePtr fp = OpenFile(path, "rb");
  PngReadResult header;
  std::vector<png_byte> pixels;
  std::vector<png_bytep> rows;
  PngErrorState state;
  if (!PngReadRaw(fp.get(), header, pixels, rows, state)) {
    Fail(ErrorCode::kFormat, path.string() + ": png decode failed: " + state.message);
  }
  if (header.header_only_failure) {
    if (header.color_type != PNG_COLOR_TYPE_GRAY && header.color_type != PNG_COLOR_TYPE_PALETTE) {
      Fail(ErrorCode::kFormat, path.string() + ": expected single-channel PNG, got " +
                                   ColorTypeName(header.color_type));
    }
    Fail(ErrorCode::kFormat, path.string() + ": expected 8-bit depth, got " +
                                 std::to_string(header.bit_depth) + "-bit");
  }
  LabelMap map;
  map.width = static_cast<int>(header.width);
  map.height = static_cast<int>(header.height);
  map.ignore_label = ignore_label;
  map.labels.assign(pixels.begin(), pixels.end());
  return map;
}

void write_labelmap(const LabelMap& map, const fs::path& path) {
  Require(map.labels.size() == static_cast<std::size_t>(map.width) * map.height,
          ErrorCode::kDimension, "label map size does not match its dimensions");
  std::vector<png_byte> pixels(map.labels.size());
  for (std::size_t i = 0; i < map.labels.size(); ++i) {
    if (map.labels[i] > 255) {
      Fail(ErrorCode::kRange, path.string() + ": label " + std::to_string(map.labels[i]) +
                                  " does not fit an 8-bit PNG");
    }
    pixels[i] = static_cast<png_byte>(map.labels[i]);
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::vector<png_bytep> rows(static_cast<std::size_t>(map.height));
  for (int y = 0; y < map.height; ++y) rows[y] = pixels.data() + static_cast<std::size_t>(y) * map.width;
  FilePtr fp = OpenFile(path, "wb");
  PngErrorState state;
  if (!PngWriteRaw(fp.get(), static_cast<png_uint_32>(map.width),
                   static_cast<png_uint_32>(map.height), rows, state)) {
    Fail(ErrorCode::kIo, path.string() + ": png encode failed: " + state.message);
  }
}

Masklet parse_masklet_record(std::string_view line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& ex) {
    Fail(ErrorCode::kFormat, std::string("masklet record: ") + ex.what());
  }
  int frame_index = 0, width = 0, height = 0;
  MaskletId id = 0;
  double pred_iou = 0.0, stability = 0.0;
  std::vector<std::uint32_t> counts;
  try {
    frame_index = j.at("frame_index").get<int>();
    id = j.at("masklet_id").get<MaskletId>();
    pred_iou = j.at("pred_iou").get<double>();
    stability = j.at("stability").get<double>();
    width = j.at("width").get<int>();
    height = j.at("height").get<int>();
    counts = j.at("counts").get<std::vector<std::uint32_t>>();
  } catch (const json::exception& ex) {
    Fail(ErrorCode::kFormat, std::string("masklet record: ") + ex.what());
  }
  Require(frame_index >= 0, ErrorCode::kValidation, "masklet record: negative frame_index");
  BinaryMask mask = BinaryMask::FromCounts(width, height, std::move(counts));
  Masklet m = Masklet::Make(std::move(mask), frame_index, id, pred_iou, stability);
  Require(m.area > 0, ErrorCode::kValidation,
          "masklet " + std::to_string(id) + " on frame " + std::to_string(frame_index) +
              " has zero area");
  return m;
}

std::string format_masklet_record(const Masklet& m) {
  json j;
  j["frame_index"] = m.frame_index;
  j["masklet_id"] = m.masklet_id;
  j["pred_iou"] = m.pred_iou;
  j["stability"] = m.stability;
  j["width"] = m.mask.width();
  j["height"] = m.mask.height();
  j["counts"] = m.mask.counts();
  return j.dump();
}

std::vector<MaskletSet> read_masklets(const fs::path& path, const MaskletReadOptions& opts) {
  std::ifstream in(path);
  Require(in.good(), ErrorCode::kIo, "cannot open masklet stream " + path.string());
  std::map<int, MaskletSet> by_frame;
  std::set<MaskletId> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Masklet m;
    try {
      m = parse_masklet_record(line);
      if (opts.width && opts.height) {
        Require(m.mask.width() == *opts.width && m.mask.height() == *opts.height,
                ErrorCode::kValidation,
                "masklet " + std::to_string(m.masklet_id) + " is " +
                    std::to_string(m.mask.width()) + "x" + std::to_string(m.mask.height()) +
                    ", clip is " + std::to_string(*opts.width) + "x" + std::to_string(*opts.height));
      }
      if (opts.frame_count) {
        Require(m.frame_index < *opts.frame_count, ErrorCode::kValidation,
                "masklet " + std::to_string(m.masklet_id) + " references frame " +
                    std::to_string(m.frame_index) + " beyond the clip");
      }
      Require(seen.insert(m.masklet_id).second, ErrorCode::kValidation,
              "duplicate masklet_id " + std::to_string(m.masklet_id));
    } catch (const Error& e) {
      throw Error(e.code(), path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    MaskletSet& set = by_frame[m.frame_index];
    set.frame_index = m.frame_index;
    set.masklets.push_back(std::move(m));
  }
  std::vector<MaskletSet> out;
  out.reserve(by_frame.size());
  for (auto& [frame, set] : by_frame) out.push_back(std::move(set));
  return out;
}

void write_masklets(std::span<const MaskletSet> frames, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  Require(out.good(), ErrorCode::kIo, "cannot write masklet stream " + path.string());
  for (const MaskletSet& set : frames) {
    for (const Masklet& m : set.masklets) out << format_masklet_record(m) << '\n';
  }
  Require(out.good(), ErrorCode::kIo, "write failed for " + path.string());
}

std::vector<MaskletSet> masklets_by_frame(std::vector<MaskletSet> sets, int frame_count) {
  std::vector<MaskletSet> out(static_cast<std::size_t>(std::max(frame_count, 0)));
  for (int i = 0; i < frame_count; ++i) out[i].frame_index = i;
  for (MaskletSet& s : sets) {
    Require(s.frame_index >= 0 && s.frame_index < frame_count, ErrorCode::kValidation,
            "masklet frame " + std::to_string(s.frame_index) + " outside clip of " +
                std::to_string(frame_count) + " frames");
    auto& dst = out[s.frame_index].masklets;
    for (Masklet& m : s.masklets) dst.push_back(std::move(m));
  }
  return out;
}

void append_u32_le(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void append_f32_le(std::vector<std::uint8_t>& out, float v) {
  append_u32_le(out, std::bit_cast<std::uint32_t>(v));
}

std::uint32_t load_u32_le(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

float load_f32_le(const std::uint8_t* p) { return std::bit_cast<float>(load_u32_le(p)); }

std::vector<std::uint8_t> read_file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  Require(in.good(), ErrorCode::kIo, "cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file_bytes(const fs::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  Require(out.good(), ErrorCode::kIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  Require(out.good(), ErrorCode::kIo, "write failed for " + path.string());
}

namespace {
constexpr char kFeatureMagic[4] = {'M', 'F', 'E', 'A'};
constexpr std::size_t kFeatureHeaderBytes = 16;
}  // namespace

FeatureMap read_featuremap(const fs::path& path) {
  const std::vector<std::uint8_t> bytes = read_file_bytes(path);
  Require(bytes.size() >= kFeatureHeaderBytes, ErrorCode::kFormat,
          path.string() + ": truncated MFEA header");
  Require(std::memcmp(bytes.data(), kFeatureMagic, 4) == 0, ErrorCode::kFormat,
          path.string() + ": bad magic, expected MFEA");
  FeatureMap map;
  const std::uint32_t w = load_u32_le(bytes.data() + 4);
  const std::uint32_t h = load_u32_le(bytes.data() + 8);
  const std::uint32_t d = load_u32_le(bytes.data() + 12);
  Require(w <= 1u << 20 && h <= 1u << 20 && d <= 1u << 20, ErrorCode::kFormat,
          path.string() + ": implausible MFEA dimensions");
  const std::size_t n = std::size_t{w} * h * d;
  const std::size_t payload = bytes.size() - kFeatureHeaderBytes;
  if (payload < n * 4) {
    Fail(ErrorCode::kFormat, path.string() + ": truncated, header declares " + std::to_string(n) +
                                 " floats but " + std::to_string(payload / 4) + " present");
  }
  Require(payload == n * 4, ErrorCode::kFormat, path.string() + ": trailing bytes after payload");
  map.width = static_cast<int>(w);
  map.height = static_cast<int>(h);
  map.dim = static_cast<int>(d);
  map.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const float v = load_f32_le(bytes.data() + kFeatureHeaderBytes + 4 * i);
    if (!std::isfinite(v)) {
      Fail(ErrorCode::kData, path.string() + ": non-finite value at index " + std::to_string(i));
    }
    map.values[i] = v;
  }
  return map;
}

void write_featuremap(const FeatureMap& map, const fs::path& path) {
  const std::size_t n = static_cast<std::size_t>(map.width) * map.height * map.dim;
  Require(map.values.size() == n, ErrorCode::kDimension,
          "feature map holds " + std::to_string(map.values.size()) + " values, expected " +
              std::to_string(n));
  std::vector<std::uint8_t> bytes;
  bytes.reserve(kFeatureHeaderBytes + 4 * n);
  bytes.insert(bytes.end(), std::begin(kFeatureMagic), std::end(kFeatureMagic));
  append_u32_le(bytes, static_cast<std::uint32_t>(map.width));
  append_u32_le(bytes, static_cast<std::uint32_t>(map.height));
  append_u32_le(bytes, static_cast<std::uint32_t>(map.dim));
  for (float v : map.values) {
    Require(std::isfinite(v), ErrorCode::kData, "refusing to write non-finite feature value");
    append_f32_le(bytes, v);
  }
  write_file_bytes(path, bytes);
}

}  // namespace maskfuse
