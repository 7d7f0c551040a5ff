#include "maskpipe/mask_io.hpp"

#include <png.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include <json.hpp>

#include "maskpipe/error.hpp"
#include "maskpipe/fileutil.hpp"

namespace maskpipe {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

Mask decode_mask_png(std::span<const std::uint8_t> bytes,
                     const PngDecodeOptions& options) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw Error(ErrorCode::kFormat, "cannot decode PNG: " + msg);
  }
  if (image.format & (PNG_FORMAT_FLAG_COLOR | PNG_FORMAT_FLAG_ALPHA)) {
    png_image_free(&image);
    throw Error(ErrorCode::kFormat,
                "mask PNG must be single-channel grayscale");
  }
  if (image.format & PNG_FORMAT_FLAG_LINEAR) {
    // 16-bit input would be gamma-scaled down to 8 bits, losing small labels.
    png_image_free(&image);
    throw Error(ErrorCode::kFormat, "mask PNG must be 8-bit");
  }
  const int width = static_cast<int>(image.width);
  const int height = static_cast<int>(image.height);
  check_dimensions(width, height);
  image.format = PNG_FORMAT_GRAY;
  Bitmap bitmap(width, height);
  std::vector<std::uint8_t> raw(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, raw.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw Error(ErrorCode::kFormat, "cannot decode PNG: " + msg);
  }
  auto px = bitmap.pixels();
  std::uint8_t instance = 0;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const std::uint8_t v = raw[i];
    if (v == 0) continue;
    if (options.reject_multi_instance) {
      if (instance == 0) {
        instance = v;
      } else if (v != instance) {
        throw Error(ErrorCode::kMultiInstance,
                    "mask PNG holds more than one non-zero label");
      }
    }
    px[i] = 1;
  }
  return Mask::from_bitmap(bitmap);
}

std::vector<std::uint8_t> encode_mask_png(const Mask& mask) {
  const auto bitmap = mask.to_bitmap();
  std::vector<std::uint8_t> gray(bitmap.pixels().begin(),
                                 bitmap.pixels().end());
  for (auto& v : gray) v = v ? 255 : 0;

  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(mask.width());
  image.height = static_cast<png_uint_32>(mask.height());
  image.format = PNG_FORMAT_GRAY;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, gray.data(), 0,
                                 nullptr)) {
    throw Error(ErrorCode::kFormat,
                std::string("cannot encode PNG: ") + image.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, gray.data(), 0,
                                 nullptr)) {
    throw Error(ErrorCode::kFormat,
                std::string("cannot encode PNG: ") + image.message);
  }
  out.resize(size);
  return out;
}

Mask read_mask_png(const fs::path& path, const PngDecodeOptions& options) {
  const auto text = read_text_file(path);
  try {
    return decode_mask_png(
        {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()},
        options);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

void write_mask_png(const Mask& mask, const fs::path& path) {
  const auto bytes = encode_mask_png(mask);
  write_file_atomic(path, {reinterpret_cast<const char*>(bytes.data()),
                           bytes.size()});
}

std::string mask_png_name(int frame_index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%06d.png", frame_index);
  return buf;
}

std::string mask_record_to_json(const std::string& video_id, int frame,
                                const Mask& mask) {
  ordered_json j;
  j["video_id"] = video_id;
  j["frame"] = frame;
  j["width"] = mask.width();
  j["height"] = mask.height();
  j["rle"] = mask.runs();
  return j.dump();
}

MaskRecord mask_record_from_json(std::string_view line) {
  try {
    const auto j = nlohmann::json::parse(line);
    MaskRecord rec;
    rec.video_id = j.at("video_id").get<std::string>();
    rec.frame = j.at("frame").get<int>();
    const auto runs = j.at("rle").get<std::vector<std::int64_t>>();
    rec.mask = decode_rle(runs, j.at("width").get<int>(),
                          j.at("height").get<int>());
    return rec;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kFormat,
                std::string("malformed mask record: ") + e.what());
  }
}

std::string sequence_to_jsonl(const VideoSequence& seq) {
  std::string out;
  for (const auto& rec : seq.frames) {
    if (!rec.mask) continue;
    out += mask_record_to_json(seq.video_id, rec.frame_index, *rec.mask);
    out += '\n';
  }
  return out;
}

namespace {

VideoSequence assemble(const std::string& video_id,
                       std::map<int, Mask>& by_frame, FrameSource source) {
  VideoSequence seq;
  seq.video_id = video_id;
  if (by_frame.empty()) return seq;
  const auto& first = by_frame.begin()->second;
  seq.width = first.width();
  seq.height = first.height();
  const int last = by_frame.rbegin()->first;
  seq.frames.reserve(static_cast<std::size_t>(last));
  for (int n = 1; n <= last; ++n) {
    FrameRecord rec;
    rec.frame_index = n;
    rec.source = source;
    if (auto it = by_frame.find(n); it != by_frame.end()) {
      if (it->second.width() != seq.width ||
          it->second.height() != seq.height) {
        throw Error(ErrorCode::kDimensionMismatch,
                    "frame " + std::to_string(n) + " of '" + video_id +
                        "' has different dimensions");
      }
      rec.mask = std::move(it->second);
    }
    seq.frames.push_back(std::move(rec));
  }
  return seq;
}

}  // namespace

std::map<std::string, VideoSequence> sequences_from_jsonl(
    std::string_view text, FrameSource source) {
  std::map<std::string, std::map<int, Mask>> grouped;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    MaskRecord rec;
    try {
      rec = mask_record_from_json(line);
    } catch (const Error& e) {
      throw Error(e.code(),
                  "mask line " + std::to_string(lineno) + ": " + e.what());
    }
    if (rec.frame < 1) {
      throw Error(ErrorCode::kFormat,
                  "mask line " + std::to_string(lineno) + ": frame < 1");
    }
    auto& frames = grouped[rec.video_id];
    if (!frames.emplace(rec.frame, std::move(rec.mask)).second) {
      throw Error(ErrorCode::kFormat, "duplicate frame " +
                                          std::to_string(rec.frame) +
                                          " for '" + rec.video_id + "'");
    }
  }
  std::map<std::string, VideoSequence> out;
  for (auto& [id, frames] : grouped) out[id] = assemble(id, frames, source);
  return out;
}

std::map<std::string, VideoSequence> load_sequences(
    const fs::path& path, const std::optional<std::string>& video_id,
    const PngDecodeOptions& options) {
  if (fs::is_directory(path)) {
    static const std::regex kName(R"(frame_(\d{6})\.png)");
    std::map<int, Mask> by_frame;
    for (const auto& entry : fs::directory_iterator(path)) {
      const auto name = entry.path().filename().string();
      std::smatch m;
      if (!std::regex_match(name, m, kName)) continue;
      const int n = std::stoi(m[1].str());
      if (n < 1) throw Error(ErrorCode::kFormat, "frame numbering starts at 1");
      by_frame.emplace(n, read_mask_png(entry.path(), options));
    }
    if (by_frame.empty()) {
      throw Error(ErrorCode::kNotFound,
                  "no frame_%06d.png masks in " + path.string());
    }
    auto name = path.filename().string();
    if (name.empty()) name = path.parent_path().filename().string();
    const std::string id = video_id.value_or(name);
    std::map<std::string, VideoSequence> out;
    out[id] = assemble(id, by_frame, FrameSource::kModelOutput);
    return out;
  }
  if (!fs::exists(path)) {
    throw Error(ErrorCode::kNotFound, "no such mask source " + path.string());
  }
  auto all = sequences_from_jsonl(read_text_file(path));
  if (video_id) {
    auto it = all.find(*video_id);
    if (it == all.end()) {
      throw Error(ErrorCode::kNotFound,
                  "video '" + *video_id + "' not in " + path.string());
    }
    std::map<std::string, VideoSequence> one;
    one.insert(all.extract(it));
    return one;
  }
  return all;
}

VideoSequence load_sequence(const fs::path& path,
                            const std::optional<std::string>& video_id,
                            const PngDecodeOptions& options) {
  auto all = load_sequences(path, video_id, options);
  if (all.size() != 1) {
    throw Error(ErrorCode::kInvalidArgument,
                path.string() + " holds " + std::to_string(all.size()) +
                    " videos; select one");
  }
  return std::move(all.begin()->second);
}

void write_sequence_pngs(const VideoSequence& seq, const fs::path& dir) {
  for (const auto& rec : seq.frames) {
    if (!rec.mask) continue;
    write_mask_png(*rec.mask, dir / mask_png_name(rec.frame_index));
  }
}

}  // namespace maskpipe
