#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "maskpipe/mask.hpp"

namespace maskpipe {

// ---- PNG -------------------------------------------------------------------
//
// 8-bit single-channel PNG; 0 is background and any non-zero value is
// foreground. Written masks use 0/255.

struct PngDecodeOptions {
  // Reject images carrying more than one distinct non-zero value
  // (instance-labelled masks).
  bool reject_multi_instance = false;
};

Mask decode_mask_png(std::span<const std::uint8_t> bytes,
                     const PngDecodeOptions& options = {});
std::vector<std::uint8_t> encode_mask_png(const Mask& mask);

Mask read_mask_png(const std::filesystem::path& path,
                   const PngDecodeOptions& options = {});
void write_mask_png(const Mask& mask, const std::filesystem::path& path);

std::string mask_png_name(int frame_index);  // frame_%06d.png

// ---- JSON lines ------------------------------------------------------------
//
// {"video_id":str,"frame":int,"width":int,"height":int,"rle":[int,...]}

struct MaskRecord {
  std::string video_id;
  int frame = 1;
  Mask mask;
};

std::string mask_record_to_json(const std::string& video_id, int frame,
                                const Mask& mask);
MaskRecord mask_record_from_json(std::string_view line);

// Frames with a mask only; absent masks are omitted.
std::string sequence_to_jsonl(const VideoSequence& seq);

// Groups records by video; frames 1..max are materialised and missing ones
// are left absent.
std::map<std::string, VideoSequence> sequences_from_jsonl(
    std::string_view text, FrameSource source = FrameSource::kModelOutput);

// ---- sequence sources ------------------------------------------------------

// `path` is either a directory of frame_%06d.png files or a JSON-lines file.
// For a directory the video id defaults to the directory name.
std::map<std::string, VideoSequence> load_sequences(
    const std::filesystem::path& path,
    const std::optional<std::string>& video_id = std::nullopt,
    const PngDecodeOptions& options = {});

// A single sequence; throws kInvalidArgument when the source holds several
// videos and none was selected.
VideoSequence load_sequence(const std::filesystem::path& path,
                            const std::optional<std::string>& video_id =
                                std::nullopt,
                            const PngDecodeOptions& options = {});

void write_sequence_pngs(const VideoSequence& seq,
                         const std::filesystem::path& dir);

}  // namespace maskpipe
