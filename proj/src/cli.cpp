#include "maskpipe/cli.hpp"

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <regex>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "maskpipe/detection.hpp"
#include "maskpipe/error.hpp"
#include "maskpipe/fileutil.hpp"
#include "maskpipe/manifest.hpp"
#include "maskpipe/mask_io.hpp"
#include "maskpipe/metrics_io.hpp"
#include "maskpipe/random.hpp"
#include "maskpipe/service.hpp"
#include "maskpipe/synth.hpp"
#include "maskpipe/worker_pool.hpp"
#include "maskpipe/workspace.hpp"

namespace maskpipe {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::optional<std::string> workspace;
  std::uint64_t seed = 0;
  std::optional<int> jobs;
};

struct Context {
  Config cfg;
  Workspace ws;
  std::uint64_t seed = 0;
  int jobs = 1;
  std::ostream& out;
  std::ostream& err;
};

// Collects digests for one manifest entry. Inputs are digested on
// registration, outputs when the stage commits.
class Stage {
 public:
  Stage(const Context& ctx, std::string name, ordered_json params)
      : ctx_(ctx), probe_(ctx.ws.root()) {
    rec_.name = std::move(name);
    params["seed"] = ctx.seed;
    rec_.params = std::move(params);
    rec_.started_at = timestamp_now();
  }

  void input(const fs::path& p) { rec_.inputs.push_back(probe_.digest(p)); }
  void output(const fs::path& p) { outputs_.push_back(p); }

  void commit() {
    for (const auto& p : outputs_) rec_.outputs.push_back(probe_.digest(p));
    rec_.finished_at = timestamp_now();
    append_stage(ctx_.ws.root(), ctx_.ws.manifest_path(), rec_);
  }

 private:
  const Context& ctx_;
  RunManifest probe_;
  StageRecord rec_;
  std::vector<fs::path> outputs_;
};

std::string dump(const ordered_json& j) { return j.dump(2) + "\n"; }

std::string join_ints(const std::vector<int>& v, const char* sep = " ") {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += sep;
    s += std::to_string(v[i]);
  }
  return s;
}

std::string shell_quote(const std::string& s) {
  std::string q = "'";
  for (char c : s) {
    if (c == '\'') {
      q += "'\\''";
    } else {
      q += c;
    }
  }
  return q + "'";
}

std::string replace_all(std::string s, const std::string& from,
                        const std::string& to) {
  for (std::size_t pos = 0; (pos = s.find(from, pos)) != std::string::npos;
       pos += to.size()) {
    s.replace(pos, from.size(), to);
  }
  return s;
}

// Ground truth for frame 1 from a PNG file or a mask JSON-lines file.
std::map<std::string, Mask> read_first_frame_gt(const fs::path& path,
                                                const std::string& sole_id) {
  std::map<std::string, Mask> out;
  if (path.extension() == ".png") {
    out.emplace(sole_id, read_mask_png(path, {.reject_multi_instance = true}));
    return out;
  }
  for (auto& [id, seq] : sequences_from_jsonl(read_text_file(path),
                                              FrameSource::kGroundTruth)) {
    if (!seq.frames.empty() && seq.frames.front().mask) {
      out.emplace(id, *seq.frames.front().mask);
    }
  }
  return out;
}

void write_masks(const Context& ctx, const VideoSequence& seq) {
  if (ctx.cfg.mask_format == MaskFormat::kJsonl) {
    write_file_atomic(ctx.ws.masks_jsonl(seq.video_id), sequence_to_jsonl(seq));
  } else {
    write_sequence_pngs(seq, ctx.ws.masks_png_dir(seq.video_id));
  }
}

// Copies frame_NNNNNN.{png,jpg,jpeg} images, dropping the first `skip`
// frames and renumbering the rest from 1.
int copy_frames(const fs::path& src, const fs::path& dst, int skip) {
  static const std::regex kName(R"(frame_(\d+)\.(png|jpg|jpeg))",
                                std::regex::icase);
  int copied = 0;
  fs::create_directories(dst);
  for (const auto& e : fs::directory_iterator(src)) {
    const auto name = e.path().filename().string();
    std::smatch m;
    if (!e.is_regular_file() || !std::regex_match(name, m, kName)) continue;
    const int n = std::stoi(m[1].str()) - skip;
    if (n < 1) continue;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "frame_%06d.", n);
    auto ext = m[2].str();
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    fs::copy_file(e.path(), dst / (buf + ext), fs::copy_options::overwrite_existing);
    ++copied;
  }
  return copied;
}

// ---- ingest ----------------------------------------------------------------

struct IngestOpts {
  std::string masks;
  std::optional<std::string> video_id;
  std::string gt;
  std::string gt_first_frame;
  std::string frames;
  std::string video;
  std::string extract_cmd;
  bool trim = false;
  double fps = 0.0;
};

int cmd_ingest(Context& ctx, const IngestOpts& o) {
  const PngDecodeOptions strict{.reject_multi_instance = true};
  auto seqs = load_sequences(o.masks, o.video_id, strict);
  const bool single = seqs.size() == 1;
  if (!single && (!o.frames.empty() || !o.video.empty())) {
    throw UsageError("--frames/--video need a single video");
  }
  std::map<std::string, VideoSequence> gts;
  if (!o.gt.empty()) {
    gts = load_sequences(o.gt, single ? std::optional(seqs.begin()->first)
                                      : o.video_id,
                         strict);
  }
  std::map<std::string, Mask> first;
  if (!o.gt_first_frame.empty()) {
    first = read_first_frame_gt(o.gt_first_frame, seqs.begin()->first);
  }
  const std::string extract =
      o.extract_cmd.empty() ? ctx.cfg.extract_command : o.extract_cmd;
  if (!o.video.empty() && extract.empty()) {
    throw UsageError("--video needs --extract-cmd or extract_command in maskpipe.json");
  }

  ordered_json params;
  params["masks"] = RunManifest(ctx.ws.root()).relative(o.masks);
  params["trim"] = o.trim;
  params["mask_format"] = std::string(to_string(ctx.cfg.mask_format));
  Stage stage(ctx, "ingest", params);
  stage.input(o.masks);
  if (!o.gt.empty()) stage.input(o.gt);
  if (!o.gt_first_frame.empty()) stage.input(o.gt_first_frame);
  if (!o.frames.empty()) stage.input(o.frames);
  if (!o.video.empty()) stage.input(o.video);

  int ingested = 0;
  for (auto& [id, raw] : seqs) {
    require_valid_video_id(id);
    int removed = 0;
    VideoSequence seq = std::move(raw);
    if (o.trim) {
      auto t = trim_leading_empty(seq);
      if (t.all_empty) {
        ctx.err << "warning: every frame of '" << id
                << "' is empty; video skipped\n";
        continue;
      }
      removed = t.removed;
      seq = std::move(t.sequence);
    }
    if (seq.frame_count() == 0) continue;
    validate_sequence(seq);

    // Everything that can fail runs before the old video directory goes.
    std::optional<VideoSequence> gt;
    std::optional<Mask> first_gt;
    if (auto it = gts.find(id); it != gts.end()) {
      gt = std::move(it->second);
      gt->frames.erase(gt->frames.begin(),
                       gt->frames.begin() + std::min<std::size_t>(removed, gt->frames.size()));
      for (std::size_t i = 0; i < gt->frames.size(); ++i) {
        gt->frames[i].frame_index = static_cast<int>(i) + 1;
      }
      if (gt->width != seq.width || gt->height != seq.height) {
        throw Error(ErrorCode::kDimensionMismatch,
                    "ground truth of '" + id + "' has a different frame size");
      }
      if (!gt->frames.empty() && gt->frames.front().mask) {
        first_gt = gt->frames.front().mask;
      }
    }
    if (auto it = first.find(id); it != first.end()) first_gt = it->second;
    if (first_gt) require_same_size(*first_gt, seq.mask_or_empty(0));

    const auto extract_tmp = ctx.ws.videos_dir() / ("." + id + ".extract.tmp");
    if (!o.video.empty()) {
      fs::remove_all(extract_tmp);
      fs::create_directories(extract_tmp);
      auto cmd = replace_all(extract, "{input}", shell_quote(fs::absolute(o.video).string()));
      cmd = replace_all(cmd, "{output_dir}",
                        shell_quote(fs::absolute(extract_tmp).string()));
      const int rc = std::system(cmd.c_str());
      if (rc != 0) {
        fs::remove_all(extract_tmp);
        throw Error(ErrorCode::kIo, "frame extraction failed (status " +
                                        std::to_string(rc) + "): " + cmd);
      }
    }

    const auto dir = ctx.ws.video_dir(id);
    fs::remove_all(dir);
    fs::create_directories(dir);
    write_masks(ctx, seq);
    if (gt) write_file_atomic(ctx.ws.gt_masks_path(id), sequence_to_jsonl(*gt));
    if (first_gt) {
      write_file_atomic(ctx.ws.gt_first_frame_path(id),
                        mask_record_to_json(id, 1, *first_gt) + "\n");
    }
    if (!o.frames.empty()) copy_frames(o.frames, ctx.ws.frames_dir(id), removed);
    if (!o.video.empty()) {
      copy_frames(extract_tmp, ctx.ws.frames_dir(id), removed);
      fs::remove_all(extract_tmp);
    }

    VideoMeta meta{id, seq.frame_count(), seq.width, seq.height,
                   o.fps > 0 ? o.fps : seq.fps, removed};
    ctx.ws.write_meta(meta);
    stage.output(dir);
    ctx.out << id << ": " << meta.frame_count << " frames " << meta.width << "x"
            << meta.height;
    if (removed) ctx.out << " (" << removed << " leading empty frames dropped)";
    ctx.out << "\n";
    ++ingested;
  }
  stage.commit();
  return ingested > 0 ? 0 : 1;
}

// ---- metrics ---------------------------------------------------------------

struct MetricsOpts {
  std::string masks;
  std::optional<std::string> video_id;
  std::vector<std::string> videos;
  std::string out;
  std::string summary;
  std::string series_json;
  std::string gt_first_frame;
  std::optional<std::string> nc_mode;
};

std::vector<std::string> selected_videos(const Context& ctx,
                                         const std::vector<std::string>& wanted) {
  if (!ctx.ws.exists()) {
    throw Error(ErrorCode::kWorkspaceMissing,
                "no workspace at " + ctx.ws.root().string());
  }
  if (wanted.empty()) return ctx.ws.video_ids();
  for (const auto& id : wanted) {
    if (!ctx.ws.has_video(id)) {
      throw Error(ErrorCode::kNotFound, "no video '" + id + "' in workspace");
    }
  }
  return wanted;
}

int cmd_metrics(Context& ctx, const MetricsOpts& o) {
  const NcMode mode = o.nc_mode ? parse_nc_mode(*o.nc_mode) : ctx.cfg.nc_mode;
  ordered_json params;
  params["nc_t_mode"] = std::string(to_string(mode));

  if (!o.masks.empty()) {
    if (o.out.empty()) throw UsageError("--masks needs --out");
    params["masks"] = RunManifest(ctx.ws.root()).relative(o.masks);
    Stage stage(ctx, "metrics", params);
    stage.input(o.masks);
    auto seqs = load_sequences(o.masks, o.video_id);
    std::map<std::string, Mask> first;
    if (!o.gt_first_frame.empty()) {
      stage.input(o.gt_first_frame);
      first = read_first_frame_gt(o.gt_first_frame, seqs.begin()->first);
    }
    std::vector<const VideoSequence*> list;
    for (const auto& [id, s] : seqs) list.push_back(&s);
    std::vector<MetricSeries> results(list.size());
    parallel_for(list.size(), ctx.jobs, [&](std::size_t i) {
      const auto it = first.find(list[i]->video_id);
      results[i] = series_metrics(
          *list[i], it == first.end() ? std::nullopt : std::optional(it->second), mode);
    });
    write_file_atomic(o.out, series_to_csv(results));
    stage.output(o.out);
    if (!o.summary.empty()) {
      std::string text;
      if (results.size() == 1) {
        text = summary_to_json(results.front());
      } else {
        auto arr = ordered_json::array();
        for (const auto& r : results) arr.push_back(ordered_json::parse(summary_to_json(r)));
        text = dump(arr);
      }
      write_file_atomic(o.summary, text);
      stage.output(o.summary);
    }
    if (!o.series_json.empty()) {
      std::string text;
      for (const auto& r : results) text += series_to_json(r, mode);
      write_file_atomic(o.series_json, text);
      stage.output(o.series_json);
    }
    stage.commit();
    for (const auto& r : results) {
      ctx.out << r.video_id << ": " << r.dice_t.size() << " frame pairs\n";
    }
    return 0;
  }

  const auto ids = selected_videos(ctx, o.videos);
  if (ids.empty()) throw Error(ErrorCode::kEmptyInput, "workspace holds no videos");
  params["videos"] = ids;
  Stage stage(ctx, "metrics", params);
  for (const auto& id : ids) {
    if (auto src = ctx.ws.masks_source(id)) stage.input(*src);
    stage.input(ctx.ws.gt_first_frame_path(id));
  }
  std::vector<MetricSeries> results(ids.size());
  parallel_for(ids.size(), ctx.jobs, [&](std::size_t i) {
    const auto seq = ctx.ws.load_masks(ids[i]);
    results[i] = series_metrics(seq, ctx.ws.load_first_frame_ground_truth(ids[i]), mode);
    write_file_atomic(ctx.ws.series_csv(ids[i]),
                      series_to_csv(std::span(&results[i], 1)));
    write_file_atomic(ctx.ws.summary_json(ids[i]), summary_to_json(results[i]));
    write_file_atomic(ctx.ws.series_json(ids[i]), series_to_json(results[i], mode));
  });
  for (const auto& id : ids) {
    stage.output(ctx.ws.series_csv(id));
    stage.output(ctx.ws.summary_json(id));
    stage.output(ctx.ws.series_json(id));
  }
  stage.commit();
  for (const auto& r : results) {
    ctx.out << r.video_id << ": " << r.dice_t.size() << " frame pairs\n";
  }
  return 0;
}

// ---- select-frame ----------------------------------------------------------

struct SelectOpts {
  std::string nc;
  std::string series;
  std::optional<std::string> video_id;
  std::vector<std::string> videos;
  std::optional<std::string> mode;
};

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> v;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw UsageError("not an integer list: '" + text + "'");
    }
  }
  return v;
}

std::string frame_text(const std::optional<int>& f) {
  return f ? std::to_string(*f) : "none";
}

int cmd_select(Context& ctx, const SelectOpts& o) {
  const auto mode = o.mode ? parse_selection_mode(*o.mode) : ctx.cfg.selection;
  ordered_json params;
  params["selection"] = std::string(to_string(mode));

  if (!o.nc.empty() || !o.series.empty()) {
    Stage stage(ctx, "select-frame", params);
    std::vector<std::pair<std::string, std::vector<int>>> inputs;
    if (!o.nc.empty()) {
      inputs.emplace_back("", parse_int_list(o.nc));
    } else {
      stage.input(o.series);
      for (auto& s : series_from_csv(read_text_file(o.series))) {
        if (o.video_id && s.video_id != *o.video_id) continue;
        inputs.emplace_back(s.video_id, std::move(s.nc_t));
      }
      if (inputs.empty()) throw Error(ErrorCode::kEmptySeries, "no matching series");
    }
    for (const auto& [id, nc] : inputs) {
      const auto f = select_reannotation_frame(nc, mode);
      if (inputs.size() > 1) ctx.out << id << " ";
      ctx.out << frame_text(f) << "\n";
    }
    stage.commit();
    return 0;
  }

  const auto ids = selected_videos(ctx, o.videos);
  Stage stage(ctx, "select-frame", params);
  ordered_json frames = ordered_json::object();
  for (const auto& id : ids) {
    const auto p = ctx.ws.series_json(id);
    if (!fs::exists(p)) {
      throw Error(ErrorCode::kNotFound, "metrics not computed for '" + id + "'");
    }
    stage.input(p);
    const auto s = series_from_json(read_text_file(p));
    const auto f = select_reannotation_frame(s.nc_t, mode);
    frames[id] = f ? ordered_json(*f) : ordered_json(nullptr);
    ctx.out << id << " " << frame_text(f) << "\n";
  }
  ordered_json j;
  j["selection"] = std::string(to_string(mode));
  j["frames"] = std::move(frames);
  write_file_atomic(ctx.ws.suggestions_path(), dump(j));
  stage.output(ctx.ws.suggestions_path());
  stage.commit();
  return 0;
}

// ---- sample ----------------------------------------------------------------

struct SampleOpts {
  std::optional<int> total;
  std::optional<int> k;
  std::vector<std::string> videos;
};

int cmd_sample(Context& ctx, const SampleOpts& o) {
  const int k = o.k.value_or(ctx.cfg.sample_k);
  ordered_json params;
  params["k"] = k;
  if (o.total) {
    params["total"] = *o.total;
    Stage stage(ctx, "sample", params);
    ctx.out << join_ints(sample_prompt_frames(*o.total, k)) << "\n";
    stage.commit();
    return 0;
  }
  const auto ids = selected_videos(ctx, o.videos);
  Stage stage(ctx, "sample", params);
  ordered_json frames = ordered_json::object();
  for (const auto& id : ids) {
    stage.input(ctx.ws.meta_path(id));
    const auto picked = sample_prompt_frames(ctx.ws.read_meta(id).frame_count, k);
    frames[id] = picked;
    ctx.out << id << " " << join_ints(picked) << "\n";
  }
  ordered_json j;
  j["k"] = k;
  j["frames"] = std::move(frames);
  write_file_atomic(ctx.ws.prompt_frames_path(), dump(j));
  stage.output(ctx.ws.prompt_frames_path());
  stage.commit();
  return 0;
}

// ---- export-labels ---------------------------------------------------------

struct ExportOpts {
  std::string masks;
  std::optional<std::string> video_id;
  std::string out;
  std::string source = "masks";
  std::vector<std::string> videos;
};

VideoSequence labels_source(const Context& ctx, const std::string& id,
                            const std::string& source) {
  if (source == "gt") {
    auto gt = ctx.ws.load_ground_truth(id);
    if (!gt) throw Error(ErrorCode::kNotFound, "no ground-truth masks for '" + id + "'");
    return std::move(*gt);
  }
  if (source != "masks") throw UsageError("--source must be masks or gt");
  return ctx.ws.load_masks(id);
}

int cmd_export(Context& ctx, const ExportOpts& o) {
  ordered_json params;
  params["source"] = o.source;
  if (!o.masks.empty()) {
    if (o.out.empty()) throw UsageError("--masks needs --out");
    Stage stage(ctx, "export-labels", params);
    stage.input(o.masks);
    const auto seqs = load_sequences(o.masks, o.video_id);
    for (const auto& [id, seq] : seqs) {
      const fs::path dir = seqs.size() == 1 ? fs::path(o.out) : fs::path(o.out) / id;
      ctx.out << id << ": " << export_detector_labels(seq, dir) << " label files\n";
    }
    stage.output(o.out);
    stage.commit();
    return 0;
  }
  const auto ids = selected_videos(ctx, o.videos);
  Stage stage(ctx, "export-labels", params);
  std::vector<int> counts(ids.size());
  for (const auto& id : ids) {
    if (auto src = ctx.ws.masks_source(id)) stage.input(*src);
  }
  parallel_for(ids.size(), ctx.jobs, [&](std::size_t i) {
    const auto seq = labels_source(ctx, ids[i], o.source);
    fs::remove_all(ctx.ws.labels_dir(ids[i]));
    fs::create_directories(ctx.ws.labels_dir(ids[i]));
    counts[i] = export_detector_labels(seq, ctx.ws.labels_dir(ids[i]));
  });
  stage.output(ctx.ws.labels_root());
  stage.commit();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    ctx.out << ids[i] << ": " << counts[i] << " label files\n";
  }
  return 0;
}

// ---- split -----------------------------------------------------------------

struct SplitOpts {
  std::string ratios;
  std::string counts;
  std::string out;
};

std::vector<VideoFrameCount> read_counts_csv(const fs::path& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  std::vector<VideoFrameCount> out;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || (lineno == 1 && line.rfind("video_id", 0) == 0)) continue;
    const auto comma = line.find(',');
    try {
      if (comma == std::string::npos) throw std::invalid_argument(line);
      out.push_back({line.substr(0, comma), std::stoll(line.substr(comma + 1))});
    } catch (const std::logic_error&) {
      throw Error(ErrorCode::kFormat, path.string() + ":" + std::to_string(lineno) +
                                          ": expected video_id,frame_count");
    }
  }
  return out;
}

int cmd_split(Context& ctx, const SplitOpts& o) {
  const auto ratios = o.ratios.empty() ? ctx.cfg.split_ratios
                                       : parse_split_ratios(o.ratios);
  ordered_json params;
  params["ratios"] = {ratios.train, ratios.val, ratios.test};
  Stage stage(ctx, "split", params);
  std::vector<VideoFrameCount> videos;
  if (!o.counts.empty()) {
    stage.input(o.counts);
    videos = read_counts_csv(o.counts);
  } else {
    for (const auto& id : selected_videos(ctx, {})) {
      stage.input(ctx.ws.meta_path(id));
      videos.push_back({id, ctx.ws.read_meta(id).frame_count});
    }
  }
  const auto manifest = split_by_video(videos, ratios, ctx.seed);
  const fs::path out = o.out.empty() ? ctx.ws.split_path() : fs::path(o.out);
  write_file_atomic(out, split_manifest_to_json(manifest));
  stage.output(out);
  stage.commit();
  ctx.out << "train " << manifest.train.size() << " videos / "
          << manifest.frames_in(manifest.train) << " frames\n"
          << "val " << manifest.val.size() << " videos / "
          << manifest.frames_in(manifest.val) << " frames\n"
          << "test " << manifest.test.size() << " videos / "
          << manifest.frames_in(manifest.test) << " frames\n";
  return 0;
}

// ---- eval-det --------------------------------------------------------------

struct EvalOpts {
  std::string detections;
  std::optional<std::string> subset;
  std::string gt_source = "masks";
  std::optional<double> conf_cutoff;
  std::string ap_mode = "interpolated101";
  std::string out;
};

FrameDetections read_detections_path(const fs::path& path) {
  if (!fs::is_directory(path)) {
    if (!fs::exists(path)) {
      throw Error(ErrorCode::kNotFound, "no detections at " + path.string());
    }
    return read_detections_jsonl(read_text_file(path));
  }
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(path)) {
    if (e.is_regular_file() && e.path().extension() == ".jsonl") {
      files.push_back(e.path());
    }
  }
  std::sort(files.begin(), files.end());
  FrameDetections all;
  for (const auto& f : files) {
    for (auto& [key, boxes] : read_detections_jsonl(read_text_file(f))) {
      auto& dst = all[key];
      dst.insert(dst.end(), boxes.begin(), boxes.end());
    }
  }
  return all;
}

int cmd_eval(Context& ctx, const EvalOpts& o) {
  std::string subset = o.subset.value_or(
      fs::exists(ctx.ws.split_path()) ? "test" : "all");
  EvalOptions eo;
  eo.confidence_cutoff = o.conf_cutoff;
  if (o.ap_mode == "interpolated101") {
    eo.ap_mode = ApMode::kInterpolated101;
  } else if (o.ap_mode == "exact") {
    eo.ap_mode = ApMode::kExactEnvelope;
  } else {
    throw UsageError("--ap-mode must be interpolated101 or exact");
  }
  ordered_json params;
  params["subset"] = subset;
  params["gt_source"] = o.gt_source;
  params["ap_mode"] = o.ap_mode;
  params["confidence_cutoff"] =
      o.conf_cutoff ? ordered_json(*o.conf_cutoff) : ordered_json(nullptr);
  Stage stage(ctx, "eval-det", params);

  const auto all_ids = selected_videos(ctx, {});
  std::vector<std::string> ids;
  if (subset == "all") {
    ids = all_ids;
  } else {
    if (!fs::exists(ctx.ws.split_path())) {
      throw Error(ErrorCode::kNotFound, "--subset " + subset + " needs split.json");
    }
    stage.input(ctx.ws.split_path());
    const auto split = split_manifest_from_json(read_text_file(ctx.ws.split_path()));
    if (subset == "train") {
      ids = split.train;
    } else if (subset == "val") {
      ids = split.val;
    } else if (subset == "test") {
      ids = split.test;
    } else {
      throw UsageError("--subset must be all, train, val or test");
    }
  }

  FrameGroundTruth gts;
  for (const auto& id : ids) {
    if (auto src = ctx.ws.masks_source(id)) stage.input(*src);
    const auto seq = labels_source(ctx, id, o.gt_source);
    for (const auto& rec : seq.frames) {
      auto& boxes = gts[{id, rec.frame_index}];
      if (rec.mask) {
        if (auto b = bbox_from_mask(*rec.mask)) boxes.push_back(*b);
      }
    }
  }
  stage.input(o.detections);
  auto dets = read_detections_path(o.detections);
  const std::set<std::string> keep(ids.begin(), ids.end());
  const std::set<std::string> known(all_ids.begin(), all_ids.end());
  std::erase_if(dets, [&](const auto& kv) {
    return known.contains(kv.first.video_id) && !keep.contains(kv.first.video_id);
  });

  const auto report = evaluate(dets, gts, eo);
  const fs::path out = o.out.empty() ? ctx.ws.eval_path() : fs::path(o.out);
  auto j = ordered_json::parse(eval_report_to_json(report));
  j["subset"] = subset;
  j["videos"] = ids;
  write_file_atomic(out, dump(j));
  stage.output(out);
  stage.commit();
  char line[256];
  std::snprintf(line, sizeof(line),
                "precision %.4f  recall %.4f  mAP@50 %.4f  mAP@50-95 %.4f  AP@95 %.4f\n",
                report.precision, report.recall, report.map_50, report.map_50_95,
                report.ap_95);
  ctx.out << line;
  return 0;
}

// ---- report ----------------------------------------------------------------

struct ReportOpts {
  std::optional<std::string> weighting;
  std::string out;
};

ordered_json mean_std_json(double mean, double std) {
  ordered_json j;
  j["mean"] = mean;
  j["std"] = std;
  return j;
}

int cmd_report(Context& ctx, const ReportOpts& o) {
  const auto weighting =
      o.weighting ? parse_weighting(*o.weighting) : ctx.cfg.weighting;
  ordered_json params;
  params["weighting"] = std::string(to_string(weighting));
  Stage stage(ctx, "report", params);

  std::vector<MetricSeries> series;
  std::string nc_mode;
  for (const auto& id : selected_videos(ctx, {})) {
    const auto p = ctx.ws.series_json(id);
    if (!fs::exists(p)) continue;
    stage.input(p);
    const auto text = read_text_file(p);
    series.push_back(series_from_json(text));
    const auto mode = nlohmann::json::parse(text).value("nc_t_mode", "");
    if (nc_mode.empty()) nc_mode = mode;
    if (mode != nc_mode) nc_mode = "mixed";
  }
  if (series.empty()) {
    throw Error(ErrorCode::kNotFound, "no metrics in workspace; run metrics first");
  }
  const auto s = aggregate(series, weighting);

  ordered_json j;
  j["videos"] = s.video_count;
  j["frame_pairs"] = s.frame_count;
  j["std_convention"] = "population";
  j["weighting"] = std::string(to_string(weighting));
  j["nc_t_mode"] = nc_mode;
  j["avg_dice_t"] = mean_std_json(s.mean_dice_t, s.std_dice_t);
  j["avg_nc_t"] = mean_std_json(s.mean_nc_t, s.std_nc_t);
  j["avg_dice"] = s.first_frame_dice
                      ? mean_std_json(s.first_frame_dice->mean, s.first_frame_dice->std)
                      : ordered_json(nullptr);
  j["avg_iou"] = s.first_frame_iou
                     ? mean_std_json(s.first_frame_iou->mean, s.first_frame_iou->std)
                     : ordered_json(nullptr);
  j["first_frame_videos"] = 0;
  std::int64_t with_gt = 0;
  for (const auto& x : series) with_gt += x.first_frame_dice.has_value();
  j["first_frame_videos"] = with_gt;
  std::optional<ordered_json> eval;
  if (fs::exists(ctx.ws.eval_path())) {
    stage.input(ctx.ws.eval_path());
    eval = ordered_json::parse(read_text_file(ctx.ws.eval_path()));
    ordered_json d;
    for (const char* key : {"precision", "recall", "map_50", "map_50_95", "ap_95"}) {
      d[key] = (*eval)[key];
    }
    d["subset"] = eval->value("subset", "all");
    j["detection"] = std::move(d);
  } else {
    j["detection"] = nullptr;
  }
  const fs::path out = o.out.empty() ? ctx.ws.report_path() : fs::path(o.out);
  write_file_atomic(out, dump(j));
  stage.output(out);
  stage.commit();

  char buf[160];
  auto row = [&](const char* name, double m, double sd) {
    std::snprintf(buf, sizeof(buf), "%-12s %8.4f \xC2\xB1 %.4f\n", name, m, sd);
    ctx.out << buf;
  };
  row("Avg DICE_t", s.mean_dice_t, s.std_dice_t);
  row("Avg NC_t", s.mean_nc_t, s.std_nc_t);
  if (s.first_frame_dice) row("Avg DICE", s.first_frame_dice->mean, s.first_frame_dice->std);
  if (s.first_frame_iou) row("Avg IoU", s.first_frame_iou->mean, s.first_frame_iou->std);
  ctx.out << "(" << s.video_count << " videos, " << s.frame_count
          << " frame pairs; population std, " << to_string(weighting) << ")\n";
  if (eval) {
    std::snprintf(buf, sizeof(buf),
                  "Precision %.4f  Recall %.4f  mAP@50 %.4f  mAP@50-95 %.4f\n",
                  (*eval)["precision"].get<double>(), (*eval)["recall"].get<double>(),
                  (*eval)["map_50"].get<double>(), (*eval)["map_50_95"].get<double>());
    ctx.out << buf;
  }
  return 0;
}

// ---- synth -----------------------------------------------------------------

struct SynthOpts {
  int videos = 1;
  std::string prefix = "synth";
  SynthConfig cfg;
  std::string occlusion;
};

int cmd_synth(Context& ctx, SynthOpts o) {
  if (o.videos < 1) throw UsageError("--videos must be >= 1");
  if (!o.occlusion.empty()) {
    const auto colon = o.occlusion.find(':');
    try {
      if (colon == std::string::npos) throw std::invalid_argument(o.occlusion);
      o.cfg.occlusion_window = std::pair{std::stoi(o.occlusion.substr(0, colon)),
                                         std::stoi(o.occlusion.substr(colon + 1))};
    } catch (const std::logic_error&) {
      throw UsageError("--occlusion expects START:END");
    }
  }
  validate_config(o.cfg);
  ordered_json params;
  params["videos"] = o.videos;
  params["prefix"] = o.prefix;
  params["width"] = o.cfg.width;
  params["height"] = o.cfg.height;
  params["frames"] = o.cfg.frame_count;
  params["radius"] = o.cfg.blob_radius;
  params["drift"] = o.cfg.drift_per_frame;
  params["amplitude"] = o.cfg.deform_amplitude;
  params["period"] = o.cfg.deform_period;
  params["speckle"] = o.cfg.speckle_count_per_frame;
  params["speckle_size"] = o.cfg.speckle_size;
  params["occlusion"] = o.occlusion;
  Stage stage(ctx, "synth", params);

  std::vector<std::string> ids(o.videos);
  for (int i = 0; i < o.videos; ++i) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s_%03d", o.prefix.c_str(), i + 1);
    ids[i] = buf;
    require_valid_video_id(ids[i]);
  }
  parallel_for(ids.size(), ctx.jobs, [&](std::size_t i) {
    SynthConfig c = o.cfg;
    c.video_id = ids[i];
    c.rng_seed = splitmix64(ctx.seed ^ splitmix64(i + 1));
    auto seqs = generate_sequence(c);
    const auto dir = ctx.ws.video_dir(c.video_id);
    fs::remove_all(dir);
    fs::create_directories(dir);
    write_masks(ctx, seqs.degraded);
    write_file_atomic(ctx.ws.gt_masks_path(c.video_id),
                      sequence_to_jsonl(seqs.ground_truth));
    write_file_atomic(ctx.ws.gt_first_frame_path(c.video_id),
                      mask_record_to_json(c.video_id, 1,
                                          *seqs.ground_truth.frames.front().mask) +
                          "\n");
    ctx.ws.write_meta({c.video_id, c.frame_count, c.width, c.height, c.fps, 0});
  });
  for (const auto& id : ids) stage.output(ctx.ws.video_dir(id));
  stage.commit();
  ctx.out << "generated " << ids.size() << " videos of " << o.cfg.frame_count
          << " frames\n";
  return 0;
}

// ---- serve / verify --------------------------------------------------------

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop = true; }

struct ServeOpts {
  std::optional<int> port;
  std::string host = "127.0.0.1";
  std::string ui;
};

int cmd_serve(Context& ctx, const ServeOpts& o) {
  ServiceOptions so;
  so.root = ctx.ws.root();
  so.host = o.host;
  so.port = o.port.value_or(ctx.cfg.port);
  so.selection = ctx.cfg.selection;
  if (!o.ui.empty()) so.ui_dir = o.ui;
  Service service(so);
  service.start();
  ctx.out << "serving " << fs::absolute(ctx.ws.root()).string() << " on http://"
          << o.host << ":" << service.port() << "\n"
          << std::flush;
  g_stop = false;
  auto old_int = std::signal(SIGINT, on_signal);
  auto old_term = std::signal(SIGTERM, on_signal);
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  service.stop();
  std::signal(SIGINT, old_int);
  std::signal(SIGTERM, old_term);
  return 0;
}

int cmd_verify(Context& ctx) {
  if (!fs::exists(ctx.ws.manifest_path())) {
    throw Error(ErrorCode::kNotFound, "no manifest.json in " + ctx.ws.root().string());
  }
  const auto m = RunManifest::load(ctx.ws.root(), ctx.ws.manifest_path());
  const auto bad = m.verify();
  for (const auto& p : bad) ctx.out << "changed: " << p << "\n";
  ctx.out << m.stages().size() << " stages, " << bad.size() << " mismatched paths\n";
  return bad.empty() ? 0 : 1;
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out,
                std::ostream& err) {
  CLI::App app{"Mask quality metrics, prompt planning and detector data tooling",
               "maskpipe"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--workspace", g.workspace,
                 "Workspace root (default: $MASKPIPE_WORKSPACE or .)");
  app.add_option("--seed", g.seed, "Seed for every random choice");
  app.add_option("--jobs", g.jobs, "Worker threads for per-video stages")
      ->check(CLI::PositiveNumber);

  IngestOpts ingest;
  auto* c_ingest = app.add_subcommand("ingest", "Import masks (and frames) into the workspace");
  c_ingest->add_option("--masks", ingest.masks, "PNG directory or mask JSON-lines")->required();
  c_ingest->add_option("--video-id", ingest.video_id, "Video id (PNG dirs default to the dir name)");
  c_ingest->add_option("--gt", ingest.gt, "Ground-truth masks for every frame");
  c_ingest->add_option("--gt-first-frame", ingest.gt_first_frame,
                       "Ground truth for frame 1 (PNG or JSON-lines)");
  c_ingest->add_option("--frames", ingest.frames, "Directory of frame_NNNNNN images");
  c_ingest->add_option("--video", ingest.video, "Video file for the extraction command");
  c_ingest->add_option("--extract-cmd", ingest.extract_cmd,
                       "Shell template with {input} and {output_dir}");
  c_ingest->add_flag("--trim", ingest.trim, "Drop leading empty frames");
  c_ingest->add_option("--fps", ingest.fps, "Frames per second (informational)");

  MetricsOpts metrics;
  auto* c_metrics = app.add_subcommand("metrics", "Compute DICE_t / NC_t series");
  c_metrics->add_option("--masks", metrics.masks, "Mask source; omit to use the workspace");
  c_metrics->add_option("--video-id", metrics.video_id);
  c_metrics->add_option("--video", metrics.videos, "Workspace video (repeatable)");
  c_metrics->add_option("--out", metrics.out, "CSV output (with --masks)");
  c_metrics->add_option("--summary", metrics.summary, "Summary JSON output (with --masks)");
  c_metrics->add_option("--series-json", metrics.series_json);
  c_metrics->add_option("--gt-first-frame", metrics.gt_first_frame);
  c_metrics->add_option("--nc-mode", metrics.nc_mode, "difference_set or parent_labels")
      ->check(CLI::IsMember({"difference_set", "parent_labels"}));

  SelectOpts select;
  auto* c_select = app.add_subcommand("select-frame", "Suggest the frame to re-annotate");
  c_select->add_option("--nc", select.nc, "Comma-separated NC_t values from frame 2");
  c_select->add_option("--series", select.series, "Metrics CSV");
  c_select->add_option("--video-id", select.video_id);
  c_select->add_option("--video", select.videos);
  c_select->add_option("--mode", select.mode, "max_increase or max_value")
      ->check(CLI::IsMember({"max_increase", "max_value"}));

  SampleOpts sample;
  auto* c_sample = app.add_subcommand("sample", "Uniformly spaced prompt frames");
  c_sample->add_option("--total", sample.total, "Frame count; omit to use the workspace");
  c_sample->add_option("--k", sample.k, "Frames to pick");
  c_sample->add_option("--video", sample.videos);

  ExportOpts exp;
  auto* c_export = app.add_subcommand("export-labels", "Write detector label files");
  c_export->add_option("--masks", exp.masks);
  c_export->add_option("--video-id", exp.video_id);
  c_export->add_option("--out", exp.out);
  c_export->add_option("--source", exp.source, "masks or gt")
      ->check(CLI::IsMember({"masks", "gt"}));
  c_export->add_option("--video", exp.videos);

  SplitOpts split;
  auto* c_split = app.add_subcommand("split", "Leak-free train/val/test split by video");
  c_split->add_option("--ratios", split.ratios, "train,val,test fractions");
  c_split->add_option("--counts", split.counts, "CSV video_id,frame_count instead of the workspace");
  c_split->add_option("--out", split.out);

  EvalOpts eval;
  auto* c_eval = app.add_subcommand("eval-det", "Score detector output against mask boxes");
  c_eval->add_option("--detections", eval.detections, "Detection JSON-lines file or directory")
      ->required();
  c_eval->add_option("--subset", eval.subset, "all, train, val or test")
      ->check(CLI::IsMember({"all", "train", "val", "test"}));
  c_eval->add_option("--gt-source", eval.gt_source, "masks or gt")
      ->check(CLI::IsMember({"masks", "gt"}));
  c_eval->add_option("--conf-cutoff", eval.conf_cutoff,
                     "Confidence cutoff for precision/recall");
  c_eval->add_option("--ap-mode", eval.ap_mode, "interpolated101 or exact")
      ->check(CLI::IsMember({"interpolated101", "exact"}));
  c_eval->add_option("--out", eval.out);

  ReportOpts report;
  auto* c_report = app.add_subcommand("report", "Aggregate metrics into a summary table");
  c_report->add_option("--weighting", report.weighting, "pooled_frames or per_video_mean")
      ->check(CLI::IsMember({"pooled_frames", "per_video_mean"}));
  c_report->add_option("--out", report.out);

  SynthOpts synth;
  auto* c_synth = app.add_subcommand("synth", "Generate synthetic blob videos");
  c_synth->add_option("--videos", synth.videos);
  c_synth->add_option("--prefix", synth.prefix);
  c_synth->add_option("--frames", synth.cfg.frame_count);
  c_synth->add_option("--width", synth.cfg.width);
  c_synth->add_option("--height", synth.cfg.height);
  c_synth->add_option("--radius", synth.cfg.blob_radius);
  c_synth->add_option("--drift", synth.cfg.drift_per_frame);
  c_synth->add_option("--amplitude", synth.cfg.deform_amplitude);
  c_synth->add_option("--period", synth.cfg.deform_period);
  c_synth->add_option("--speckle", synth.cfg.speckle_count_per_frame);
  c_synth->add_option("--speckle-size", synth.cfg.speckle_size);
  c_synth->add_option("--occlusion", synth.occlusion, "START:END, inclusive");
  c_synth->add_option("--fps", synth.cfg.fps);

  ServeOpts serve;
  auto* c_serve = app.add_subcommand("serve", "Serve the workspace over HTTP");
  c_serve->add_option("--port", serve.port);
  c_serve->add_option("--host", serve.host);
  c_serve->add_option("--ui", serve.ui, "Static files mounted at /ui");

  auto* c_verify = app.add_subcommand("verify", "Check manifest digests against disk");

  std::vector<std::string> storage{"maskpipe"};
  storage.insert(storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : storage) argv.push_back(s.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    const auto root = resolve_workspace_root(g.workspace);
    Context ctx{load_config(root), Workspace(root), g.seed, 1, out, err};
    ctx.jobs = g.jobs.value_or(ctx.cfg.jobs);
    if (c_ingest->parsed()) return cmd_ingest(ctx, ingest);
    if (c_metrics->parsed()) return cmd_metrics(ctx, metrics);
    if (c_select->parsed()) return cmd_select(ctx, select);
    if (c_sample->parsed()) return cmd_sample(ctx, sample);
    if (c_export->parsed()) return cmd_export(ctx, exp);
    if (c_split->parsed()) return cmd_split(ctx, split);
    if (c_eval->parsed()) return cmd_eval(ctx, eval);
    if (c_report->parsed()) return cmd_report(ctx, report);
    if (c_synth->parsed()) return cmd_synth(ctx, synth);
    if (c_serve->parsed()) return cmd_serve(ctx, serve);
    if (c_verify->parsed()) return cmd_verify(ctx);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    err << "error [" << error_code_name(e.code()) << "]: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace maskpipe
