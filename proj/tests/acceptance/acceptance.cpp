// One PASS/FAIL line per acceptance criterion. Exit status is the number of
// failed criteria (0 when all pass).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <json.hpp>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "e2e.hpp"
#include "maskpipe/detection.hpp"
#include "maskpipe/fileutil.hpp"
#include "maskpipe/labeling.hpp"
#include "maskpipe/metrics.hpp"
#include "maskpipe/pipeline.hpp"
#include "maskpipe/synth.hpp"
#include "oracles.hpp"
#include "tempdir.hpp"

using namespace maskpipe;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Collects the first failure message; later ones only bump the count.
struct Check {
  int failures = 0;
  std::string first;

  void expect(bool ok, const std::function<std::string()>& what) {
    if (ok) return;
    if (failures++ == 0) first = what();
  }
  bool ok() const { return failures == 0; }
};

int g_failed = 0;

void report(const char* name, const Check& c, const std::string& detail) {
  std::string text = detail;
  if (!c.ok()) {
    text += "; " + std::to_string(c.failures) + " violation(s), first: " + c.first;
  }
  std::printf("%s  %-22s %s\n", c.ok() ? "PASS" : "FAIL", name, text.c_str());
  std::fflush(stdout);
  if (!c.ok()) ++g_failed;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

// ---------------------------------------------------------------------------

void compare_pair(Check& c, const Bitmap& cur, const Bitmap& prev, const char* tag) {
  const Mask a = Mask::from_bitmap(cur);
  const Mask b = Mask::from_bitmap(prev);
  const double d = dice_t(a, b);
  const double od = oracle::naive_dice(cur, prev);
  const int n1 = nc_t(a, b, NcMode::kDifferenceSet);
  const int o1 = oracle::naive_nc_difference(cur, prev);
  const int n2 = nc_t(a, b, NcMode::kParentLabels);
  const int o2 = oracle::naive_nc_parent(cur, prev);
  c.expect(d == od && n1 == o1 && n2 == o2, [&] {
    std::ostringstream s;
    s << tag << " dice " << d << " vs " << od << ", nc " << n1 << "/" << n2 << " vs " << o1
      << "/" << o2;
    return s.str();
  });
}

void oracle_equivalence() {
  const auto t0 = Clock::now();
  Check c;
  std::mt19937_64 rng(1);
  std::int64_t pairs = 0;

  // Every 4x4 mask as the current frame, against its 16 one-pixel edits,
  // the empty and full masks, itself, its complement and 4 random masks.
  for (std::uint64_t bits = 0; bits < (1u << 16); ++bits) {
    const Bitmap cur = oracle::bitmap_from_bits(4, 4, bits);
    std::vector<std::uint64_t> partners = {0, 0xFFFF, bits, ~bits & 0xFFFF};
    for (int i = 0; i < 16; ++i) partners.push_back(bits ^ (1u << i));
    for (int i = 0; i < 4; ++i) partners.push_back(rng() & 0xFFFF);
    for (const auto p : partners) {
      compare_pair(c, cur, oracle::bitmap_from_bits(4, 4, p), "4x4");
      ++pairs;
    }
  }
  // Every ordered pair of 2x4 masks (2^8 x 2^8 = 2^16 pairs).
  for (std::uint64_t x = 0; x < 256; ++x) {
    const Bitmap cur = oracle::bitmap_from_bits(4, 2, x);
    for (std::uint64_t y = 0; y < 256; ++y) {
      compare_pair(c, cur, oracle::bitmap_from_bits(4, 2, y), "4x2");
      ++pairs;
    }
  }
  // 1,000 random 64x64 pairs over a spread of densities.
  for (int i = 0; i < 1000; ++i) {
    const double da = 0.02 + 0.96 * (i % 25) / 24.0;
    const double db = 0.02 + 0.96 * ((i * 7) % 25) / 24.0;
    compare_pair(c, oracle::random_bitmap(64, 64, da, rng),
                 oracle::random_bitmap(64, 64, db, rng), "64x64");
    ++pairs;
  }
  const double secs = seconds_since(t0);
  c.expect(secs < 60.0, [&] { return fmt("runtime %.1f s >= 60 s", secs); });
  report("oracle-equivalence", c,
         std::to_string(pairs) + " pairs, both nc_t modes, " + fmt("%.1f s", secs));
}

void labeling() {
  const auto t0 = Clock::now();
  Check c;
  auto same = [&](const Bitmap& b, const char* tag) {
    const auto got = label_components(Mask::from_bitmap(b));
    int count = 0;
    const auto want = oracle::flood_fill_labels(b, &count);
    c.expect(got.component_count == count && got.label_image() == want,
             [&] { return std::string(tag) + " label image differs"; });
  };
  for (std::uint64_t bits = 0; bits < (1u << 16); ++bits) {
    same(oracle::bitmap_from_bits(4, 4, bits), "4x4");
  }
  std::mt19937_64 rng(2);
  for (int i = 0; i < 1000; ++i) {
    same(oracle::random_bitmap(32, 32, 0.05 + 0.9 * (i % 19) / 18.0, rng), "32x32");
  }
  // (0,0) and (1,1): joined only through a corner.
  Bitmap diag(2, 2);
  diag.set(0, 0, true);
  diag.set(1, 1, true);
  const int diag_count = count_components(Mask::from_bitmap(diag));
  c.expect(diag_count == 1, [&] { return "diagonal pair gave " + std::to_string(diag_count); });
  report("labeling", c,
         "65536 4x4 + 1000 32x32 exact, diagonal -> " + std::to_string(diag_count) +
             " component, " + fmt("%.1f s", seconds_since(t0)));
}

void sampling() {
  const auto t0 = Clock::now();
  Check c;
  const auto ex = sample_prompt_frames(100, 5);
  c.expect(ex == std::vector<int>{1, 21, 41, 61, 81}, [] { return "(100,5) mismatch"; });
  std::int64_t cases = 0;
  auto property = [&](int total, int k) {
    const auto f = sample_prompt_frames(total, k);
    bool ok = static_cast<int>(f.size()) == k && f.front() == 1 && f.back() <= total;
    for (std::size_t i = 1; ok && i < f.size(); ++i) ok = f[i] > f[i - 1];
    c.expect(ok, [&] { return "total " + std::to_string(total) + " k " + std::to_string(k); });
    ++cases;
  };
  // Exhaustive for small totals, every k = 1 and k = total up to 10,000,
  // and random pairs across the whole range.
  for (int total = 1; total <= 300; ++total)
    for (int k = 1; k <= total; ++k) property(total, k);
  for (int total = 301; total <= 10000; ++total) {
    property(total, 1);
    property(total, total);
    property(total, total - 1);
    property(total, total / 2 + 1);
  }
  std::mt19937_64 rng(3);
  for (int i = 0; i < 20000; ++i) {
    const int total = 1 + static_cast<int>(rng() % 10000);
    property(total, 1 + static_cast<int>(rng() % total));
  }
  report("sampling", c,
         "(100,5) -> 1 21 41 61 81; " + std::to_string(cases) + " (total,k) cases, " +
             fmt("%.1f s", seconds_since(t0)));
}

void speckle_sensitivity() {
  Check c;
  std::string detail;
  for (const int k : {1, 5, 20}) {
    SynthConfig cfg;
    cfg.video_id = "speckle";
    cfg.frame_count = 60;
    cfg.speckle_count_per_frame = k;
    cfg.speckle_size = 1;
    cfg.rng_seed = 100 + k;
    const auto s = generate_sequence(cfg);
    const auto clean = series_metrics(s.ground_truth, std::nullopt);
    const auto dirty = series_metrics(s.degraded, std::nullopt);
    for (std::size_t i = 0; i < clean.nc_t.size(); ++i) {
      c.expect(dirty.nc_t[i] == clean.nc_t[i] + k, [&] {
        return "k " + std::to_string(k) + " frame " + std::to_string(i + 2) + ": " +
               std::to_string(dirty.nc_t[i]) + " vs clean " + std::to_string(clean.nc_t[i]);
      });
    }
    const double dm = std::abs(mean_std(dirty.dice_t).mean - mean_std(clean.dice_t).mean);
    c.expect(dm < 0.02, [&] { return "k " + std::to_string(k) + fmt(" dice change %.4f", dm); });
    detail += "k=" + std::to_string(k) + fmt(" d(dice)=%.5f ", dm);
  }
  report("speckle-sensitivity", c, detail + "(nc_t +k exact on every frame)");
}

void occlusion() {
  Check c;
  SynthConfig cfg;
  cfg.video_id = "occl";
  cfg.frame_count = 40;
  cfg.occlusion_window = std::pair{10, 20};
  cfg.rng_seed = 9;
  const auto s = generate_sequence(cfg);
  const auto m = series_metrics(s.ground_truth, std::nullopt);
  auto dice_at = [&](int n) { return m.dice_t[n - 2]; };
  auto nc_at = [&](int n) { return m.nc_t[n - 2]; };
  c.expect(dice_at(10) == 0.0, [&] { return fmt("dice_t(10) = %g", dice_at(10)); });
  c.expect(dice_at(21) == 0.0, [&] { return fmt("dice_t(21) = %g", dice_at(21)); });
  for (int n = 10; n <= 20; ++n) {
    c.expect(nc_at(n) == 0, [&] { return "nc_t(" + std::to_string(n) + ") != 0"; });
  }
  for (int n = 11; n <= 20; ++n) {
    c.expect(dice_at(n) == 1.0, [&] { return "dice_t inside window != 1"; });
  }
  // Spike: the increase into frame 21 is the largest increase anywhere.
  c.expect(nc_at(21) >= 1, [&] { return "no nc_t at reappearance"; });
  const int jump = nc_at(21) - nc_at(20);
  for (int n = 3; n <= 40; ++n) {
    c.expect(nc_at(n) - nc_at(n - 1) <= jump,
             [&] { return "larger nc_t increase at frame " + std::to_string(n); });
  }
  for (int n = 2; n <= 40; ++n) {
    if (n == 10 || n == 21 || (n > 10 && n <= 20)) continue;
    c.expect(dice_at(n) > 0.5, [&] { return "dice_t(" + std::to_string(n) + ") collapsed"; });
  }
  const auto pick = select_reannotation_frame(m.nc_t);
  c.expect(pick == 21, [&] { return "suggested frame " + (pick ? std::to_string(*pick) : "none"); });
  report("occlusion", c,
         "window 10-20: dice_t(10)=dice_t(21)=0, nc_t=0 on 10..20, nc_t(21)=" +
             std::to_string(nc_at(21)) + ", suggestion " + (pick ? std::to_string(*pick) : "none"));
}

// Independent greedy matcher over pooled detections for the AP oracle.
double naive_iou(const Box& a, const Box& b) {
  const double iw = std::max(0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1) + 1);
  const double ih = std::max(0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1) + 1);
  const double inter = iw * ih;
  const double area_a = double(a.x2 - a.x1 + 1) * (a.y2 - a.y1 + 1);
  const double area_b = double(b.x2 - b.x1 + 1) * (b.y2 - b.y1 + 1);
  return inter / (area_a + area_b - inter);
}

double oracle_ap(const FrameDetections& dets, const FrameGroundTruth& gts, double thr) {
  struct Entry {
    FrameKey key;
    DetectionBox det;
  };
  std::vector<Entry> all;
  for (const auto& [k, v] : dets)
    for (const auto& d : v) all.push_back({k, d});
  std::stable_sort(all.begin(), all.end(), [](const Entry& a, const Entry& b) {
    return a.det.confidence > b.det.confidence;
  });
  std::map<FrameKey, std::vector<bool>> used;
  int total = 0;
  for (const auto& [k, v] : gts) {
    used[k].assign(v.size(), false);
    total += static_cast<int>(v.size());
  }
  std::vector<bool> flags;
  for (const auto& e : all) {
    const auto& g = gts.at(e.key);
    int best = -1;
    double best_iou = 0.0;
    for (std::size_t j = 0; j < g.size(); ++j) {
      if (used[e.key][j]) continue;
      const double iou = naive_iou(e.det.box, g[j]);
      if (iou >= thr && iou > best_iou) {
        best = static_cast<int>(j);
        best_iou = iou;
      }
    }
    if (best >= 0) used[e.key][best] = true;
    flags.push_back(best >= 0);
  }
  return oracle::brute_force_envelope_area(flags, total);
}

void detection_eval() {
  Check c;
  FrameGroundTruth gt;
  FrameDetections perfect, jitter;
  for (int f = 1; f <= 20; ++f) {
    const Box b{10, 10, 29, 19};
    gt[{"v", f}] = {b};
    perfect[{"v", f}] = {{b, 0.9}};
    // 20x10 box moved 5 px sideways: intersection 150, union 250.
    jitter[{"v", f}] = {{{15, 10, 34, 19}, 0.9}};
  }
  const auto p = evaluate(perfect, gt);
  c.expect(p.precision == 1.0 && p.recall == 1.0 && p.map_50 == 1.0 && p.map_50_95 == 1.0,
           [&] { return "perfect detector below 1.0"; });
  const auto j = evaluate(jitter, gt);
  c.expect(j.map_50 == 1.0, [&] { return fmt("jitter mAP@50 = %g", j.map_50); });
  c.expect(j.ap_per_threshold.at(65) == 0.0,
           [&] { return fmt("jitter AP@0.65 = %g", j.ap_per_threshold.at(65)); });

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> conf(0.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    FrameGroundTruth g;
    FrameDetections d;
    const int frames = 1 + static_cast<int>(rng() % 12);
    for (int f = 1; f <= frames; ++f) {
      auto& gb = g[{"r", f}];
      auto& db = d[{"r", f}];
      const int objects = static_cast<int>(rng() % 4);
      for (int o = 0; o < objects; ++o) {
        const int x = static_cast<int>(rng() % 200), y = static_cast<int>(rng() % 200);
        const int w = 5 + static_cast<int>(rng() % 40), h = 5 + static_cast<int>(rng() % 40);
        gb.push_back({x, y, x + w, y + h});
        if (rng() % 5 != 0) {
          const int dx = static_cast<int>(rng() % 9) - 4, dy = static_cast<int>(rng() % 9) - 4;
          db.push_back({{x + dx, y + dy, x + w + dx, y + h + dy}, conf(rng)});
        }
      }
      const int fps = static_cast<int>(rng() % 3);
      for (int o = 0; o < fps; ++o) {
        const int x = static_cast<int>(rng() % 240), y = static_cast<int>(rng() % 240);
        db.push_back({{x, y, x + 10, y + 10}, conf(rng)});
      }
    }
    const auto r = evaluate(d, g);
    if (r.total_gt == 0) continue;
    const double exact = oracle_ap(d, g, 0.5);
    const double err = std::abs(r.map_50 - exact);
    worst = std::max(worst, err);
    c.expect(err <= 0.01, [&] { return fmt("AP@50 off by %.4f", err); });
  }
  report("detection-eval", c,
         "perfect = 1.0 x4, jitter mAP@50 " + fmt("%g", j.map_50) + " AP@0.65 " +
             fmt("%g", j.ap_per_threshold.at(65)) + ", 100 random max |err| " +
             fmt("%.4f", worst));
}

void split() {
  const auto t0 = Clock::now();
  Check c;
  std::mt19937_64 rng(5);
  int done = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 3 + static_cast<int>(rng() % 60);
    std::vector<VideoFrameCount> videos;
    std::int64_t total = 0, largest = 0;
    for (int i = 0; i < n; ++i) {
      const std::int64_t f = 1 + static_cast<std::int64_t>(rng() % 5000);
      videos.push_back({"v" + std::to_string(i), f});
      total += f;
      largest = std::max(largest, f);
    }
    double a = 0.05 + 0.9 * std::uniform_real_distribution<double>()(rng);
    double b = (1.0 - a) * std::uniform_real_distribution<double>(0.05, 0.95)(rng);
    SplitRatios ratios{a, b, 1.0 - a - b};
    const std::uint64_t seed = rng();
    const auto m = split_by_video(videos, ratios, seed);
    std::set<std::string> seen;
    std::size_t assigned = 0;
    for (const auto* s : {&m.train, &m.val, &m.test}) {
      for (const auto& id : *s) seen.insert(id);
      assigned += s->size();
    }
    c.expect(seen.size() == assigned && assigned == videos.size(),
             [&] { return "overlap or missing video in trial " + std::to_string(trial); });
    const double fr[3] = {ratios.train, ratios.val, ratios.test};
    const std::int64_t got[3] = {m.frames_in(m.train), m.frames_in(m.val), m.frames_in(m.test)};
    for (int s = 0; s < 3; ++s) {
      const double dev = std::abs(got[s] - fr[s] * total);
      c.expect(dev <= largest, [&] {
        return "trial " + std::to_string(trial) + fmt(" deviation %.0f", dev) +
               " > largest video " + std::to_string(largest);
      });
    }
    c.expect(split_manifest_to_json(m) ==
                 split_manifest_to_json(split_by_video(videos, ratios, seed)),
             [&] { return "manifest differs on rerun"; });
    ++done;
  }
  report("split", c,
         std::to_string(done) + " instances: disjoint, within one video of target, "
                                "byte-identical reruns, " +
             fmt("%.1f s", seconds_since(t0)));
}

void e2e_determinism() {
  const auto t0 = Clock::now();
  Check c;
  ::setenv("SOURCE_DATE_EPOCH", "1700000000", 1);
  testing::TempDir t;
  testing::E2eOptions o;  // 10 videos x 300 frames at 320x240
  o.jobs = 1;
  std::vector<std::vector<std::pair<std::string, std::string>>> snaps;
  for (const char* run : {"run_a", "run_b"}) {
    const auto err = testing::run_synthetic_pipeline(t / run, o);
    c.expect(err.empty(), [&] { return std::string(run) + " " + err; });
    snaps.push_back(testing::snapshot_tree(t / run));
  }
  c.expect(snaps[0] == snaps[1], [&] {
    for (std::size_t i = 0; i < std::min(snaps[0].size(), snaps[1].size()); ++i) {
      if (snaps[0][i] != snaps[1][i]) return "differs at " + snaps[0][i].first;
    }
    return std::string("file sets differ");
  });
  std::size_t stages = 0;
  if (fs::exists(t / "run_a" / "manifest.json")) {
    const auto m = nlohmann::json::parse(read_text_file(t / "run_a" / "manifest.json"));
    stages = m["stages"].size();
    std::vector<std::string> names;
    for (const auto& s : m["stages"]) names.push_back(s["name"]);
    c.expect(names == std::vector<std::string>{"synth", "metrics", "select-frame", "sample",
                                               "export-labels", "split", "eval-det", "report"},
             [] { return "manifest stage list incomplete"; });
  }
  const double secs = seconds_since(t0);
  c.expect(secs < 300.0, [&] { return fmt("took %.1f s", secs); });
  report("e2e-determinism", c,
         "10 videos x 300 frames 320x240, two runs, " + std::to_string(snaps[0].size()) +
             " files identical, " + std::to_string(stages) + " manifest stages, " +
             fmt("%.1f s", secs));
}

void throughput() {
  Check c;
  // 20 videos x 5,000 frames of 640x480 with specks, generated up front;
  // only the metric pass is timed.
  constexpr int kVideos = 20;
  constexpr int kFrames = 5000;
  std::vector<VideoSequence> seqs;
  for (int v = 0; v < kVideos; ++v) {
    SynthConfig cfg;
    cfg.video_id = "tp" + std::to_string(v);
    cfg.width = 640;
    cfg.height = 480;
    cfg.frame_count = kFrames;
    cfg.blob_radius = 90;
    cfg.drift_per_frame = 0.05;
    cfg.speckle_count_per_frame = 5;
    cfg.rng_seed = 1000 + v;
    seqs.push_back(std::move(generate_sequence(cfg).degraded));
  }
  const auto t0 = Clock::now();
  std::int64_t pairs = 0;
  for (const auto& s : seqs) pairs += series_metrics(s, std::nullopt).dice_t.size();
  const double secs = seconds_since(t0);
  const std::int64_t frames = static_cast<std::int64_t>(kVideos) * kFrames;
  c.expect(secs < 120.0, [&] { return fmt("took %.1f s", secs); });
  report("throughput", c,
         std::to_string(frames) + " frames 640x480 (" + std::to_string(pairs) +
             " pairs) single-threaded in " + fmt("%.2f s", secs) +
             fmt(" (%.0f frames/s)", frames / secs));
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, void (*)()>> criteria = {
      {"oracle-equivalence", oracle_equivalence},
      {"labeling", labeling},
      {"sampling", sampling},
      {"speckle-sensitivity", speckle_sensitivity},
      {"occlusion", occlusion},
      {"detection-eval", detection_eval},
      {"split", split},
      {"e2e-determinism", e2e_determinism},
      {"throughput", throughput},
  };
  for (const auto& [name, fn] : criteria) {
    try {
      fn();
    } catch (const std::exception& e) {
      Check c;
      c.expect(false, [&] { return std::string("exception: ") + e.what(); });
      report(name, c, "");
    }
  }
  std::printf("%d criteria failed\n", g_failed);
  return g_failed;
}
