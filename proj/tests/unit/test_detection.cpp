#include <doctest.h>

#include <cmath>
#include <random>

#include <json.hpp>

#include "maskpipe/detection.hpp"
#include "maskpipe/error.hpp"
#include "oracles.hpp"

using namespace maskpipe;

TEST_CASE("box_iou examples") {
  CHECK(box_iou({0, 0, 9, 9}, {0, 0, 9, 9}) == 1.0);
  CHECK(box_iou({0, 0, 9, 9}, {10, 0, 19, 9}) == 0.0);
  CHECK(box_iou({0, 0, 9, 9}, {5, 0, 14, 9}) == 50.0 / 150.0);
  CHECK(box_iou({0, 0, 19, 9}, {5, 0, 24, 9}) == 0.6);
  CHECK(box_iou({3, 3, 3, 3}, {3, 3, 3, 3}) == 1.0);
}

TEST_CASE("match_detections examples") {
  const std::vector<Box> gt{{0, 0, 19, 9}};
  const std::vector<DetectionBox> exact{{{0, 0, 19, 9}, 0.9}};
  auto m = match_detections(exact, gt, 0.5);
  CHECK(m.true_positive == std::vector<bool>{true});
  CHECK(m.unmatched_gt == 0);

  m = match_detections(exact, std::vector<Box>{}, 0.5);
  CHECK(m.true_positive == std::vector<bool>{false});

  // Both at IoU 0.6; input order lists the weaker one first.
  const std::vector<DetectionBox> two{{{5, 0, 24, 9}, 0.8},
                                      {{5, 0, 24, 9}, 0.9}};
  m = match_detections(two, gt, 0.5);
  CHECK(m.true_positive == std::vector<bool>{true, false});
  CHECK(m.order == std::vector<std::size_t>{1, 0});

  const std::vector<DetectionBox> tied{{{5, 0, 24, 9}, 0.7},
                                       {{0, 0, 19, 9}, 0.7}};
  m = match_detections(tied, gt, 0.5);
  CHECK(m.order == std::vector<std::size_t>{0, 1});
  CHECK(m.true_positive == std::vector<bool>{true, false});
}

TEST_CASE("match picks the highest-IoU free ground truth") {
  const std::vector<Box> gt{{0, 0, 9, 9}, {2, 0, 11, 9}};
  const std::vector<DetectionBox> d{{{2, 0, 11, 9}, 0.9}, {{0, 0, 9, 9}, 0.8}};
  const auto m = match_detections(d, gt, 0.5);
  CHECK(m.true_positive == std::vector<bool>{true, true});
  CHECK(m.unmatched_gt == 0);
}

TEST_CASE("average_precision examples") {
  CHECK(average_precision({true}, 1) == 1.0);
  CHECK(average_precision({false}, 1) == 0.0);
  CHECK(average_precision({true, false}, 1) == 1.0);
  CHECK(average_precision({}, 0) == 1.0);
  CHECK(average_precision({false}, 0) == 0.0);
  CHECK(average_precision({}, 3) == 0.0);
  // Half recall at precision 1: recall points 0.00..0.50 are covered.
  CHECK(average_precision({true}, 2) == doctest::Approx(51.0 / 101.0));
  CHECK(average_precision({true}, 2, ApMode::kExactEnvelope) == 0.5);
}

TEST_CASE("101-point AP tracks the exact envelope on random cases") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const int total_gt = 1 + static_cast<int>(rng() % 30);
    const int n = static_cast<int>(rng() % 60);
    std::vector<bool> flags;
    int tp = 0;
    for (int i = 0; i < n; ++i) {
      const bool hit = tp < total_gt && rng() % 3 != 0;
      tp += hit;
      flags.push_back(hit);
    }
    const double exact = oracle::brute_force_envelope_area(flags, total_gt);
    REQUIRE(average_precision(flags, total_gt, ApMode::kExactEnvelope) ==
            doctest::Approx(exact).epsilon(1e-12));
    REQUIRE(std::abs(average_precision(flags, total_gt) - exact) <= 0.01);
  }
}

namespace {

FrameGroundTruth jitter_gt(int frames) {
  FrameGroundTruth gt;
  for (int f = 1; f <= frames; ++f) gt[{"v", f}] = {{10, 10, 29, 19}};
  return gt;
}

FrameDetections shifted(const FrameGroundTruth& gt, int dx) {
  FrameDetections d;
  for (const auto& [key, boxes] : gt) {
    for (const auto& b : boxes) {
      d[key].push_back({{b.x1 + dx, b.y1, b.x2 + dx, b.y2}, 0.9});
    }
  }
  return d;
}

}  // namespace

TEST_CASE("evaluate: perfect detector") {
  const auto gt = jitter_gt(20);
  const auto r = evaluate(shifted(gt, 0), gt);
  CHECK(r.precision == 1.0);
  CHECK(r.recall == 1.0);
  CHECK(r.map_50 == 1.0);
  CHECK(r.map_50_95 == 1.0);
  CHECK(r.ap_95 == 1.0);
  CHECK(r.total_gt == 20);
  CHECK_FALSE(r.vacuous);
}

TEST_CASE("evaluate: IoU 0.6 jitter") {
  const auto gt = jitter_gt(20);
  const auto r = evaluate(shifted(gt, 5), gt);
  CHECK(r.map_50 == 1.0);
  CHECK(r.ap_per_threshold.at(55) == 1.0);
  CHECK(r.ap_per_threshold.at(60) == 1.0);
  for (int t = 65; t <= 95; t += 5) CHECK(r.ap_per_threshold.at(t) == 0.0);
  CHECK(r.map_50_95 == doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("evaluate: no detections") {
  const auto gt = jitter_gt(4);
  const auto r = evaluate({}, gt);
  CHECK(r.recall == 0.0);
  CHECK(r.map_50 == 0.0);
  CHECK(r.map_50_95 == 0.0);
  const auto vac = evaluate({}, FrameGroundTruth{{{"v", 1}, {}}});
  CHECK(vac.vacuous);
  CHECK(vac.map_50 == 1.0);
}

TEST_CASE("evaluate rejects detections on unknown frames") {
  FrameDetections d{{{"v", 99}, {{{0, 0, 1, 1}, 0.5}}}};
  try {
    evaluate(d, jitter_gt(3));
    FAIL("expected FrameMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kFrameMismatch);
  }
}

TEST_CASE("confidence cutoff applies to precision and recall only") {
  auto gt = jitter_gt(2);
  auto d = shifted(gt, 0);
  d[{"v", 2}][0].confidence = 0.2;
  d[{"v", 1}].push_back({{100, 100, 110, 110}, 0.1});
  EvalOptions opt;
  opt.confidence_cutoff = 0.5;
  const auto r = evaluate(d, gt, opt);
  CHECK(r.precision == 1.0);
  CHECK(r.recall == 0.5);
  CHECK(r.map_50 == 1.0);
  const auto all = evaluate(d, gt);
  CHECK(all.precision == doctest::Approx(2.0 / 3.0));
  CHECK(all.recall == 1.0);
}

namespace {

struct RandomCase {
  FrameDetections dets;
  FrameGroundTruth gts;
};

RandomCase random_case(std::mt19937_64& rng, int frames) {
  RandomCase c;
  for (int f = 1; f <= frames; ++f) {
    auto& g = c.gts[{"v", f}];
    const int ng = static_cast<int>(rng() % 4);
    for (int i = 0; i < ng; ++i) {
      const int x = static_cast<int>(rng() % 80), y = static_cast<int>(rng() % 80);
      g.push_back({x, y, x + 5 + static_cast<int>(rng() % 20),
                   y + 5 + static_cast<int>(rng() % 20)});
    }
    const int nd = static_cast<int>(rng() % 5);
    for (int i = 0; i < nd; ++i) {
      Box b;
      if (!g.empty() && rng() % 3) {
        const auto& t = g[rng() % g.size()];
        const int j = static_cast<int>(rng() % 7) - 3;
        b = {t.x1 + j, t.y1, t.x2 + j, t.y2 + static_cast<int>(rng() % 3)};
      } else {
        const int x = static_cast<int>(rng() % 80);
        b = {x, x, x + 10, x + 10};
      }
      // Distinct confidences keep the pooled order frame-independent.
      c.dets[{"v", f}].push_back({b, static_cast<double>(rng() % 1000000) / 1e6});
    }
  }
  return c;
}

}  // namespace

TEST_CASE("AP is non-increasing in the IoU threshold") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const auto c = random_case(rng, 6);
    const auto r = evaluate(c.dets, c.gts);
    double prev = 2.0;
    for (const auto& [t, ap] : r.ap_per_threshold) {
      REQUIRE(ap <= prev + 1e-12);
      REQUIRE(ap >= 0.0);
      REQUIRE(ap <= 1.0);
      prev = ap;
    }
    REQUIRE(r.map_50 == r.ap_per_threshold.at(50));
  }
}

TEST_CASE("duplicating every frame leaves the scores unchanged") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    const auto c = random_case(rng, 5);
    RandomCase twice = c;
    for (const auto& [k, g] : c.gts) twice.gts[{"w", k.frame}] = g;
    for (const auto& [k, d] : c.dets) twice.dets[{"w", k.frame}] = d;
    const auto a = evaluate(c.dets, c.gts);
    const auto b = evaluate(twice.dets, twice.gts);
    REQUIRE(a.precision == doctest::Approx(b.precision).epsilon(1e-12));
    REQUIRE(a.recall == doctest::Approx(b.recall).epsilon(1e-12));
    for (const auto& [t, ap] : a.ap_per_threshold) {
      REQUIRE(std::abs(ap - b.ap_per_threshold.at(t)) <= 1e-12);
    }
  }
}

TEST_CASE("detections JSONL round trip and validation") {
  FrameDetections d{{{"a", 1}, {{{1, 2, 3, 4}, 0.25}}},
                    {{"b", 7}, {{{0, 0, 5, 5}, 1.0}, {{2, 2, 3, 3}, 0.5}}}};
  const auto text = detections_to_jsonl(d);
  const auto back = read_detections_jsonl(text);
  REQUIRE(back.size() == 2);
  CHECK(back.at({"b", 7}).size() == 2);
  CHECK(back.at({"a", 1})[0].box == Box{1, 2, 3, 4});
  CHECK(detections_to_jsonl(back) == text);
  CHECK_THROWS_AS(read_detections_jsonl(
                      R"({"video_id":"a","frame":1,"boxes":[{"x1":5,"y1":0,"x2":1,"y2":1,"confidence":0.5}]})"),
                  Error);
  CHECK_THROWS_AS(read_detections_jsonl("not json"), Error);
}

TEST_CASE("eval report JSON carries both AP readings") {
  const auto gt = jitter_gt(3);
  const auto j = nlohmann::json::parse(eval_report_to_json(evaluate(shifted(gt, 5), gt)));
  CHECK(j.at("map_50").get<double>() == 1.0);
  CHECK(j.at("ap_95").get<double>() == 0.0);
  CHECK(j.at("ap_per_threshold").at("0.60").get<double>() == 1.0);
  CHECK(j.at("ap_per_threshold").size() == 10);
}
