#include <doctest.h>

#include <httplib.h>
#include <json.hpp>

#include <random>
#include <thread>

#include "e2e.hpp"
#include "maskpipe/error.hpp"
#include "maskpipe/fileutil.hpp"
#include "maskpipe/mask_io.hpp"
#include "maskpipe/metrics_io.hpp"
#include "maskpipe/service.hpp"
#include "maskpipe/workspace.hpp"
#include "tempdir.hpp"

using namespace maskpipe;
using maskpipe::testing::run_cli;
using maskpipe::testing::TempDir;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Two synthetic 64x48 videos; metrics computed for synth_001 only.
struct Fixture {
  TempDir t;
  fs::path root = t / "ws";
  std::unique_ptr<Service> service;
  std::unique_ptr<httplib::Client> client;

  Fixture() {
    REQUIRE(run_cli({"--workspace", root.string(), "synth", "--videos", "2", "--frames", "12",
                     "--width", "64", "--height", "48", "--radius", "8"})
                .code == 0);
    REQUIRE(run_cli({"--workspace", root.string(), "metrics", "--video", "synth_001"}).code ==
            0);
    fs::create_directories(Workspace(root).frames_dir("synth_001"));
    write_file_atomic(Workspace(root).frames_dir("synth_001") / "frame_000003.jpg", "JPEG!");
    fs::create_directories(t / "ui");
    write_file_atomic(t / "ui" / "index.html", "<html></html>");
    ServiceOptions o;
    o.root = root;
    o.port = 0;
    o.ui_dir = t / "ui";
    service = std::make_unique<Service>(o);
    service->start();
    client = std::make_unique<httplib::Client>("127.0.0.1", service->port());
  }
};

json body(const httplib::Result& r) { return json::parse(r->body); }

std::string prompts_file(const Fixture& f, const std::string& id) {
  const auto p = Workspace(f.root).prompts_path(id);
  return fs::exists(p) ? read_text_file(p) : "";
}

}  // namespace

TEST_CASE("GET /videos lists both videos") {
  Fixture f;
  auto r = f.client->Get("/videos");
  REQUIRE(r);
  CHECK(r->status == 200);
  const auto j = body(r);
  REQUIRE(j.is_array());
  REQUIRE(j.size() == 2);
  CHECK(j[0]["video_id"] == "synth_001");
  CHECK(j[1]["video_id"] == "synth_002");
  CHECK(j[0]["frame_count"] == 12);
  CHECK(j[0]["width"] == 64);
  CHECK(j[0]["height"] == 48);
}

TEST_CASE("GET /metrics before metrics ran is a JSON 404") {
  Fixture f;
  auto r = f.client->Get("/metrics/synth_002");
  REQUIRE(r);
  CHECK(r->status == 404);
  const auto j = body(r);
  CHECK(j["error"] == "not_found");
  CHECK(j.contains("message"));

  r = f.client->Get("/metrics/synth_001");
  REQUIRE(r);
  CHECK(r->status == 200);
  const auto s = series_from_json(r->body);
  CHECK(s.dice_t.size() == 11);

  r = f.client->Get("/metrics/nope");
  REQUIRE(r);
  CHECK(r->status == 404);
}

TEST_CASE("GET /masks returns the stored mask as PNG") {
  Fixture f;
  auto r = f.client->Get("/masks/synth_001/4");
  REQUIRE(r);
  CHECK(r->status == 200);
  CHECK(r->get_header_value("Content-Type") == "image/png");
  const std::vector<std::uint8_t> bytes(r->body.begin(), r->body.end());
  const auto seq = Workspace(f.root).load_masks("synth_001");
  CHECK(decode_mask_png(bytes) == *seq.frames[3].mask);
  CHECK(f.client->Get("/masks/synth_001/13")->status == 404);
  CHECK(f.client->Get("/masks/synth_001/0")->status == 404);
}

TEST_CASE("GET /frames serves ingested images") {
  Fixture f;
  auto r = f.client->Get("/frames/synth_001/3");
  REQUIRE(r);
  CHECK(r->status == 200);
  CHECK(r->body == "JPEG!");
  CHECK(r->get_header_value("Content-Type") == "image/jpeg");
  CHECK(f.client->Get("/frames/synth_001/4")->status == 404);
}

TEST_CASE("GET /ui serves static files") {
  Fixture f;
  auto r = f.client->Get("/ui/index.html");
  REQUIRE(r);
  CHECK(r->status == 200);
  CHECK(r->body == "<html></html>");
}

TEST_CASE("POST /prompts with an out-of-bounds point is rejected and writes nothing") {
  Fixture f;
  const std::string good =
      R"({"video_id":"synth_001","frame":1,"points":[{"x":3,"y":4,"polarity":1}],"boxes":[]})";
  const std::string bad =
      R"({"video_id":"synth_001","frame":2,"points":[{"x":1,"y":1,"polarity":1},{"x":64,"y":0,"polarity":0}],"boxes":[]})";
  auto r = f.client->Post("/prompts", good + "\n" + bad + "\n", "application/x-ndjson");
  REQUIRE(r);
  CHECK(r->status == 422);
  const auto j = body(r);
  CHECK(j["error"] == "out_of_bounds");
  REQUIRE(j["violations"].size() == 1);
  CHECK(j["violations"][0]["index"] == 1);
  CHECK(j["violations"][0]["points"] == json::array({1}));
  CHECK(prompts_file(f, "synth_001").empty());

  r = f.client->Post("/prompts", R"({"video_id":"synth_001","frame":13,"points":[{"x":1,"y":1,"polarity":1}]})",
                     "application/json");
  CHECK(r->status == 422);
  r = f.client->Post("/prompts", R"({"video_id":"ghost","frame":1,"points":[{"x":1,"y":1,"polarity":1}]})",
                     "application/json");
  CHECK(r->status == 422);
  r = f.client->Post("/prompts", "not json", "application/json");
  CHECK(r->status == 400);
  CHECK(prompts_file(f, "synth_001").empty());
}

TEST_CASE("POST then GET /prompts round-trips byte-identically") {
  Fixture f;
  PromptSet a{"synth_001", 1, {{3, 4, Polarity::kPositive}, {10, 11, Polarity::kNegative}}, {}};
  PromptSet b{"synth_001", 5, {}, {{1, 2, 30, 40}}};
  PromptSet c{"synth_002", 2, {{63, 47, Polarity::kPositive}}, {}};
  auto r = f.client->Post("/prompts", prompt_to_json_line(a) + "\n" + prompt_to_json_line(c),
                          "application/x-ndjson");
  REQUIRE(r);
  CHECK(r->status == 201);
  CHECK(body(r)["written"] == 2);
  r = f.client->Post("/prompts", prompt_to_json_line(b), "application/json");
  CHECK(r->status == 201);

  CHECK(prompts_file(f, "synth_001") ==
        prompt_to_json_line(a) + "\n" + prompt_to_json_line(b) + "\n");
  CHECK(prompts_file(f, "synth_002") == prompt_to_json_line(c) + "\n");

  r = f.client->Get("/prompts/synth_001");
  REQUIRE(r);
  const auto j = body(r);
  REQUIRE(j.size() == 2);
  CHECK(prompt_from_json(j[0].dump()) == a);
  CHECK(prompt_from_json(j[1].dump()) == b);
  CHECK(body(f.client->Get("/prompts/synth_002")).size() == 1);
}

TEST_CASE("concurrent prompt posts are serialized per video") {
  Fixture f;
  constexpr int kThreads = 8;
  constexpr int kEach = 10;
  std::vector<std::thread> threads;
  std::atomic<int> created{0};
  for (int t = 0; t < kThreads; ++t) {
    threads.emplace_back([&, t] {
      httplib::Client c("127.0.0.1", f.service->port());
      for (int i = 0; i < kEach; ++i) {
        PromptSet p{"synth_001", 1 + (t + i) % 12, {{t, i, Polarity::kPositive}}, {}};
        auto r = c.Post("/prompts", prompt_to_json_line(p), "application/json");
        if (r && r->status == 201) ++created;
      }
    });
  }
  for (auto& th : threads) th.join();
  CHECK(created == kThreads * kEach);
  CHECK(body(f.client->Get("/prompts/synth_001")).size() == kThreads * kEach);
}

TEST_CASE("GET /suggest agrees with select_reannotation_frame on 20 series") {
  Fixture f;
  const Workspace ws(f.root);
  std::mt19937_64 rng(11);
  for (int n = 0; n < 20; ++n) {
    MetricSeries s;
    s.video_id = "synth_002";
    const int len = 1 + static_cast<int>(rng() % 15);
    for (int i = 0; i < len; ++i) {
      int v = 0;
      if (n == 0) v = 0;                       // all flat
      else if (n == 1) v = 4;                  // flat at a nonzero level
      else if (n == 2) v = (i == len / 2) ? 9 : 0;  // single spike
      else v = static_cast<int>(rng() % 6);
      s.dice_t.push_back(1.0);
      s.nc_t.push_back(v);
    }
    write_file_atomic(ws.series_json("synth_002"), series_to_json(s, NcMode::kDifferenceSet));
    auto r = f.client->Get("/suggest/synth_002");
    REQUIRE(r);
    REQUIRE(r->status == 200);
    const auto j = body(r);
    const auto expected = select_reannotation_frame(s.nc_t, SelectionMode::kMaxIncrease);
    CHECK(j["video_id"] == "synth_002");
    if (expected) {
      CHECK(j["frame"] == *expected);
    } else {
      CHECK(j["frame"].is_null());
    }
    if (n <= 1) CHECK(j["frame"].is_null());
    if (n == 2 && len > 2) CHECK(j["frame"] == len / 2 + 2);
  }
}

TEST_CASE("start errors: missing workspace and port already in use") {
  TempDir t;
  ServiceOptions o;
  o.root = t / "nothing";
  o.port = 0;
  Service missing(o);
  try {
    missing.start();
    FAIL("expected WorkspaceMissing");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kWorkspaceMissing);
  }

  Fixture f;
  ServiceOptions same;
  same.root = f.root;
  same.port = f.service->port();
  Service clash(same);
  try {
    clash.start();
    FAIL("expected PortInUse");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kPortInUse);
  }
}
