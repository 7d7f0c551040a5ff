#include <doctest.h>

#include <cstdlib>

#include "maskpipe/fileutil.hpp"
#include "maskpipe/manifest.hpp"
#include "tempdir.hpp"

using namespace maskpipe;

TEST_CASE("sha256 known vectors") {
  CHECK(sha256_hex("") ==
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("directory digests depend on names and content only") {
  testing::TempDir a, b;
  write_file_atomic(a / "x/1.txt", "one");
  write_file_atomic(a / "2.txt", "two");
  write_file_atomic(b / "2.txt", "two");
  write_file_atomic(b / "x/1.txt", "one");
  CHECK(digest_path(a.path()) == digest_path(b.path()));
  CHECK(digest_path(a.path()).starts_with("tree:"));
  write_file_atomic(b / "x/1.txt", "ONE");
  CHECK(digest_path(a.path()) != digest_path(b.path()));
  CHECK(digest_path(a / "nothing") == "absent");
}

TEST_CASE("timestamps honour SOURCE_DATE_EPOCH") {
  ::setenv("SOURCE_DATE_EPOCH", "86400", 1);
  CHECK(timestamp_now() == "1970-01-02T00:00:00Z");
  ::unsetenv("SOURCE_DATE_EPOCH");
  CHECK(timestamp_now().size() == 20);
}

TEST_CASE("manifest append, reload and verify") {
  testing::TempDir root;
  const auto file = root / "manifest.json";
  write_file_atomic(root / "in.txt", "input");
  RunManifest probe(root.path());

  StageRecord s;
  s.name = "copy";
  s.params["k"] = 5;
  s.inputs.push_back(probe.digest(root / "in.txt"));
  write_file_atomic(root / "out/o.txt", "output");
  s.outputs.push_back(probe.digest(root / "out"));
  append_stage(root.path(), file, s);
  s.name = "again";
  append_stage(root.path(), file, s);

  const auto m = RunManifest::load(root.path(), file);
  REQUIRE(m.stages().size() == 2);
  CHECK(m.stages()[0].name == "copy");
  CHECK(m.stages()[0].inputs[0].path == "in.txt");
  CHECK(m.stages()[0].outputs[0].path == "out");
  CHECK(m.stages()[0].params["k"] == 5);
  CHECK(m.verify().empty());
  CHECK(m.to_json() == read_text_file(file));

  write_file_atomic(root / "in.txt", "tampered");
  CHECK(m.verify() == std::vector<std::string>{"in.txt"});
}
