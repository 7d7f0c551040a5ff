#include "maskpipe/manifest.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <map>
#include <mutex>

#include "maskpipe/error.hpp"
#include "maskpipe/fileutil.hpp"

namespace maskpipe {

namespace fs = std::filesystem;

std::string sha256_hex(std::string_view bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(),
                  nullptr)) {
    throw Error(ErrorCode::kIo, "SHA-256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[md[i] >> 4]);
    out.push_back(kHex[md[i] & 0xf]);
  }
  return out;
}

namespace {

bool is_temporary(const fs::path& p) {
  return p.filename().string().find(".tmp.") != std::string::npos;
}

}  // namespace

std::string digest_path(const fs::path& path) {
  if (!fs::exists(path)) return "absent";
  if (!fs::is_directory(path)) return sha256_hex(read_text_file(path));
  std::vector<std::pair<std::string, fs::path>> files;
  for (const auto& e : fs::recursive_directory_iterator(path)) {
    if (!e.is_regular_file() || is_temporary(e.path())) continue;
    files.emplace_back(fs::relative(e.path(), path).generic_string(),
                       e.path());
  }
  std::sort(files.begin(), files.end());
  std::string listing;
  for (const auto& [rel, full] : files) {
    listing += rel;
    listing += '\0';
    listing += sha256_hex(read_text_file(full));
    listing += '\n';
  }
  return "tree:" + sha256_hex(listing);
}

std::string timestamp_now() {
  std::time_t t;
  if (const char* sde = std::getenv("SOURCE_DATE_EPOCH"); sde && *sde) {
    t = static_cast<std::time_t>(std::strtoll(sde, nullptr, 10));
  } else {
    t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string RunManifest::relative(const fs::path& p) const {
  std::error_code ec;
  const auto abs_root = fs::weakly_canonical(root_, ec);
  const auto abs_p = fs::weakly_canonical(p, ec);
  const auto rel = abs_p.lexically_relative(abs_root);
  if (!rel.empty() && *rel.begin() != "..") return rel.generic_string();
  return p.generic_string();
}

fs::path RunManifest::resolve(const std::string& recorded) const {
  const fs::path p(recorded);
  return p.is_absolute() ? p : root_ / p;
}

PathDigest RunManifest::digest(const fs::path& p) const {
  return {relative(p), digest_path(p)};
}

namespace {

nlohmann::ordered_json digests_to_json(const std::vector<PathDigest>& ds) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& d : ds) {
    arr.push_back({{"path", d.path}, {"digest", d.digest}});
  }
  return arr;
}

std::vector<PathDigest> digests_from_json(const nlohmann::ordered_json& j) {
  std::vector<PathDigest> out;
  for (const auto& d : j) {
    out.push_back({d.at("path").get<std::string>(),
                   d.at("digest").get<std::string>()});
  }
  return out;
}

}  // namespace

std::string RunManifest::to_json() const {
  nlohmann::ordered_json j;
  auto stages = nlohmann::ordered_json::array();
  for (const auto& s : stages_) {
    nlohmann::ordered_json sj;
    sj["name"] = s.name;
    sj["params"] = s.params;
    sj["inputs"] = digests_to_json(s.inputs);
    sj["outputs"] = digests_to_json(s.outputs);
    sj["started_at"] = s.started_at;
    sj["finished_at"] = s.finished_at;
    stages.push_back(std::move(sj));
  }
  j["stages"] = std::move(stages);
  return j.dump(2) + "\n";
}

RunManifest RunManifest::load(const fs::path& root, const fs::path& file) {
  RunManifest m(root);
  if (!fs::exists(file)) return m;
  try {
    const auto j = nlohmann::ordered_json::parse(read_text_file(file));
    for (const auto& sj : j.at("stages")) {
      StageRecord s;
      s.name = sj.at("name").get<std::string>();
      s.params = sj.value("params", nlohmann::ordered_json::object());
      s.inputs = digests_from_json(sj.at("inputs"));
      s.outputs = digests_from_json(sj.at("outputs"));
      s.started_at = sj.value("started_at", "");
      s.finished_at = sj.value("finished_at", "");
      m.stages_.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kFormat,
                "malformed run manifest " + file.string() + ": " + e.what());
  }
  return m;
}

std::vector<std::string> RunManifest::verify() const {
  std::map<std::string, std::string> latest;
  for (const auto& s : stages_) {
    for (const auto& d : s.inputs) latest[d.path] = d.digest;
    for (const auto& d : s.outputs) latest[d.path] = d.digest;
  }
  std::vector<std::string> mismatched;
  for (const auto& [path, digest] : latest) {
    if (digest_path(resolve(path)) != digest) mismatched.push_back(path);
  }
  return mismatched;
}

void append_stage(const fs::path& root, const fs::path& file,
                  StageRecord stage) {
  static std::mutex mu;
  std::lock_guard lock(mu);
  auto manifest = RunManifest::load(root, file);
  manifest.append(std::move(stage));
  write_file_atomic(file, manifest.to_json());
}

}  // namespace maskpipe
