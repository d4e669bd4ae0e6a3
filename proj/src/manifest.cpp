#include "seqmco/manifest.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>

#include "seqmco/version.hpp"

namespace seqmco {

nlohmann::json RunManifest::to_json() const {
  return nlohmann::json{
      {"command", command},       {"config_digest", config_digest},
      {"seed", seed},             {"jobs", jobs},
      {"library_version", library_version.empty() ? kVersion : library_version},
      {"started_at", started_at}, {"finished_at", finished_at},
      {"outputs", outputs},       {"config", config},
      {"extra", extra}};
}

RunManifest RunManifest::from_json(const nlohmann::json& j) {
  RunManifest m;
  m.command = j.at("command").get<std::string>();
  m.config_digest = j.at("config_digest").get<std::string>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.jobs = j.value("jobs", 0);
  m.library_version = j.value("library_version", std::string());
  m.started_at = j.value("started_at", std::string());
  m.finished_at = j.value("finished_at", std::string());
  m.outputs = j.value("outputs", std::vector<std::string>());
  m.config = j.value("config", nlohmann::json::object());
  m.extra = j.value("extra", nlohmann::json::object());
  return m;
}

std::string config_digest(const nlohmann::json& config) {
  // nlohmann::json::dump emits object keys in sorted order, so this is a
  // canonical byte representation.
  const std::string bytes = config.dump();
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

std::string timestamp_utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm_utc{};
  gmtime_r(&t, &tm_utc);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d%02d%02dT%02d%02d%02dZ",
                tm_utc.tm_year + 1900, tm_utc.tm_mon + 1, tm_utc.tm_mday,
                tm_utc.tm_hour, tm_utc.tm_min, tm_utc.tm_sec);
  return buf;
}

}  // namespace seqmco
