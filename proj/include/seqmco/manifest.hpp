#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace seqmco {

// The reproducibility unit of every CLI run: the embedded resolved config
// plus the seed are sufficient to replay the run; the digest pins identity.
struct RunManifest {
  std::string command;
  std::string config_digest;
  std::uint64_t seed = 0;
  int jobs = 0;
  std::string library_version;
  std::string started_at;
  std::string finished_at;
  std::vector<std::string> outputs;  // file names inside the run directory
  nlohmann::json config;
  nlohmann::json extra;

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
};

// 64-bit FNV-1a over the canonical (sorted-key, compact) JSON dump.
std::string config_digest(const nlohmann::json& config);

std::string timestamp_utc_now();

}  // namespace seqmco
