#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace vseg {

// One manifest per CLI run: the resolved configuration plus artifact paths,
// sufficient to re-run the command identically.
struct RunManifest {
  std::string command;
  nlohmann::ordered_json resolved_config;
  std::uint64_t seed = 0;
  std::vector<std::string> artifacts;
  std::string started_at;   // ISO-8601 UTC
  std::string finished_at;
  std::string version;
};

std::string iso8601_utc_now();

void write_run_manifest(const RunManifest& m, const std::string& path);

RunManifest read_run_manifest(const std::string& path);

}  // namespace vseg
