#include "vseg/manifest.hpp"

#include <ctime>
#include <fstream>

#include "vseg/error.hpp"
#include "vseg/version.hpp"

namespace vseg {

std::string iso8601_utc_now() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_run_manifest(const RunManifest& m, const std::string& path) {
  nlohmann::ordered_json j;
  j["command"] = m.command;
  j["version"] = m.version.empty() ? kVersion : m.version;
  j["seed"] = m.seed;
  j["config"] = m.resolved_config;
  j["artifacts"] = m.artifacts;
  j["started_at"] = m.started_at;
  j["finished_at"] = m.finished_at;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw RuntimeFailure("io-failure: cannot write run manifest: " + path);
  out << j.dump(2) << "\n";
}

RunManifest read_run_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open run manifest: " + path);
  nlohmann::ordered_json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ValidationError("malformed run manifest: " + std::string(e.what()));
  }
  RunManifest m;
  m.command = j.at("command").get<std::string>();
  m.version = j.at("version").get<std::string>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.resolved_config = j.at("config");
  for (const auto& a : j.at("artifacts")) m.artifacts.push_back(a.get<std::string>());
  m.started_at = j.value("started_at", "");
  m.finished_at = j.value("finished_at", "");
  return m;
}

}  // namespace vseg
