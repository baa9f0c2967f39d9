#pragma once

// Run manifest written next to every command's outputs.

#include "magchain/csv.hpp"
#include "magchain/units.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <string>
#include <vector>

namespace magchain {

inline constexpr const char* kToolVersion = "1.0.0";

struct RunManifest {
  std::string command;
  std::string config_path;
  nlohmann::json parameters = nlohmann::json::object();
  std::vector<std::string> outputs;
  std::vector<std::string> warnings;
  std::vector<std::string> failures;
  int exit_code = 0;
  double duration_s = 0.0;
  std::string started_at;  // UTC, ISO 8601

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["command"] = command;
    j["config_path"] = config_path;
    j["parameters"] = parameters;
    j["tool_version"] = kToolVersion;
    j["schema_version"] = kSchemaVersion;
    j["outputs"] = outputs;
    j["warnings"] = warnings;
    j["failures"] = failures;
    j["exit_code"] = exit_code;
    j["timing"] = {{"started_at", started_at}, {"duration_s", duration_s}};
    return j;
  }
};

inline std::string utc_timestamp(std::chrono::system_clock::time_point tp) {
  const std::time_t t = std::chrono::system_clock::to_time_t(tp);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline void write_manifest(const std::filesystem::path& dir, const RunManifest& m) {
  csv::write_atomic(dir / "manifest.json", m.to_json().dump(2) + "\n");
}

}  // namespace magchain
