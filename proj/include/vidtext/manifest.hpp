#pragma once

#include <cstdint>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vidtext/common.hpp"

namespace vidtext {

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

// Platform-stable digest of a configuration: FNV-1a over the compact JSON
// dump (nlohmann emits objects with sorted keys).
inline std::string config_hash(const nlohmann::json& config) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(config.dump())));
  return buf;
}

inline std::string iso_timestamp_utc() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Written once per artifact-producing run so the run can be reproduced
// from the manifest alone.
struct RunManifest {
  std::string command;
  nlohmann::json config = nlohmann::json::object();
  std::uint64_t seed = 0;
  std::string corpus_path;
  std::string checkpoint_path;
  std::string started;
  std::string finished;
  std::vector<std::string> artifacts;
};

inline void write_manifest(const std::string& path, const RunManifest& m) {
  nlohmann::json j{{"command", m.command},
                   {"config", m.config},
                   {"config_hash", config_hash(m.config)},
                   {"seed", m.seed},
                   {"corpus_path", m.corpus_path},
                   {"checkpoint_path", m.checkpoint_path},
                   {"started", m.started},
                   {"finished", m.finished},
                   {"artifacts", m.artifacts}};
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest: " + path);
  out << j.dump(2) << "\n";
  if (!out) throw IoError("write failed for manifest: " + path);
}

}  // namespace vidtext
