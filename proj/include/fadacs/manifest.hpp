#pragma once

#include <map>
#include <string>
#include <vector>

#include "fadacs/common.hpp"
#include "json.hpp"

namespace fadacs::manifest {

// FNV-1a 64 digest of a file's bytes, as 16 hex chars.
std::string file_digest(const std::string& path);
std::string string_digest(const std::string& text);

// Run manifest: one JSON per mutating subcommand. Timings live only here so
// data artifacts stay byte-reproducible.
struct run_manifest {
  std::string subcommand;
  std::string tool_version;
  nlohmann::json config;     // resolved config (file + flag overrides)
  std::string config_hash;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> input_digests;
  std::map<std::string, std::string> output_digests;
  nlohmann::json decisions;  // channel list, spatial ordering, split bounds, head variant
  double elapsed_seconds = 0;

  nlohmann::json to_json() const;
  void write(const std::string& path) const;
};

}  // namespace fadacs::manifest
