#include "fadacs/manifest.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "fadacs/prng.hpp"

namespace fadacs::manifest {

std::string string_digest(const std::string& text) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(text)));
  return buf;
}

std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw error("InputMissing", path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return string_digest(ss.str());
}

nlohmann::json run_manifest::to_json() const {
  return {{"subcommand", subcommand}, {"tool_version", tool_version},
          {"config", config},         {"config_hash", config_hash},
          {"seed", seed},             {"input_digests", input_digests},
          {"output_digests", output_digests},
          {"decisions", decisions},   {"elapsed_seconds", elapsed_seconds}};
}

void run_manifest::write(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw error("OutputUnwritable", path);
  out << to_json().dump(2) << '\n';
}

}  // namespace fadacs::manifest
