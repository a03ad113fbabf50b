#pragma once

#include <filesystem>
#include <string>

#include "loadshare/harness.hpp"

#include "json.hpp"

namespace loadshare::config {

struct OutputOptions {
  std::string directory = "out";
  int snapshot_every_changes = 24;
  surrogate::GridSpec map_grid;
};

/// Everything a batch needs, fully seeded. Unknown keys in the file are
/// rejected so typos cannot silently fall back to defaults.
struct RunConfig {
  harness::BatchOptions batch;
  OutputOptions output;

  nlohmann::ordered_json to_json() const;
};

RunConfig default_config();

/// Parses and validates a config file, filling defaults for absent keys.
/// Throws ConfigError naming the offending key on any violation.
RunConfig load_config(const std::filesystem::path& path);

/// Same, from an already-parsed document (used by tests).
RunConfig config_from_json(const nlohmann::json& j);

}  // namespace loadshare::config
