#pragma once

#include <cstdint>
#include <ctime>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "seqrl/config.hpp"

namespace seqrl {

struct CommandOptions {
  std::optional<std::string> config_path;
  /// "key=value" overrides applied after the config file.
  std::vector<std::string> overrides;
  /// Explicit run directory for train commands (default: runs/<time>-seed<seed>).
  std::string run_dir;
  /// eval: run directory whose config.txt and checkpoint.drlc are used.
  std::string from;
};

const std::vector<std::string>& subcommand_names();
std::string usage_text();

/// "runs/YYYYmmdd-HHMMSS-seed<seed>" in local time.
std::string default_run_dir(std::uint64_t seed, std::time_t now);

/// Resolves the config for `options` (including --from defaults).
Config resolve_config(const CommandOptions& options);

/// Runs one subcommand. Returns 0 on success, 1 on a library error and 2 for
/// an unknown subcommand.
int run_subcommand(const std::string& name, const CommandOptions& options, std::ostream& out, std::ostream& err);

}  // namespace seqrl
