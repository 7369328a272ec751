#pragma once

// Command-line front end. Kept as a library so tests can drive it without
// spawning processes.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "spoofsim/config.hpp"

namespace spoofsim::cli {

enum class Subcommand { kSimulate, kAttack, kDetect, kReproduce, kForecastStudy, kRandomCase };

[[nodiscard]] std::string_view to_string(Subcommand s) noexcept;

struct CliInvocation {
  Subcommand subcommand = Subcommand::kReproduce;
  std::optional<std::filesystem::path> config_path;
  std::vector<std::string> overrides;  // key=value, in command-line order
  std::filesystem::path out_dir = "results";
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> stream_path;  // detect only
};

// Bad command line; maps to exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ParseOutcome {
  std::optional<CliInvocation> invocation;
  std::string help;  // non-empty when --help was requested
};

// args excludes the program name. Overrides are checked against the config
// key table here, so a bad key never reaches a run. Throws UsageError.
[[nodiscard]] ParseOutcome parse_args(const std::vector<std::string>& args);

// Defaults, then SPOOFSIM_SEED (if env_seed is set), then the config file,
// then --set overrides, then --seed.
[[nodiscard]] ScenarioConfig resolve_config(const CliInvocation& inv, const char* env_seed);

// Runs a parsed invocation: 0 on success, 1 on a runtime failure (one line
// on err).
[[nodiscard]] int run(const CliInvocation& inv, std::ostream& out, std::ostream& err);

// parse_args + run with exit code 2 for usage errors.
[[nodiscard]] int main_entry(const std::vector<std::string>& args, std::ostream& out,
                             std::ostream& err);

}  // namespace spoofsim::cli
