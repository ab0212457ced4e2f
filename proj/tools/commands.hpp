#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

namespace idapbc::cli {

enum ExitCode : int {
  exit_ok = 0,
  exit_usage = 1,         ///< bad arguments or unreadable/invalid configuration
  exit_model = 2,         ///< the model rejected the scenario or the run failed
  exit_check_failed = 3,  ///< verification or ROA estimation reached a negative verdict
};

struct Options {
  std::filesystem::path out_dir = ".";
  std::optional<std::uint64_t> seed;
  unsigned threads = 1;
};

int cmd_simulate(const std::filesystem::path& config, const Options& opt);
int cmd_verify(const std::filesystem::path& config, const Options& opt);
int cmd_roa(const std::filesystem::path& config, const Options& opt);
int cmd_experiments(const std::string& kind, const Options& opt);

/// Full command-line entry point (argument parsing included).
int run_cli(int argc, const char* const* argv);

}  // namespace idapbc::cli
