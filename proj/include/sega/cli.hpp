#pragma once

// `sega sample|sweep|validate <config.json> [--overrides k=v ...] [--out DIR]
//  [--quiet] [--svg]`
//
// Exit codes: 0 success, 2 configuration or usage error, 3 runtime error
// (including non-finite latents).

#include "sega/config.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace sega::cli {

enum ExitCode : int { kOk = 0, kConfigError = 2, kRuntimeError = 3 };

struct CommonArgs {
  std::filesystem::path config_path;
  std::vector<std::string> overrides;
  std::optional<std::filesystem::path> out_dir;
  bool quiet = false;
  bool svg = false;
};

struct SweepArgs {
  std::size_t edit_index = 0;
  std::vector<double> edit_scales;
  std::optional<int> num_seeds;  // defaults to sampler.num_samples
  std::optional<TagSet> target;
};

struct InvocationResult {
  int exit_code = kOk;
  std::vector<std::filesystem::path> artifacts;
  int steps = 0;
  double wall_seconds = 0.0;
  std::vector<std::string> warnings;
};

InvocationResult cmd_sample(const CommonArgs& args, std::ostream& out, std::ostream& err);
InvocationResult cmd_sweep(const CommonArgs& args, const SweepArgs& sweep, std::ostream& out,
                           std::ostream& err);
InvocationResult cmd_validate(const CommonArgs& args, std::ostream& out, std::ostream& err);

/// Full command line entry point; argv[0] is the program name.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Writes through a temporary file in the same directory, then renames.
void write_atomic(const std::filesystem::path& path, const std::string& content);

/// Chain parallelism: SEGA_THREADS when set to a positive integer, else the
/// hardware concurrency.
unsigned thread_count();

}  // namespace sega::cli
