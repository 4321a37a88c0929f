#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "trlb/checkpoint.hpp"
#include "trlb/trainer.hpp"

namespace trlb::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kIoOrFormat = 2, kNumeric = 3 };

/// Everything `train` needs, with defaults resolved.
struct ExperimentConfig {
  std::filesystem::path data;
  std::filesystem::path manifest;
  std::filesystem::path out_dir;
  TrainConfig train;
  ModelFamily family = ModelFamily::tr;
  std::uint64_t split_seed = 0;
};

/// Parses `key = value` lines ('#' starts a comment) and applies them to
/// `cfg`. Returns one message per bad line or key; `cfg` keeps its values for
/// those keys.
std::vector<std::string> apply_config_text(const std::string& text, ExperimentConfig& cfg);

/// Effective configuration in the same `key = value` format.
std::string config_text(const ExperimentConfig& cfg);

/// Runs the command line `args` (without the program name).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace trlb::cli
