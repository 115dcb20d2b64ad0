#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "pixadapt/pipeline.hpp"

namespace pixadapt::cli {

enum class Command { kSynth, kTrain, kLocalize, kSegment, kEval, kInspect };

const char* to_string(Command command);

/// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitPipeline = 4;

/// Environment variable naming the default output root.
inline constexpr const char* kOutputRootEnv = "PIXADAPT_OUTPUT_ROOT";

struct RunConfig {
  Command command = Command::kLocalize;
  /// Flags, paths, and hyperparameters shared with the pipeline.
  PipelineConfig pipeline;
  std::string scenario = "separable";  // synth: separable, confound, or a spec JSON path
  bool background_only = false;        // synth: replace slices with background-only ones
  int slice_count = 0;                 // synth: override slice count for background_only
  std::vector<std::filesystem::path> predictions;  // eval
  std::vector<std::filesystem::path> inputs;       // inspect
  std::string adapter_name = "contrastive";
  /// Effective configuration (every key, output excluded) and its hash.
  std::string effective;
  std::string hash;
};

/// Raised for unknown keys, bad values, and missing required paths. The
/// message names the offending key.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message) : Error(ErrorCode::kConfig, message) {}
};

/// Parses `args` (without the program name). Flags override `--config` file
/// values, which override defaults. Returns std::nullopt after printing
/// help to `out`.
std::optional<RunConfig> parse_config(const std::vector<std::string>& args, std::ostream& out);

/// Runs the command; returns the process exit code.
int dispatch(const RunConfig& config, std::ostream& out, std::ostream& err);

/// parse_config + dispatch with error-to-exit-code mapping.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace pixadapt::cli
