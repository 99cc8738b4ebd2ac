#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>

namespace sceneforge::cli {

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitStageError = 1;
inline constexpr int kExitUsage = 2;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  // provider
  std::string provider = "live";  // live | scripted
  std::string fixture;
  std::string endpoint;
  std::string text_model = "gpt-4.1";
  std::string vision_model = "gpt-4.1";
  std::string embedding_model = "text-embedding-3-small";
  double temperature = 0.0;
  int timeout_seconds = 300;
  double rate_per_second = 0.0;
  double burst = 1.0;
  int repair_retries = 2;
  std::string handedness = "right";  // right | left
  // library
  std::string library;
  // layout
  double buffer = 0.02;
  int refinement_sweeps = 1;
  bool skip_refinement = false;
  // retrieval
  int k = 5;
  // validation
  double facing_tolerance = 30.0;
  double alignment_tolerance = 5.0;
  double adjacency_gap = 0.3;
  double support_tolerance = -1.0;
  // output
  std::string out_dir = ".";
  std::string log_level = "info";
  // prompts/ and schemas/ root; empty means the built-in default
  std::string data_dir;

  // Throws ConfigError on an out-of-range or unknown value.
  void validate() const;
};

// INI-style file:
//   [provider]  kind, fixture, endpoint, text_model, vision_model,
//               embedding_model, temperature, timeout_seconds,
//               rate_per_second, burst, repair_retries, handedness
//   [library]   path
//   [layout]    buffer, refinement_sweeps, skip_refinement
//   [retrieval] k
//   [validation] facing_tolerance, alignment_tolerance, adjacency_gap,
//               support_tolerance
//   [output]    dir, log_level, data_dir
// Unknown sections or keys are rejected. Only keys whose command line flag
// was not given are applied.
void apply_config_file(const std::filesystem::path& path, RunConfig& config,
                       const std::function<bool(const std::string& key)>& flag_given);

// "5x5x3" -> {5, 5, 3}; throws ConfigError.
std::array<double, 3> parse_bounds(const std::string& text);

// `name` resolved inside `out_dir`; throws ConfigError if it would escape.
std::filesystem::path output_path(const std::filesystem::path& out_dir, const std::string& name);

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace sceneforge::cli
