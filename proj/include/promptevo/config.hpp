#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "promptevo/backends.hpp"
#include "promptevo/embedding.hpp"
#include "promptevo/evaluation.hpp"
#include "promptevo/types.hpp"

namespace pevo {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kDefaultInitialPrompt =
    "You are an expert at accomplishing tasks. You are a highly capable "
    "problem-solver.";

struct SyntheticBackendConfig {
  int categories = 5;
  std::vector<std::string> rule_tokens;  // empty -> "T0".."T{C-1}"
  double p_hit = 0.95;
  double p_miss = 0.35;
  std::optional<std::uint64_t> seed;  // absent -> the run seed
};

// Sizes for a generated dataset; categories come from the synthetic backend.
struct GenerateConfig {
  int train_size = 256;
  int test_size = 256;
};

struct BackendConfig {
  enum class Kind { synthetic, remote };

  Kind kind = Kind::synthetic;
  SyntheticBackendConfig synthetic;
  ChatModelConfig task;       // temperature 0.0: stable scoring
  ChatModelConfig optimizer;  // temperature 0.7: diverse rewrites
  std::string templates_dir = "templates";
};

struct SimulateConfig {
  std::vector<int> batch_sizes = {4, 8, 16, 32, 64, 128, 256};
};

// The full run configuration: engine parameters at the top level (so
// overrides address them by bare name), blocks for dataset/encoder/backend/
// simulate. Unknown keys anywhere are rejected.
struct AppConfig {
  RunConfig run;
  std::string initial_prompt = kDefaultInitialPrompt;
  DatasetSpec dataset;
  std::optional<GenerateConfig> generate;
  EncoderSpec encoder;
  BackendConfig backend;
  SimulateConfig simulate;

  std::string config_dir;  // directory the file was loaded from
  std::string echo_json;   // post-override document, echoed into reports
};

// Parses the JSON file, applies "dotted.key=value" overrides (values parsed
// as JSON when possible, else taken as strings), then an optional seed, and
// validates strictly. Relative dataset/template paths resolve against the
// config file's directory.
AppConfig load_app_config(const std::string& path,
                          const std::vector<std::string>& overrides,
                          std::optional<std::uint64_t> seed_flag);

// Same pipeline starting from an in-memory JSON document; config_dir seeds
// relative-path resolution.
AppConfig parse_app_config(const std::string& json_text,
                           const std::string& config_dir,
                           const std::vector<std::string>& overrides,
                           std::optional<std::uint64_t> seed_flag);

}  // namespace pevo
