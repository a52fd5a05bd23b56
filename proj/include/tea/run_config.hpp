#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include "tea/model.hpp"
#include "tea/synth_data.hpp"
#include "tea/trainer.hpp"

namespace tea {

/// Bad config file, unknown key or invalid value.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunPaths {
  std::string data;        ///< training (or evaluation) annotations
  std::string val_data;    ///< optional held-out annotations
  std::string checkpoint;
  std::string loss_csv;
  std::string report;
  std::string out;         ///< output of gen / inspect-bias / dump-attn
};

/// Everything one CLI invocation needs. Sources are applied in the order
/// defaults, config file, command-line flags.
struct RunConfig {
  ModelConfig model;
  std::uint64_t model_seed = 0;
  SynthConfig synth;
  TrainConfig train;
  RunPaths paths;

  /// Full config as nested JSON: model (with spatial/adapter/clues), synth, train, paths.
  std::string to_json() const;

  /// Overlays a JSON object onto this config. Unknown keys are errors.
  void apply_json(const std::string& json_text);

  /// Overlays a TOML document (tables, dotted table names, key = scalar).
  void apply_toml(const std::string& toml_text);

  /// Overlays one dotted assignment such as "model.d=32" or "train.optimizer=adam".
  void apply_assignment(const std::string& assignment);

  /// Loads a .toml or .json file by extension (anything else is tried as JSON).
  void apply_file(const std::string& path);
};

/// Converts a TOML subset into a JSON document string.
std::string toml_to_json(const std::string& toml_text);

}  // namespace tea
