#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "unict/depth/config.hpp"

namespace unict::cli {

using depth::ConfigError;

inline constexpr int kConfigVersion = 1;

/// Everything a training run needs. Defaults follow the reference training
/// recipe: batch 16, 50 epochs, AdamW at 2e-4 halved at epochs 10, 20, 30.
struct RunConfig {
  depth::NetConfig net;
  std::string dataset;
  std::size_t epochs = 50;
  std::size_t batch_size = 16;
  double lr = 2e-4;
  double weight_decay = 1e-2;
  std::vector<int> lr_milestones = {10, 20, 30};
  double lr_factor = 0.5;
  /// Share of scenes, taken from the end of the dataset, held out for validation.
  double val_fraction = 0.2;
  std::uint64_t seed = 0;
  std::string out_dir = "run";
  std::string dtype = "f32";  // "f32" or "f64"

  /// Throws ConfigError naming the offending field.
  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

nlohmann::ordered_json net_to_json(const depth::NetConfig& net);
nlohmann::ordered_json to_json(const RunConfig& cfg);

/// Requires "version" == 1 and rejects unknown fields. Missing fields keep
/// their defaults. Errors read "<field.path>: <problem>".
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);
void save_run_config(const std::string& path, const RunConfig& cfg);

}  // namespace unict::cli
