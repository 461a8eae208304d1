#pragma once

#include "steerkit/model.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace steerkit {

struct OptimizerConfig {
  double lr = 5e-3;
  double lr_decay = 0.5;
  int decay_every = 20;
  double weight_decay = 5e-4;
  int epochs = 12;
  int batch = 32;
};

struct DatasetConfig {
  std::string kind = "synthetic";  // "synthetic", "idx" or "none" (audits only)
  int train = 2000;
  int test = 500;
  int test_rotations = 4;  // extra Haar-random rotations of the test set at eval time
  std::string train_images, train_labels, test_images, test_labels;
};

struct AuditConfig {
  int samples = 20;
  int sites = 24;
  double tolerance = 1e-9;
  double model_tolerance = 1e-4;
  double fd_step = 1e-4;
  double grad_tolerance = 1e-4;
  int grad_batch = 4;
  int max_coords = 0;  // 0 checks every coordinate
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  ModelConfig model;
  OptimizerConfig optimizer;
  DatasetConfig dataset;
  AuditConfig audit;

  /// Model shape chaining plus optimizer/dataset sanity; throws ConfigError.
  void validate() const;
};

/// Strict parse: every key is optional, unknown keys and wrong types are
/// ConfigErrors naming the dotted key path.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string config_to_json(const ExperimentConfig& config);

}  // namespace steerkit
