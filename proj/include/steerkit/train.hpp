#pragma once

#include "steerkit/config.hpp"
#include "steerkit/data.hpp"
#include "steerkit/model.hpp"

#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <iosfwd>
#include <random>
#include <vector>

namespace steerkit {

/// Generator seeded from the run seed and a tuple of stream identifiers, so
/// every (purpose, epoch, batch) draws an independent reproducible stream.
std::mt19937_64 derived_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> stream);

struct Datasets {
  Batch train;
  Batch test;
  /// Generator parameters of the synthetic test set (empty for IDX data).
  std::vector<ShapeSample> test_samples;
};

/// Generator parameters of the synthetic train and test sets, each drawn from
/// its own stream of the config seed.
struct ShapeSets {
  std::vector<ShapeSample> train, test;
};
ShapeSets synthetic_samples(const ExperimentConfig& config);

Datasets load_datasets(const ExperimentConfig& config);

struct EpochMetrics {
  int epoch = 0;
  double loss = 0.0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  double lr = 0.0;
};

struct TrainOptions {
  std::filesystem::path out_dir;
  /// Checkpoint to continue from; empty starts fresh.
  std::filesystem::path resume;
  /// Stop after this many epochs in this invocation (negative: run to the end).
  int stop_after = -1;
  std::ostream* progress = nullptr;
};

struct TrainResult {
  std::vector<EpochMetrics> history;  // epochs run by this invocation
  std::filesystem::path checkpoint;
  std::filesystem::path metrics;
};

/// Writes <out>/metrics.csv (appended on resume) and <out>/checkpoint.stck
/// after every epoch.
TrainResult run_training(const ExperimentConfig& config, const TrainOptions& options);
/// Same, reusing already loaded data.
TrainResult run_training(const ExperimentConfig& config, const Datasets& data, const TrainOptions& options);

/// Fraction of correct eval-mode predictions.
double accuracy(Model& model, const Batch& batch, int chunk = 100);

struct EvalResult {
  int count = 0;
  double accuracy = 0.0;            // test set as generated (randomly oriented)
  double unrotated_accuracy = 0.0;  // synthetic: same glyphs at zero orientation
  std::vector<double> rotated;      // one accuracy per extra random rotation
  double rotated_mean = 0.0;
  double rotated_std = 0.0;
};

EvalResult evaluate(Model& model, const ExperimentConfig& config, const Datasets& data);
/// Loads the checkpoint into a model built from `config` and evaluates it.
EvalResult run_eval(const ExperimentConfig& config, const std::filesystem::path& checkpoint);

/// Model built from the checkpoint's stored config (or `config` when given).
Model load_model(const std::filesystem::path& checkpoint, ExperimentConfig* config_out = nullptr);

}  // namespace steerkit
