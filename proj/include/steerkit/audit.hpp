#pragma once

#include "steerkit/config.hpp"
#include "steerkit/data.hpp"
#include "steerkit/model.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace steerkit {

enum class AuditMode { PointSet, GridExact };

AuditMode parse_audit_mode(const std::string& name);
std::string to_string(AuditMode mode);

/// Relative error of one output irrep under one group element:
/// |L(g f) - g L(f)|_irrep / (|L(f)| + 1e-12).
struct AuditEntry {
  std::string layer;
  int slot = 0;
  int sample = 0;
  double error = 0.0;
};

/// Per layer (equivariance) or per parameter slice (gradients).
struct AuditSummary {
  std::string name;
  std::string mode;  // "point-set", "grid-exact" or "finite-difference"
  int count = 0;
  double max_error = 0.0;
  double mean_error = 0.0;
  double tolerance = 0.0;
  bool pass = true;
  /// JSON object describing the worst case (group element or coordinate).
  std::string worst;
};

struct AuditReport {
  std::string kind;  // "equivariance" or "gradient"
  std::vector<AuditSummary> summaries;
  std::vector<AuditEntry> entries;
  bool pass = true;

  const AuditSummary* find(std::string_view name) const;
  std::string to_json() const;
};

struct AuditOptions {
  int samples = 20;
  double tolerance = 1e-9;
  /// Applied to the whole classifier, whose logits carry accumulated rounding.
  double model_tolerance = 1e-4;
  AuditMode mode = AuditMode::PointSet;
  std::uint64_t seed = 1;
  int sites = 24;
  /// Worker threads; 0 picks the hardware concurrency.
  int threads = 0;
};

AuditOptions audit_options(const ExperimentConfig& config, AuditMode mode);

/// Every layer with an audit binding, in report order. "model" is the whole
/// classifier and is audited on grids only.
std::vector<std::string> audited_layers();

/// Layers whose outputs live on a grid (convolutions, pooling, batch norm and
/// the classifier). In point-set mode these fall back to lattice rotations.
bool grid_only_layer(std::string_view layer);

/// Runs the audit for `target` ("all", "model" or one layer name) with the
/// architecture of `config`. Random fields, parameters and group elements are
/// drawn from options.seed; results do not depend on the thread count.
AuditReport audit_equivariance(const ExperimentConfig& config, const std::string& target, const AuditOptions& options);

/// Audits an arbitrary field map on random point-set fields (or centred grids
/// in grid-exact mode) of the given dimension, cutoff and channel count.
using LayerFn = std::function<FourierField(const FourierField&)>;
AuditSummary audit_layer(const std::string& name, const LayerFn& layer, int dim, int cutoff, int channels,
                         const AuditOptions& options, std::vector<AuditEntry>* entries = nullptr);

/// The 2D or 3D rotations that permute the integer lattice (4 or 24).
std::vector<Rotation> lattice_rotations(int dim);

/// Central finite differences of the mean loss against the analytic gradient
/// in train mode with dropout off and running statistics frozen. Relative
/// error per coordinate is |a - n| / max(|a|, |n|, 1e-6). max_coords > 0
/// checks a seeded random subset.
AuditReport audit_gradients(Model& model, const Batch& batch, double fd_step, double tolerance, int max_coords = 0,
                            std::uint64_t seed = 1);

/// Per-site max_j alpha_ij of each selected head (empty: all heads) in encoder
/// layer `layer`. Every map is a real field with cutoff 0 and one channel per
/// irrep slot, on the encoder grid. Row sums of alpha are re-checked unless
/// the literal softmax variant is active.
std::vector<FourierField> attention_maps(const Model& model, const FourierField& input, int layer,
                                         const std::vector<int>& heads = {});

/// Writes <out>/attention_layer<l>_head<h>.stfl and .csv per head; returns the
/// paths written.
std::vector<std::filesystem::path> export_attention_maps(const Model& model, const FourierField& input, int layer,
                                                         const std::vector<int>& heads,
                                                         const std::filesystem::path& out_dir);

}  // namespace steerkit
