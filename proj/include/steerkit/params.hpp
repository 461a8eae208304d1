#pragma once

#include "steerkit/group.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace steerkit {

/// A named range of a flat double vector. Complex slices store interleaved
/// (re, im) pairs, so `size` counts doubles and `shape` counts elements.
struct ParamSlice {
  std::string name;
  size_t offset = 0;
  size_t size = 0;
  std::vector<int> shape;
  bool complex = false;
};

/// Learnable parameters, their gradients and Adam moments, plus non-learnable
/// buffers (batch-norm running statistics). Register everything before taking
/// spans; registration may reallocate.
class ParamStore {
 public:
  size_t add(const std::string& name, std::vector<int> shape, bool complex);
  size_t add_buffer(const std::string& name, std::vector<int> shape);

  const std::vector<ParamSlice>& slices() const { return slices_; }
  const std::vector<ParamSlice>& buffer_slices() const { return buffer_slices_; }
  size_t find(const std::string& name) const;
  size_t find_buffer(const std::string& name) const;

  std::span<double> values(size_t slice);
  std::span<const double> values(size_t slice) const;
  std::span<double> grad(size_t slice);
  std::span<const double> grad(size_t slice) const;
  /// Complex views; only valid on complex slices.
  std::span<cplx> cvalues(size_t slice);
  std::span<const cplx> cvalues(size_t slice) const;
  std::span<cplx> cgrad(size_t slice);
  std::span<double> buffer(size_t slice);
  std::span<const double> buffer(size_t slice) const;

  /// Name of the slice holding flat coordinate `index`.
  const std::string& owner(size_t index) const;

  void zero_grad();
  size_t size() const { return params.size(); }

  std::vector<double> params;
  std::vector<double> grads;
  std::vector<double> buffers;
  std::vector<double> adam_m;
  std::vector<double> adam_v;
  std::uint64_t adam_step = 0;

 private:
  const ParamSlice& checked(size_t slice, bool want_complex) const;
  std::vector<ParamSlice> slices_;
  std::vector<ParamSlice> buffer_slices_;
};

struct AdamOptions {
  double lr = 5e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// Adam with bias-corrected moments and decoupled weight decay
/// theta -= lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * theta).
void adam_step(ParamStore& store, const AdamOptions& options);

/// lr * decay^floor(epoch / every).
double step_decay_lr(double lr, double decay, int every, int epoch);

struct CheckpointMeta {
  int epoch = 0;            // completed epochs
  std::string config_json;  // experiment config the run was started with
};

/// "STCK" v1: little-endian f64 payload of parameters, buffers and Adam state
/// after a manifest of every slice.
void save_checkpoint(const std::filesystem::path& path, const ParamStore& store, const CheckpointMeta& meta);
/// Loads into a store whose registry must match the file's manifest.
CheckpointMeta load_checkpoint(const std::filesystem::path& path, ParamStore& store);
/// Reads only the metadata (for recovering the config).
CheckpointMeta read_checkpoint_meta(const std::filesystem::path& path);

}  // namespace steerkit
