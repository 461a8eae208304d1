#pragma once

#include "steerkit/attention.hpp"
#include "steerkit/conv.hpp"
#include "steerkit/params.hpp"

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace steerkit {

/// Classifier architecture:
///   conv_type1 -> CG nonlinearity -> conv_type2 -> batch norm -> avg pool
///   -> encoder blocks -> full-extent conv_type2 -> norm_flatten
///   -> dense -> batch norm 1d -> ReLU -> dropout -> dense.
/// Convolutions are unpadded, so each shrinks the grid by kernel - 1.
struct ModelConfig {
  int dim = 2;
  int input_size = 16;
  int cutoff = 2;
  int radial = 2;
  int angular = 9;
  int conv1_channels = 8;
  int conv1_kernel = 5;
  int conv2_kernel = 3;
  int pool = 2;
  int d_model = 16;
  int heads = 2;
  int layers = 1;
  MixingMode mix1 = MixingMode::SharedScalar;
  MixingMode mix2 = MixingMode::Identity;
  bool key_from_query_site = false;
  bool paper_literal_softmax = false;
  bool ln_sqrt = false;
  int final_channels = 16;
  int hidden = 128;
  int classes = 4;
  double dropout = 0.7;

  AttentionConfig attention() const;
  /// Grid extent entering the encoder (and the final kernel size).
  int encoder_extent() const;
  int num_irreps() const { return dim == 2 ? 2 * cutoff + 1 : cutoff + 1; }
  int flat_features() const { return num_irreps() * final_channels; }
  /// Checks that layer shapes chain; throws ConfigError naming the config key.
  void validate() const;
};

/// 16x16, k = 2, d_model = 16, two heads, one encoder layer.
ModelConfig desk_model_config();
/// 10x10, k = 1, d_model = 4, two classes; small enough for exhaustive
/// finite-difference checks.
ModelConfig micro_model_config();

struct RunMode {
  bool train = false;
  bool dropout = true;          // only consulted in train mode
  bool update_running = true;   // only consulted in train mode
  std::uint64_t dropout_seed = 0;
};

class Model {
 public:
  explicit Model(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }

  /// Fan-in scaled random weights; complex parts each get variance 1 / (2 fan_in).
  void init(std::mt19937_64& rng);

  /// Image (input_size^dim values, x fastest) -> input field.
  FourierField lift(std::span<const double> image) const;

  /// Logits per batch element.
  std::vector<std::vector<double>> forward(std::span<const FourierField> inputs, const RunMode& mode);
  /// Mean cross-entropy; overwrites the gradient vector. Optionally hands back
  /// the logits of the same pass.
  double loss_and_backward(std::span<const FourierField> inputs, std::span<const int> labels, const RunMode& mode,
                           std::vector<std::vector<double>>* logits = nullptr);
  /// Mean cross-entropy without gradients.
  double loss(std::span<const FourierField> inputs, std::span<const int> labels, const RunMode& mode);

  /// Eval-mode features entering encoder layer `layer`, before its layer norm.
  FourierField encoder_input(const FourierField& input, int layer) const;
  AttentionParams attention_params(int layer) const;

  const KernelBasis& conv1_basis() const { return basis1_; }
  const KernelBasis& conv2_basis() const { return basis2_; }
  const KernelBasis& final_basis() const { return basis3_; }

 private:
  struct EncoderSlots {
    size_t wq, wk, wv, wo, mix1, mix2, pe, w1, w2, bias;
  };
  struct Cache;

  EncoderParams encoder_params(int layer) const;
  EncoderGrads encoder_grads(int layer);
  Cache run(std::span<const FourierField> inputs, const RunMode& mode);

  ModelConfig config_;
  KernelBasis basis1_, basis2_, basis3_;
  ParamStore store_;
  size_t conv1_, conv2_, bn_gain_, final_, dense1_w_, dense1_b_, bn1d_gamma_, bn1d_beta_, dense2_w_, dense2_b_;
  size_t bn_running_, bn1d_mean_, bn1d_var_;
  std::vector<EncoderSlots> encoders_;
};

/// Mean softmax cross-entropy of logits against labels.
double cross_entropy(std::span<const std::vector<double>> logits, std::span<const int> labels);

}  // namespace steerkit
