#pragma once

#include "steerkit/field.hpp"
#include "steerkit/nonlinear.hpp"

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace steerkit {

/// Layer kinds provided by this header; each must have an equivariance audit.
inline constexpr std::array<std::string_view, 5> kAttentionLayers{
    "positional_encoding", "attention_scores", "self_attention", "position_ffn", "encoder_block"};

enum class MixingMode { Identity, SharedScalar, FullMatrix };

MixingMode parse_mixing_mode(const std::string& name);
std::string to_string(MixingMode mode);

struct AttentionConfig {
  int dim = 2;
  int cutoff = 2;
  int d_model = 16;
  int heads = 2;
  int layers = 1;
  MixingMode mix1 = MixingMode::SharedScalar;
  MixingMode mix2 = MixingMode::Identity;
  /// Build keys from the query site's features (literal reading of the key
  /// equation) instead of the key site's.
  bool key_from_query_site = false;
  /// exp(|s_ij|) / sum_j' |s_ij'| instead of the softmax.
  bool paper_literal_softmax = false;
  /// Layer norm divides by sqrt(S + eps) instead of (S + eps).
  bool ln_sqrt = false;

  int d_k() const { return d_model / heads; }
  int num_irreps() const { return dim == 2 ? 2 * cutoff + 1 : cutoff + 1; }
  /// Complex mixing scalars per head for the given mode.
  int mix_count(MixingMode mode) const;
  void validate() const;
};

/// Views of attention parameters. Layouts:
///   wq, wk, wv  [slot][head][d_model][d_k]
///   wo          [slot][heads * d_k][d_model]
///   mix1, mix2  [head][mix_count]: empty per head for identity, one scalar per
///               source irrep for shared-scalar, [rho][rho'] for full-matrix
///   pe          [slot][head][d_k], real
template <typename C, typename R>
struct AttentionViews {
  std::span<C> wq, wk, wv, wo, mix1, mix2;
  std::span<R> pe;
};
using AttentionParams = AttentionViews<const cplx, const double>;
using AttentionGrads = AttentionViews<cplx, double>;

/// Position-wise feed-forward: w1 [d_model][2 d_model], w2 [2 d_model][d_model]
/// shared across irreps, bias [slot][2 d_model] for the harmonic nonlinearity.
template <typename C, typename R>
struct FFNViews {
  std::span<C> w1, w2;
  std::span<R> bias;
};
using FFNParams = FFNViews<const cplx, const double>;
using FFNGrads = FFNViews<cplx, double>;

struct EncoderParams {
  AttentionParams attn;
  FFNParams ffn;
};
struct EncoderGrads {
  AttentionGrads attn;
  FFNGrads ffn;
};

/// Sizes of every parameter view for one encoder layer.
struct EncoderShapes {
  size_t wq, wk, wv, wo, mix1, mix2, pe, w1, w2, bias;
};
EncoderShapes encoder_shapes(const AttentionConfig& config);

/// w e^{-r^2} times the circular (2D, e^{-ik theta}) or spherical (3D) harmonic
/// of dx, zero at dx = 0.
std::vector<cplx> positional_encoding(const Vec3& dx, IrrepId irrep, double w);

/// Displacement x_i - x_j used by the positional encoding, in units of the
/// lattice spacing for grid fields.
Vec3 site_displacement(const FourierField& field, int i, int j);

struct AttentionScores {
  int num_sites = 0;
  int num_irreps = 0;
  std::vector<cplx> raw;       // [slot][i][j] before irrep mixing
  std::vector<cplx> mixed;     // [slot][i][j]
  std::vector<double> alpha;   // [slot][i][j]
  double& a(int slot, int i, int j) { return alpha[(static_cast<size_t>(slot) * num_sites + i) * num_sites + j]; }
  double a(int slot, int i, int j) const { return alpha[(static_cast<size_t>(slot) * num_sites + i) * num_sites + j]; }
};

AttentionScores attention_scores(const FourierField& field, const AttentionParams& params,
                                 const AttentionConfig& config, int head);

FourierField steerable_self_attention(const FourierField& field, const AttentionParams& params,
                                      const AttentionConfig& config);
/// Accumulates parameter gradients and returns the input gradient.
FourierField steerable_self_attention_backward(const FourierField& field, const AttentionParams& params,
                                               const AttentionConfig& config, const FourierField& grad_out,
                                               const AttentionGrads& grads);

FourierField position_ffn(const FourierField& field, const FFNParams& params, double eps = kNormEps);
FourierField position_ffn_backward(const FourierField& field, const FFNParams& params, const FourierField& grad_out,
                                   const FFNGrads& grads, double eps = kNormEps);

/// z' = MHA(LN z) + z, z'' = FFN(LN z') + z'. One layer.
FourierField encoder_block(const FourierField& field, const EncoderParams& params, const AttentionConfig& config);
FourierField encoder_block_backward(const FourierField& field, const EncoderParams& params,
                                    const AttentionConfig& config, const FourierField& grad_out,
                                    const EncoderGrads& grads);

}  // namespace steerkit
