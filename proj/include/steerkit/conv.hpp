#pragma once

#include "steerkit/field.hpp"

#include <array>
#include <span>
#include <string_view>
#include <vector>

namespace steerkit {

/// Layer kinds provided by this header; each must have an equivariance audit.
inline constexpr std::array<std::string_view, 4> kConvLayers{"conv_type1", "conv_type2", "avg_pool", "batch_norm"};

/// One input-irrep x stencil-irrep -> output-irrep coupling. In 2D every
/// coupling is scalar (k_out = k_in + m). In 3D the coefficients are the
/// Clebsch-Gordan block, indexed [a][b][mo] over (m_in, m_stencil, m_out).
struct Coupling {
  int in_slot = 0;
  int order = 0;  // index into KernelBasis::orders
  int out_slot = 0;
  int din = 1, ds = 1, dout = 1;
  std::vector<double> coeff;
};

/// Steerable kernel basis: Gaussian radial rings times circular (2D) or
/// spherical (3D) harmonics, sampled on a kernel_size^d stencil.
struct KernelBasis {
  int dim = 2;
  int kernel_size = 3;
  int radial = 1;
  int angular = 0;
  int in_cutoff = 0;
  int out_cutoff = 0;
  bool lift = false;

  /// Stencil orders: signed m for SO(2), degree l for SO(3).
  std::vector<int> orders;
  /// stencils[o * radial + j] holds [offset][component], offsets in grid order
  /// of the kernel window (x fastest), components m = -l..l in 3D.
  std::vector<std::vector<cplx>> stencils;
  std::vector<Coupling> couplings;

  int num_offsets() const;
  int order_dim(int o) const { return dim == 2 ? 1 : 2 * orders[o] + 1; }
  const std::vector<cplx>& stencil(int o, int ring) const { return stencils[static_cast<size_t>(o) * radial + ring]; }
  /// Offset (dx, dy, dz) of kernel window entry `off`, centred on zero.
  std::array<int, 3> offset(int off) const;

  /// Effective kernel of one coupling and ring, laid out [offset][mo][a].
  std::vector<cplx> coupling_kernel(int c, int ring) const;

  /// Complex weight count for the given channel plan: cout x cin x couplings x radial.
  size_t weight_count(int cin, int cout) const { return static_cast<size_t>(cout) * cin * couplings.size() * radial; }
};

/// `lift` restricts couplings to the trivial input irrep (first-layer basis).
/// Requires an odd kernel size, radial >= 1 and angular > 2 * cutoff.
KernelBasis build_kernel_basis(int dim, int kernel_size, int radial, int angular, int cutoff, bool lift = false);

/// Scalar-input convolution. The input may carry a cutoff > 0, but every
/// nontrivial irrep must be zero.
FourierField conv_type1(const FourierField& input, const KernelBasis& basis, std::span<const cplx> weights, int cout);
/// General steerable convolution; input cutoff must equal basis.in_cutoff.
FourierField conv_type2(const FourierField& input, const KernelBasis& basis, std::span<const cplx> weights, int cout);

/// Adjoint of conv_type1/conv_type2. Gradients use G = dL/dRe + i dL/dIm.
/// Accumulates into grad_weights; returns the input gradient. `type1` selects
/// the adjoint of conv_type1 (nontrivial input irreps receive no gradient).
FourierField conv_backward(const FourierField& input, const KernelBasis& basis, std::span<const cplx> weights,
                           int cout, const FourierField& grad_out, std::span<cplx> grad_weights, bool type1 = false);

/// Block average over stride^d windows.
FourierField avg_pool(const FourierField& field, int stride);
FourierField avg_pool_backward(const FourierField& input, int stride, const FourierField& grad_out);

constexpr double kBatchNormEps = 1e-5;

struct BatchNormOutput {
  std::vector<FourierField> out;
  /// Mean-square norm per (slot, channel) actually used for normalisation.
  std::vector<double> stats;
};

/// Divides every (irrep, channel) by sqrt(mean squared norm + eps) and scales by
/// gain (positive, one per (slot, channel)). Train mode uses batch statistics
/// and, when `running` is non-empty, blends them in with the given momentum.
/// Eval mode uses `running` verbatim.
BatchNormOutput steerable_batch_norm(std::span<const FourierField> batch, std::span<const double> gain,
                                     std::span<double> running, bool train, double momentum = 0.1,
                                     double eps = kBatchNormEps);

/// Adjoint; `stats` are the statistics returned by the forward call.
std::vector<FourierField> steerable_batch_norm_backward(std::span<const FourierField> batch,
                                                       std::span<const double> gain, std::span<const double> stats,
                                                       bool train, std::span<const FourierField> grad_out,
                                                       std::span<double> grad_gain, double eps = kBatchNormEps);

}  // namespace steerkit
