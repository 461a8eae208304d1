#pragma once

#include "steerkit/field.hpp"

#include <array>
#include <span>
#include <string_view>
#include <vector>

namespace steerkit {

/// Layer kinds provided by this header; each must have an equivariance audit.
inline constexpr std::array<std::string_view, 4> kNonlinearLayers{"harmonic_nonlinearity", "cg_nonlinearity",
                                                                  "layer_norm", "norm_flatten"};

constexpr double kNormEps = 1e-6;

/// Each d_rho column f becomes ReLU(|f| + b) f / (|f| + eps). `bias` holds one
/// real value per (slot, channel).
FourierField harmonic_nonlinearity(const FourierField& field, std::span<const double> bias, double eps = kNormEps);
/// Returns the input gradient and accumulates into grad_bias.
FourierField harmonic_nonlinearity_backward(const FourierField& field, std::span<const double> bias,
                                            const FourierField& grad_out, std::span<double> grad_bias,
                                            double eps = kNormEps);

/// Quadratic tensor-product features truncated at the field cutoff,
/// concatenated after the input channels (output has 2C channels).
FourierField cg_nonlinearity(const FourierField& field);
FourierField cg_nonlinearity_backward(const FourierField& field, const FourierField& grad_out);

/// Per site, divides every block by (sum of squared norms + eps), or by its
/// square root when `sqrt_denominator` is set.
FourierField steerable_layer_norm(const FourierField& field, double eps = kNormEps, bool sqrt_denominator = false);
FourierField steerable_layer_norm_backward(const FourierField& field, const FourierField& grad_out,
                                           double eps = kNormEps, bool sqrt_denominator = false);

/// Column norms of a single-site field, ordered [slot][channel].
std::vector<double> norm_flatten(const FourierField& field);
FourierField norm_flatten_backward(const FourierField& field, std::span<const double> grad_out);

}  // namespace steerkit
