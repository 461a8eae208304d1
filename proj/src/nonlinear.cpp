#include "steerkit/nonlinear.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace steerkit {

namespace {

void check_per_channel(const FourierField& f, std::span<const double> v, const char* what) {
  const size_t want = static_cast<size_t>(f.num_irreps()) * f.channels();
  if (v.size() != want)
    throw std::invalid_argument(std::string(what) + ": expected " + std::to_string(want) + " values, got " +
                                std::to_string(v.size()));
}

double column_norm(std::span<const cplx> block, size_t site, int d, int C, int c) {
  double acc = 0.0;
  for (int m = 0; m < d; ++m) acc += std::norm(block[(site * d + m) * C + c]);
  return std::sqrt(acc);
}

// Calls fn(out_slot, in_slot1, in_slot2, coeff, a, b, mo) for every nonzero
// term of the quadratic tensor product truncated at the field cutoff.
template <typename Fn>
void for_each_product_term(const FourierField& f, Fn fn) {
  const int n = f.num_irreps();
  if (f.dim() == 2) {
    const int K = f.cutoff();
    for (int s1 = 0; s1 < n; ++s1)
      for (int s2 = 0; s2 < n; ++s2) {
        const int k = (s1 - K) + (s2 - K);
        if (std::abs(k) <= K) fn(k + K, s1, s2, 1.0, 0, 0, 0);
      }
    return;
  }
  for (int l1 = 0; l1 < n; ++l1)
    for (int l2 = 0; l2 < n; ++l2)
      for (int l = std::abs(l1 - l2); l <= std::min(l1 + l2, f.cutoff()); ++l) {
        const CGBlock& cg = clebsch_gordan(l1, l2, l);
        for (int a = 0; a < 2 * l1 + 1; ++a)
          for (int b = 0; b < 2 * l2 + 1; ++b) {
            const int mo = (a - l1) + (b - l2) + l;
            if (mo < 0 || mo > 2 * l) continue;
            const double k = cg(a - l1, b - l2, mo - l);
            if (k != 0.0) fn(l, l1, l2, k, a, b, mo);
          }
      }
}

}  // namespace

FourierField harmonic_nonlinearity(const FourierField& field, std::span<const double> bias, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("harmonic nonlinearity needs eps > 0");
  check_per_channel(field, bias, "harmonic bias");
  FourierField out = field;
  const int C = field.channels();
  for (int slot = 0; slot < field.num_irreps(); ++slot) {
    const int d = field.irrep_dim(slot);
    auto block = out.block(slot);
    for (int s = 0; s < field.num_sites(); ++s)
      for (int c = 0; c < C; ++c) {
        const double n = column_norm(block, s, d, C, c);
        const double scale = std::max(0.0, n + bias[slot * C + c]) / (n + eps);
        for (int m = 0; m < d; ++m) block[(static_cast<size_t>(s) * d + m) * C + c] *= scale;
      }
  }
  return out;
}

FourierField harmonic_nonlinearity_backward(const FourierField& field, std::span<const double> bias,
                                            const FourierField& grad_out, std::span<double> grad_bias, double eps) {
  check_per_channel(field, bias, "harmonic bias");
  FourierField grad = FourierField::zeros_like(field, field.cutoff(), field.channels());
  const int C = field.channels();
  for (int slot = 0; slot < field.num_irreps(); ++slot) {
    const int d = field.irrep_dim(slot);
    const auto f = field.block(slot);
    const auto gy = grad_out.block(slot);
    auto gf = grad.block(slot);
    for (int s = 0; s < field.num_sites(); ++s)
      for (int c = 0; c < C; ++c) {
        const double n = column_norm(f, s, d, C, c);
        const double b = bias[slot * C + c];
        const bool active = n + b > 0.0;
        const double relu = active ? n + b : 0.0;
        const double scale = relu / (n + eps);
        double dscale = 0.0;  // dL/dscale
        for (int m = 0; m < d; ++m) {
          const size_t i = (static_cast<size_t>(s) * d + m) * C + c;
          dscale += (std::conj(gy[i]) * f[i]).real();
        }
        const double ds_dn = ((active ? 1.0 : 0.0) * (n + eps) - relu) / ((n + eps) * (n + eps));
        if (active) grad_bias[slot * C + c] += dscale / (n + eps);
        for (int m = 0; m < d; ++m) {
          const size_t i = (static_cast<size_t>(s) * d + m) * C + c;
          gf[i] = scale * gy[i] + (n > 0.0 ? dscale * ds_dn * f[i] / n : cplx{});
        }
      }
  }
  return grad;
}

FourierField cg_nonlinearity(const FourierField& field) {
  const int C = field.channels();
  FourierField out = FourierField::zeros_like(field, field.cutoff(), 2 * C);
  const int S = field.num_sites();
  for (int slot = 0; slot < field.num_irreps(); ++slot) {
    const int d = field.irrep_dim(slot);
    const auto in = field.block(slot);
    auto o = out.block(slot);
    for (int s = 0; s < S; ++s)
      for (int m = 0; m < d; ++m)
        for (int c = 0; c < C; ++c) o[(static_cast<size_t>(s) * d + m) * 2 * C + c] = in[(static_cast<size_t>(s) * d + m) * C + c];
  }
  for_each_product_term(field, [&](int so, int s1, int s2, double k, int a, int b, int mo) {
    const int d1 = field.irrep_dim(s1), d2 = field.irrep_dim(s2), dout = field.irrep_dim(so);
    const auto f1 = field.block(s1);
    const auto f2 = field.block(s2);
    auto o = out.block(so);
    for (int s = 0; s < S; ++s)
      for (int c = 0; c < C; ++c)
        o[(static_cast<size_t>(s) * dout + mo) * 2 * C + C + c] +=
            k * f1[(static_cast<size_t>(s) * d1 + a) * C + c] * f2[(static_cast<size_t>(s) * d2 + b) * C + c];
  });
  return out;
}

FourierField cg_nonlinearity_backward(const FourierField& field, const FourierField& grad_out) {
  const int C = field.channels();
  const int S = field.num_sites();
  FourierField grad = FourierField::zeros_like(field, field.cutoff(), C);
  for (int slot = 0; slot < field.num_irreps(); ++slot) {
    const int d = field.irrep_dim(slot);
    const auto g = grad_out.block(slot);
    auto gi = grad.block(slot);
    for (int s = 0; s < S; ++s)
      for (int m = 0; m < d; ++m)
        for (int c = 0; c < C; ++c) gi[(static_cast<size_t>(s) * d + m) * C + c] = g[(static_cast<size_t>(s) * d + m) * 2 * C + c];
  }
  for_each_product_term(field, [&](int so, int s1, int s2, double k, int a, int b, int mo) {
    const int d1 = field.irrep_dim(s1), d2 = field.irrep_dim(s2), dout = field.irrep_dim(so);
    const auto f1 = field.block(s1);
    const auto f2 = field.block(s2);
    const auto g = grad_out.block(so);
    for (int s = 0; s < S; ++s)
      for (int c = 0; c < C; ++c) {
        const cplx gq = k * g[(static_cast<size_t>(s) * dout + mo) * 2 * C + C + c];
        const size_t i1 = (static_cast<size_t>(s) * d1 + a) * C + c;
        const size_t i2 = (static_cast<size_t>(s) * d2 + b) * C + c;
        grad.block(s1)[i1] += std::conj(f2[i2]) * gq;
        grad.block(s2)[i2] += std::conj(f1[i1]) * gq;
      }
  });
  return grad;
}

namespace {

std::vector<double> site_energy(const FourierField& f) {
  std::vector<double> e(f.num_sites(), 0.0);
  for (int slot = 0; slot < f.num_irreps(); ++slot) {
    const size_t width = static_cast<size_t>(f.irrep_dim(slot)) * f.channels();
    const auto b = f.block(slot);
    for (size_t i = 0; i < b.size(); ++i) e[i / width] += std::norm(b[i]);
  }
  return e;
}

}  // namespace

FourierField steerable_layer_norm(const FourierField& field, double eps, bool sqrt_denominator) {
  if (!(eps > 0.0)) throw std::invalid_argument("layer norm needs eps > 0");
  const auto e = site_energy(field);
  FourierField out = field;
  for (int slot = 0; slot < field.num_irreps(); ++slot) {
    const size_t width = static_cast<size_t>(field.irrep_dim(slot)) * field.channels();
    auto b = out.block(slot);
    for (size_t i = 0; i < b.size(); ++i) {
      const double den = e[i / width] + eps;
      b[i] /= sqrt_denominator ? std::sqrt(den) : den;
    }
  }
  return out;
}

FourierField steerable_layer_norm_backward(const FourierField& field, const FourierField& grad_out, double eps,
                                           bool sqrt_denominator) {
  const auto e = site_energy(field);
  const double p = sqrt_denominator ? 0.5 : 1.0;
  std::vector<double> dot(field.num_sites(), 0.0);
  for (int slot = 0; slot < field.num_irreps(); ++slot) {
    const size_t width = static_cast<size_t>(field.irrep_dim(slot)) * field.channels();
    const auto f = field.block(slot);
    const auto g = grad_out.block(slot);
    for (size_t i = 0; i < f.size(); ++i) dot[i / width] += (std::conj(g[i]) * f[i]).real();
  }
  FourierField grad = FourierField::zeros_like(field, field.cutoff(), field.channels());
  for (int slot = 0; slot < field.num_irreps(); ++slot) {
    const size_t width = static_cast<size_t>(field.irrep_dim(slot)) * field.channels();
    const auto f = field.block(slot);
    const auto g = grad_out.block(slot);
    auto gi = grad.block(slot);
    for (size_t i = 0; i < f.size(); ++i) {
      const size_t s = i / width;
      const double den = e[s] + eps;
      const double scale = std::pow(den, -p);
      const double dscale = -p * std::pow(den, -p - 1.0);
      gi[i] = scale * g[i] + dot[s] * dscale * 2.0 * f[i];
    }
  }
  return grad;
}

std::vector<double> norm_flatten(const FourierField& field) {
  if (field.num_sites() != 1)
    throw std::invalid_argument("norm_flatten expects a single-site field, got " + std::to_string(field.num_sites()) +
                                " sites");
  return norm_per_irrep(field);
}

FourierField norm_flatten_backward(const FourierField& field, std::span<const double> grad_out) {
  const auto norms = norm_flatten(field);
  if (grad_out.size() != norms.size()) throw std::invalid_argument("norm_flatten backward: gradient size mismatch");
  FourierField grad = FourierField::zeros_like(field, field.cutoff(), field.channels());
  const int C = field.channels();
  for (int slot = 0; slot < field.num_irreps(); ++slot) {
    const auto f = field.block(slot);
    auto g = grad.block(slot);
    for (size_t i = 0; i < f.size(); ++i) {
      const size_t k = slot * C + i % C;
      if (norms[k] > 0.0) g[i] = grad_out[k] * f[i] / norms[k];
    }
  }
  return grad;
}

}  // namespace steerkit
