#include "steerkit/conv.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>

namespace steerkit {

namespace {

double ring_profile(double radius, int ring, int radial, int kernel_size) {
  const double half = 0.5 * kernel_size;
  double center = 0.0, sigma = 0.25 * kernel_size;
  if (radial > 1) {
    sigma = half / (radial - 1);
    center = ring * sigma;
  }
  const double d = radius - center;
  return std::exp(-d * d / (2.0 * sigma * sigma));
}

// Irrep index of a basis slot (signed k in 2D, l in 3D).
int slot_index(int dim, int cutoff, int slot) { return dim == 2 ? slot - cutoff : slot; }

struct ConvGeometry {
  GridLayout out;
  std::vector<long> delta;  // input site offset of every kernel entry relative to the window corner
  int out_sites = 0;
  std::vector<long> base;  // input site of the window corner for each output site
};

ConvGeometry conv_geometry(const FourierField& input, const KernelBasis& basis) {
  if (!input.is_grid()) throw std::invalid_argument("steerable convolution requires a grid field");
  if (input.dim() != basis.dim) throw std::invalid_argument("convolution basis and field dimensions differ");
  const GridLayout& in = input.grid();
  const int ks = basis.kernel_size;
  ConvGeometry g;
  g.out.spacing = in.spacing;
  for (int a = 0; a < 3; ++a) {
    const int k = a < basis.dim ? ks : 1;
    if (in.extent[a] < k)
      throw std::invalid_argument("convolution input extent " + std::to_string(in.extent[a]) +
                                  " smaller than kernel size " + std::to_string(ks));
    g.out.extent[a] = in.extent[a] - (k - 1);
    g.out.origin[a] = in.origin[a] + (a < basis.dim ? in.spacing * 0.5 * (ks - 1) : 0.0);
  }
  g.out_sites = g.out.num_sites();
  for (int off = 0; off < basis.num_offsets(); ++off) {
    const auto d = basis.offset(off);
    const int h = ks / 2;
    g.delta.push_back(in.index(d[0] + h, d[1] + h, basis.dim == 3 ? d[2] + h : 0));
  }
  g.base.resize(g.out_sites);
  for (int s = 0; s < g.out_sites; ++s) {
    const auto c = g.out.coords(s);
    g.base[s] = in.index(c[0], c[1], c[2]);
  }
  return g;
}

using CMat = Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<CMat>;
using ConstCMap = Eigen::Map<const CMat>;

// Correlations of one input slot's lanes (m, channel) with the stencil
// components (order, m_s, ring) its couplings need. Rows [lane][out site].
struct SlotCorrelation {
  std::vector<int> comp_start;  // per basis order, -1 when unused
  CMat stencils;                // [offset][component]
  CMat values;
};

struct Correlations {
  std::vector<SlotCorrelation> slots;  // empty `values` for unused slots
};

std::vector<int> coupling_slots(const FourierField& input, const KernelBasis& basis, bool type1) {
  std::vector<int> slots(basis.couplings.size(), -1);
  for (size_t c = 0; c < basis.couplings.size(); ++c) {
    const int idx = slot_index(basis.dim, basis.in_cutoff, basis.couplings[c].in_slot);
    if (type1 && idx != 0) continue;
    slots[c] = input.slot_of(idx);
  }
  return slots;
}

// Window matrix of one slot: row (lane, out site), column kernel offset.
CMat im2col(const FourierField& input, int slot, const ConvGeometry& geo, int noff) {
  const int C = input.channels(), din = input.irrep_dim(slot);
  const auto block = input.block(slot);
  CMat cols(static_cast<Eigen::Index>(din) * C * geo.out_sites, noff);
  for (int a = 0; a < din; ++a)
    for (int c = 0; c < C; ++c) {
      const Eigen::Index row0 = static_cast<Eigen::Index>(a * C + c) * geo.out_sites;
      for (int x = 0; x < geo.out_sites; ++x)
        for (int off = 0; off < noff; ++off)
          cols(row0 + x, off) = block[(static_cast<size_t>(geo.base[x] + geo.delta[off]) * din + a) * C + c];
    }
  return cols;
}

Correlations correlate(const FourierField& input, const KernelBasis& basis, const ConvGeometry& geo,
                       const std::vector<int>& cslot) {
  const int noff = basis.num_offsets(), r = basis.radial;
  const int norders = static_cast<int>(basis.orders.size());
  Correlations corr;
  corr.slots.resize(input.num_irreps());
  std::vector<std::vector<bool>> needed(input.num_irreps(), std::vector<bool>(norders, false));
  for (size_t c = 0; c < cslot.size(); ++c)
    if (cslot[c] >= 0) needed[cslot[c]][basis.couplings[c].order] = true;
  for (int slot = 0; slot < input.num_irreps(); ++slot) {
    auto& sc = corr.slots[slot];
    sc.comp_start.assign(norders, -1);
    int ncomp = 0;
    for (int o = 0; o < norders; ++o)
      if (needed[slot][o]) {
        sc.comp_start[o] = ncomp;
        ncomp += basis.order_dim(o) * r;
      }
    if (ncomp == 0) continue;
    sc.stencils.resize(noff, ncomp);
    for (int o = 0; o < norders; ++o) {
      if (sc.comp_start[o] < 0) continue;
      const int ds = basis.order_dim(o);
      for (int j = 0; j < r; ++j) {
        const auto& st = basis.stencil(o, j);
        for (int off = 0; off < noff; ++off)
          for (int b = 0; b < ds; ++b) sc.stencils(off, sc.comp_start[o] + b * r + j) = st[static_cast<size_t>(off) * ds + b];
      }
    }
    sc.values.noalias() = im2col(input, slot, geo, noff) * sc.stencils;
  }
  return corr;
}

void check_weights(const FourierField& input, const KernelBasis& basis, std::span<const cplx> weights, int cout) {
  if (cout < 1) throw std::invalid_argument("convolution needs at least one output channel");
  const size_t want = basis.weight_count(input.channels(), cout);
  if (weights.size() != want)
    throw std::invalid_argument("convolution weights: expected " + std::to_string(want) + " complex values, got " +
                                std::to_string(weights.size()));
}

// Couplings feeding each output slot, so that the mixing of one slot is a
// single matrix product over (coupling, input channel, ring).
std::vector<std::vector<size_t>> couplings_by_output(const KernelBasis& basis, const std::vector<int>& cslot,
                                                     int out_irreps) {
  std::vector<std::vector<size_t>> groups(out_irreps);
  for (size_t c = 0; c < basis.couplings.size(); ++c)
    if (cslot[c] >= 0) groups[basis.couplings[c].out_slot].push_back(c);
  return groups;
}

// Accumulates k * src(x, m_in, stencil) into dst(x, m_out) or back, walking
// the coupling coefficients of every coupling in `group`.
template <bool ToCorrelation, typename Corr, typename Op>
void couple(Corr& corr, const KernelBasis& basis, const std::vector<int>& cslot, const std::vector<size_t>& group,
            int cin, int sites, Op& op) {
  const int r = basis.radial;
  for (size_t g = 0; g < group.size(); ++g) {
    const Coupling& cp = basis.couplings[group[g]];
    auto& sc = corr.slots[cslot[group[g]]];
    const int comp0 = sc.comp_start[cp.order];
    const Eigen::Index col0 = static_cast<Eigen::Index>(g) * cin * r;
    for (int a = 0; a < cp.din; ++a)
      for (int b = 0; b < cp.ds; ++b)
        for (int mo = 0; mo < cp.dout; ++mo) {
          const double k = cp.coeff[(static_cast<size_t>(a) * cp.ds + b) * cp.dout + mo];
          if (k == 0.0) continue;
          for (int c = 0; c < cin; ++c) {
            const Eigen::Index row0 = static_cast<Eigen::Index>(a * cin + c) * sites;
            for (int x = 0; x < sites; ++x) {
              auto t = op.row(static_cast<Eigen::Index>(x) * cp.dout + mo).segment(col0 + c * r, r);
              auto v = sc.values.row(row0 + x).segment(comp0 + b * r, r);
              if constexpr (ToCorrelation)
                v += k * t;
              else
                t += k * v;
            }
          }
        }
  }
}

// Weights of the couplings in `group` as a (cout, coupling * cin * ring) matrix.
CMat group_weights(std::span<const cplx> weights, const std::vector<size_t>& group, size_t ncoup, int cin, int cout,
                   int r) {
  CMat w(cout, static_cast<Eigen::Index>(group.size()) * cin * r);
  for (int co = 0; co < cout; ++co)
    for (size_t g = 0; g < group.size(); ++g)
      for (int c = 0; c < cin; ++c)
        for (int j = 0; j < r; ++j)
          w(co, (static_cast<Eigen::Index>(g) * cin + c) * r + j) =
              weights[((static_cast<size_t>(co) * cin + c) * ncoup + group[g]) * r + j];
  return w;
}

FourierField conv_forward(const FourierField& input, const KernelBasis& basis, std::span<const cplx> weights, int cout,
                          bool type1) {
  check_weights(input, basis, weights, cout);
  const ConvGeometry geo = conv_geometry(input, basis);
  const auto cslot = coupling_slots(input, basis, type1);
  const Correlations corr = correlate(input, basis, geo, cslot);

  FourierField out(basis.dim, basis.out_cutoff, cout, geo.out);
  const int cin = input.channels(), r = basis.radial;
  const auto groups = couplings_by_output(basis, cslot, out.num_irreps());
  for (int os = 0; os < out.num_irreps(); ++os) {
    const auto& group = groups[os];
    if (group.empty()) continue;
    const int dout = out.irrep_dim(os);
    CMat t = CMat::Zero(static_cast<Eigen::Index>(geo.out_sites) * dout, static_cast<Eigen::Index>(group.size()) * cin * r);
    couple<false>(corr, basis, cslot, group, cin, geo.out_sites, t);
    auto ob = out.block(os);
    CMap o(ob.data(), t.rows(), cout);
    o.noalias() += t * group_weights(weights, group, basis.couplings.size(), cin, cout, r).transpose();
  }
  return out;
}

}  // namespace

int KernelBasis::num_offsets() const {
  return dim == 2 ? kernel_size * kernel_size : kernel_size * kernel_size * kernel_size;
}

std::array<int, 3> KernelBasis::offset(int off) const {
  const int h = kernel_size / 2;
  const int dx = off % kernel_size;
  const int rest = off / kernel_size;
  return {dx - h, rest % kernel_size - h, dim == 3 ? rest / kernel_size - h : 0};
}

std::vector<cplx> KernelBasis::coupling_kernel(int c, int ring) const {
  const Coupling& cp = couplings[c];
  const auto& st = stencil(cp.order, ring);
  std::vector<cplx> k(static_cast<size_t>(num_offsets()) * cp.dout * cp.din);
  for (int off = 0; off < num_offsets(); ++off)
    for (int mo = 0; mo < cp.dout; ++mo)
      for (int a = 0; a < cp.din; ++a) {
        cplx acc{};
        for (int b = 0; b < cp.ds; ++b)
          acc += cp.coeff[(static_cast<size_t>(a) * cp.ds + b) * cp.dout + mo] * st[static_cast<size_t>(off) * cp.ds + b];
        k[(static_cast<size_t>(off) * cp.dout + mo) * cp.din + a] = acc;
      }
  return k;
}

KernelBasis build_kernel_basis(int dim, int kernel_size, int radial, int angular, int cutoff, bool lift) {
  if (dim != 2 && dim != 3) throw std::invalid_argument("kernel basis dimension must be 2 or 3");
  if (kernel_size < 1 || kernel_size % 2 == 0)
    throw std::invalid_argument("kernel size must be odd and positive, got " + std::to_string(kernel_size));
  if (radial < 1) throw std::invalid_argument("radial resolution must be at least 1");
  if (cutoff < 0) throw std::invalid_argument("cutoff must be non-negative");
  if (angular <= 2 * cutoff)
    throw std::invalid_argument("angular resolution " + std::to_string(angular) + " must exceed twice the cutoff " +
                                std::to_string(cutoff));
  KernelBasis kb;
  kb.dim = dim;
  kb.kernel_size = kernel_size;
  kb.radial = radial;
  kb.angular = angular;
  kb.in_cutoff = lift ? 0 : cutoff;
  kb.out_cutoff = cutoff;
  kb.lift = lift;

  const int max_order = kb.in_cutoff + kb.out_cutoff;
  if (dim == 2)
    for (int m = -max_order; m <= max_order; ++m) kb.orders.push_back(m);
  else
    for (int l = 0; l <= max_order; ++l) kb.orders.push_back(l);

  for (size_t o = 0; o < kb.orders.size(); ++o) {
    const int order = kb.orders[o];
    const int ds = kb.order_dim(static_cast<int>(o));
    for (int j = 0; j < radial; ++j) {
      std::vector<cplx> st(static_cast<size_t>(kb.num_offsets()) * ds);
      double norm2 = 0.0;
      for (int off = 0; off < kb.num_offsets(); ++off) {
        const auto d = kb.offset(off);
        const double radius = std::sqrt(double(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]));
        const double g = ring_profile(radius, j, radial, kernel_size);
        if (radius == 0.0) {
          if (order == 0) st[static_cast<size_t>(off) * ds] = dim == 2 ? g : g * spherical_harmonics(0, {0, 0, 1})[0];
        } else if (dim == 2) {
          st[off] = g * std::polar(1.0, -order * std::atan2(double(d[1]), double(d[0])));
        } else {
          const auto y = spherical_harmonics(order, {d[0] / radius, d[1] / radius, d[2] / radius});
          for (int b = 0; b < ds; ++b) st[static_cast<size_t>(off) * ds + b] = g * y[b];
        }
      }
      for (const cplx& v : st) norm2 += std::norm(v);
      if (norm2 > 0.0)
        for (cplx& v : st) v /= std::sqrt(norm2);
      kb.stencils.push_back(std::move(st));
    }
  }

  const int n_in = dim == 2 ? 2 * kb.in_cutoff + 1 : kb.in_cutoff + 1;
  const int n_out = dim == 2 ? 2 * kb.out_cutoff + 1 : kb.out_cutoff + 1;
  for (int si = 0; si < n_in; ++si)
    for (int so = 0; so < n_out; ++so) {
      const int kin = slot_index(dim, kb.in_cutoff, si), kout = slot_index(dim, kb.out_cutoff, so);
      if (dim == 2) {
        Coupling c;
        c.in_slot = si;
        c.out_slot = so;
        c.order = (kout - kin) + max_order;
        c.coeff = {1.0};
        kb.couplings.push_back(c);
      } else {
        for (int ls = std::abs(kin - kout); ls <= kin + kout; ++ls) {
          Coupling c;
          c.in_slot = si;
          c.out_slot = so;
          c.order = ls;
          c.din = 2 * kin + 1;
          c.ds = 2 * ls + 1;
          c.dout = 2 * kout + 1;
          const auto v = clebsch_gordan(kin, ls, kout).values();
          c.coeff.assign(v.begin(), v.end());
          kb.couplings.push_back(std::move(c));
        }
      }
    }
  return kb;
}

FourierField conv_type1(const FourierField& input, const KernelBasis& basis, std::span<const cplx> weights, int cout) {
  for (int slot = 0; slot < input.num_irreps(); ++slot) {
    if (slot == input.trivial_slot()) continue;
    for (const cplx& v : input.block(slot))
      if (v != cplx{})
        throw std::invalid_argument("conv_type1 input carries nontrivial irrep content; use conv_type2");
  }
  return conv_forward(input, basis, weights, cout, true);
}

FourierField conv_type2(const FourierField& input, const KernelBasis& basis, std::span<const cplx> weights, int cout) {
  if (input.cutoff() != basis.in_cutoff)
    throw std::invalid_argument("conv_type2 input cutoff " + std::to_string(input.cutoff()) +
                                " does not match basis cutoff " + std::to_string(basis.in_cutoff));
  return conv_forward(input, basis, weights, cout, false);
}

FourierField conv_backward(const FourierField& input, const KernelBasis& basis, std::span<const cplx> weights,
                           int cout, const FourierField& grad_out, std::span<cplx> grad_weights, bool type1) {
  check_weights(input, basis, weights, cout);
  if (grad_weights.size() != weights.size()) throw std::invalid_argument("conv_backward: gradient buffer size mismatch");
  const ConvGeometry geo = conv_geometry(input, basis);
  const auto cslot = coupling_slots(input, basis, type1);
  const Correlations corr = correlate(input, basis, geo, cslot);

  const int cin = input.channels(), r = basis.radial;
  const size_t ncoup = basis.couplings.size();
  Correlations gcorr;
  gcorr.slots.resize(corr.slots.size());
  for (size_t s = 0; s < corr.slots.size(); ++s) {
    gcorr.slots[s].comp_start = corr.slots[s].comp_start;
    gcorr.slots[s].values = CMat::Zero(corr.slots[s].values.rows(), corr.slots[s].values.cols());
  }
  const auto groups = couplings_by_output(basis, cslot, grad_out.num_irreps());
  for (int os = 0; os < grad_out.num_irreps(); ++os) {
    const auto& group = groups[os];
    if (group.empty()) continue;
    const int dout = grad_out.irrep_dim(os);
    CMat t = CMat::Zero(static_cast<Eigen::Index>(geo.out_sites) * dout, static_cast<Eigen::Index>(group.size()) * cin * r);
    couple<false>(corr, basis, cslot, group, cin, geo.out_sites, t);
    const auto gb = grad_out.block(os);
    ConstCMap g(gb.data(), t.rows(), cout);
    const CMat gw = g.transpose() * t.conjugate();
    for (int co = 0; co < cout; ++co)
      for (size_t k = 0; k < group.size(); ++k)
        for (int c = 0; c < cin; ++c)
          for (int j = 0; j < r; ++j)
            grad_weights[((static_cast<size_t>(co) * cin + c) * ncoup + group[k]) * r + j] +=
                gw(co, (static_cast<Eigen::Index>(k) * cin + c) * r + j);
    CMat gt = g * group_weights(weights, group, ncoup, cin, cout, r).conjugate();
    couple<true>(gcorr, basis, cslot, group, cin, geo.out_sites, gt);
  }

  FourierField grad_in = FourierField::zeros_like(input, input.cutoff(), cin);
  const int noff = basis.num_offsets();
  for (int slot = 0; slot < input.num_irreps(); ++slot) {
    if (corr.slots[slot].values.size() == 0) continue;
    const CMat gcols = gcorr.slots[slot].values * corr.slots[slot].stencils.adjoint();
    const int din = input.irrep_dim(slot);
    auto gblock = grad_in.block(slot);
    for (int a = 0; a < din; ++a)
      for (int c = 0; c < cin; ++c) {
        const Eigen::Index row0 = static_cast<Eigen::Index>(a * cin + c) * geo.out_sites;
        for (int x = 0; x < geo.out_sites; ++x)
          for (int off = 0; off < noff; ++off)
            gblock[(static_cast<size_t>(geo.base[x] + geo.delta[off]) * din + a) * cin + c] += gcols(row0 + x, off);
      }
  }
  return grad_in;
}

// ---------------------------------------------------------------- pooling

namespace {

GridLayout pooled_layout(const FourierField& field, int stride) {
  if (!field.is_grid()) throw std::invalid_argument("avg_pool requires a grid field");
  if (stride < 1) throw std::invalid_argument("avg_pool stride must be positive");
  const GridLayout& in = field.grid();
  GridLayout out;
  out.spacing = in.spacing * stride;
  for (int a = 0; a < 3; ++a) {
    if (a >= field.dim()) continue;
    if (in.extent[a] % stride != 0)
      throw std::invalid_argument("avg_pool: extent " + std::to_string(in.extent[a]) + " not divisible by stride " +
                                  std::to_string(stride));
    out.extent[a] = in.extent[a] / stride;
    out.origin[a] = in.origin[a] + 0.5 * in.spacing * (stride - 1);
  }
  return out;
}

// Calls fn(out_site, in_site) for every input site of every pooling window.
template <typename Fn>
void for_each_window(const GridLayout& out, int dim, int stride, const GridLayout& in, Fn fn) {
  const int sz = dim == 3 ? stride : 1;
  for (int s = 0; s < out.num_sites(); ++s) {
    const auto c = out.coords(s);
    for (int dz = 0; dz < sz; ++dz)
      for (int dy = 0; dy < stride; ++dy)
        for (int dx = 0; dx < stride; ++dx)
          fn(s, in.index(c[0] * stride + dx, c[1] * stride + dy, c[2] * sz + dz));
  }
}

}  // namespace

FourierField avg_pool(const FourierField& field, int stride) {
  const GridLayout out_grid = pooled_layout(field, stride);
  FourierField out(field.dim(), field.cutoff(), field.channels(), out_grid);
  const double scale = 1.0 / std::pow(stride, field.dim());
  for (int slot = 0; slot < field.num_irreps(); ++slot) {
    const size_t width = static_cast<size_t>(field.irrep_dim(slot)) * field.channels();
    const auto in = field.block(slot);
    auto dst = out.block(slot);
    for_each_window(out_grid, field.dim(), stride, field.grid(), [&](int o, int i) {
      for (size_t e = 0; e < width; ++e) dst[o * width + e] += in[i * width + e];
    });
    for (auto& v : dst) v *= scale;
  }
  return out;
}

FourierField avg_pool_backward(const FourierField& input, int stride, const FourierField& grad_out) {
  const GridLayout out_grid = pooled_layout(input, stride);
  FourierField grad = FourierField::zeros_like(input, input.cutoff(), input.channels());
  const double scale = 1.0 / std::pow(stride, input.dim());
  for (int slot = 0; slot < input.num_irreps(); ++slot) {
    const size_t width = static_cast<size_t>(input.irrep_dim(slot)) * input.channels();
    const auto g = grad_out.block(slot);
    auto dst = grad.block(slot);
    for_each_window(out_grid, input.dim(), stride, input.grid(), [&](int o, int i) {
      for (size_t e = 0; e < width; ++e) dst[i * width + e] = scale * g[o * width + e];
    });
  }
  return grad;
}

// ---------------------------------------------------------------- batch norm

namespace {

void check_batch(std::span<const FourierField> batch, std::span<const double> gain) {
  if (batch.empty()) throw std::invalid_argument("batch norm needs a non-empty batch");
  for (const auto& f : batch)
    if (!f.same_shape(batch[0])) throw std::invalid_argument("batch norm inputs differ in shape");
  const size_t want = static_cast<size_t>(batch[0].num_irreps()) * batch[0].channels();
  if (gain.size() != want)
    throw std::invalid_argument("batch norm gain: expected " + std::to_string(want) + " values, got " +
                                std::to_string(gain.size()));
}

// Mean over batch and sites of the squared column norm, per (slot, channel).
std::vector<double> mean_square(std::span<const FourierField> batch) {
  const auto& f0 = batch[0];
  const int C = f0.channels();
  std::vector<double> ms(static_cast<size_t>(f0.num_irreps()) * C, 0.0);
  for (const auto& f : batch)
    for (int slot = 0; slot < f.num_irreps(); ++slot) {
      const auto b = f.block(slot);
      for (size_t i = 0; i < b.size(); ++i) ms[slot * C + i % C] += std::norm(b[i]);
    }
  const double count = static_cast<double>(batch.size()) * f0.num_sites();
  for (auto& v : ms) v /= count;
  return ms;
}

}  // namespace

BatchNormOutput steerable_batch_norm(std::span<const FourierField> batch, std::span<const double> gain,
                                     std::span<double> running, bool train, double momentum, double eps) {
  check_batch(batch, gain);
  BatchNormOutput res;
  if (train) {
    res.stats = mean_square(batch);
    if (!running.empty()) {
      if (running.size() != res.stats.size()) throw std::invalid_argument("batch norm running stats size mismatch");
      for (size_t i = 0; i < running.size(); ++i) running[i] = (1.0 - momentum) * running[i] + momentum * res.stats[i];
    }
  } else {
    if (running.size() != gain.size()) throw std::invalid_argument("batch norm running stats size mismatch");
    res.stats.assign(running.begin(), running.end());
  }
  const int C = batch[0].channels();
  res.out.reserve(batch.size());
  for (const auto& f : batch) {
    FourierField o = f;
    for (int slot = 0; slot < o.num_irreps(); ++slot) {
      auto b = o.block(slot);
      for (size_t i = 0; i < b.size(); ++i) {
        const size_t k = slot * C + i % C;
        b[i] *= gain[k] / std::sqrt(res.stats[k] + eps);
      }
    }
    res.out.push_back(std::move(o));
  }
  return res;
}

std::vector<FourierField> steerable_batch_norm_backward(std::span<const FourierField> batch,
                                                       std::span<const double> gain, std::span<const double> stats,
                                                       bool train, std::span<const FourierField> grad_out,
                                                       std::span<double> grad_gain, double eps) {
  check_batch(batch, gain);
  if (grad_out.size() != batch.size()) throw std::invalid_argument("batch norm backward: gradient count mismatch");
  const int C = batch[0].channels();
  const size_t nk = gain.size();
  // dL/dgain (per unit gain) and dL/dstat per (slot, channel)
  std::vector<double> dot(nk, 0.0);
  for (size_t n = 0; n < batch.size(); ++n)
    for (int slot = 0; slot < batch[n].num_irreps(); ++slot) {
      const auto f = batch[n].block(slot);
      const auto g = grad_out[n].block(slot);
      for (size_t i = 0; i < f.size(); ++i) dot[slot * C + i % C] += (std::conj(g[i]) * f[i]).real();
    }
  std::vector<double> inv(nk), dstat(nk, 0.0);
  for (size_t k = 0; k < nk; ++k) {
    inv[k] = 1.0 / std::sqrt(stats[k] + eps);
    grad_gain[k] += dot[k] * inv[k];
    if (train) dstat[k] = -0.5 * gain[k] * dot[k] * inv[k] * inv[k] * inv[k];
  }
  const double count = static_cast<double>(batch.size()) * batch[0].num_sites();
  std::vector<FourierField> grads;
  grads.reserve(batch.size());
  for (size_t n = 0; n < batch.size(); ++n) {
    FourierField gi = grad_out[n];
    for (int slot = 0; slot < gi.num_irreps(); ++slot) {
      auto g = gi.block(slot);
      const auto f = batch[n].block(slot);
      for (size_t i = 0; i < g.size(); ++i) {
        const size_t k = slot * C + i % C;
        g[i] = gain[k] * inv[k] * g[i] + (2.0 / count) * dstat[k] * f[i];
      }
    }
    grads.push_back(std::move(gi));
  }
  return grads;
}

}  // namespace steerkit
