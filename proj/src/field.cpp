#include "steerkit/field.hpp"

#include "bytes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace steerkit {

namespace {

constexpr char kFieldMagic[4] = {'S', 'T', 'F', 'L'};
constexpr std::uint16_t kFieldVersion = 1;

void check_dim(int dim) {
  if (dim != 2 && dim != 3) throw std::invalid_argument("field dimension must be 2 or 3, got " + std::to_string(dim));
}

// Left-multiplies every site block by rho(R).
void apply_irreps(FourierField& f, const Rotation& r) {
  const int c = f.channels();
  for (int slot = 0; slot < f.num_irreps(); ++slot) {
    const CMatrix d = irrep_eval(f.irrep(slot), r);
    const int n = f.irrep_dim(slot);
    auto block = f.block(slot);
    std::vector<cplx> tmp(static_cast<size_t>(n) * c);
    for (int s = 0; s < f.num_sites(); ++s) {
      cplx* site = block.data() + static_cast<size_t>(s) * n * c;
      std::fill(tmp.begin(), tmp.end(), cplx{});
      for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) {
          const cplx dab = d(a, b);
          if (dab == cplx{}) continue;
          for (int ch = 0; ch < c; ++ch) tmp[a * c + ch] += dab * site[b * c + ch];
        }
      std::copy(tmp.begin(), tmp.end(), site);
    }
  }
}

// Copies every (slot, m, channel) value of site `from` in src to site `to` in dst.
void copy_site(const FourierField& src, int from, FourierField& dst, int to) {
  for (int slot = 0; slot < src.num_irreps(); ++slot) {
    const size_t width = static_cast<size_t>(src.irrep_dim(slot)) * src.channels();
    const auto s = src.block(slot).subspan(from * width, width);
    auto d = dst.block(slot).subspan(to * width, width);
    std::copy(s.begin(), s.end(), d.begin());
  }
}

FourierField act_exact(const FourierField& f, const GroupElement& g) {
  const Rotation& r = g.rotation;
  if (!r.is_lattice()) throw std::invalid_argument("exact-permutation action requires a rotation that permutes the lattice");
  const GridLayout& in = f.grid();
  const int dim = f.dim();

  GridLayout out;
  out.spacing = in.spacing;
  // Axis a of the source maps onto axis b of the image where R[b][a] != 0.
  for (int b = 0; b < dim; ++b)
    for (int a = 0; a < dim; ++a)
      if (std::round(r(b, a)) != 0.0) out.extent[b] = in.extent[a];
  for (int b = 0; b < dim; ++b) out.origin[b] = std::numeric_limits<double>::infinity();
  for (int corner = 0; corner < (1 << dim); ++corner) {
    Vec3 p = in.origin;
    for (int a = 0; a < dim; ++a)
      if (corner & (1 << a)) p[a] += in.spacing * (in.extent[a] - 1);
    const Vec3 q = se_apply(g, p);
    for (int b = 0; b < dim; ++b) out.origin[b] = std::min(out.origin[b], q[b]);
  }

  FourierField result(dim, f.cutoff(), f.channels(), out);
  for (int s = 0; s < f.num_sites(); ++s) {
    const auto src = in.coords(s);
    std::array<int, 3> dst{0, 0, 0};
    for (int b = 0; b < dim; ++b) {
      double v = 0.0;
      for (int a = 0; a < dim; ++a) v += std::round(r(b, a)) * src[a];
      // offset relative to the image of the source origin, in lattice steps
      const double origin_img = se_apply(g, in.origin)[b];
      dst[b] = static_cast<int>(std::lround(v + (origin_img - out.origin[b]) / in.spacing));
    }
    copy_site(f, s, result, out.index(dst[0], dst[1], dst[2]));
  }
  apply_irreps(result, r);
  return result;
}

FourierField act_linear(const FourierField& f, const GroupElement& g) {
  const GridLayout& grid = f.grid();
  const int dim = f.dim();
  const GroupElement inv = se_inverse(g);
  FourierField result(dim, f.cutoff(), f.channels(), grid);
  for (int s = 0; s < result.num_sites(); ++s) {
    const Vec3 pre = se_apply(inv, result.site_position(s));
    std::array<int, 3> base{0, 0, 0};
    std::array<double, 3> frac{0, 0, 0};
    for (int a = 0; a < dim; ++a) {
      const double u = (pre[a] - grid.origin[a]) / grid.spacing;
      base[a] = static_cast<int>(std::floor(u));
      frac[a] = u - base[a];
    }
    for (int corner = 0; corner < (1 << dim); ++corner) {
      std::array<int, 3> idx{0, 0, 0};
      double w = 1.0;
      bool inside = true;
      for (int a = 0; a < dim; ++a) {
        const int bit = (corner >> a) & 1;
        idx[a] = base[a] + bit;
        w *= bit ? frac[a] : 1.0 - frac[a];
        if (idx[a] < 0 || idx[a] >= grid.extent[a]) inside = false;
      }
      if (!inside || w == 0.0) continue;
      const int src = grid.index(idx[0], idx[1], idx[2]);
      for (int slot = 0; slot < f.num_irreps(); ++slot) {
        const size_t width = static_cast<size_t>(f.irrep_dim(slot)) * f.channels();
        const auto in = f.block(slot).subspan(src * width, width);
        auto out = result.block(slot).subspan(s * width, width);
        for (size_t i = 0; i < width; ++i) out[i] += w * in[i];
      }
    }
  }
  apply_irreps(result, g.rotation);
  return result;
}

}  // namespace

// ---------------------------------------------------------------- GridLayout

GridLayout GridLayout::centered(int dim, std::array<int, 3> extent, double spacing) {
  check_dim(dim);
  GridLayout g;
  g.spacing = spacing;
  for (int a = 0; a < 3; ++a) {
    if (a >= dim) extent[a] = 1;
    if (extent[a] < 1) throw std::invalid_argument("grid extent must be positive");
    g.extent[a] = extent[a];
    g.origin[a] = a < dim ? -0.5 * spacing * (extent[a] - 1) : 0.0;
  }
  return g;
}

std::array<int, 3> GridLayout::coords(int site) const {
  const int ix = site % extent[0];
  const int rest = site / extent[0];
  return {ix, rest % extent[1], rest / extent[1]};
}

// ---------------------------------------------------------------- FourierField

FourierField::FourierField(int dim, int cutoff, int channels, GridLayout grid)
    : dim_(dim), cutoff_(cutoff), channels_(channels), grid_(grid) {
  check_dim(dim);
  if (dim == 2) grid_->extent[2] = 1;
  num_sites_ = grid_->num_sites();
  allocate();
}

FourierField::FourierField(int dim, int cutoff, int channels, std::vector<Vec3> points)
    : dim_(dim), cutoff_(cutoff), channels_(channels), points_(std::move(points)) {
  check_dim(dim);
  if (dim == 2)
    for (auto& p : points_) p[2] = 0.0;
  num_sites_ = static_cast<int>(points_.size());
  allocate();
}

void FourierField::allocate() {
  if (cutoff_ < 0) throw std::invalid_argument("field cutoff must be non-negative");
  if (channels_ < 1) throw std::invalid_argument("field needs at least one channel");
  offsets_.resize(num_irreps() + 1);
  size_t total = 0;
  for (int slot = 0; slot < num_irreps(); ++slot) {
    offsets_[slot] = total;
    total += static_cast<size_t>(num_sites_) * irrep_dim(slot) * channels_;
  }
  offsets_[num_irreps()] = total;
  data_.assign(total, cplx{});
}

FourierField FourierField::zeros_like(const FourierField& like, int cutoff, int channels) {
  if (like.is_grid()) return FourierField(like.dim(), cutoff, channels, like.grid());
  return FourierField(like.dim(), cutoff, channels, like.points());
}

IrrepId FourierField::irrep(int slot) const {
  return dim_ == 2 ? IrrepId::so2(slot - cutoff_) : IrrepId::so3(slot);
}

int FourierField::slot_of(int index) const {
  if (dim_ == 2) return std::abs(index) <= cutoff_ ? index + cutoff_ : -1;
  return (index >= 0 && index <= cutoff_) ? index : -1;
}

const GridLayout& FourierField::grid() const {
  if (!grid_) throw std::invalid_argument("field is a point set, not a grid");
  return *grid_;
}

Vec3 FourierField::site_position(int site) const {
  if (!grid_) return points_[site];
  const auto c = grid_->coords(site);
  Vec3 p = grid_->origin;
  for (int a = 0; a < dim_; ++a) p[a] += grid_->spacing * c[a];
  return p;
}

std::span<cplx> FourierField::block(int slot) {
  return std::span<cplx>(data_).subspan(offsets_[slot], offsets_[slot + 1] - offsets_[slot]);
}

std::span<const cplx> FourierField::block(int slot) const {
  return std::span<const cplx>(data_).subspan(offsets_[slot], offsets_[slot + 1] - offsets_[slot]);
}

bool FourierField::same_shape(const FourierField& o) const {
  return dim_ == o.dim_ && cutoff_ == o.cutoff_ && channels_ == o.channels_ && num_sites_ == o.num_sites_ &&
         grid_.has_value() == o.grid_.has_value() && (!grid_ || grid_->extent == o.grid_->extent);
}

bool FourierField::same_sites(const FourierField& o, double tol) const {
  if (num_sites_ != o.num_sites_ || is_grid() != o.is_grid()) return false;
  for (int s = 0; s < num_sites_; ++s) {
    const Vec3 a = site_position(s), b = o.site_position(s);
    for (int i = 0; i < 3; ++i)
      if (std::abs(a[i] - b[i]) > tol) return false;
  }
  return true;
}

// ---------------------------------------------------------------- operations

FourierField lift_scalar_image(std::span<const double> values, int dim, std::array<int, 3> extent, int cutoff,
                               int channels) {
  const GridLayout grid = GridLayout::centered(dim, extent);
  if (values.size() != static_cast<size_t>(grid.num_sites()) * channels)
    throw std::invalid_argument("lift_scalar_image: expected " + std::to_string(grid.num_sites() * channels) +
                                " values, got " + std::to_string(values.size()));
  FourierField f(dim, cutoff, channels, grid);
  auto trivial = f.block(f.trivial_slot());
  for (size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) throw std::invalid_argument("lift_scalar_image: non-finite input value");
    trivial[i] = values[i];
  }
  return f;
}

std::vector<double> rescale_voxels(std::span<const double> occupancy) {
  std::vector<double> out(occupancy.size());
  std::transform(occupancy.begin(), occupancy.end(), out.begin(), [](double v) { return 6.0 * v - 1.0; });
  return out;
}

FourierField act_group(const FourierField& field, const GroupElement& g, Interpolation mode) {
  if (g.dim != field.dim() || g.rotation.dim() != field.dim())
    throw std::invalid_argument("act_group: group element and field dimensions differ");
  if (!field.is_grid()) {
    std::vector<Vec3> moved(field.points().size());
    std::transform(field.points().begin(), field.points().end(), moved.begin(),
                   [&](const Vec3& p) { return se_apply(g, p); });
    FourierField out(field.dim(), field.cutoff(), field.channels(), std::move(moved));
    std::copy(field.data().begin(), field.data().end(), out.data().begin());
    apply_irreps(out, g.rotation);
    return out;
  }
  return mode == Interpolation::ExactPermutation ? act_exact(field, g) : act_linear(field, g);
}

std::vector<double> norm_per_irrep(const FourierField& f) {
  const int ni = f.num_irreps(), c = f.channels();
  std::vector<double> out(static_cast<size_t>(f.num_sites()) * ni * c, 0.0);
  for (int slot = 0; slot < ni; ++slot) {
    const int n = f.irrep_dim(slot);
    const auto block = f.block(slot);
    for (int s = 0; s < f.num_sites(); ++s)
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (int m = 0; m < n; ++m) acc += std::norm(block[(static_cast<size_t>(s) * n + m) * c + ch]);
        out[(static_cast<size_t>(s) * ni + slot) * c + ch] = std::sqrt(acc);
      }
  }
  return out;
}

double field_norm(const FourierField& f) {
  double acc = 0.0;
  for (const cplx& v : f.data()) acc += std::norm(v);
  return std::sqrt(acc);
}

double field_distance(const FourierField& a, const FourierField& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("field_distance: shape mismatch");
  double acc = 0.0;
  for (size_t i = 0; i < a.data().size(); ++i) acc += std::norm(a.data()[i] - b.data()[i]);
  return std::sqrt(acc);
}

FourierField field_add(const FourierField& a, const FourierField& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("field_add: shape mismatch");
  FourierField out = a;
  for (size_t i = 0; i < out.data().size(); ++i) out.data()[i] += b.data()[i];
  return out;
}

FourierField field_scale(const FourierField& a, cplx alpha) {
  FourierField out = a;
  for (auto& v : out.data()) v *= alpha;
  return out;
}

// ---------------------------------------------------------------- STFL format

std::vector<unsigned char> encode_field(const FourierField& f) {
  detail::ByteWriter w;
  w.bytes(kFieldMagic, 4);
  w.le(kFieldVersion);
  w.le(static_cast<std::uint8_t>(f.dim()));
  w.le(static_cast<std::uint8_t>(f.is_grid() ? 0 : 1));
  w.le(static_cast<std::uint32_t>(f.cutoff()));
  w.le(static_cast<std::uint32_t>(f.channels()));
  if (f.is_grid()) {
    const GridLayout& g = f.grid();
    for (int a = 0; a < f.dim(); ++a) w.le(static_cast<std::uint32_t>(g.extent[a]));
    for (int a = 0; a < f.dim(); ++a) w.le(g.origin[a]);
    w.le(g.spacing);
  } else {
    w.le(static_cast<std::uint64_t>(f.num_sites()));
    for (const Vec3& p : f.points())
      for (int a = 0; a < f.dim(); ++a) w.le(p[a]);
  }
  for (const cplx& v : f.data()) {
    w.le(v.real());
    w.le(v.imag());
  }
  return std::move(w.buffer());
}

FourierField decode_field(std::span<const unsigned char> bytes) {
  detail::ByteReader r(bytes);
  if (r.fixed(4, "magic") != std::string(kFieldMagic, 4))
    throw FormatError(FormatError::Kind::BadMagic, "magic", "field file magic mismatch: expected STFL");
  const auto version = r.le<std::uint16_t>("version");
  if (version != kFieldVersion)
    throw FormatError(FormatError::Kind::VersionMismatch, "version",
                      "unsupported field version " + std::to_string(version) + " (expected " +
                          std::to_string(kFieldVersion) + ")");
  const int dim = r.le<std::uint8_t>("dim");
  if (dim != 2 && dim != 3)
    throw FormatError(FormatError::Kind::BadHeader, "dim", "field dimension must be 2 or 3, got " + std::to_string(dim));
  const int layout = r.le<std::uint8_t>("layout");
  if (layout > 1) throw FormatError(FormatError::Kind::BadHeader, "layout", "unknown site layout tag " + std::to_string(layout));
  const auto cutoff = r.le<std::uint32_t>("cutoff");
  const auto channels = r.le<std::uint32_t>("channels");
  if (cutoff > 64) throw FormatError(FormatError::Kind::BadHeader, "cutoff", "cutoff " + std::to_string(cutoff) + " out of range");
  if (channels == 0 || channels > (1u << 20))
    throw FormatError(FormatError::Kind::BadHeader, "channels", "channel count " + std::to_string(channels) + " out of range");

  FourierField f;
  if (layout == 0) {
    GridLayout g;
    std::uint64_t sites = 1;
    for (int a = 0; a < dim; ++a) {
      g.extent[a] = static_cast<int>(r.le<std::uint32_t>("extent"));
      if (g.extent[a] < 1) throw FormatError(FormatError::Kind::BadHeader, "extent", "grid extent must be positive");
      sites *= static_cast<std::uint64_t>(g.extent[a]);
    }
    if (sites > (1ull << 28)) throw FormatError(FormatError::Kind::BadHeader, "extent", "grid too large");
    for (int a = 0; a < dim; ++a) g.origin[a] = r.le<double>("origin");
    g.spacing = r.le<double>("spacing");
    f = FourierField(dim, static_cast<int>(cutoff), static_cast<int>(channels), g);
  } else {
    const auto count = r.le<std::uint64_t>("site_count");
    r.need(count * dim * sizeof(double), "points");
    std::vector<Vec3> pts(count, Vec3{0, 0, 0});
    for (auto& p : pts)
      for (int a = 0; a < dim; ++a) p[a] = r.le<double>("points");
    f = FourierField(dim, static_cast<int>(cutoff), static_cast<int>(channels), std::move(pts));
  }
  const size_t expected = f.data().size() * 2 * sizeof(double);
  if (r.remaining() < expected)
    throw FormatError(FormatError::Kind::Truncated, "payload",
                      "truncated payload: expected " + std::to_string(expected) + " bytes, got " +
                          std::to_string(r.remaining()));
  if (r.remaining() > expected)
    throw FormatError(FormatError::Kind::BadHeader, "payload",
                      "trailing bytes after payload: expected " + std::to_string(expected) + ", got " +
                          std::to_string(r.remaining()));
  for (cplx& v : f.data()) {
    const double re = r.le<double>("payload");
    const double im = r.le<double>("payload");
    v = {re, im};
  }
  return f;
}

void write_field(const FourierField& field, const std::filesystem::path& path) {
  detail::write_file_bytes(path, encode_field(field));
}

FourierField read_field(const std::filesystem::path& path) { return decode_field(detail::read_file_bytes(path)); }

}  // namespace steerkit
