#pragma once

#include "steerkit/group.hpp"

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace steerkit {

/// Regular lattice: site (ix, iy, iz) sits at origin + spacing * (ix, iy, iz).
/// Sites are stored row-major with x fastest.
struct GridLayout {
  std::array<int, 3> extent{1, 1, 1};
  Vec3 origin{0.0, 0.0, 0.0};
  double spacing = 1.0;

  /// Lattice of the given extents centred on the coordinate origin.
  static GridLayout centered(int dim, std::array<int, 3> extent, double spacing = 1.0);

  int num_sites() const { return extent[0] * extent[1] * extent[2]; }
  int index(int ix, int iy, int iz = 0) const { return (iz * extent[1] + iy) * extent[0] + ix; }
  std::array<int, 3> coords(int site) const;
  bool operator==(const GridLayout&) const = default;
};

enum class Interpolation { ExactPermutation, Linear };

/// Steerable feature map: sites in R^d, each carrying a complex
/// d_rho x C block for every irrep up to the cutoff. SO(2) fields hold the
/// signed frequencies -K..K; SO(3) fields hold l = 0..L.
class FourierField {
 public:
  FourierField() = default;
  FourierField(int dim, int cutoff, int channels, GridLayout grid);
  FourierField(int dim, int cutoff, int channels, std::vector<Vec3> points);

  /// Zero field with the same sites as `like` but a different cutoff/channel count.
  static FourierField zeros_like(const FourierField& like, int cutoff, int channels);

  int dim() const { return dim_; }
  Group group() const { return group_for_dim(dim_); }
  int cutoff() const { return cutoff_; }
  int channels() const { return channels_; }
  int num_sites() const { return num_sites_; }
  int num_irreps() const { return dim_ == 2 ? 2 * cutoff_ + 1 : cutoff_ + 1; }

  /// Irrep stored at slot `slot`: k = slot - K for SO(2), l = slot for SO(3).
  IrrepId irrep(int slot) const;
  int irrep_dim(int slot) const { return dim_ == 2 ? 1 : 2 * slot + 1; }
  /// Slot of frequency k (SO(2)) or degree l (SO(3)); -1 when out of range.
  int slot_of(int index) const;
  /// Slot of the trivial irrep.
  int trivial_slot() const { return dim_ == 2 ? cutoff_ : 0; }

  bool is_grid() const { return grid_.has_value(); }
  const GridLayout& grid() const;
  const std::vector<Vec3>& points() const { return points_; }
  Vec3 site_position(int site) const;

  /// Block of one irrep, laid out [site][m][channel].
  std::span<cplx> block(int slot);
  std::span<const cplx> block(int slot) const;
  cplx& at(int slot, int site, int m, int c) { return data_[index(slot, site, m, c)]; }
  const cplx& at(int slot, int site, int m, int c) const { return data_[index(slot, site, m, c)]; }

  std::span<cplx> data() { return data_; }
  std::span<const cplx> data() const { return data_; }
  size_t block_offset(int slot) const { return offsets_[slot]; }

  /// Same dimension, cutoff, channels and sites (positions compared to tol).
  bool same_shape(const FourierField& other) const;
  bool same_sites(const FourierField& other, double tol = 1e-9) const;

 private:
  size_t index(int slot, int site, int m, int c) const {
    return offsets_[slot] + (static_cast<size_t>(site) * irrep_dim(slot) + m) * channels_ + c;
  }
  void allocate();

  int dim_ = 2;
  int cutoff_ = 0;
  int channels_ = 1;
  int num_sites_ = 0;
  std::optional<GridLayout> grid_;
  std::vector<Vec3> points_;
  std::vector<size_t> offsets_;
  std::vector<cplx> data_;
};

/// Real scalar image -> field with the image in the trivial irrep. `values`
/// holds num_sites * channels entries, channel fastest, sites in grid order
/// (for a 2D image: row-major, row = y, column = x).
FourierField lift_scalar_image(std::span<const double> values, int dim, std::array<int, 3> extent, int cutoff,
                               int channels = 1);

/// Occupancy values in [0, 1] mapped affinely onto [-1, 5].
std::vector<double> rescale_voxels(std::span<const double> occupancy);

/// (g . f)(y) = rho(R) f(g^-1 y). Point sets move their sites exactly. Grids in
/// ExactPermutation mode require a lattice rotation and are relabelled onto the
/// image lattice; Linear mode resamples onto the same lattice.
FourierField act_group(const FourierField& field, const GroupElement& g, Interpolation mode);

/// Euclidean norm of every d_rho column, laid out [site][slot][channel].
std::vector<double> norm_per_irrep(const FourierField& field);

/// Frobenius norm of the data.
double field_norm(const FourierField& field);
/// Frobenius norm of a - b; throws when shapes differ.
double field_distance(const FourierField& a, const FourierField& b);

/// a + b, elementwise.
FourierField field_add(const FourierField& a, const FourierField& b);
/// alpha * a.
FourierField field_scale(const FourierField& a, cplx alpha);

void write_field(const FourierField& field, const std::filesystem::path& path);
FourierField read_field(const std::filesystem::path& path);
std::vector<unsigned char> encode_field(const FourierField& field);
FourierField decode_field(std::span<const unsigned char> bytes);

}  // namespace steerkit
