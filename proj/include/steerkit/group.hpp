#pragma once

// Representation theory of SO(2), SO(3) and SE(d).
//
// Conventions used everywhere in the library:
//  * SO(2): the angle theta parameterizes R(theta) = [[cos, sin], [-sin, cos]]
//    and the irrep of frequency k is exp(i k theta). With this pairing the
//    circular harmonic exp(-i k phi(x)) of a planar vector steers as
//    h(R x) = exp(i k theta) h(x).
//  * SO(3): z-y-z Euler angles, R = Rz(alpha) Ry(beta) Rz(gamma) with the usual
//    right-handed axis rotations. Basis vectors are ordered m = -l..l.
//    irrep_eval returns D(R) such that Y(R x) = D(R) Y(x) for the orthonormal
//    Condon-Shortley spherical harmonics Y returned by spherical_harmonics.

#include <array>
#include <complex>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace steerkit {

using cplx = std::complex<double>;
using Vec3 = std::array<double, 3>;

enum class Group { SO2, SO3 };

inline int group_dim(Group g) { return g == Group::SO2 ? 2 : 3; }
inline Group group_for_dim(int dim) { return dim == 2 ? Group::SO2 : Group::SO3; }

struct IrrepId {
  Group group = Group::SO2;
  int index = 0;  // frequency k for SO2, degree l >= 0 for SO3

  static IrrepId so2(int k) { return {Group::SO2, k}; }
  static IrrepId so3(int l);

  int dim() const { return group == Group::SO2 ? 1 : 2 * index + 1; }
  bool operator==(const IrrepId&) const = default;
};

/// Dense row-major complex matrix, small sizes only.
struct CMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<cplx> data;

  CMatrix() = default;
  CMatrix(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c) {}
  static CMatrix identity(int n);

  cplx& operator()(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  const cplx& operator()(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

  CMatrix operator*(const CMatrix& rhs) const;
  CMatrix adjoint() const;
  double max_abs_diff(const CMatrix& other) const;
};

/// A rotation in 2 or 3 dimensions, stored as a 3x3 matrix (2D uses the
/// upper-left block).
class Rotation {
 public:
  Rotation() : Rotation(identity(2)) {}

  static Rotation identity(int dim);
  static Rotation so2(double theta);
  static Rotation euler_zyz(double alpha, double beta, double gamma);
  /// Validates orthogonality and det = 1 to 1e-9.
  static Rotation from_matrix(int dim, const std::array<double, 9>& m);

  int dim() const { return dim_; }
  Group group() const { return group_for_dim(dim_); }
  const std::array<double, 9>& matrix() const { return m_; }
  double operator()(int r, int c) const { return m_[r * 3 + c]; }

  /// SO(2) angle in [0, 2 pi).
  double angle() const;
  /// SO(3) Euler triple (alpha, beta, gamma); alpha, gamma in [0, 2 pi), beta in [0, pi].
  std::array<double, 3> euler() const;

  Vec3 apply(const Vec3& x) const;
  Rotation compose(const Rotation& rhs) const;  // this * rhs
  Rotation inverse() const;

  /// True when every matrix entry is within tol of -1, 0 or 1, i.e. the
  /// rotation permutes the integer lattice.
  bool is_lattice(double tol = 1e-9) const;

 private:
  Rotation(int dim, const std::array<double, 9>& m) : dim_(dim), m_(m) {}
  int dim_;
  std::array<double, 9> m_;
};

/// Element (t, R) of SE(d); acts on points as x -> R x + t.
struct GroupElement {
  int dim = 2;
  Vec3 translation{0.0, 0.0, 0.0};
  Rotation rotation;

  static GroupElement identity(int dim);
  static GroupElement pure_rotation(const Rotation& r);
};

GroupElement se_compose(const GroupElement& g1, const GroupElement& g2);
GroupElement se_inverse(const GroupElement& g);
Vec3 se_apply(const GroupElement& g, const Vec3& x);

/// exp(i k theta) for SO(2); the Wigner matrix for SO(3).
CMatrix irrep_eval(IrrepId irrep, const Rotation& rotation);

/// Real Wigner small-d matrix d^l(beta), standard convention, rows/cols m = -l..l.
std::vector<double> wigner_small_d(int l, double beta);

/// Orthonormal Condon-Shortley Y^l_m(direction), m = -l..l. direction must be
/// a unit vector to 1e-9.
std::vector<cplx> spherical_harmonics(int l, const Vec3& direction);

/// Coupling block <l1 m1; l2 m2 | l m>, indexed [(m1+l1)][(m2+l2)][(m+l)].
class CGBlock {
 public:
  CGBlock(int l1, int l2, int l, std::vector<double> values)
      : l1_(l1), l2_(l2), l_(l), values_(std::move(values)) {}

  int l1() const { return l1_; }
  int l2() const { return l2_; }
  int l() const { return l_; }
  bool is_zero() const;
  double operator()(int m1, int m2, int m) const {
    return values_[(static_cast<size_t>(m1 + l1_) * (2 * l2_ + 1) + (m2 + l2_)) * (2 * l_ + 1) + (m + l_)];
  }
  std::span<const double> values() const { return values_; }

 private:
  int l1_, l2_, l_;
  std::vector<double> values_;
};

/// Cached Clebsch-Gordan block, computed once with exact rational arithmetic.
/// Thread-safe; the returned reference stays valid for the process lifetime.
const CGBlock& clebsch_gordan(int l1, int l2, int l);

/// Coefficient from the Racah closed form, evaluated directly (uncached).
double clebsch_gordan_coefficient(int l1, int m1, int l2, int m2, int l, int m);

Rotation haar_random_rotation(Group group, std::mt19937_64& rng);
Rotation haar_random_rotation(Group group, std::uint64_t seed);

/// Random SE(d) element with Haar rotation and translation uniform in
/// [-translation_scale, translation_scale]^d.
GroupElement random_se(int dim, std::mt19937_64& rng, double translation_scale = 1.0);

/// Quadrature Fourier transform on the uniform angle grid theta_a = 2 pi a / A:
/// c_k = (1/A) sum_a f(theta_a) exp(i k theta_a), k = -cutoff..cutoff.
/// Requires A > 2 * cutoff.
std::vector<cplx> fourier_so2(std::span<const cplx> samples, int cutoff);

/// f(theta_a) = sum_k c_k exp(-i k theta_a) for coefficients k = -K..K.
std::vector<cplx> inverse_fourier_so2(std::span<const cplx> coefficients, int num_angles);

}  // namespace steerkit
