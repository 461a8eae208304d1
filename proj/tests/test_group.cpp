#include <doctest.h>

#include "steerkit/group.hpp"

#include <cmath>
#include <numbers>
#include <random>

using namespace steerkit;

namespace {

constexpr double kPi = std::numbers::pi;

// Cartesian -> spherical change of basis for l = 1, written out from
// Y_1^{-1} ~ (x - iy)/sqrt2, Y_1^0 ~ z, Y_1^1 ~ -(x + iy)/sqrt2.
CMatrix cartesian_to_spherical() {
  const double s = 1.0 / std::sqrt(2.0);
  CMatrix u(3, 3);
  u(0, 0) = s;
  u(0, 1) = cplx(0, -s);
  u(1, 2) = 1.0;
  u(2, 0) = -s;
  u(2, 1) = cplx(0, -s);
  return u;
}

CMatrix as_cmatrix(const Rotation& r) {
  CMatrix m(3, 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) m(i, j) = r(i, j);
  return m;
}

Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Vec3 v{n(rng), n(rng), n(rng)};
  const double len = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
  for (auto& c : v) c /= len;
  return v;
}

double max_abs(const std::vector<cplx>& a, const std::vector<cplx>& b) {
  double m = 0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_SUITE("group") {
  TEST_CASE("irrep dimensions") {
    CHECK(IrrepId::so2(-3).dim() == 1);
    CHECK(IrrepId::so3(0).dim() == 1);
    CHECK(IrrepId::so3(4).dim() == 9);
    CHECK_THROWS_AS(IrrepId::so3(-1), std::invalid_argument);
  }

  TEST_CASE("rotations are orthogonal and compose with their inverse to identity") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 50; ++trial) {
      for (Group g : {Group::SO2, Group::SO3}) {
        const Rotation r = haar_random_rotation(g, rng);
        CHECK_NOTHROW(Rotation::from_matrix(r.dim(), r.matrix()));
        const Rotation e = r.compose(r.inverse());
        for (int i = 0; i < 3; ++i)
          for (int j = 0; j < 3; ++j) CHECK(std::abs(e(i, j) - (i == j ? 1.0 : 0.0)) < 1e-12);
      }
    }
  }

  TEST_CASE("euler extraction round-trips") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 100; ++trial) {
      const Rotation r = haar_random_rotation(Group::SO3, rng);
      const auto [a, b, c] = r.euler();
      const Rotation back = Rotation::euler_zyz(a, b, c);
      for (int i = 0; i < 9; ++i) CHECK(std::abs(back.matrix()[i] - r.matrix()[i]) < 1e-12);
    }
    // gimbal-locked poles
    for (double beta : {0.0, kPi}) {
      const Rotation r = Rotation::euler_zyz(0.3, beta, 1.1);
      const auto [a, b, c] = r.euler();
      const Rotation back = Rotation::euler_zyz(a, b, c);
      for (int i = 0; i < 9; ++i) CHECK(std::abs(back.matrix()[i] - r.matrix()[i]) < 1e-12);
    }
  }

  TEST_CASE("irrep_eval basic values") {
    const Rotation any = Rotation::euler_zyz(0.4, 1.2, 2.9);
    CHECK(std::abs(irrep_eval(IrrepId::so3(0), any)(0, 0) - 1.0) < 1e-15);
    for (int l = 0; l <= 6; ++l) {
      const CMatrix d = irrep_eval(IrrepId::so3(l), Rotation::identity(3));
      CHECK(d.max_abs_diff(CMatrix::identity(2 * l + 1)) < 1e-14);
    }
    const CMatrix e = irrep_eval(IrrepId::so2(3), Rotation::so2(0.5));
    CHECK(std::abs(e(0, 0) - std::polar(1.0, 1.5)) < 1e-15);
    CHECK_THROWS_AS(irrep_eval(IrrepId::so2(1), any), std::invalid_argument);
    CHECK_THROWS_AS(irrep_eval(IrrepId::so3(1), Rotation::so2(0.1)), std::invalid_argument);
  }

  TEST_CASE("l = 1 Wigner matrix equals conjugated 3x3 rotation") {
    const CMatrix u = cartesian_to_spherical();
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> ang(0, 2 * kPi), half(0, kPi);
    for (int trial = 0; trial < 100; ++trial) {
      const Rotation r = Rotation::euler_zyz(ang(rng), half(rng), ang(rng));
      const CMatrix expected = u * as_cmatrix(r) * u.adjoint();
      CHECK(irrep_eval(IrrepId::so3(1), r).max_abs_diff(expected) < 1e-10);
    }
  }

  TEST_CASE("homomorphism and unitarity up to l = 8") {
    std::mt19937_64 rng(5);
    for (int l = 0; l <= 8; ++l) {
      double hom = 0, uni = 0;
      for (int trial = 0; trial < 100; ++trial) {
        const Rotation a = haar_random_rotation(Group::SO3, rng);
        const Rotation b = haar_random_rotation(Group::SO3, rng);
        const CMatrix da = irrep_eval(IrrepId::so3(l), a);
        const CMatrix db = irrep_eval(IrrepId::so3(l), b);
        hom = std::max(hom, (da * db).max_abs_diff(irrep_eval(IrrepId::so3(l), a.compose(b))));
        uni = std::max(uni, (da * da.adjoint()).max_abs_diff(CMatrix::identity(2 * l + 1)));
      }
      CHECK(hom < 1e-10);
      CHECK(uni < 1e-12);
    }
    for (int k = -6; k <= 6; ++k) {
      for (int trial = 0; trial < 100; ++trial) {
        const Rotation a = haar_random_rotation(Group::SO2, rng);
        const Rotation b = haar_random_rotation(Group::SO2, rng);
        const CMatrix prod = irrep_eval(IrrepId::so2(k), a) * irrep_eval(IrrepId::so2(k), b);
        CHECK(prod.max_abs_diff(irrep_eval(IrrepId::so2(k), a.compose(b))) < 1e-10);
      }
    }
  }

  TEST_CASE("spherical harmonics normalization by quadrature") {
    // Midpoint rule in cos(theta) and phi; exact enough for low degrees.
    const int nz = 400, nphi = 64;
    for (int l = 0; l <= 3; ++l) {
      std::vector<double> integral(2 * l + 1, 0.0);
      for (int iz = 0; iz < nz; ++iz) {
        const double z = -1.0 + (iz + 0.5) * 2.0 / nz;
        const double rho = std::sqrt(1 - z * z);
        for (int ip = 0; ip < nphi; ++ip) {
          const double phi = (ip + 0.5) * 2 * kPi / nphi;
          const auto y = spherical_harmonics(l, {rho * std::cos(phi), rho * std::sin(phi), z});
          for (int m = 0; m < 2 * l + 1; ++m) integral[m] += std::norm(y[m]) * (2.0 / nz) * (2 * kPi / nphi);
        }
      }
      for (double v : integral) CHECK(v == doctest::Approx(1.0).epsilon(1e-4));
    }
    const auto y0 = spherical_harmonics(0, {0.6, 0.0, 0.8});
    CHECK(y0[0].real() > 0);
    CHECK(std::abs(y0[0] - 1.0 / std::sqrt(4 * kPi)) < 1e-15);
  }

  TEST_CASE("spherical harmonics at the north pole are axial") {
    const auto y = spherical_harmonics(2, {0, 0, 1});
    for (int m = -2; m <= 2; ++m) {
      if (m == 0)
        CHECK(std::abs(y[2]) > 0.1);
      else
        CHECK(std::abs(y[m + 2]) < 1e-15);
    }
    CHECK_THROWS_AS(spherical_harmonics(1, {1, 1, 0}), std::invalid_argument);
  }

  TEST_CASE("spherical harmonics steer with irrep_eval") {
    std::mt19937_64 rng(9);
    for (int l = 0; l <= 4; ++l) {
      double err = 0;
      for (int trial = 0; trial < 100; ++trial) {
        const Rotation r = haar_random_rotation(Group::SO3, rng);
        const Vec3 x = random_unit(rng);
        const auto lhs = spherical_harmonics(l, r.apply(x));
        const auto yx = spherical_harmonics(l, x);
        const CMatrix d = irrep_eval(IrrepId::so3(l), r);
        std::vector<cplx> rhs(2 * l + 1);
        for (int a = 0; a < 2 * l + 1; ++a)
          for (int b = 0; b < 2 * l + 1; ++b) rhs[a] += d(a, b) * yx[b];
        err = std::max(err, max_abs(lhs, rhs));
      }
      CHECK(err < 1e-9);
    }
  }

  TEST_CASE("Clebsch-Gordan closed forms and selection rules") {
    for (int l = 0; l <= 4; ++l) {
      const CGBlock& b = clebsch_gordan(0, l, l);
      for (int m = -l; m <= l; ++m) CHECK(b(0, m, m) == doctest::Approx(1.0).epsilon(1e-15));
    }
    CHECK(clebsch_gordan(1, 1, 3).is_zero());
    CHECK(clebsch_gordan(0, 2, 1).is_zero());
    // <1 m1; 1 m2 | 0 0> = (-1)^(1 - m1) / sqrt(3) delta(m1, -m2)
    const CGBlock& s = clebsch_gordan(1, 1, 0);
    for (int m1 = -1; m1 <= 1; ++m1)
      for (int m2 = -1; m2 <= 1; ++m2) {
        const double expected = (m1 == -m2) ? ((1 - m1) % 2 == 0 ? 1.0 : -1.0) / std::sqrt(3.0) : 0.0;
        CHECK(std::abs(s(m1, m2, 0) - expected) < 1e-15);
      }
    // <1 1; 1 -1 | 1 0> = 1/sqrt(2), <1 1; 1 0 | 2 1> = 1/sqrt(2)
    CHECK(std::abs(clebsch_gordan(1, 1, 1)(1, -1, 0) - 1 / std::sqrt(2.0)) < 1e-15);
    CHECK(std::abs(clebsch_gordan(1, 1, 2)(1, 0, 1) - 1 / std::sqrt(2.0)) < 1e-15);
    // m1 + m2 != m vanishes
    const CGBlock& b = clebsch_gordan(2, 1, 2);
    CHECK(b(1, 1, 0) == 0.0);
  }

  TEST_CASE("Clebsch-Gordan blocks are orthonormal") {
    for (int l1 = 0; l1 <= 4; ++l1)
      for (int l2 = 0; l2 <= 4; ++l2) {
        double worst = 0;
        for (int l = std::abs(l1 - l2); l <= l1 + l2; ++l)
          for (int lp = std::abs(l1 - l2); lp <= l1 + l2; ++lp) {
            const CGBlock& a = clebsch_gordan(l1, l2, l);
            const CGBlock& b = clebsch_gordan(l1, l2, lp);
            for (int m = -l; m <= l; ++m)
              for (int mp = -lp; mp <= lp; ++mp) {
                double dot = 0;
                for (int m1 = -l1; m1 <= l1; ++m1)
                  for (int m2 = -l2; m2 <= l2; ++m2) dot += a(m1, m2, m) * b(m1, m2, mp);
                worst = std::max(worst, std::abs(dot - ((l == lp && m == mp) ? 1.0 : 0.0)));
              }
          }
        CHECK(worst < 1e-12);
      }
  }

  TEST_CASE("Clebsch-Gordan intertwines the Wigner matrices") {
    // D1 (x) D2 = C^T (sum_l D^l) C, checked through one coupled entry.
    std::mt19937_64 rng(13);
    const Rotation r = haar_random_rotation(Group::SO3, rng);
    const int l1 = 2, l2 = 1;
    const CMatrix d1 = irrep_eval(IrrepId::so3(l1), r), d2 = irrep_eval(IrrepId::so3(l2), r);
    for (int l = 1; l <= 3; ++l) {
      const CMatrix dl = irrep_eval(IrrepId::so3(l), r);
      const CGBlock& c = clebsch_gordan(l1, l2, l);
      double err = 0;
      for (int m = -l; m <= l; ++m)
        for (int m1p = -l1; m1p <= l1; ++m1p)
          for (int m2p = -l2; m2p <= l2; ++m2p) {
            cplx lhs = 0, rhs = 0;
            for (int m1 = -l1; m1 <= l1; ++m1)
              for (int m2 = -l2; m2 <= l2; ++m2)
                lhs += c(m1, m2, m) * d1(m1 + l1, m1p + l1) * d2(m2 + l2, m2p + l2);
            for (int mp = -l; mp <= l; ++mp) rhs += dl(m + l, mp + l) * c(m1p, m2p, mp);
            err = std::max(err, std::abs(lhs - rhs));
          }
      CHECK(err < 1e-12);
    }
  }

  TEST_CASE("SE(d) composition, inverse and action") {
    std::mt19937_64 rng(17);
    for (int dim : {2, 3}) {
      for (int trial = 0; trial < 50; ++trial) {
        const GroupElement g1 = random_se(dim, rng, 3.0), g2 = random_se(dim, rng, 3.0);
        const GroupElement e = se_compose(g1, se_inverse(g1));
        for (int i = 0; i < dim; ++i) CHECK(std::abs(e.translation[i]) < 1e-12);
        for (int i = 0; i < 3; ++i)
          for (int j = 0; j < 3; ++j) CHECK(std::abs(e.rotation(i, j) - (i == j ? 1.0 : 0.0)) < 1e-12);
        const Vec3 x{0.3, -1.2, dim == 3 ? 0.7 : 0.0};
        const Vec3 a = se_apply(se_compose(g1, g2), x);
        const Vec3 b = se_apply(g1, se_apply(g2, x));
        for (int i = 0; i < dim; ++i) CHECK(std::abs(a[i] - b[i]) < 1e-12);
      }
    }
    GroupElement t = GroupElement::identity(2);
    t.translation = {1.5, -2.0, 0.0};
    const Vec3 moved = se_apply(t, {1.0, 1.0, 0.0});
    CHECK(moved[0] == 2.5);
    CHECK(moved[1] == -1.0);
    CHECK_THROWS_AS(se_compose(GroupElement::identity(2), GroupElement::identity(3)), std::invalid_argument);
  }

  TEST_CASE("Haar sampling is deterministic per seed") {
    const Rotation a = haar_random_rotation(Group::SO3, std::uint64_t{42});
    const Rotation b = haar_random_rotation(Group::SO3, std::uint64_t{42});
    CHECK(a.matrix() == b.matrix());
  }

  TEST_CASE("SO(2) Haar samples are uniform in angle") {
    const int n = 100000, bins = 20;
    std::vector<int> hist(bins, 0);
    std::mt19937_64 rng(123);
    for (int i = 0; i < n; ++i) {
      const double th = haar_random_rotation(Group::SO2, rng).angle();
      hist[std::min(bins - 1, static_cast<int>(th / (2 * kPi) * bins))]++;
    }
    const double p = 1.0 / bins, sigma = std::sqrt(n * p * (1 - p));
    for (int c : hist) CHECK(std::abs(c - n * p) < 4 * sigma);
  }

  TEST_CASE("SO(3) Haar samples move a vector uniformly over the sphere") {
    // Equal-area bins: uniform in z and in azimuth.
    const int n = 100000, nz = 8, nphi = 8;
    std::vector<int> hist(nz * nphi, 0);
    std::mt19937_64 rng(321);
    for (int i = 0; i < n; ++i) {
      const Vec3 v = haar_random_rotation(Group::SO3, rng).apply({0.36, 0.48, 0.8});
      const int iz = std::min(nz - 1, static_cast<int>((v[2] + 1) / 2 * nz));
      double phi = std::atan2(v[1], v[0]);
      if (phi < 0) phi += 2 * kPi;
      const int ip = std::min(nphi - 1, static_cast<int>(phi / (2 * kPi) * nphi));
      hist[iz * nphi + ip]++;
    }
    const double p = 1.0 / (nz * nphi), sigma = std::sqrt(n * p * (1 - p));
    for (int c : hist) CHECK(std::abs(c - n * p) < 4 * sigma);
  }

  TEST_CASE("SO(2) Fourier transform") {
    std::vector<cplx> ones(16, 1.0);
    const auto c = fourier_so2(ones, 3);
    for (int k = -3; k <= 3; ++k) CHECK(std::abs(c[k + 3] - (k == 0 ? 1.0 : 0.0)) < 1e-14);

    // direct summation oracle for exp(3 i theta)
    const int A = 40, K = 8;
    std::vector<cplx> f(A);
    for (int a = 0; a < A; ++a) f[a] = std::polar(1.0, 3 * 2 * kPi * a / A);
    const auto g = fourier_so2(f, K);
    for (int k = -K; k <= K; ++k) CHECK(std::abs(g[k + K] - (k == -3 ? 1.0 : 0.0)) < 1e-12);

    CHECK_THROWS_AS(fourier_so2(f, 20), std::invalid_argument);
    CHECK_THROWS_AS(inverse_fourier_so2(g, 16), std::invalid_argument);
  }

  TEST_CASE("SO(2) Fourier round trip on random band-limited signals") {
    std::mt19937_64 rng(99);
    std::normal_distribution<double> n;
    for (int trial = 0; trial < 20; ++trial) {
      const int K = 1 + trial % 7, A = 2 * K + 1 + trial;
      std::vector<cplx> coeffs(2 * K + 1);
      for (auto& c : coeffs) c = {n(rng), n(rng)};
      const auto samples = inverse_fourier_so2(coeffs, A);
      const auto back = fourier_so2(samples, K);
      CHECK(max_abs(coeffs, back) < 1e-10);
    }
  }
}
