#include <doctest.h>

#include "steerkit/errors.hpp"
#include "steerkit/field.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <numbers>
#include <random>

using namespace steerkit;

namespace {

constexpr double kPi = std::numbers::pi;

void fill_random(FourierField& f, std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  for (auto& v : f.data()) v = {n(rng), n(rng)};
}

FourierField random_points(int dim, int cutoff, int channels, int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  std::vector<Vec3> pts(n, Vec3{0, 0, 0});
  for (auto& p : pts)
    for (int a = 0; a < dim; ++a) p[a] = u(rng);
  FourierField f(dim, cutoff, channels, pts);
  fill_random(f, rng);
  return f;
}

double max_abs_diff(const FourierField& a, const FourierField& b) {
  double worst = 0.0;
  for (size_t i = 0; i < a.data().size(); ++i) worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
  return worst;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("steerkit_test_" + name);
}

}  // namespace

TEST_SUITE("field") {
  TEST_CASE("block shapes cover exactly the irreps in range") {
    FourierField f2(2, 3, 4, GridLayout::centered(2, {5, 6, 1}));
    CHECK(f2.num_irreps() == 7);
    CHECK(f2.num_sites() == 30);
    CHECK(f2.data().size() == 30u * 7 * 4);
    CHECK(f2.irrep(0).index == -3);
    CHECK(f2.slot_of(2) == 5);
    CHECK(f2.slot_of(4) == -1);

    FourierField f3(3, 2, 3, GridLayout::centered(3, {2, 3, 4}));
    CHECK(f3.num_irreps() == 3);
    CHECK(f3.data().size() == 24u * (1 + 3 + 5) * 3);
    CHECK(f3.block(2).size() == 24u * 5 * 3);
    CHECK(f3.slot_of(-1) == -1);
  }

  TEST_CASE("grid sites reconstruct deterministically") {
    const auto g = GridLayout::centered(2, {4, 3, 1});
    FourierField f(2, 0, 1, g);
    CHECK(f.site_position(0)[0] == doctest::Approx(-1.5));
    CHECK(f.site_position(0)[1] == doctest::Approx(-1.0));
    CHECK(f.site_position(g.index(3, 2))[0] == doctest::Approx(1.5));
    CHECK(f.site_position(g.index(3, 2))[1] == doctest::Approx(1.0));
    for (int s = 0; s < g.num_sites(); ++s) {
      const auto c = g.coords(s);
      CHECK(g.index(c[0], c[1], c[2]) == s);
    }
  }

  TEST_CASE("lift examples") {
    std::vector<double> zeros(64, 0.0);
    const auto z = lift_scalar_image(zeros, 2, {8, 8, 1}, 3);
    CHECK(field_norm(z) == 0.0);

    std::vector<double> constant(64, 2.5);
    const auto c = lift_scalar_image(constant, 2, {8, 8, 1}, 3);
    for (int slot = 0; slot < c.num_irreps(); ++slot)
      for (const cplx& v : c.block(slot)) CHECK(v == (slot == c.trivial_slot() ? cplx(2.5) : cplx(0.0)));

    std::vector<double> bad(64, 0.0);
    bad[5] = std::nan("");
    CHECK_THROWS_AS(lift_scalar_image(bad, 2, {8, 8, 1}, 1), std::invalid_argument);
    CHECK_THROWS_AS(lift_scalar_image(zeros, 2, {8, 7, 1}, 1), std::invalid_argument);
  }

  TEST_CASE("voxel rescale spans [-1, 5]") {
    const std::vector<double> occ{0.0, 0.5, 1.0};
    const auto r = rescale_voxels(occ);
    CHECK(r[0] == doctest::Approx(-1.0));
    CHECK(r[1] == doctest::Approx(2.0));
    CHECK(r[2] == doctest::Approx(5.0));
  }

  TEST_CASE("identity action leaves fields bit-exact") {
    std::mt19937_64 rng(3);
    FourierField g(2, 2, 3, GridLayout::centered(2, {5, 4, 1}));
    fill_random(g, rng);
    const auto id = GroupElement::identity(2);
    const auto a = act_group(g, id, Interpolation::ExactPermutation);
    CHECK(a.grid() == g.grid());
    CHECK(std::memcmp(a.data().data(), g.data().data(), g.data().size_bytes()) == 0);
    const auto p = random_points(3, 2, 2, 10, rng);
    const auto b = act_group(p, GroupElement::identity(3), Interpolation::ExactPermutation);
    CHECK(std::memcmp(b.data().data(), p.data().data(), p.data().size_bytes()) == 0);
  }

  TEST_CASE("quarter turn of a scalar image is a pixel permutation") {
    const int n = 6;
    std::vector<double> img(n * n);
    for (int i = 0; i < n * n; ++i) img[i] = i * 0.25 - 3.0;
    const auto f = lift_scalar_image(img, 2, {n, n, 1}, 2);
    const auto r = act_group(f, GroupElement::pure_rotation(Rotation::so2(kPi / 2)), Interpolation::ExactPermutation);
    CHECK(r.grid() == f.grid());
    // R^-1 sends (x', y') to (-y', x'); on array indices out[y][x] = in[x][n-1-y].
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) CHECK(r.at(r.trivial_slot(), y * n + x, 0, 0).real() == img[x * n + (n - 1 - y)]);
  }

  TEST_CASE("quarter turn phases nontrivial frequencies") {
    std::mt19937_64 rng(4);
    FourierField f(2, 2, 1, GridLayout::centered(2, {3, 3, 1}));
    fill_random(f, rng);
    const double theta = kPi / 2;
    const auto r = act_group(f, GroupElement::pure_rotation(Rotation::so2(theta)), Interpolation::ExactPermutation);
    const auto center = f.grid().index(1, 1);
    for (int slot = 0; slot < f.num_irreps(); ++slot) {
      const int k = f.irrep(slot).index;
      CHECK(std::abs(r.at(slot, center, 0, 0) - std::polar(1.0, k * theta) * f.at(slot, center, 0, 0)) < 1e-14);
    }
  }

  TEST_CASE("rectangular grid and translation under exact permutation") {
    std::mt19937_64 rng(5);
    FourierField f(2, 1, 2, GridLayout::centered(2, {5, 3, 1}));
    fill_random(f, rng);
    GroupElement g = GroupElement::pure_rotation(Rotation::so2(kPi / 2));
    g.translation = {2.0, -1.0, 0.0};
    const auto r = act_group(f, g, Interpolation::ExactPermutation);
    CHECK(r.grid().extent[0] == 3);
    CHECK(r.grid().extent[1] == 5);
    // every moved site must carry rho(R) times the original value
    for (int s = 0; s < f.num_sites(); ++s) {
      const Vec3 q = se_apply(g, f.site_position(s));
      int match = -1;
      for (int t = 0; t < r.num_sites(); ++t) {
        const Vec3 p = r.site_position(t);
        if (std::abs(p[0] - q[0]) < 1e-9 && std::abs(p[1] - q[1]) < 1e-9) match = t;
      }
      REQUIRE(match >= 0);
      for (int slot = 0; slot < f.num_irreps(); ++slot)
        for (int c = 0; c < 2; ++c)
          CHECK(std::abs(r.at(slot, match, 0, c) - std::polar(1.0, f.irrep(slot).index * kPi / 2) * f.at(slot, s, 0, c)) <
                1e-14);
    }
  }

  TEST_CASE("exact mode rejects non-lattice rotations") {
    FourierField f(2, 1, 1, GridLayout::centered(2, {3, 3, 1}));
    CHECK_THROWS_AS(act_group(f, GroupElement::pure_rotation(Rotation::so2(0.3)), Interpolation::ExactPermutation),
                    std::invalid_argument);
    CHECK_NOTHROW(act_group(f, GroupElement::pure_rotation(Rotation::so2(0.3)), Interpolation::Linear));
    CHECK_THROWS_AS(act_group(f, GroupElement::identity(3), Interpolation::Linear), std::invalid_argument);
  }

  TEST_CASE("linear mode agrees with exact mode on lattice rotations") {
    std::mt19937_64 rng(6);
    FourierField f(2, 2, 2, GridLayout::centered(2, {6, 6, 1}));
    fill_random(f, rng);
    for (int q = 0; q < 4; ++q) {
      const auto g = GroupElement::pure_rotation(Rotation::so2(q * kPi / 2));
      CHECK(max_abs_diff(act_group(f, g, Interpolation::Linear), act_group(f, g, Interpolation::ExactPermutation)) <
            1e-12);
    }
  }

  TEST_CASE("composition law on point sets") {
    std::mt19937_64 rng(7);
    for (int dim : {2, 3}) {
      const auto f = random_points(dim, dim == 2 ? 4 : 3, 3, 20, rng);
      for (int trial = 0; trial < 10; ++trial) {
        const auto g1 = random_se(dim, rng, 2.0);
        const auto g2 = random_se(dim, rng, 2.0);
        const auto twice = act_group(act_group(f, g1, Interpolation::Linear), g2, Interpolation::Linear);
        const auto once = act_group(f, se_compose(g2, g1), Interpolation::Linear);
        CHECK(twice.same_sites(once, 1e-12));
        CHECK(max_abs_diff(twice, once) < 1e-12);
      }
    }
  }

  TEST_CASE("composition law on 3D grids with lattice rotations") {
    std::mt19937_64 rng(8);
    FourierField f(3, 2, 2, GridLayout::centered(3, {2, 3, 4}));
    fill_random(f, rng);
    const auto r1 = Rotation::euler_zyz(kPi / 2, kPi / 2, 0.0);
    const auto r2 = Rotation::euler_zyz(0.0, kPi / 2, kPi);
    GroupElement g1 = GroupElement::pure_rotation(r1);
    GroupElement g2 = GroupElement::pure_rotation(r2);
    g1.translation = {1.0, 0.0, -2.0};
    const auto twice = act_group(act_group(f, g1, Interpolation::ExactPermutation), g2, Interpolation::ExactPermutation);
    const auto once = act_group(f, se_compose(g2, g1), Interpolation::ExactPermutation);
    CHECK(twice.grid().extent == once.grid().extent);
    CHECK(twice.same_sites(once, 1e-9));
    CHECK(max_abs_diff(twice, once) < 1e-12);
  }

  TEST_CASE("norms") {
    FourierField z(2, 3, 2, GridLayout::centered(2, {2, 2, 1}));
    for (double v : norm_per_irrep(z)) CHECK(v == 0.0);
    FourierField f(2, 3, 1, std::vector<Vec3>{{0.0, 0.0, 0.0}});
    f.at(f.slot_of(3), 0, 0, 0) = {3.0, 4.0};
    CHECK(norm_per_irrep(f)[f.slot_of(3)] == doctest::Approx(5.0));

    std::mt19937_64 rng(9);
    for (int dim : {2, 3}) {
      const auto p = random_points(dim, 3, 4, 16, rng);
      const auto before = norm_per_irrep(p);
      for (int trial = 0; trial < 10; ++trial) {
        const auto after = norm_per_irrep(act_group(p, random_se(dim, rng), Interpolation::Linear));
        double worst = 0.0;
        for (size_t i = 0; i < before.size(); ++i) worst = std::max(worst, std::abs(before[i] - after[i]));
        CHECK(worst < 1e-12);
      }
    }
  }

  TEST_CASE("field arithmetic") {
    std::mt19937_64 rng(10);
    const auto a = random_points(2, 1, 2, 4, rng);
    auto b = FourierField::zeros_like(a, 1, 2);
    fill_random(b, rng);
    const auto s = field_add(a, field_scale(b, cplx(0, 2)));
    for (size_t i = 0; i < s.data().size(); ++i) CHECK(std::abs(s.data()[i] - (a.data()[i] + cplx(0, 2) * b.data()[i])) < 1e-15);
    CHECK(field_distance(a, a) == 0.0);
    CHECK_THROWS_AS(field_add(a, FourierField::zeros_like(a, 2, 2)), std::invalid_argument);
  }

  TEST_CASE("serialization round trip is bit-exact") {
    std::mt19937_64 rng(11);
    std::vector<FourierField> fields;
    FourierField g2(2, 3, 2, GridLayout::centered(2, {7, 5, 1}));
    fill_random(g2, rng);
    fields.push_back(g2);
    FourierField g3(3, 4, 16, GridLayout::centered(3, {4, 5, 6}));
    fill_random(g3, rng);
    fields.push_back(g3);
    fields.push_back(random_points(3, 2, 3, 9, rng));
    fields.push_back(random_points(2, 0, 1, 1, rng));
    int n = 0;
    for (const auto& f : fields) {
      const auto path = temp_path("rt" + std::to_string(n++) + ".stfl");
      write_field(f, path);
      const auto back = read_field(path);
      std::filesystem::remove(path);
      CHECK(back.dim() == f.dim());
      CHECK(back.cutoff() == f.cutoff());
      CHECK(back.channels() == f.channels());
      CHECK(back.is_grid() == f.is_grid());
      if (f.is_grid()) CHECK(back.grid() == f.grid());
      else CHECK(back.points() == f.points());
      REQUIRE(back.data().size() == f.data().size());
      CHECK(std::memcmp(back.data().data(), f.data().data(), f.data().size_bytes()) == 0);
    }
  }

  TEST_CASE("serialization rejects malformed input") {
    std::mt19937_64 rng(12);
    const auto f = random_points(2, 1, 2, 3, rng);
    const auto bytes = encode_field(f);

    auto bad_magic = bytes;
    std::memcpy(bad_magic.data(), "XXXX", 4);
    try {
      decode_field(bad_magic);
      FAIL("expected magic error");
    } catch (const FormatError& e) {
      CHECK(e.kind() == FormatError::Kind::BadMagic);
      CHECK(e.field() == "magic");
    }

    auto bad_version = bytes;
    bad_version[4] = 9;
    try {
      decode_field(bad_version);
      FAIL("expected version error");
    } catch (const FormatError& e) {
      CHECK(e.kind() == FormatError::Kind::VersionMismatch);
      CHECK(e.field() == "version");
    }

    const std::vector<unsigned char> truncated(bytes.begin(), bytes.end() - 5);
    try {
      decode_field(truncated);
      FAIL("expected truncation error");
    } catch (const FormatError& e) {
      CHECK(e.kind() == FormatError::Kind::Truncated);
      CHECK(e.field() == "payload");
      const std::string msg = e.what();
      CHECK(msg.find(std::to_string(f.data().size() * 16)) != std::string::npos);
      CHECK(msg.find(std::to_string(f.data().size() * 16 - 5)) != std::string::npos);
    }

    const std::vector<unsigned char> header_only(bytes.begin(), bytes.begin() + 7);
    CHECK_THROWS_AS(decode_field(header_only), FormatError);
    CHECK_THROWS_AS(read_field(temp_path("does_not_exist.stfl")), FormatError);
  }
}
