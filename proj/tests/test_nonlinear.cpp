#include <doctest.h>

#include "steerkit/nonlinear.hpp"

#include <cmath>
#include <numbers>
#include <random>

using namespace steerkit;

namespace {

void fill_random(std::span<cplx> v, std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  for (auto& x : v) x = {n(rng), n(rng)};
}

FourierField random_points(int dim, int cutoff, int channels, int n, std::mt19937_64& rng) {
  std::normal_distribution<double> u(0.0, 2.0);
  std::vector<Vec3> pts(n, Vec3{0, 0, 0});
  for (auto& p : pts)
    for (int a = 0; a < dim; ++a) p[a] = u(rng);
  FourierField f(dim, cutoff, channels, pts);
  fill_random(f.data(), rng);
  return f;
}

double rel_err(const FourierField& a, const FourierField& b) { return field_distance(a, b) / (field_norm(b) + 1e-12); }

double probe(const FourierField& y, const FourierField& c) {
  double acc = 0.0;
  for (size_t i = 0; i < y.data().size(); ++i) acc += (std::conj(c.data()[i]) * y.data()[i]).real();
  return acc;
}

// Central differences of loss() along the real and imaginary part of every
// entry of f, compared with the analytic gradient.
template <typename F>
double worst_fd(FourierField& f, const FourierField& grad, F loss, double h = 1e-6) {
  double worst = 0.0;
  for (size_t i = 0; i < f.data().size(); ++i)
    for (int part = 0; part < 2; ++part) {
      const cplx saved = f.data()[i];
      const cplx step = part ? cplx(0, h) : cplx(h, 0);
      f.data()[i] = saved + step;
      const double lp = loss();
      f.data()[i] = saved - step;
      const double lm = loss();
      f.data()[i] = saved;
      const double an = part ? grad.data()[i].imag() : grad.data()[i].real();
      worst = std::max(worst, std::abs((lp - lm) / (2 * h) - an));
    }
  return worst;
}

// Runs check(f, g) on 10 random fields x 20 Haar-random group elements.
template <typename Layer>
double worst_equivariance(int dim, int cutoff, int channels, Layer layer, std::mt19937_64& rng) {
  double worst = 0.0;
  for (int i = 0; i < 10; ++i) {
    const auto f = random_points(dim, cutoff, channels, 12, rng);
    const auto out = layer(f);
    for (int t = 0; t < 20; ++t) {
      const auto g = random_se(dim, rng, 3.0);
      worst = std::max(worst, rel_err(layer(act_group(f, g, Interpolation::Linear)), act_group(out, g, Interpolation::Linear)));
    }
  }
  return worst;
}

}  // namespace

TEST_SUITE("nonlinear") {
  TEST_CASE("harmonic nonlinearity examples") {
    FourierField f(3, 1, 1, std::vector<Vec3>{{0, 0, 0}});
    f.at(1, 0, 0, 0) = {0.6, 0.0};
    f.at(1, 0, 2, 0) = {0.0, 0.8};
    f.at(0, 0, 0, 0) = {0.0, -1.0};
    const auto same = harmonic_nonlinearity(f, std::vector<double>{0.0, 0.0});
    CHECK(field_distance(same, f) < 2e-6);
    const auto gated = harmonic_nonlinearity(f, std::vector<double>{-2.0, -2.0});
    CHECK(field_norm(gated) == 0.0);
    CHECK_THROWS_AS(harmonic_nonlinearity(f, std::vector<double>{0.0}), std::invalid_argument);
    CHECK_THROWS_AS(harmonic_nonlinearity(f, std::vector<double>{0.0, 0.0}, 0.0), std::invalid_argument);
  }

  TEST_CASE("harmonic nonlinearity is positively homogeneous at zero bias") {
    std::mt19937_64 rng(1);
    const auto f = random_points(2, 3, 2, 8, rng);
    const std::vector<double> b(14, 0.0);
    const double tiny = 1e-14;
    for (double c : {0.5, 3.0, 17.0}) {
      const auto lhs = harmonic_nonlinearity(field_scale(f, c), b, tiny);
      const auto rhs = field_scale(harmonic_nonlinearity(f, b, tiny), c);
      CHECK(rel_err(lhs, rhs) < 1e-10);
    }
  }

  TEST_CASE("cg nonlinearity examples") {
    FourierField z(2, 3, 2, std::vector<Vec3>{{0, 0, 0}, {1, 0, 0}});
    const auto zq = cg_nonlinearity(z);
    CHECK(zq.channels() == 4);
    CHECK(field_norm(zq) == 0.0);

    // only k = 1 populated with value a; quadratic part must be a^2 at k = 2
    const cplx a(0.7, -1.3);
    FourierField f(2, 3, 1, std::vector<Vec3>{{0, 0, 0}});
    f.at(f.slot_of(1), 0, 0, 0) = a;
    const auto q = cg_nonlinearity(f);
    // angle-domain oracle: sample, square pointwise, transform back
    std::vector<cplx> coeffs(7);
    coeffs[f.slot_of(1)] = a;
    auto samples = inverse_fourier_so2(coeffs, 32);
    for (auto& s : samples) s *= s;
    const auto sq = fourier_so2(samples, 3);
    for (int slot = 0; slot < 7; ++slot) {
      CHECK(q.at(slot, 0, 0, 0) == f.at(slot, 0, 0, 0));
      CHECK(std::abs(q.at(slot, 0, 0, 1) - sq[slot]) < 1e-12);
    }
    CHECK(std::abs(q.at(f.slot_of(2), 0, 0, 1) - a * a) < 1e-14);
  }

  TEST_CASE("cg nonlinearity matches the angle-domain squaring oracle") {
    std::mt19937_64 rng(2);
    for (int K : {1, 2, 4}) {
      const auto f = random_points(2, K, 3, 5, rng);
      const auto q = cg_nonlinearity(f);
      for (int s = 0; s < f.num_sites(); ++s)
        for (int c = 0; c < 3; ++c) {
          std::vector<cplx> coeffs(2 * K + 1);
          for (int slot = 0; slot < 2 * K + 1; ++slot) coeffs[slot] = f.at(slot, s, 0, c);
          // A > 4K keeps the squared signal alias-free
          auto samples = inverse_fourier_so2(coeffs, 4 * K + 3);
          for (auto& v : samples) v *= v;
          const auto want = fourier_so2(samples, K);
          for (int slot = 0; slot < 2 * K + 1; ++slot)
            CHECK(std::abs(q.at(slot, s, 0, 3 + c) - want[slot]) < 1e-10);
        }
    }
  }

  TEST_CASE("cg nonlinearity on a pure l = 1 field") {
    std::mt19937_64 rng(3);
    FourierField f(3, 3, 2, std::vector<Vec3>{{0, 0, 0}});
    fill_random(f.block(1), rng);
    const auto q = cg_nonlinearity(f);
    for (int c = 0; c < 2; ++c) {
      // brute force: full 3x3 tensor product contracted with direct Racah coefficients
      for (int l = 0; l <= 3; ++l)
        for (int m = -l; m <= l; ++m) {
          cplx want{};
          for (int m1 = -1; m1 <= 1; ++m1)
            for (int m2 = -1; m2 <= 1; ++m2)
              want += clebsch_gordan_coefficient(1, m1, 1, m2, l, m) * f.at(1, 0, m1 + 1, c) * f.at(1, 0, m2 + 1, c);
          CHECK(std::abs(q.at(l, 0, m + l, 2 + c) - want) < 1e-13);
          if (l == 3) CHECK(q.at(l, 0, m + l, 2 + c) == cplx{});
        }
      // l = 0 part in closed form: sum_m (-1)^(1-m) f_m f_-m / sqrt 3
      cplx scalar{};
      for (int m = -1; m <= 1; ++m) scalar += ((1 - m) % 2 ? -1.0 : 1.0) * f.at(1, 0, m + 1, c) * f.at(1, 0, 1 - m, c);
      CHECK(std::abs(q.at(0, 0, 0, 2 + c) - scalar / std::sqrt(3.0)) < 1e-13);
      // l = 1 part of f x f vanishes by antisymmetry
      for (int m = 0; m < 3; ++m) CHECK(std::abs(q.at(1, 0, m, 2 + c)) < 1e-13);
    }
  }

  TEST_CASE("layer norm examples") {
    FourierField f(2, 0, 1, std::vector<Vec3>{{0, 0, 0}});
    f.at(0, 0, 0, 0) = {0.6, 0.8};
    CHECK(field_distance(steerable_layer_norm(f), f) < 2e-6);
    CHECK(field_distance(steerable_layer_norm(f, kNormEps, true), f) < 2e-6);
    FourierField z(3, 2, 3, std::vector<Vec3>{{0, 0, 0}, {1, 2, 3}});
    CHECK(field_norm(steerable_layer_norm(z)) == 0.0);

    // output block = positive scalar x input block, same scalar across blocks at a site
    std::mt19937_64 rng(4);
    const auto r = random_points(3, 2, 3, 4, rng);
    for (bool sq : {false, true}) {
      const auto o = steerable_layer_norm(r, kNormEps, sq);
      for (int s = 0; s < r.num_sites(); ++s) {
        const double ratio = o.at(0, s, 0, 0).real() / r.at(0, s, 0, 0).real();
        CHECK(ratio > 0.0);
        for (int slot = 0; slot < r.num_irreps(); ++slot)
          for (int m = 0; m < r.irrep_dim(slot); ++m)
            for (int c = 0; c < 3; ++c) CHECK(std::abs(o.at(slot, s, m, c) - ratio * r.at(slot, s, m, c)) < 1e-14);
      }
    }
  }

  TEST_CASE("norm flatten") {
    FourierField z(2, 2, 3, std::vector<Vec3>{{0, 0, 0}});
    for (double v : norm_flatten(z)) CHECK(v == 0.0);
    FourierField f(2, 2, 1, std::vector<Vec3>{{0, 0, 0}});
    f.at(f.slot_of(2), 0, 0, 0) = {3, 4};
    CHECK(norm_flatten(f)[f.slot_of(2)] == doctest::Approx(5.0));
    CHECK_THROWS_AS(norm_flatten(FourierField(2, 1, 1, GridLayout::centered(2, {2, 1, 1}))), std::invalid_argument);

    std::mt19937_64 rng(5);
    for (int dim : {2, 3}) {
      const auto s = random_points(dim, 3, 4, 1, rng);
      const auto v = norm_flatten(s);
      for (int t = 0; t < 20; ++t) {
        const auto w = norm_flatten(act_group(s, random_se(dim, rng), Interpolation::Linear));
        for (size_t i = 0; i < v.size(); ++i) CHECK(std::abs(v[i] - w[i]) < 1e-12);
      }
    }
  }

  TEST_CASE("all nonlinear layers commute with the group action") {
    std::mt19937_64 rng(6);
    for (int dim : {2, 3}) {
      const int cutoff = dim == 2 ? 4 : 3;
      const int C = 3;
      std::vector<double> bias(static_cast<size_t>(dim == 2 ? 2 * cutoff + 1 : cutoff + 1) * C);
      for (auto& b : bias) b = std::normal_distribution<double>(0.0, 1.0)(rng);
      CHECK(worst_equivariance(dim, cutoff, C, [&](const FourierField& f) { return harmonic_nonlinearity(f, bias); }, rng) <= 1e-10);
      CHECK(worst_equivariance(dim, cutoff, C, [](const FourierField& f) { return cg_nonlinearity(f); }, rng) <= 1e-10);
      CHECK(worst_equivariance(dim, cutoff, C, [](const FourierField& f) { return steerable_layer_norm(f); }, rng) <= 1e-10);
      CHECK(worst_equivariance(dim, cutoff, C, [](const FourierField& f) { return steerable_layer_norm(f, kNormEps, true); }, rng) <=
            1e-10);
    }
  }

  TEST_CASE("backward passes match finite differences") {
    std::mt19937_64 rng(7);
    for (int dim : {2, 3}) {
      const int cutoff = 2, C = 2;
      auto f = random_points(dim, cutoff, C, 3, rng);
      const size_t nb = static_cast<size_t>(f.num_irreps()) * C;
      std::vector<double> bias(nb);
      for (auto& b : bias) b = std::uniform_real_distribution<double>(-1.0, 0.5)(rng);

      {
        auto c = harmonic_nonlinearity(f, bias);
        fill_random(c.data(), rng);
        std::vector<double> gb(nb, 0.0);
        const auto g = harmonic_nonlinearity_backward(f, bias, c, gb);
        auto loss = [&] { return probe(harmonic_nonlinearity(f, bias), c); };
        CHECK(worst_fd(f, g, loss) < 1e-7);
        double worst = 0.0;
        for (size_t k = 0; k < nb; ++k) {
          const double saved = bias[k];
          bias[k] = saved + 1e-6;
          const double lp = loss();
          bias[k] = saved - 1e-6;
          const double lm = loss();
          bias[k] = saved;
          worst = std::max(worst, std::abs((lp - lm) / 2e-6 - gb[k]));
        }
        CHECK(worst < 1e-7);
      }
      {
        auto c = cg_nonlinearity(f);
        fill_random(c.data(), rng);
        const auto g = cg_nonlinearity_backward(f, c);
        CHECK(worst_fd(f, g, [&] { return probe(cg_nonlinearity(f), c); }) < 1e-7);
      }
      for (bool sq : {false, true}) {
        auto c = f;
        fill_random(c.data(), rng);
        const auto g = steerable_layer_norm_backward(f, c, kNormEps, sq);
        CHECK(worst_fd(f, g, [&] { return probe(steerable_layer_norm(f, kNormEps, sq), c); }) < 1e-7);
      }
      {
        auto one = random_points(dim, cutoff, C, 1, rng);
        std::vector<double> gv(nb);
        for (auto& v : gv) v = std::normal_distribution<double>()(rng);
        const auto g = norm_flatten_backward(one, gv);
        auto loss = [&] {
          const auto v = norm_flatten(one);
          double acc = 0.0;
          for (size_t i = 0; i < v.size(); ++i) acc += gv[i] * v[i];
          return acc;
        };
        CHECK(worst_fd(one, g, loss) < 1e-7);
      }
    }
  }
}
