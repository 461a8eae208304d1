#include <doctest.h>

#include "steerkit/attention.hpp"

#include <cmath>
#include <numbers>
#include <random>

using namespace steerkit;

namespace {

constexpr double kPi = std::numbers::pi;

struct OwnedEncoder {
  std::vector<cplx> wq, wk, wv, wo, mix1, mix2, w1, w2;
  std::vector<double> pe, bias;

  explicit OwnedEncoder(const AttentionConfig& c) {
    const auto s = encoder_shapes(c);
    wq.resize(s.wq), wk.resize(s.wk), wv.resize(s.wv), wo.resize(s.wo), mix1.resize(s.mix1), mix2.resize(s.mix2);
    w1.resize(s.w1), w2.resize(s.w2), pe.resize(s.pe), bias.resize(s.bias);
  }
  void randomize(std::mt19937_64& rng, double scale = 0.4) {
    std::normal_distribution<double> n(0.0, scale);
    for (auto* v : {&wq, &wk, &wv, &wo, &mix1, &mix2, &w1, &w2})
      for (auto& x : *v) x = {n(rng), n(rng)};
    for (auto& x : pe) x = n(rng) * 3;
    for (auto& x : bias) x = n(rng);
  }
  AttentionParams attn() const { return {wq, wk, wv, wo, mix1, mix2, pe}; }
  FFNParams ffn() const { return {w1, w2, bias}; }
  EncoderParams enc() const { return {attn(), ffn()}; }
  AttentionGrads attn_grads() { return {wq, wk, wv, wo, mix1, mix2, pe}; }
  FFNGrads ffn_grads() { return {w1, w2, bias}; }
  EncoderGrads enc_grads() { return {attn_grads(), ffn_grads()}; }
  void zero() {
    for (auto* v : {&wq, &wk, &wv, &wo, &mix1, &mix2, &w1, &w2}) std::fill(v->begin(), v->end(), cplx{});
    std::fill(pe.begin(), pe.end(), 0.0);
    std::fill(bias.begin(), bias.end(), 0.0);
  }
  // every real coordinate, for finite differences
  std::vector<double*> coords() {
    std::vector<double*> out;
    for (auto* v : {&wq, &wk, &wv, &wo, &mix1, &mix2, &w1, &w2})
      for (auto& x : *v) {
        out.push_back(&reinterpret_cast<double(&)[2]>(x)[0]);
        out.push_back(&reinterpret_cast<double(&)[2]>(x)[1]);
      }
    for (auto* v : {&pe, &bias})
      for (auto& x : *v) out.push_back(&x);
    return out;
  }
};

void fill_random(std::span<cplx> v, std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  for (auto& x : v) x = {n(rng), n(rng)};
}

FourierField random_points(int dim, int cutoff, int channels, int n, std::mt19937_64& rng, double spread = 1.0) {
  std::normal_distribution<double> u(0.0, spread);
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

AttentionConfig make_config(int dim, int cutoff, int d_model, int heads, MixingMode m1, MixingMode m2) {
  AttentionConfig c;
  c.dim = dim;
  c.cutoff = cutoff;
  c.d_model = d_model;
  c.heads = heads;
  c.mix1 = m1;
  c.mix2 = m2;
  return c;
}

// Worst relative commutation error of `layer` over 20 Haar-random SE(d) elements.
template <typename Layer>
double commutation(const FourierField& f, Layer layer, std::mt19937_64& rng) {
  const auto out = layer(f);
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    const auto g = random_se(f.dim(), rng, 2.0);
    worst = std::max(worst, rel_err(layer(act_group(f, g, Interpolation::Linear)), act_group(out, g, Interpolation::Linear)));
  }
  return worst;
}

}  // namespace

TEST_SUITE("attention") {
  TEST_CASE("positional encoding examples") {
    CHECK(positional_encoding({0, 0, 0}, IrrepId::so2(1), 1.0)[0] == cplx{});
    CHECK(positional_encoding({0, 0, 0}, IrrepId::so3(2), 1.0) == std::vector<cplx>(5));
    const auto p = positional_encoding({1, 0, 0}, IrrepId::so2(1), 1.0);
    CHECK(std::abs(p[0] - cplx(std::exp(-1.0), 0.0)) < 1e-15);
    CHECK(std::abs(p[0]) == doctest::Approx(0.367879).epsilon(1e-6));
    const auto q = positional_encoding({0, 2, 0}, IrrepId::so2(-3), 0.5);
    CHECK(std::abs(q[0] - 0.5 * std::exp(-4.0) * std::polar(1.0, 3 * kPi / 2)) < 1e-15);
  }

  TEST_CASE("positional encoding steers and ignores translation") {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n;
    for (int t = 0; t < 50; ++t) {
      const Vec3 dx2{n(rng), n(rng), 0.0};
      const auto r2 = haar_random_rotation(Group::SO2, rng);
      for (int k = -4; k <= 4; ++k) {
        const auto lhs = positional_encoding(r2.apply(dx2), IrrepId::so2(k), 0.7);
        const auto rhs = irrep_eval(IrrepId::so2(k), r2)(0, 0) * positional_encoding(dx2, IrrepId::so2(k), 0.7)[0];
        CHECK(std::abs(lhs[0] - rhs) < 1e-12);
      }
      const Vec3 dx3{n(rng), n(rng), n(rng)};
      const auto r3 = haar_random_rotation(Group::SO3, rng);
      for (int l = 0; l <= 3; ++l) {
        const auto lhs = positional_encoding(r3.apply(dx3), IrrepId::so3(l), -1.3);
        const auto p = positional_encoding(dx3, IrrepId::so3(l), -1.3);
        const auto d = irrep_eval(IrrepId::so3(l), r3);
        for (int a = 0; a < 2 * l + 1; ++a) {
          cplx acc{};
          for (int b = 0; b < 2 * l + 1; ++b) acc += d(a, b) * p[b];
          CHECK(std::abs(lhs[a] - acc) < 1e-12);
        }
      }
    }
    // displacement of a pair is unchanged when both sites are translated
    const auto f = random_points(3, 1, 1, 5, rng);
    GroupElement shift = GroupElement::identity(3);
    shift.translation = {3.0, -1.0, 2.5};
    const auto g = act_group(f, shift, Interpolation::Linear);
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 5; ++j) {
        const auto a = site_displacement(f, i, j), b = site_displacement(g, i, j);
        for (int c = 0; c < 3; ++c) CHECK(std::abs(a[c] - b[c]) < 1e-12);
      }
  }

  TEST_CASE("configuration checks") {
    auto c = make_config(2, 1, 6, 4, MixingMode::Identity, MixingMode::Identity);
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c.heads = 3;
    CHECK_NOTHROW(c.validate());
    OwnedEncoder p(c);
    std::mt19937_64 rng(2);
    const auto f = random_points(2, 1, 4, 3, rng);
    CHECK_THROWS_AS(steerable_self_attention(f, p.attn(), c), std::invalid_argument);
    CHECK_THROWS_AS(position_ffn(f, p.ffn()), std::invalid_argument);
    const auto g = random_points(2, 1, 6, 3, rng);
    CHECK_THROWS_AS(attention_scores(g, p.attn(), c, 3), std::invalid_argument);
    CHECK(parse_mixing_mode("full-matrix") == MixingMode::FullMatrix);
    CHECK_THROWS_AS(parse_mixing_mode("diagonal"), std::invalid_argument);
  }

  TEST_CASE("uniform and singleton attention") {
    std::mt19937_64 rng(3);
    for (auto mode : {MixingMode::Identity, MixingMode::SharedScalar, MixingMode::FullMatrix}) {
      const auto c = make_config(2, 2, 4, 2, mode, mode);
      OwnedEncoder p(c);
      p.randomize(rng);
      std::fill(p.pe.begin(), p.pe.end(), 0.0);
      // identical features at every site
      FourierField f = random_points(2, 2, 4, 6, rng);
      for (int slot = 0; slot < f.num_irreps(); ++slot)
        for (int s = 1; s < 6; ++s)
          for (int ch = 0; ch < 4; ++ch) f.at(slot, s, 0, ch) = f.at(slot, 0, 0, ch);
      for (int h = 0; h < 2; ++h) {
        const auto sc = attention_scores(f, p.attn(), c, h);
        for (double a : sc.alpha) CHECK(a == doctest::Approx(1.0 / 6).epsilon(1e-12));
      }
      const auto single = random_points(2, 2, 4, 1, rng);
      CHECK(attention_scores(single, p.attn(), c, 1).alpha == std::vector<double>(5, 1.0));
    }
  }

  TEST_CASE("singleton output is f W_V W_O per irrep") {
    std::mt19937_64 rng(4);
    const auto c = make_config(3, 2, 4, 2, MixingMode::Identity, MixingMode::Identity);
    OwnedEncoder p(c);
    p.randomize(rng);
    const auto f = random_points(3, 2, 4, 1, rng);
    const auto out = steerable_self_attention(f, p.attn(), c);
    const int dm = 4, dk = 2, H = 2;
    for (int s = 0; s < f.num_irreps(); ++s)
      for (int m = 0; m < f.irrep_dim(s); ++m) {
        std::vector<cplx> cat(H * dk);
        for (int h = 0; h < H; ++h)
          for (int ch = 0; ch < dk; ++ch)
            for (int a = 0; a < dm; ++a)
              cat[h * dk + ch] += f.at(s, 0, m, a) * p.wv[((s * H + h) * dm + a) * dk + ch];
        for (int o = 0; o < dm; ++o) {
          cplx want{};
          for (int r = 0; r < H * dk; ++r) want += cat[r] * p.wo[(s * H * dk + r) * dm + o];
          CHECK(std::abs(out.at(s, 0, m, o) - want) < 1e-13);
        }
      }
  }

  TEST_CASE("uniform weights give mean-pooled values") {
    std::mt19937_64 rng(5);
    const auto c = make_config(2, 1, 2, 1, MixingMode::Identity, MixingMode::Identity);
    OwnedEncoder p(c);
    p.randomize(rng);
    std::fill(p.pe.begin(), p.pe.end(), 0.0);
    std::fill(p.wq.begin(), p.wq.end(), cplx{});  // zero queries => all scores 0 => uniform alpha
    const auto f = random_points(2, 1, 2, 5, rng);
    const auto out = steerable_self_attention(f, p.attn(), c);
    for (int s = 0; s < 3; ++s)
      for (int o = 0; o < 2; ++o) {
        cplx want{};
        for (int j = 0; j < 5; ++j)
          for (int a = 0; a < 2; ++a)
            for (int r = 0; r < 2; ++r) want += f.at(s, j, 0, a) * p.wv[(s * 2 + a) * 2 + r] * p.wo[(s * 2 + r) * 2 + o] / 5.0;
        for (int i = 0; i < 5; ++i) CHECK(std::abs(out.at(s, i, 0, o) - want) < 1e-13);
      }
  }

  TEST_CASE("scores are invariant and rows are probability vectors") {
    std::mt19937_64 rng(6);
    for (int dim : {2, 3})
      for (bool literal : {false, true}) {
        auto c = make_config(dim, dim == 2 ? 4 : 3, 4, 2, MixingMode::FullMatrix, MixingMode::SharedScalar);
        c.paper_literal_softmax = literal;
        OwnedEncoder p(c);
        p.randomize(rng);
        const auto f = random_points(dim, c.cutoff, 4, 20, rng);
        for (int h = 0; h < 2; ++h) {
          const auto sc = attention_scores(f, p.attn(), c, h);
          if (!literal)
            for (int s = 0; s < sc.num_irreps; ++s)
              for (int i = 0; i < sc.num_sites; ++i) {
                double sum = 0.0;
                for (int j = 0; j < sc.num_sites; ++j) {
                  CHECK(sc.a(s, i, j) >= 0.0);
                  sum += sc.a(s, i, j);
                }
                CHECK(std::abs(sum - 1.0) < 1e-12);
              }
          for (int t = 0; t < 20; ++t) {
            const auto g = random_se(dim, rng, 2.0);
            const auto rs = attention_scores(act_group(f, g, Interpolation::Linear), p.attn(), c, h);
            double worst = 0.0;
            for (size_t e = 0; e < sc.alpha.size(); ++e) worst = std::max(worst, std::abs(sc.alpha[e] - rs.alpha[e]) / std::max(1.0, sc.alpha[e]));
            CHECK(worst <= 1e-10);
          }
        }
      }
  }

  TEST_CASE("ffn examples") {
    const int dm = 3;
    auto c = make_config(3, 1, dm, 1, MixingMode::Identity, MixingMode::Identity);
    OwnedEncoder p(c);
    for (int i = 0; i < dm; ++i) {
      p.w1[i * 2 * dm + i] = 1.0;
      p.w2[i * dm + i] = 1.0;
    }
    FourierField f(3, 1, dm, std::vector<Vec3>{{0, 0, 0}, {1, 1, 1}});
    std::mt19937_64 rng(7);
    fill_random(f.data(), rng);
    // unit-norm columns
    for (int slot = 0; slot < 2; ++slot)
      for (int s = 0; s < 2; ++s)
        for (int ch = 0; ch < dm; ++ch) {
          double n2 = 0.0;
          for (int m = 0; m < f.irrep_dim(slot); ++m) n2 += std::norm(f.at(slot, s, m, ch));
          for (int m = 0; m < f.irrep_dim(slot); ++m) f.at(slot, s, m, ch) /= std::sqrt(n2);
        }
    CHECK(field_distance(position_ffn(f, p.ffn()), f) < 1e-5);
    FourierField z = FourierField::zeros_like(f, 1, dm);
    p.randomize(rng);
    CHECK(field_norm(position_ffn(z, p.ffn())) == 0.0);
  }

  TEST_CASE("zero encoder weights give the identity") {
    std::mt19937_64 rng(8);
    const auto c = make_config(2, 3, 4, 2, MixingMode::SharedScalar, MixingMode::Identity);
    OwnedEncoder p(c);
    const auto f = random_points(2, 3, 4, 7, rng);
    CHECK(field_distance(encoder_block(f, p.enc(), c), f) == 0.0);
    // single site: MHA reduces to f W_V W_O, so the block is an explicit composition
    p.randomize(rng);
    const auto one = random_points(2, 3, 4, 1, rng);
    const auto l1 = steerable_layer_norm(one);
    auto c_id = c;
    const auto z1 = field_add(steerable_self_attention(l1, p.attn(), c_id), one);
    const auto want = field_add(position_ffn(steerable_layer_norm(z1), p.ffn()), z1);
    CHECK(rel_err(encoder_block(one, p.enc(), c), want) < 1e-14);
  }

  TEST_CASE("steerable layers commute with SE(d)") {
    std::mt19937_64 rng(9);
    const std::vector<std::pair<MixingMode, MixingMode>> modes{{MixingMode::SharedScalar, MixingMode::Identity},
                                                               {MixingMode::FullMatrix, MixingMode::FullMatrix},
                                                               {MixingMode::Identity, MixingMode::SharedScalar}};
    for (int dim : {2, 3})
      for (const auto& [m1, m2] : modes) {
        const int cutoff = dim == 2 ? 4 : 3;
        auto c = make_config(dim, cutoff, 4, 2, m1, m2);
        OwnedEncoder p(c);
        p.randomize(rng);
        const auto f = random_points(dim, cutoff, 4, dim == 2 ? 64 : 24, rng);
        CHECK(commutation(f, [&](const FourierField& x) { return steerable_self_attention(x, p.attn(), c); }, rng) <= 1e-9);
        CHECK(commutation(f, [&](const FourierField& x) { return position_ffn(x, p.ffn()); }, rng) <= 1e-9);
        CHECK(commutation(f, [&](const FourierField& x) { return encoder_block(x, p.enc(), c); }, rng) <= 1e-9);
      }
  }

  TEST_CASE("literal softmax and key-index variants stay equivariant") {
    std::mt19937_64 rng(10);
    for (int dim : {2, 3})
      for (int variant = 0; variant < 3; ++variant) {
        auto c = make_config(dim, 2, 4, 2, MixingMode::FullMatrix, MixingMode::FullMatrix);
        c.paper_literal_softmax = variant != 1;
        c.key_from_query_site = variant != 0;
        OwnedEncoder p(c);
        p.randomize(rng);
        const auto f = random_points(dim, 2, 4, 16, rng);
        CHECK(commutation(f, [&](const FourierField& x) { return steerable_self_attention(x, p.attn(), c); }, rng) <= 1e-9);
        CHECK(commutation(f, [&](const FourierField& x) { return encoder_block(x, p.enc(), c); }, rng) <= 1e-9);
      }
  }

  TEST_CASE("trivial-irrep attention equals plain scaled dot-product attention") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> pos(0.05, 1.0);
    const int N = 7, dm = 4, H = 2, dk = 2;
    const auto c = make_config(2, 0, dm, H, MixingMode::Identity, MixingMode::Identity);
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
      OwnedEncoder p(c);
      for (auto* v : {&p.wq, &p.wk, &p.wv, &p.wo})
        for (auto& x : *v) x = pos(rng);
      FourierField f = random_points(2, 0, dm, N, rng);
      for (auto& x : f.data()) x = pos(rng);
      const auto out = steerable_self_attention(f, p.attn(), c);
      // independent real-valued reference: softmax(Q K^T / sqrt dk) V, heads concatenated, times W_O
      std::vector<double> X(N * dm);
      for (int i = 0; i < N * dm; ++i) X[i] = f.data()[i].real();
      std::vector<double> cat(N * H * dk, 0.0);
      for (int h = 0; h < H; ++h) {
        auto proj = [&](const std::vector<cplx>& w) {
          std::vector<double> r(N * dk, 0.0);
          for (int i = 0; i < N; ++i)
            for (int ch = 0; ch < dk; ++ch)
              for (int a = 0; a < dm; ++a) r[i * dk + ch] += X[i * dm + a] * w[(h * dm + a) * dk + ch].real();
          return r;
        };
        const auto Q = proj(p.wq), K = proj(p.wk), V = proj(p.wv);
        for (int i = 0; i < N; ++i) {
          std::vector<double> e(N);
          double z = 0.0;
          for (int j = 0; j < N; ++j) {
            double s = 0.0;
            for (int ch = 0; ch < dk; ++ch) s += Q[i * dk + ch] * K[j * dk + ch];
            z += e[j] = std::exp(s / std::sqrt(double(dk)));
          }
          for (int j = 0; j < N; ++j)
            for (int ch = 0; ch < dk; ++ch) cat[(i * H + h) * dk + ch] += e[j] / z * V[j * dk + ch];
        }
      }
      for (int i = 0; i < N; ++i)
        for (int o = 0; o < dm; ++o) {
          double want = 0.0;
          for (int r = 0; r < H * dk; ++r) want += cat[i * H * dk + r] * p.wo[r * dm + o].real();
          worst = std::max(worst, std::abs(out.at(0, i, 0, o) - cplx(want, 0.0)));
        }
    }
    CHECK(worst <= 1e-12);
  }

  TEST_CASE("attention, ffn and encoder backward match finite differences") {
    std::mt19937_64 rng(12);
    struct Case {
      int dim;
      MixingMode m1, m2;
      bool literal, query_key, ln_sqrt;
    };
    const std::vector<Case> cases{{2, MixingMode::SharedScalar, MixingMode::Identity, false, false, false},
                                  {2, MixingMode::FullMatrix, MixingMode::SharedScalar, true, true, true},
                                  {3, MixingMode::FullMatrix, MixingMode::FullMatrix, false, true, false},
                                  {3, MixingMode::Identity, MixingMode::SharedScalar, true, false, true}};
    for (const auto& cs : cases) {
      auto c = make_config(cs.dim, 1, 4, 2, cs.m1, cs.m2);
      c.paper_literal_softmax = cs.literal;
      c.key_from_query_site = cs.query_key;
      c.ln_sqrt = cs.ln_sqrt;
      OwnedEncoder p(c);
      p.randomize(rng);
      auto f = random_points(cs.dim, 1, 4, 4, rng);
      auto probe_field = f;
      fill_random(probe_field.data(), rng);

      for (int which = 0; which < 3; ++which) {
        auto forward = [&] {
          if (which == 0) return steerable_self_attention(f, p.attn(), c);
          if (which == 1) return position_ffn(f, p.ffn());
          return encoder_block(f, p.enc(), c);
        };
        auto loss = [&] { return probe(forward(), probe_field); };
        OwnedEncoder g(c);
        FourierField gin;
        if (which == 0) gin = steerable_self_attention_backward(f, p.attn(), c, probe_field, g.attn_grads());
        if (which == 1) gin = position_ffn_backward(f, p.ffn(), probe_field, g.ffn_grads());
        if (which == 2) gin = encoder_block_backward(f, p.enc(), c, probe_field, g.enc_grads());

        const double h = 1e-6;
        double worst = 0.0;
        const auto pc = p.coords(), gc = g.coords();
        for (size_t k = 0; k < pc.size(); ++k) {
          const double saved = *pc[k];
          *pc[k] = saved + h;
          const double lp = loss();
          *pc[k] = saved - h;
          const double lm = loss();
          *pc[k] = saved;
          const double fd = (lp - lm) / (2 * h);
          worst = std::max(worst, std::abs(fd - *gc[k]) / std::max(1.0, std::abs(fd)));
        }
        for (size_t i = 0; i < f.data().size(); ++i)
          for (int part = 0; part < 2; ++part) {
            const cplx saved = f.data()[i];
            const cplx step = part ? cplx(0, h) : cplx(h, 0);
            f.data()[i] = saved + step;
            const double lp = loss();
            f.data()[i] = saved - step;
            const double lm = loss();
            f.data()[i] = saved;
            const double fd = (lp - lm) / (2 * h);
            const double an = part ? gin.data()[i].imag() : gin.data()[i].real();
            worst = std::max(worst, std::abs(fd - an) / std::max(1.0, std::abs(fd)));
          }
        CAPTURE(which);
        CAPTURE(cs.dim);
        CHECK(worst < 1e-6);
      }
    }
  }
}
