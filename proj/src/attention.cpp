#include "steerkit/attention.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace steerkit {

MixingMode parse_mixing_mode(const std::string& name) {
  if (name == "identity") return MixingMode::Identity;
  if (name == "shared-scalar") return MixingMode::SharedScalar;
  if (name == "full-matrix") return MixingMode::FullMatrix;
  throw std::invalid_argument("unknown mixing mode '" + name + "' (expected identity, shared-scalar or full-matrix)");
}

std::string to_string(MixingMode mode) {
  switch (mode) {
    case MixingMode::Identity: return "identity";
    case MixingMode::SharedScalar: return "shared-scalar";
    case MixingMode::FullMatrix: return "full-matrix";
  }
  return "?";
}

int AttentionConfig::mix_count(MixingMode mode) const {
  const int n = num_irreps();
  return mode == MixingMode::Identity ? 0 : mode == MixingMode::SharedScalar ? n : n * n;
}

void AttentionConfig::validate() const {
  if (dim != 2 && dim != 3) throw std::invalid_argument("attention dimension must be 2 or 3");
  if (cutoff < 0) throw std::invalid_argument("attention cutoff must be non-negative");
  if (d_model < 1 || heads < 1) throw std::invalid_argument("d_model and heads must be positive");
  if (d_model % heads != 0)
    throw std::invalid_argument("heads (" + std::to_string(heads) + ") must divide d_model (" + std::to_string(d_model) + ")");
  if (layers < 1) throw std::invalid_argument("encoder needs at least one layer");
}

EncoderShapes encoder_shapes(const AttentionConfig& c) {
  const size_t n = c.num_irreps(), dm = c.d_model, h = c.heads, dk = c.d_k();
  return {n * h * dm * dk, n * h * dm * dk, n * h * dm * dk, n * h * dk * dm,
          h * c.mix_count(c.mix1), h * c.mix_count(c.mix2), n * h * dk, dm * 2 * dm, 2 * dm * dm, n * 2 * dm};
}

std::vector<cplx> positional_encoding(const Vec3& dx, IrrepId irrep, double w) {
  std::vector<cplx> out(irrep.dim());
  const double r2 = dx[0] * dx[0] + dx[1] * dx[1] + dx[2] * dx[2];
  if (r2 == 0.0) return out;
  const double amp = w * std::exp(-r2);
  if (irrep.group == Group::SO2) {
    out[0] = amp * std::polar(1.0, -irrep.index * std::atan2(dx[1], dx[0]));
  } else {
    const double r = std::sqrt(r2);
    const auto y = spherical_harmonics(irrep.index, {dx[0] / r, dx[1] / r, dx[2] / r});
    for (size_t m = 0; m < y.size(); ++m) out[m] = amp * y[m];
  }
  return out;
}

Vec3 site_displacement(const FourierField& field, int i, int j) {
  const Vec3 a = field.site_position(i), b = field.site_position(j);
  const double scale = field.is_grid() ? 1.0 / field.grid().spacing : 1.0;
  return {(a[0] - b[0]) * scale, (a[1] - b[1]) * scale, (a[2] - b[2]) * scale};
}

namespace {

void check_size(size_t got, size_t want, const char* what) {
  if (got != want)
    throw std::invalid_argument(std::string(what) + ": expected " + std::to_string(want) + " values, got " +
                                std::to_string(got));
}

void check_attention(const FourierField& f, const AttentionParams& p, const AttentionConfig& c) {
  c.validate();
  if (f.channels() != c.d_model)
    throw std::invalid_argument("attention input has " + std::to_string(f.channels()) + " channels, expected d_model " +
                                std::to_string(c.d_model));
  if (f.dim() != c.dim || f.cutoff() != c.cutoff) throw std::invalid_argument("attention input irreps do not match config");
  const auto s = encoder_shapes(c);
  check_size(p.wq.size(), s.wq, "W_Q");
  check_size(p.wk.size(), s.wk, "W_K");
  check_size(p.wv.size(), s.wv, "W_V");
  check_size(p.wo.size(), s.wo, "W_O");
  check_size(p.mix1.size(), s.mix1, "w1 mixing");
  check_size(p.mix2.size(), s.mix2, "w2 mixing");
  check_size(p.pe.size(), s.pe, "positional encoding scalars");
}

// Dense n x n mixing matrix M[rho][rho'] of one head.
std::vector<cplx> mixing_matrix(MixingMode mode, std::span<const cplx> all, int n, int head) {
  std::vector<cplx> m(static_cast<size_t>(n) * n);
  switch (mode) {
    case MixingMode::Identity:
      for (int r = 0; r < n; ++r) m[r * n + r] = 1.0;
      break;
    case MixingMode::SharedScalar:
      for (int r = 0; r < n; ++r)
        for (int q = 0; q < n; ++q) m[r * n + q] = all[static_cast<size_t>(head) * n + q];
      break;
    case MixingMode::FullMatrix:
      std::copy_n(all.begin() + static_cast<size_t>(head) * n * n, n * n, m.begin());
      break;
  }
  return m;
}

void accumulate_mixing_grad(MixingMode mode, std::span<const cplx> gm, int n, int head, std::span<cplx> out) {
  switch (mode) {
    case MixingMode::Identity:
      break;
    case MixingMode::SharedScalar:
      for (int r = 0; r < n; ++r)
        for (int q = 0; q < n; ++q) out[static_cast<size_t>(head) * n + q] += gm[r * n + q];
      break;
    case MixingMode::FullMatrix:
      for (int i = 0; i < n * n; ++i) out[static_cast<size_t>(head) * n * n + i] += gm[i];
      break;
  }
}

// Radial-angular part of the positional encoding for every (i, j) pair and
// irrep slot, without the learnable scalar. Layout [i][j][slot offset + m].
struct PETable {
  int n = 0;
  int width = 0;
  std::vector<int> offset;
  std::vector<cplx> v;
  const cplx* at(int i, int j, int slot) const { return v.data() + (static_cast<size_t>(i) * n + j) * width + offset[slot]; }
};

PETable pe_table(const FourierField& f) {
  PETable t;
  t.n = f.num_sites();
  for (int s = 0; s < f.num_irreps(); ++s) {
    t.offset.push_back(t.width);
    t.width += f.irrep_dim(s);
  }
  t.v.assign(static_cast<size_t>(t.n) * t.n * t.width, cplx{});
  for (int i = 0; i < t.n; ++i)
    for (int j = 0; j < t.n; ++j) {
      const Vec3 dx = site_displacement(f, i, j);
      for (int s = 0; s < f.num_irreps(); ++s) {
        const auto p = positional_encoding(dx, f.irrep(s), 1.0);
        std::copy(p.begin(), p.end(), t.v.begin() + (static_cast<size_t>(i) * t.n + j) * t.width + t.offset[s]);
      }
    }
  return t;
}

// Per-head projections of one irrep slot: [site][m][d_k].
struct Projections {
  std::vector<cplx> q, k, v;
};

std::vector<cplx> project(std::span<const cplx> block, int sites, int d, int dm, const cplx* w, int dk) {
  std::vector<cplx> out(static_cast<size_t>(sites) * d * dk);
  for (int r = 0; r < sites * d; ++r) {
    const cplx* row = block.data() + static_cast<size_t>(r) * dm;
    cplx* dst = out.data() + static_cast<size_t>(r) * dk;
    for (int a = 0; a < dm; ++a) {
      if (row[a] == cplx{}) continue;
      const cplx* wr = w + static_cast<size_t>(a) * dk;
      for (int c = 0; c < dk; ++c) dst[c] += row[a] * wr[c];
    }
  }
  return out;
}

// G_in += G_proj W^H and G_W += X^H G_proj for a projection X W.
void project_backward(std::span<const cplx> block, int sites, int d, int dm, const cplx* w, int dk,
                      const std::vector<cplx>& gproj, std::span<cplx> gin, cplx* gw) {
  for (int r = 0; r < sites * d; ++r) {
    const cplx* row = block.data() + static_cast<size_t>(r) * dm;
    const cplx* g = gproj.data() + static_cast<size_t>(r) * dk;
    cplx* gi = gin.data() + static_cast<size_t>(r) * dm;
    for (int a = 0; a < dm; ++a) {
      const cplx* wr = w + static_cast<size_t>(a) * dk;
      cplx* gwr = gw + static_cast<size_t>(a) * dk;
      const cplx xr = std::conj(row[a]);
      cplx acc{};
      for (int c = 0; c < dk; ++c) {
        acc += g[c] * std::conj(wr[c]);
        gwr[c] += xr * g[c];
      }
      gi[a] += acc;
    }
  }
}

struct HeadState {
  std::vector<Projections> proj;  // per slot
  AttentionScores scores;
  std::vector<cplx> m1, m2;
};

HeadState run_head(const FourierField& f, const AttentionParams& p, const AttentionConfig& c, const PETable& pe,
                   int head) {
  const int N = f.num_sites(), n = f.num_irreps(), dm = c.d_model, dk = c.d_k(), H = c.heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));
  HeadState st;
  st.m1 = mixing_matrix(c.mix1, p.mix1, n, head);
  st.m2 = mixing_matrix(c.mix2, p.mix2, n, head);
  st.proj.resize(n);
  AttentionScores& sc = st.scores;
  sc.num_sites = N;
  sc.num_irreps = n;
  const size_t nn = static_cast<size_t>(N) * N;
  sc.raw.assign(n * nn, cplx{});
  sc.mixed.assign(n * nn, cplx{});
  sc.alpha.assign(n * nn, 0.0);

  for (int s = 0; s < n; ++s) {
    const int d = f.irrep_dim(s);
    const size_t woff = (static_cast<size_t>(s) * H + head) * dm * dk;
    Projections& pr = st.proj[s];
    pr.q = project(f.block(s), N, d, dm, p.wq.data() + woff, dk);
    pr.k = project(f.block(s), N, d, dm, p.wk.data() + woff, dk);
    pr.v = project(f.block(s), N, d, dm, p.wv.data() + woff, dk);
    const double* w = p.pe.data() + (static_cast<size_t>(s) * H + head) * dk;
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < N; ++j) {
        const int src = c.key_from_query_site ? i : j;
        const cplx* phi = pe.at(i, j, s);
        cplx acc{};
        for (int m = 0; m < d; ++m) {
          const cplx* q = pr.q.data() + (static_cast<size_t>(i) * d + m) * dk;
          const cplx* k = pr.k.data() + (static_cast<size_t>(src) * d + m) * dk;
          for (int ch = 0; ch < dk; ++ch) acc += std::conj(q[ch]) * (k[ch] + w[ch] * phi[m]);
        }
        sc.raw[s * nn + static_cast<size_t>(i) * N + j] = acc * inv_sqrt;
      }
  }
  for (int r = 0; r < n; ++r)
    for (int q = 0; q < n; ++q) {
      const cplx w = st.m1[r * n + q];
      if (w == cplx{}) continue;
      for (size_t e = 0; e < nn; ++e) sc.mixed[r * nn + e] += w * sc.raw[q * nn + e];
    }
  for (int s = 0; s < n; ++s)
    for (int i = 0; i < N; ++i) {
      const cplx* row = sc.mixed.data() + s * nn + static_cast<size_t>(i) * N;
      double* a = sc.alpha.data() + s * nn + static_cast<size_t>(i) * N;
      if (c.paper_literal_softmax) {
        double z = 0.0;
        for (int j = 0; j < N; ++j) z += std::abs(row[j]);
        for (int j = 0; j < N; ++j) a[j] = std::exp(std::abs(row[j])) / z;
      } else {
        double mx = 0.0;
        for (int j = 0; j < N; ++j) mx = std::max(mx, std::abs(row[j]));
        double z = 0.0;
        for (int j = 0; j < N; ++j) z += (a[j] = std::exp(std::abs(row[j]) - mx));
        for (int j = 0; j < N; ++j) a[j] /= z;
      }
    }
  return st;
}

// beta[rho][i][j] = sum_rho' M2[rho][rho'] alpha[rho'][i][j]
std::vector<cplx> effective_weights(const HeadState& st) {
  const int n = st.scores.num_irreps;
  const size_t nn = static_cast<size_t>(st.scores.num_sites) * st.scores.num_sites;
  std::vector<cplx> beta(n * nn, cplx{});
  for (int r = 0; r < n; ++r)
    for (int q = 0; q < n; ++q) {
      const cplx w = st.m2[r * n + q];
      if (w == cplx{}) continue;
      for (size_t e = 0; e < nn; ++e) beta[r * nn + e] += w * st.scores.alpha[q * nn + e];
    }
  return beta;
}

}  // namespace

AttentionScores attention_scores(const FourierField& field, const AttentionParams& params,
                                 const AttentionConfig& config, int head) {
  check_attention(field, params, config);
  if (head < 0 || head >= config.heads)
    throw std::invalid_argument("head index " + std::to_string(head) + " out of range");
  return run_head(field, params, config, pe_table(field), head).scores;
}

FourierField steerable_self_attention(const FourierField& field, const AttentionParams& params,
                                      const AttentionConfig& config) {
  check_attention(field, params, config);
  const int N = field.num_sites(), n = field.num_irreps(), dm = config.d_model, dk = config.d_k(), H = config.heads;
  const size_t nn = static_cast<size_t>(N) * N;
  const PETable pe = pe_table(field);
  // concatenated head outputs per slot: [site][m][H * dk]
  std::vector<std::vector<cplx>> cat(n);
  for (int s = 0; s < n; ++s) cat[s].assign(static_cast<size_t>(N) * field.irrep_dim(s) * H * dk, cplx{});
  for (int h = 0; h < H; ++h) {
    const HeadState st = run_head(field, params, config, pe, h);
    const auto beta = effective_weights(st);
    for (int s = 0; s < n; ++s) {
      const int d = field.irrep_dim(s);
      for (int i = 0; i < N; ++i)
        for (int j = 0; j < N; ++j) {
          const cplx b = beta[s * nn + static_cast<size_t>(i) * N + j];
          if (b == cplx{}) continue;
          for (int m = 0; m < d; ++m) {
            const cplx* v = st.proj[s].v.data() + (static_cast<size_t>(j) * d + m) * dk;
            cplx* o = cat[s].data() + (static_cast<size_t>(i) * d + m) * H * dk + h * dk;
            for (int ch = 0; ch < dk; ++ch) o[ch] += b * v[ch];
          }
        }
    }
  }
  FourierField out = FourierField::zeros_like(field, field.cutoff(), dm);
  for (int s = 0; s < n; ++s) {
    const int d = field.irrep_dim(s);
    const auto y = project(cat[s], N, d, H * dk, params.wo.data() + static_cast<size_t>(s) * H * dk * dm, dm);
    std::copy(y.begin(), y.end(), out.block(s).begin());
  }
  return out;
}

FourierField steerable_self_attention_backward(const FourierField& field, const AttentionParams& params,
                                               const AttentionConfig& config, const FourierField& grad_out,
                                               const AttentionGrads& grads) {
  check_attention(field, params, config);
  const int N = field.num_sites(), n = field.num_irreps(), dm = config.d_model, dk = config.d_k(), H = config.heads;
  const size_t nn = static_cast<size_t>(N) * N;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));
  const PETable pe = pe_table(field);

  std::vector<HeadState> states;
  std::vector<std::vector<cplx>> betas;
  for (int h = 0; h < H; ++h) {
    states.push_back(run_head(field, params, config, pe, h));
    betas.push_back(effective_weights(states.back()));
  }
  // rebuild concatenated outputs, then back through W_O
  std::vector<std::vector<cplx>> gcat(n);
  for (int s = 0; s < n; ++s) {
    const int d = field.irrep_dim(s);
    std::vector<cplx> cat(static_cast<size_t>(N) * d * H * dk, cplx{});
    for (int h = 0; h < H; ++h)
      for (int i = 0; i < N; ++i)
        for (int j = 0; j < N; ++j) {
          const cplx b = betas[h][s * nn + static_cast<size_t>(i) * N + j];
          for (int m = 0; m < d; ++m) {
            const cplx* v = states[h].proj[s].v.data() + (static_cast<size_t>(j) * d + m) * dk;
            cplx* o = cat.data() + (static_cast<size_t>(i) * d + m) * H * dk + h * dk;
            for (int ch = 0; ch < dk; ++ch) o[ch] += b * v[ch];
          }
        }
    gcat[s].assign(cat.size(), cplx{});
    const std::vector<cplx> gy(grad_out.block(s).begin(), grad_out.block(s).end());
    project_backward(cat, N, d, H * dk, params.wo.data() + static_cast<size_t>(s) * H * dk * dm, dm, gy, gcat[s],
                     grads.wo.data() + static_cast<size_t>(s) * H * dk * dm);
  }

  FourierField gin = FourierField::zeros_like(field, field.cutoff(), dm);
  for (int h = 0; h < H; ++h) {
    const HeadState& st = states[h];
    const auto& sc = st.scores;
    const auto& beta = betas[h];
    std::vector<cplx> gbeta(n * nn, cplx{});
    std::vector<Projections> gproj(n);
    for (int s = 0; s < n; ++s) {
      const int d = field.irrep_dim(s);
      gproj[s].q.assign(st.proj[s].q.size(), cplx{});
      gproj[s].k.assign(st.proj[s].k.size(), cplx{});
      gproj[s].v.assign(st.proj[s].v.size(), cplx{});
      for (int i = 0; i < N; ++i)
        for (int j = 0; j < N; ++j) {
          const size_t e = s * nn + static_cast<size_t>(i) * N + j;
          cplx acc{};
          for (int m = 0; m < d; ++m) {
            const cplx* go = gcat[s].data() + (static_cast<size_t>(i) * d + m) * H * dk + h * dk;
            const cplx* v = st.proj[s].v.data() + (static_cast<size_t>(j) * d + m) * dk;
            cplx* gv = gproj[s].v.data() + (static_cast<size_t>(j) * d + m) * dk;
            const cplx cb = std::conj(beta[e]);
            for (int ch = 0; ch < dk; ++ch) {
              acc += std::conj(v[ch]) * go[ch];
              gv[ch] += cb * go[ch];
            }
          }
          gbeta[e] = acc;
        }
    }
    // through the w2 mixing into alpha
    std::vector<cplx> gm2(static_cast<size_t>(n) * n, cplx{});
    std::vector<double> galpha(n * nn, 0.0);
    for (int r = 0; r < n; ++r)
      for (int q = 0; q < n; ++q) {
        const cplx w = std::conj(st.m2[r * n + q]);
        cplx acc{};
        for (size_t e = 0; e < nn; ++e) {
          acc += sc.alpha[q * nn + e] * gbeta[r * nn + e];
          galpha[q * nn + e] += (w * gbeta[r * nn + e]).real();
        }
        gm2[r * n + q] = acc;
      }
    accumulate_mixing_grad(config.mix2, gm2, n, h, grads.mix2);

    // through the normalisation and |.| into the mixed scores
    std::vector<cplx> gmixed(n * nn, cplx{});
    for (int s = 0; s < n; ++s)
      for (int i = 0; i < N; ++i) {
        const size_t row = s * nn + static_cast<size_t>(i) * N;
        std::vector<double> ga(N);
        if (config.paper_literal_softmax) {
          double z = 0.0, dot = 0.0;
          for (int j = 0; j < N; ++j) z += std::abs(sc.mixed[row + j]);
          for (int j = 0; j < N; ++j) dot += galpha[row + j] * sc.alpha[row + j];
          for (int j = 0; j < N; ++j) ga[j] = galpha[row + j] * sc.alpha[row + j] - dot / z;
        } else {
          double dot = 0.0;
          for (int j = 0; j < N; ++j) dot += galpha[row + j] * sc.alpha[row + j];
          for (int j = 0; j < N; ++j) ga[j] = sc.alpha[row + j] * (galpha[row + j] - dot);
        }
        for (int j = 0; j < N; ++j) {
          const cplx z = sc.mixed[row + j];
          const double az = std::abs(z);
          if (az > 0.0) gmixed[row + j] = ga[j] * z / az;
        }
      }
    // through the w1 mixing into raw scores
    std::vector<cplx> gm1(static_cast<size_t>(n) * n, cplx{});
    std::vector<cplx> graw(n * nn, cplx{});
    for (int r = 0; r < n; ++r)
      for (int q = 0; q < n; ++q) {
        const cplx w = std::conj(st.m1[r * n + q]);
        cplx acc{};
        for (size_t e = 0; e < nn; ++e) {
          acc += std::conj(sc.raw[q * nn + e]) * gmixed[r * nn + e];
          graw[q * nn + e] += w * gmixed[r * nn + e];
        }
        gm1[r * n + q] = acc;
      }
    accumulate_mixing_grad(config.mix1, gm1, n, h, grads.mix1);

    // raw = q^H (k + pe) / sqrt(dk)
    for (int s = 0; s < n; ++s) {
      const int d = field.irrep_dim(s);
      const double* w = params.pe.data() + (static_cast<size_t>(s) * H + h) * dk;
      double* gw = grads.pe.data() + (static_cast<size_t>(s) * H + h) * dk;
      for (int i = 0; i < N; ++i)
        for (int j = 0; j < N; ++j) {
          const cplx g = graw[s * nn + static_cast<size_t>(i) * N + j] * inv_sqrt;
          if (g == cplx{}) continue;
          const int src = config.key_from_query_site ? i : j;
          const cplx* phi = pe.at(i, j, s);
          for (int m = 0; m < d; ++m) {
            const cplx* q = st.proj[s].q.data() + (static_cast<size_t>(i) * d + m) * dk;
            const cplx* k = st.proj[s].k.data() + (static_cast<size_t>(src) * d + m) * dk;
            cplx* gq = gproj[s].q.data() + (static_cast<size_t>(i) * d + m) * dk;
            cplx* gk = gproj[s].k.data() + (static_cast<size_t>(src) * d + m) * dk;
            for (int ch = 0; ch < dk; ++ch) {
              const cplx key = k[ch] + w[ch] * phi[m];
              gq[ch] += key * std::conj(g);
              const cplx gkey = q[ch] * g;
              gk[ch] += gkey;
              gw[ch] += (std::conj(gkey) * phi[m]).real();
            }
          }
        }
      const size_t woff = (static_cast<size_t>(s) * H + h) * dm * dk;
      project_backward(field.block(s), N, d, dm, params.wq.data() + woff, dk, gproj[s].q, gin.block(s), grads.wq.data() + woff);
      project_backward(field.block(s), N, d, dm, params.wk.data() + woff, dk, gproj[s].k, gin.block(s), grads.wk.data() + woff);
      project_backward(field.block(s), N, d, dm, params.wv.data() + woff, dk, gproj[s].v, gin.block(s), grads.wv.data() + woff);
    }
  }
  return gin;
}

// ---------------------------------------------------------------- feed-forward

namespace {

void check_ffn(const FourierField& f, const FFNParams& p) {
  const size_t dm = f.channels();
  check_size(p.w1.size(), dm * 2 * dm, "FFN W_1");
  check_size(p.w2.size(), 2 * dm * dm, "FFN W_2");
  check_size(p.bias.size(), static_cast<size_t>(f.num_irreps()) * 2 * dm, "FFN bias");
}

FourierField mul_channels(const FourierField& f, std::span<const cplx> w, int cout) {
  FourierField out = FourierField::zeros_like(f, f.cutoff(), cout);
  for (int s = 0; s < f.num_irreps(); ++s) {
    const auto y = project(f.block(s), f.num_sites(), f.irrep_dim(s), f.channels(), w.data(), cout);
    std::copy(y.begin(), y.end(), out.block(s).begin());
  }
  return out;
}

FourierField mul_channels_backward(const FourierField& f, std::span<const cplx> w, const FourierField& gy,
                                   std::span<cplx> gw) {
  FourierField gin = FourierField::zeros_like(f, f.cutoff(), f.channels());
  for (int s = 0; s < f.num_irreps(); ++s) {
    const std::vector<cplx> g(gy.block(s).begin(), gy.block(s).end());
    project_backward(f.block(s), f.num_sites(), f.irrep_dim(s), f.channels(), w.data(), gy.channels(), g, gin.block(s),
                     gw.data());
  }
  return gin;
}

}  // namespace

FourierField position_ffn(const FourierField& field, const FFNParams& params, double eps) {
  check_ffn(field, params);
  const int dm = field.channels();
  const auto hidden = harmonic_nonlinearity(mul_channels(field, params.w1, 2 * dm), params.bias, eps);
  return mul_channels(hidden, params.w2, dm);
}

FourierField position_ffn_backward(const FourierField& field, const FFNParams& params, const FourierField& grad_out,
                                   const FFNGrads& grads, double eps) {
  check_ffn(field, params);
  const int dm = field.channels();
  const auto pre = mul_channels(field, params.w1, 2 * dm);
  const auto hidden = harmonic_nonlinearity(pre, params.bias, eps);
  const auto ghidden = mul_channels_backward(hidden, params.w2, grad_out, grads.w2);
  const auto gpre = harmonic_nonlinearity_backward(pre, params.bias, ghidden, grads.bias, eps);
  return mul_channels_backward(field, params.w1, gpre, grads.w1);
}

// ---------------------------------------------------------------- encoder block

FourierField encoder_block(const FourierField& field, const EncoderParams& params, const AttentionConfig& config) {
  const auto z1 = field_add(
      steerable_self_attention(steerable_layer_norm(field, kNormEps, config.ln_sqrt), params.attn, config), field);
  return field_add(position_ffn(steerable_layer_norm(z1, kNormEps, config.ln_sqrt), params.ffn), z1);
}

FourierField encoder_block_backward(const FourierField& field, const EncoderParams& params,
                                    const AttentionConfig& config, const FourierField& grad_out,
                                    const EncoderGrads& grads) {
  const auto l1 = steerable_layer_norm(field, kNormEps, config.ln_sqrt);
  const auto z1 = field_add(steerable_self_attention(l1, params.attn, config), field);
  const auto l2 = steerable_layer_norm(z1, kNormEps, config.ln_sqrt);

  const auto gl2 = position_ffn_backward(l2, params.ffn, grad_out, grads.ffn);
  const auto gz1 = field_add(grad_out, steerable_layer_norm_backward(z1, gl2, kNormEps, config.ln_sqrt));
  const auto gl1 = steerable_self_attention_backward(l1, params.attn, config, gz1, grads.attn);
  return field_add(gz1, steerable_layer_norm_backward(field, gl1, kNormEps, config.ln_sqrt));
}

}  // namespace steerkit
