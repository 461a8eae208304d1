#include "steerkit/model.hpp"

#include "steerkit/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace steerkit {

AttentionConfig ModelConfig::attention() const {
  AttentionConfig a;
  a.dim = dim;
  a.cutoff = cutoff;
  a.d_model = d_model;
  a.heads = heads;
  a.layers = layers;
  a.mix1 = mix1;
  a.mix2 = mix2;
  a.key_from_query_site = key_from_query_site;
  a.paper_literal_softmax = paper_literal_softmax;
  a.ln_sqrt = ln_sqrt;
  return a;
}

int ModelConfig::encoder_extent() const {
  const int after_convs = input_size - (conv1_kernel - 1) - (conv2_kernel - 1);
  return pool > 0 ? after_convs / pool : after_convs;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& key, const std::string& what) { throw ConfigError(key, key + ": " + what); };
  if (dim != 2 && dim != 3) fail("dimension", "must be 2 or 3");
  if (cutoff < 0) fail("cutoff", "must be non-negative");
  if (radial < 1) fail("radial", "must be at least 1");
  if (angular <= 2 * cutoff) fail("angular", "must exceed 2 * cutoff = " + std::to_string(2 * cutoff));
  if (conv1_channels < 1) fail("architecture.conv1_channels", "must be positive");
  for (auto [key, k] : {std::pair{"architecture.conv1_kernel", conv1_kernel}, {"architecture.conv2_kernel", conv2_kernel}})
    if (k < 1 || k % 2 == 0) fail(key, "kernel sizes must be odd and positive");
  if (pool < 1) fail("architecture.pool", "must be positive");
  const int after_convs = input_size - (conv1_kernel - 1) - (conv2_kernel - 1);
  if (after_convs < 1)
    fail("architecture.input_size", "input of " + std::to_string(input_size) + " is consumed by the convolutions");
  if (after_convs % pool != 0)
    fail("architecture.pool", "pool stride " + std::to_string(pool) + " does not divide the conv output extent " +
                                  std::to_string(after_convs));
  if (encoder_extent() % 2 == 0)
    fail("architecture.pool", "the final convolution needs an odd extent, got " + std::to_string(encoder_extent()));
  if (d_model < 1) fail("d_model", "must be positive");
  if (heads < 1 || d_model % heads != 0) fail("heads", "must divide d_model = " + std::to_string(d_model));
  if (layers < 0) fail("layers", "must be non-negative");
  if (final_channels < 1) fail("architecture.final_channels", "must be positive");
  if (hidden < 1) fail("architecture.hidden", "must be positive");
  if (classes < 2) fail("dataset.classes", "need at least two classes");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("architecture.dropout", "must lie in [0, 1)");
}

ModelConfig desk_model_config() { return ModelConfig{}; }

ModelConfig micro_model_config() {
  ModelConfig c;
  c.input_size = 10;
  c.cutoff = 1;
  c.radial = 2;
  c.angular = 5;
  c.conv1_channels = 2;
  c.conv1_kernel = 3;
  c.conv2_kernel = 3;
  c.pool = 2;
  c.d_model = 4;
  c.heads = 2;
  c.final_channels = 3;
  c.hidden = 8;
  c.classes = 2;
  c.dropout = 0.0;
  return c;
}

namespace {

std::vector<int> weight_shape(const KernelBasis& b, int cin, int cout) {
  return {cout, cin, static_cast<int>(b.couplings.size()), b.radial};
}

int conv_fan_in(const KernelBasis& b, int cin) {
  const int out_irreps = b.dim == 2 ? 2 * b.out_cutoff + 1 : b.out_cutoff + 1;
  return std::max(1, cin * b.radial * static_cast<int>(b.couplings.size()) / out_irreps);
}

void fill_complex(std::span<cplx> w, double fan_in, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, std::sqrt(1.0 / (2.0 * fan_in)));
  for (auto& x : w) x = {n(rng), n(rng)};
}

void fill_real(std::span<double> w, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, stddev);
  for (auto& x : w) x = n(rng);
}

void check_finite(std::span<const FourierField> fields, const char* layer) {
  for (const auto& f : fields)
    for (const auto& x : f.data())
      if (!std::isfinite(x.real()) || !std::isfinite(x.imag()))
        throw NumericError(layer, std::string("non-finite activation after ") + layer);
}

void check_finite(const std::vector<std::vector<double>>& rows, const char* layer) {
  for (const auto& r : rows)
    for (double x : r)
      if (!std::isfinite(x)) throw NumericError(layer, std::string("non-finite activation after ") + layer);
}

// y = W x + b with W [out][in].
std::vector<double> dense(std::span<const double> w, std::span<const double> b, std::span<const double> x) {
  const size_t out = b.size(), in = x.size();
  std::vector<double> y(b.begin(), b.end());
  for (size_t o = 0; o < out; ++o)
    for (size_t i = 0; i < in; ++i) y[o] += w[o * in + i] * x[i];
  return y;
}

std::vector<double> dense_backward(std::span<const double> w, std::span<const double> x, std::span<const double> gy,
                                   std::span<double> gw, std::span<double> gb) {
  const size_t out = gy.size(), in = x.size();
  std::vector<double> gx(in, 0.0);
  for (size_t o = 0; o < out; ++o) {
    gb[o] += gy[o];
    for (size_t i = 0; i < in; ++i) {
      gw[o * in + i] += gy[o] * x[i];
      gx[i] += gy[o] * w[o * in + i];
    }
  }
  return gx;
}

constexpr double kBatchNorm1dEps = 1e-5;
constexpr double kMomentum = 0.1;

std::vector<std::vector<double>> softmax_rows(std::span<const std::vector<double>> logits) {
  std::vector<std::vector<double>> p;
  for (const auto& row : logits) {
    const double mx = *std::max_element(row.begin(), row.end());
    std::vector<double> e(row.size());
    double z = 0.0;
    for (size_t k = 0; k < row.size(); ++k) z += e[k] = std::exp(row[k] - mx);
    for (auto& v : e) v /= z;
    p.push_back(std::move(e));
  }
  return p;
}

}  // namespace

double cross_entropy(std::span<const std::vector<double>> logits, std::span<const int> labels) {
  if (logits.size() != labels.size()) throw std::invalid_argument("cross_entropy: logits and labels differ in count");
  if (logits.empty()) throw std::invalid_argument("cross_entropy: empty batch");
  double total = 0.0;
  for (size_t b = 0; b < logits.size(); ++b) {
    const auto& row = logits[b];
    if (labels[b] < 0 || static_cast<size_t>(labels[b]) >= row.size())
      throw std::invalid_argument("cross_entropy: label " + std::to_string(labels[b]) + " out of range");
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - mx);
    total += mx + std::log(z) - row[labels[b]];
  }
  return total / static_cast<double>(logits.size());
}

Model::Model(const ModelConfig& config) : config_(config) {
  config_.validate();
  const auto& c = config_;
  basis1_ = build_kernel_basis(c.dim, c.conv1_kernel, c.radial, c.angular, c.cutoff, true);
  basis2_ = build_kernel_basis(c.dim, c.conv2_kernel, c.radial, c.angular, c.cutoff);
  basis3_ = build_kernel_basis(c.dim, c.encoder_extent(), c.radial, c.angular, c.cutoff);
  const int slots = c.num_irreps();

  conv1_ = store_.add("conv1.weight", weight_shape(basis1_, 1, c.conv1_channels), true);
  conv2_ = store_.add("conv2.weight", weight_shape(basis2_, 2 * c.conv1_channels, c.d_model), true);
  bn_gain_ = store_.add("bn.log_gain", {slots, c.d_model}, false);
  const auto shapes = encoder_shapes(c.attention());
  for (int l = 0; l < c.layers; ++l) {
    const std::string p = "encoder" + std::to_string(l) + ".";
    auto add_c = [&](const char* n, size_t size) { return store_.add(p + n, {static_cast<int>(size)}, true); };
    EncoderSlots e{};
    e.wq = add_c("wq", shapes.wq);
    e.wk = add_c("wk", shapes.wk);
    e.wv = add_c("wv", shapes.wv);
    e.wo = add_c("wo", shapes.wo);
    e.mix1 = add_c("mix1", shapes.mix1);
    e.mix2 = add_c("mix2", shapes.mix2);
    e.pe = store_.add(p + "pe", {static_cast<int>(shapes.pe)}, false);
    e.w1 = add_c("ffn.w1", shapes.w1);
    e.w2 = add_c("ffn.w2", shapes.w2);
    e.bias = store_.add(p + "ffn.bias", {static_cast<int>(shapes.bias)}, false);
    encoders_.push_back(e);
  }
  final_ = store_.add("final.weight", weight_shape(basis3_, c.d_model, c.final_channels), true);
  dense1_w_ = store_.add("dense1.weight", {c.hidden, c.flat_features()}, false);
  dense1_b_ = store_.add("dense1.bias", {c.hidden}, false);
  bn1d_gamma_ = store_.add("bn1d.gamma", {c.hidden}, false);
  bn1d_beta_ = store_.add("bn1d.beta", {c.hidden}, false);
  dense2_w_ = store_.add("dense2.weight", {c.classes, c.hidden}, false);
  dense2_b_ = store_.add("dense2.bias", {c.classes}, false);

  bn_running_ = store_.add_buffer("bn.running", {slots, c.d_model});
  bn1d_mean_ = store_.add_buffer("bn1d.running_mean", {c.hidden});
  bn1d_var_ = store_.add_buffer("bn1d.running_var", {c.hidden});
  std::fill(store_.buffer(bn_running_).begin(), store_.buffer(bn_running_).end(), 1.0);
  std::fill(store_.buffer(bn1d_var_).begin(), store_.buffer(bn1d_var_).end(), 1.0);
}

void Model::init(std::mt19937_64& rng) {
  const auto& c = config_;
  std::fill(store_.params.begin(), store_.params.end(), 0.0);
  fill_complex(store_.cvalues(conv1_), conv_fan_in(basis1_, 1), rng);
  fill_complex(store_.cvalues(conv2_), conv_fan_in(basis2_, 2 * c.conv1_channels), rng);
  const auto ac = c.attention();
  for (const auto& e : encoders_) {
    fill_complex(store_.cvalues(e.wq), c.d_model, rng);
    fill_complex(store_.cvalues(e.wk), c.d_model, rng);
    fill_complex(store_.cvalues(e.wv), c.d_model, rng);
    fill_complex(store_.cvalues(e.wo), c.d_model, rng);
    for (auto [slot, mode] : {std::pair{e.mix1, c.mix1}, {e.mix2, c.mix2}}) {
      auto m = store_.cvalues(slot);
      const int n = ac.num_irreps();
      if (mode == MixingMode::SharedScalar)
        std::fill(m.begin(), m.end(), cplx(1.0 / n, 0.0));
      else if (mode == MixingMode::FullMatrix)
        for (int h = 0; h < c.heads; ++h)
          for (int r = 0; r < n; ++r) m[(static_cast<size_t>(h) * n + r) * n + r] = 1.0;
    }
    fill_real(store_.values(e.pe), 0.1, rng);
    fill_complex(store_.cvalues(e.w1), c.d_model, rng);
    fill_complex(store_.cvalues(e.w2), 2 * c.d_model, rng);
  }
  fill_complex(store_.cvalues(final_), conv_fan_in(basis3_, c.d_model), rng);
  fill_real(store_.values(dense1_w_), std::sqrt(2.0 / c.flat_features()), rng);
  std::fill(store_.values(bn1d_gamma_).begin(), store_.values(bn1d_gamma_).end(), 1.0);
  fill_real(store_.values(dense2_w_), std::sqrt(1.0 / c.hidden), rng);
}

FourierField Model::lift(std::span<const double> image) const {
  const int n = config_.input_size;
  return lift_scalar_image(image, config_.dim, {n, n, config_.dim == 3 ? n : 1}, config_.cutoff, 1);
}

EncoderParams Model::encoder_params(int layer) const {
  const auto& e = encoders_.at(layer);
  const auto& s = store_;
  return {AttentionParams{s.cvalues(e.wq), s.cvalues(e.wk), s.cvalues(e.wv), s.cvalues(e.wo), s.cvalues(e.mix1),
                          s.cvalues(e.mix2), s.values(e.pe)},
          FFNParams{s.cvalues(e.w1), s.cvalues(e.w2), s.values(e.bias)}};
}

AttentionParams Model::attention_params(int layer) const { return encoder_params(layer).attn; }

EncoderGrads Model::encoder_grads(int layer) {
  const auto& e = encoders_.at(layer);
  auto& s = store_;
  return {AttentionGrads{s.cgrad(e.wq), s.cgrad(e.wk), s.cgrad(e.wv), s.cgrad(e.wo), s.cgrad(e.mix1), s.cgrad(e.mix2),
                         s.grad(e.pe)},
          FFNGrads{s.cgrad(e.w1), s.cgrad(e.w2), s.grad(e.bias)}};
}

struct Model::Cache {
  std::vector<FourierField> a1, a2, a3;  // conv1, CG, conv2
  BatchNormOutput bn;
  std::vector<double> gain;
  std::vector<std::vector<FourierField>> enc;  // enc[l] enters encoder layer l; enc[layers] leaves
  std::vector<FourierField> a6;                // final conv
  std::vector<std::vector<double>> flat, h1, xhat, h3, mask, h4, logits;
  std::vector<double> inv_std;  // batch norm 1d
};

Model::Cache Model::run(std::span<const FourierField> inputs, const RunMode& mode) {
  const auto& c = config_;
  if (inputs.empty()) throw std::invalid_argument("forward: empty batch");
  const int n = c.input_size;
  for (const auto& f : inputs)
    if (!f.is_grid() || f.dim() != c.dim || f.cutoff() != c.cutoff || f.channels() != 1 || f.grid().extent[0] != n ||
        f.grid().extent[1] != n || (c.dim == 3 && f.grid().extent[2] != n))
      throw std::invalid_argument("forward: input field does not match the model input (" + std::to_string(n) +
                                  "^" + std::to_string(c.dim) + " grid, cutoff " + std::to_string(c.cutoff) +
                                  ", one channel)");
  const bool train = mode.train;
  const size_t B = inputs.size();
  Cache k;
  for (const auto& f : inputs) k.a1.push_back(conv_type1(f, basis1_, store_.cvalues(conv1_), c.conv1_channels));
  check_finite(k.a1, "conv1");
  for (const auto& f : k.a1) k.a2.push_back(cg_nonlinearity(f));
  check_finite(k.a2, "cg_nonlinearity");
  for (const auto& f : k.a2) k.a3.push_back(conv_type2(f, basis2_, store_.cvalues(conv2_), c.d_model));
  check_finite(k.a3, "conv2");

  const auto lg = store_.values(bn_gain_);
  k.gain.resize(lg.size());
  std::transform(lg.begin(), lg.end(), k.gain.begin(), [](double v) { return std::exp(v); });
  std::vector<double> scratch_running(store_.buffer(bn_running_).begin(), store_.buffer(bn_running_).end());
  std::span<double> running = train && !mode.update_running ? std::span<double>(scratch_running) : store_.buffer(bn_running_);
  k.bn = steerable_batch_norm(k.a3, k.gain, running, train, kMomentum);
  check_finite(k.bn.out, "batch_norm");

  k.enc.emplace_back();
  for (const auto& f : k.bn.out) k.enc[0].push_back(c.pool > 1 ? avg_pool(f, c.pool) : f);
  const auto ac = c.attention();
  for (int l = 0; l < c.layers; ++l) {
    const auto p = encoder_params(l);
    std::vector<FourierField> next;
    for (const auto& f : k.enc[l]) next.push_back(encoder_block(f, p, ac));
    check_finite(next, "encoder");
    k.enc.push_back(std::move(next));
  }
  for (const auto& f : k.enc.back()) k.a6.push_back(conv_type2(f, basis3_, store_.cvalues(final_), c.final_channels));
  check_finite(k.a6, "final_conv");
  for (const auto& f : k.a6) k.flat.push_back(norm_flatten(f));
  for (const auto& v : k.flat)
    k.h1.push_back(dense(store_.values(dense1_w_), store_.values(dense1_b_), v));
  check_finite(k.h1, "dense1");

  const int H = c.hidden;
  std::vector<double> mean(H, 0.0), var(H, 0.0);
  auto rmean = store_.buffer(bn1d_mean_);
  auto rvar = store_.buffer(bn1d_var_);
  if (train) {
    for (const auto& h : k.h1)
      for (int j = 0; j < H; ++j) mean[j] += h[j] / static_cast<double>(B);
    for (const auto& h : k.h1)
      for (int j = 0; j < H; ++j) var[j] += (h[j] - mean[j]) * (h[j] - mean[j]) / static_cast<double>(B);
    if (mode.update_running)
      for (int j = 0; j < H; ++j) {
        rmean[j] = (1.0 - kMomentum) * rmean[j] + kMomentum * mean[j];
        rvar[j] = (1.0 - kMomentum) * rvar[j] + kMomentum * var[j];
      }
  } else {
    std::copy(rmean.begin(), rmean.end(), mean.begin());
    std::copy(rvar.begin(), rvar.end(), var.begin());
  }
  k.inv_std.resize(H);
  for (int j = 0; j < H; ++j) k.inv_std[j] = 1.0 / std::sqrt(var[j] + kBatchNorm1dEps);

  const auto gamma = store_.values(bn1d_gamma_);
  const auto beta = store_.values(bn1d_beta_);
  const bool drop = train && mode.dropout && c.dropout > 0.0;
  std::mt19937_64 drng(mode.dropout_seed);
  std::bernoulli_distribution keep(1.0 - c.dropout);
  for (size_t b = 0; b < B; ++b) {
    std::vector<double> xh(H), h3(H), m(H, 1.0), h4(H);
    for (int j = 0; j < H; ++j) {
      xh[j] = (k.h1[b][j] - mean[j]) * k.inv_std[j];
      h3[j] = std::max(0.0, gamma[j] * xh[j] + beta[j]);
      if (drop) m[j] = keep(drng) ? 1.0 / (1.0 - c.dropout) : 0.0;
      h4[j] = h3[j] * m[j];
    }
    k.logits.push_back(dense(store_.values(dense2_w_), store_.values(dense2_b_), h4));
    k.xhat.push_back(std::move(xh));
    k.h3.push_back(std::move(h3));
    k.mask.push_back(std::move(m));
    k.h4.push_back(std::move(h4));
  }
  check_finite(k.logits, "dense2");
  return k;
}

std::vector<std::vector<double>> Model::forward(std::span<const FourierField> inputs, const RunMode& mode) {
  return run(inputs, mode).logits;
}

double Model::loss(std::span<const FourierField> inputs, std::span<const int> labels, const RunMode& mode) {
  const double l = cross_entropy(run(inputs, mode).logits, labels);
  if (!std::isfinite(l)) throw NumericError("loss", "non-finite loss");
  return l;
}

double Model::loss_and_backward(std::span<const FourierField> inputs, std::span<const int> labels,
                                const RunMode& mode, std::vector<std::vector<double>>* logits) {
  if (inputs.size() != labels.size()) throw std::invalid_argument("loss_and_backward: inputs and labels differ in count");
  const auto& c = config_;
  auto k = run(inputs, mode);
  const double loss = cross_entropy(k.logits, labels);
  if (!std::isfinite(loss)) throw NumericError("loss", "non-finite loss");
  store_.zero_grad();
  const size_t B = inputs.size();
  const int H = c.hidden;
  const auto probs = softmax_rows(k.logits);

  // dense2, dropout, ReLU
  std::vector<std::vector<double>> g_y(B);  // gradient at the batch-norm 1d output
  const auto gamma = store_.values(bn1d_gamma_);
  const auto beta = store_.values(bn1d_beta_);
  auto g_gamma = store_.grad(bn1d_gamma_);
  auto g_beta = store_.grad(bn1d_beta_);
  for (size_t b = 0; b < B; ++b) {
    std::vector<double> gl = probs[b];
    gl[labels[b]] -= 1.0;
    for (auto& v : gl) v /= static_cast<double>(B);
    auto gh4 = dense_backward(store_.values(dense2_w_), k.h4[b], gl, store_.grad(dense2_w_), store_.grad(dense2_b_));
    g_y[b].resize(H);
    for (int j = 0; j < H; ++j) {
      const double pre = gamma[j] * k.xhat[b][j] + beta[j];
      g_y[b][j] = pre > 0.0 ? gh4[j] * k.mask[b][j] : 0.0;
      g_gamma[j] += g_y[b][j] * k.xhat[b][j];
      g_beta[j] += g_y[b][j];
    }
  }
  // batch norm 1d
  std::vector<std::vector<double>> g_h1(B, std::vector<double>(H));
  for (int j = 0; j < H; ++j) {
    if (mode.train) {
      double s1 = 0.0, s2 = 0.0;
      for (size_t b = 0; b < B; ++b) {
        const double gx = g_y[b][j] * gamma[j];
        s1 += gx;
        s2 += gx * k.xhat[b][j];
      }
      for (size_t b = 0; b < B; ++b) {
        const double gx = g_y[b][j] * gamma[j];
        g_h1[b][j] = k.inv_std[j] * (gx - s1 / B - k.xhat[b][j] * s2 / B);
      }
    } else {
      for (size_t b = 0; b < B; ++b) g_h1[b][j] = g_y[b][j] * gamma[j] * k.inv_std[j];
    }
  }
  // dense1, norm_flatten, final conv
  std::vector<FourierField> g_enc(B);
  for (size_t b = 0; b < B; ++b) {
    const auto g_flat =
        dense_backward(store_.values(dense1_w_), k.flat[b], g_h1[b], store_.grad(dense1_w_), store_.grad(dense1_b_));
    const auto g_a6 = norm_flatten_backward(k.a6[b], g_flat);
    g_enc[b] = conv_backward(k.enc.back()[b], basis3_, store_.cvalues(final_), c.final_channels, g_a6,
                             store_.cgrad(final_));
  }
  // encoder blocks
  const auto ac = c.attention();
  for (int l = c.layers - 1; l >= 0; --l) {
    const auto p = encoder_params(l);
    const auto g = encoder_grads(l);
    for (size_t b = 0; b < B; ++b) g_enc[b] = encoder_block_backward(k.enc[l][b], p, ac, g_enc[b], g);
  }
  // pool, batch norm
  std::vector<FourierField> g_bn(B);
  for (size_t b = 0; b < B; ++b) g_bn[b] = c.pool > 1 ? avg_pool_backward(k.bn.out[b], c.pool, g_enc[b]) : g_enc[b];
  std::vector<double> g_gain(k.gain.size(), 0.0);
  const auto g_a3 = steerable_batch_norm_backward(k.a3, k.gain, k.bn.stats, mode.train, g_bn, g_gain);
  auto g_lg = store_.grad(bn_gain_);
  for (size_t i = 0; i < g_gain.size(); ++i) g_lg[i] += g_gain[i] * k.gain[i];
  // conv2, CG, conv1
  for (size_t b = 0; b < B; ++b) {
    const auto g_a2 = conv_backward(k.a2[b], basis2_, store_.cvalues(conv2_), c.d_model, g_a3[b], store_.cgrad(conv2_));
    const auto g_a1 = cg_nonlinearity_backward(k.a1[b], g_a2);
    conv_backward(inputs[b], basis1_, store_.cvalues(conv1_), c.conv1_channels, g_a1, store_.cgrad(conv1_), true);
  }
  for (double g : store_.grads)
    if (!std::isfinite(g)) throw NumericError("backward", "non-finite gradient");
  if (logits) *logits = std::move(k.logits);
  return loss;
}

FourierField Model::encoder_input(const FourierField& input, int layer) const {
  if (layer < 0 || layer >= config_.layers)
    throw std::invalid_argument("encoder layer " + std::to_string(layer) + " out of range (model has " +
                                std::to_string(config_.layers) + ")");
  // Eval mode only reads the running statistics, so a copy of the model is not needed.
  const auto& c = config_;
  auto a = conv_type2(cg_nonlinearity(conv_type1(input, basis1_, store_.cvalues(conv1_), c.conv1_channels)), basis2_,
                      store_.cvalues(conv2_), c.d_model);
  std::vector<double> gain(store_.values(bn_gain_).size());
  std::transform(store_.values(bn_gain_).begin(), store_.values(bn_gain_).end(), gain.begin(),
                 [](double v) { return std::exp(v); });
  std::vector<double> running(store_.buffer(bn_running_).begin(), store_.buffer(bn_running_).end());
  auto bn = steerable_batch_norm(std::span<const FourierField>(&a, 1), gain, running, false);
  FourierField z = c.pool > 1 ? avg_pool(bn.out[0], c.pool) : bn.out[0];
  const auto ac = c.attention();
  for (int l = 0; l < layer; ++l) z = encoder_block(z, encoder_params(l), ac);
  return z;
}

}  // namespace steerkit
