#include "steerkit/audit.hpp"

#include "steerkit/attention.hpp"
#include "steerkit/conv.hpp"
#include "steerkit/errors.hpp"
#include "steerkit/nonlinear.hpp"
#include "steerkit/train.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <memory>
#include <numeric>
#include <thread>
#include <tuple>
#include <utility>

namespace steerkit {

namespace {

using nlohmann::json;

constexpr double kRelEps = 1e-12;

// Registry of audit bindings. The static_asserts below keep it in step with
// the layer kinds exported by the layer headers.
constexpr std::array<std::string_view, 14> kAuditBindings{
    "positional_encoding", "attention_scores",  "self_attention", "position_ffn", "encoder_block",
    "layer_norm",          "harmonic_nonlinearity", "cg_nonlinearity", "norm_flatten", "conv_type1",
    "conv_type2",          "avg_pool",          "batch_norm",     "model"};

template <size_t N>
constexpr bool all_bound(const std::array<std::string_view, N>& kinds) {
  for (auto k : kinds)
    if (std::find(kAuditBindings.begin(), kAuditBindings.end(), k) == kAuditBindings.end()) return false;
  return true;
}
static_assert(all_bound(kConvLayers), "a steerable-conv layer has no audit binding");
static_assert(all_bound(kNonlinearLayers), "a nonlinear layer has no audit binding");
static_assert(all_bound(kAttentionLayers), "an attention layer has no audit binding");

std::uint64_t name_hash(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) h = (h ^ c) * 1099511628211ull;
  return h;
}

template <typename Fn>
void parallel_for(int count, int threads, Fn fn) {
  if (threads <= 0) threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  threads = std::min(threads, count);
  std::vector<std::exception_ptr> errors(count);
  auto work = [&](int t) {
    for (int i = t; i < count; i += threads) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (threads <= 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(work, t);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

void fill_normal(std::span<cplx> values, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  for (auto& v : values) v = {n(rng), n(rng)};
}
void fill_normal(std::span<double> values, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  for (auto& v : values) v = n(rng);
}

std::array<int, 3> cube(int dim, int n) { return {n, n, dim == 3 ? n : 1}; }

FourierField random_points(int dim, int cutoff, int channels, int sites, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::vector<Vec3> pts(sites, Vec3{0.0, 0.0, 0.0});
  for (auto& p : pts)
    for (int a = 0; a < dim; ++a) p[a] = u(rng);
  FourierField f(dim, cutoff, channels, std::move(pts));
  fill_normal(f.data(), rng);
  return f;
}

FourierField random_grid(int dim, int cutoff, int channels, int extent, std::mt19937_64& rng) {
  FourierField f(dim, cutoff, channels, GridLayout::centered(dim, cube(dim, extent)));
  fill_normal(f.data(), rng);
  return f;
}

// New index of every site under g, read off an index-valued field.
std::vector<int> site_permutation(const FourierField& like, const GroupElement& g) {
  FourierField idx = like.is_grid() ? FourierField(like.dim(), 0, 1, like.grid())
                                    : FourierField(like.dim(), 0, 1, like.points());
  for (int s = 0; s < idx.num_sites(); ++s) idx.at(0, s, 0, 0) = static_cast<double>(s);
  const auto moved = like.is_grid() ? act_group(idx, g, Interpolation::ExactPermutation) : idx;
  std::vector<int> perm(idx.num_sites());
  for (int s = 0; s < moved.num_sites(); ++s) perm[static_cast<int>(std::lround(moved.at(0, s, 0, 0).real()))] = s;
  return perm;
}

// Channels of a pair-valued output are [block][j] with j a site index; the
// transformed output labels j by the moved site, so map it back.
FourierField unpermute_pair_channels(const FourierField& out, const std::vector<int>& perm) {
  const int n = static_cast<int>(perm.size());
  FourierField r = out;
  const int blocks = out.channels() / n;
  for (int slot = 0; slot < out.num_irreps(); ++slot)
    for (int s = 0; s < out.num_sites(); ++s)
      for (int m = 0; m < out.irrep_dim(slot); ++m)
        for (int b = 0; b < blocks; ++b)
          for (int j = 0; j < n; ++j) r.at(slot, s, m, b * n + j) = out.at(slot, s, m, b * n + perm[j]);
  return r;
}

json element_json(const GroupElement& g) {
  json j;
  j["dim"] = g.dim;
  if (g.dim == 2) {
    j["angle"] = g.rotation.angle();
  } else {
    const auto e = g.rotation.euler();
    j["euler_zyz"] = {e[0], e[1], e[2]};
  }
  j["rotation"] = g.rotation.matrix();
  j["translation"] = {g.translation[0], g.translation[1], g.translation[2]};
  return j;
}

std::string irrep_label(int dim, int cutoff, int slot) {
  return dim == 2 ? "k=" + std::to_string(slot - cutoff) : "l=" + std::to_string(slot);
}

// One layer under test: its input shape and, per sample, a map with freshly
// drawn parameters.
struct Binding {
  std::string name;
  bool grid_only = false;
  bool pair_channels = false;  // output channels are [block][site]
  bool serial = false;         // the map is not safe to call concurrently
  int cutoff = 0, channels = 1;
  int extent = 5;              // grid extent when a grid input is needed
  double tolerance = 0.0;
  std::function<LayerFn(std::mt19937_64&)> make;
};

struct SampleResult {
  std::vector<double> errors;  // per output slot
  GroupElement element;
};

SampleResult run_sample(const Binding& b, int dim, bool grid, int sample, const AuditOptions& o,
                        const std::vector<Rotation>& lattice) {
  auto rng = derived_rng(o.seed, {name_hash(b.name), static_cast<std::uint64_t>(sample)});
  const LayerFn layer = b.make(rng);
  const FourierField f = grid ? random_grid(dim, b.cutoff, b.channels, b.extent, rng)
                              : random_points(dim, b.cutoff, b.channels, o.sites, rng);
  SampleResult r;
  r.element = grid ? GroupElement::pure_rotation(lattice[sample % lattice.size()]) : random_se(dim, rng, 1.0);
  const auto act = [&](const FourierField& x) { return act_group(x, r.element, Interpolation::ExactPermutation); };

  const FourierField out = layer(f);
  const FourierField expected = act(out);
  FourierField moved = layer(act(f));
  if (b.pair_channels) moved = unpermute_pair_channels(moved, site_permutation(f, r.element));
  if (!moved.same_shape(expected) || !moved.same_sites(expected, 1e-9))
    throw std::logic_error("audit of " + b.name + ": transformed output lives on different sites");
  const double denom = field_norm(out) + kRelEps;
  for (int slot = 0; slot < out.num_irreps(); ++slot) {
    const auto x = std::as_const(moved).block(slot), y = expected.block(slot);
    double acc = 0.0;
    for (size_t i = 0; i < x.size(); ++i) acc += std::norm(x[i] - y[i]);
    r.errors.push_back(std::sqrt(acc) / denom);
  }
  return r;
}

AuditSummary run_binding(const Binding& b, int dim, const AuditOptions& o, std::vector<AuditEntry>* entries) {
  const bool grid = b.grid_only || o.mode == AuditMode::GridExact;
  const auto lattice = lattice_rotations(dim);
  const int count = grid ? std::max(o.samples, static_cast<int>(lattice.size())) : o.samples;
  std::vector<SampleResult> results(count);
  parallel_for(count, b.serial ? 1 : o.threads,
               [&](int s) { results[s] = run_sample(b, dim, grid, s, o, lattice); });

  AuditSummary sum;
  sum.name = b.name;
  sum.mode = to_string(grid ? AuditMode::GridExact : AuditMode::PointSet);
  sum.tolerance = b.tolerance;
  double total = 0.0;
  int worst_sample = -1, worst_slot = 0;
  for (int s = 0; s < count; ++s)
    for (size_t slot = 0; slot < results[s].errors.size(); ++slot) {
      const double e = results[s].errors[slot];
      if (entries) entries->push_back({b.name, static_cast<int>(slot), s, e});
      total += e;
      ++sum.count;
      if (worst_sample < 0 || e > sum.max_error || std::isnan(e)) {
        sum.max_error = e;
        worst_sample = s;
        worst_slot = static_cast<int>(slot);
      }
    }
  sum.mean_error = sum.count ? total / sum.count : 0.0;
  sum.pass = sum.max_error <= sum.tolerance;
  if (worst_sample >= 0) {
    json w;
    w["sample"] = worst_sample;
    w["slot"] = worst_slot;
    w["irrep"] = irrep_label(dim, b.pair_channels || b.name == "model" || b.name == "norm_flatten" ? 0 : b.cutoff,
                             worst_slot);
    w["error"] = sum.max_error;
    w["element"] = element_json(results[worst_sample].element);
    sum.worst = w.dump();
  }
  return sum;
}

// Concatenates per-head outputs along channels.
FourierField concat_channels(const std::vector<FourierField>& parts) {
  int total = 0;
  for (const auto& p : parts) total += p.channels();
  FourierField out = FourierField::zeros_like(parts.front(), parts.front().cutoff(), total);
  int c0 = 0;
  for (const auto& p : parts) {
    for (int slot = 0; slot < p.num_irreps(); ++slot)
      for (int s = 0; s < p.num_sites(); ++s)
        for (int m = 0; m < p.irrep_dim(slot); ++m)
          for (int c = 0; c < p.channels(); ++c) out.at(slot, s, m, c0 + c) = p.at(slot, s, m, c);
    c0 += p.channels();
  }
  return out;
}

FourierField channel_range(const FourierField& f, int c0, int n) {
  FourierField out = FourierField::zeros_like(f, f.cutoff(), n);
  for (int slot = 0; slot < f.num_irreps(); ++slot)
    for (int s = 0; s < f.num_sites(); ++s)
      for (int m = 0; m < f.irrep_dim(slot); ++m)
        for (int c = 0; c < n; ++c) out.at(slot, s, m, c) = f.at(slot, s, m, c0 + c);
  return out;
}

// Lifted-image inputs: the real part of the trivial irrep, everything else zero.
FourierField trivial_part(const FourierField& f) {
  FourierField in = FourierField::zeros_like(f, f.cutoff(), f.channels());
  const int t = f.trivial_slot();
  for (int s = 0; s < f.num_sites(); ++s)
    for (int c = 0; c < f.channels(); ++c) in.at(t, s, 0, c) = f.at(t, s, 0, c).real();
  return in;
}

// Real values laid out [site][channel] as a trivial-irrep field on f's sites.
FourierField scalar_field(const FourierField& like, int channels, const std::vector<double>& values) {
  FourierField out = FourierField::zeros_like(like, 0, channels);
  for (size_t i = 0; i < values.size(); ++i) out.data()[i] = values[i];
  return out;
}

struct EncoderDraw {
  std::vector<cplx> wq, wk, wv, wo, mix1, mix2, w1, w2;
  std::vector<double> pe, bias;
  EncoderParams params() const {
    return {AttentionParams{wq, wk, wv, wo, mix1, mix2, pe}, FFNParams{w1, w2, bias}};
  }
};

std::shared_ptr<EncoderDraw> draw_encoder(const AttentionConfig& ac, std::mt19937_64& rng) {
  const auto s = encoder_shapes(ac);
  auto d = std::make_shared<EncoderDraw>();
  const double ws = 1.0 / std::sqrt(2.0 * ac.d_model);
  for (auto [v, n, scale] : {std::tuple{&d->wq, s.wq, ws}, {&d->wk, s.wk, ws}, {&d->wv, s.wv, ws}, {&d->wo, s.wo, ws},
                             {&d->mix1, s.mix1, 0.5}, {&d->mix2, s.mix2, 0.5}, {&d->w1, s.w1, ws},
                             {&d->w2, s.w2, ws}}) {
    v->resize(n);
    fill_normal(*v, rng, scale);
  }
  d->pe.resize(s.pe);
  fill_normal(d->pe, rng, 0.5);
  d->bias.resize(s.bias);
  fill_normal(d->bias, rng, 0.3);
  return d;
}

std::vector<Binding> make_bindings(const ExperimentConfig& config, const AuditOptions& o) {
  const ModelConfig& mc = config.model;
  const int dim = mc.dim, K = mc.cutoff;
  const AttentionConfig ac = mc.attention();
  std::vector<Binding> out;
  auto add = [&](Binding b) {
    if (b.tolerance == 0.0) b.tolerance = o.tolerance;
    out.push_back(std::move(b));
  };

  add({.name = "positional_encoding", .cutoff = K, .channels = 1, .make = [](std::mt19937_64& rng) -> LayerFn {
         // Sum over j of P(x_i - x_j), a field steering like the encoding itself.
         const double w = std::normal_distribution<double>(0.0, 1.0)(rng);
         return [w](const FourierField& f) {
           FourierField out = FourierField::zeros_like(f, f.cutoff(), 1);
           for (int slot = 0; slot < f.num_irreps(); ++slot)
             for (int i = 0; i < f.num_sites(); ++i)
               for (int j = 0; j < f.num_sites(); ++j) {
                 const auto p = positional_encoding(site_displacement(f, i, j), f.irrep(slot), w);
                 for (int m = 0; m < f.irrep_dim(slot); ++m) out.at(slot, i, m, 0) += p[m];
               }
           return out;
         };
       }});
  add({.name = "attention_scores", .pair_channels = true, .cutoff = K, .channels = mc.d_model,
       .make = [ac](std::mt19937_64& rng) -> LayerFn {
         auto d = draw_encoder(ac, rng);
         return [d, ac](const FourierField& f) {
           const int n = f.num_sites(), ni = f.num_irreps();
           std::vector<FourierField> heads;
           for (int h = 0; h < ac.heads; ++h) {
             const auto sc = attention_scores(f, d->params().attn, ac, h);
             std::vector<double> v(static_cast<size_t>(n) * ni * n);
             for (int slot = 0; slot < ni; ++slot)
               for (int i = 0; i < n; ++i)
                 for (int j = 0; j < n; ++j) v[(static_cast<size_t>(i) * ni + slot) * n + j] = sc.a(slot, i, j);
             heads.push_back(scalar_field(f, ni * n, v));
           }
           return concat_channels(heads);
         };
       }});
  add({.name = "self_attention", .cutoff = K, .channels = mc.d_model, .make = [ac](std::mt19937_64& rng) -> LayerFn {
         auto d = draw_encoder(ac, rng);
         return [d, ac](const FourierField& f) { return steerable_self_attention(f, d->params().attn, ac); };
       }});
  add({.name = "position_ffn", .cutoff = K, .channels = mc.d_model, .make = [ac](std::mt19937_64& rng) -> LayerFn {
         auto d = draw_encoder(ac, rng);
         return [d](const FourierField& f) { return position_ffn(f, d->params().ffn); };
       }});
  add({.name = "encoder_block", .cutoff = K, .channels = mc.d_model, .make = [ac](std::mt19937_64& rng) -> LayerFn {
         auto d = draw_encoder(ac, rng);
         return [d, ac](const FourierField& f) { return encoder_block(f, d->params(), ac); };
       }});
  add({.name = "layer_norm", .cutoff = K, .channels = 4, .make = [ac](std::mt19937_64&) -> LayerFn {
         return [ac](const FourierField& f) { return steerable_layer_norm(f, kNormEps, ac.ln_sqrt); };
       }});
  add({.name = "harmonic_nonlinearity", .cutoff = K, .channels = 4, .make = [](std::mt19937_64& rng) -> LayerFn {
         return [seed = rng()](const FourierField& f) {
           std::vector<double> b(static_cast<size_t>(f.num_irreps()) * f.channels());
           std::mt19937_64 r(seed);
           fill_normal(b, r, 0.5);
           return harmonic_nonlinearity(f, b);
         };
       }});
  add({.name = "cg_nonlinearity", .cutoff = K, .channels = 4, .make = [](std::mt19937_64&) -> LayerFn {
         return [](const FourierField& f) { return cg_nonlinearity(f); };
       }});
  add({.name = "norm_flatten", .cutoff = K, .channels = 4, .make = [](std::mt19937_64&) -> LayerFn {
         // Norm flatten reads one site; audit it on every site separately.
         return [](const FourierField& f) {
           std::vector<double> v;
           for (int s = 0; s < f.num_sites(); ++s) {
             FourierField one(f.dim(), f.cutoff(), f.channels(), std::vector<Vec3>{f.site_position(s)});
             for (int slot = 0; slot < f.num_irreps(); ++slot)
               for (int m = 0; m < f.irrep_dim(slot); ++m)
                 for (int c = 0; c < f.channels(); ++c) one.at(slot, 0, m, c) = f.at(slot, s, m, c);
             const auto n = norm_flatten(one);
             v.insert(v.end(), n.begin(), n.end());
           }
           return scalar_field(f, f.num_irreps() * f.channels(), v);
         };
       }});

  // Grid layers use the model's kernel bases.
  auto b1 = std::make_shared<KernelBasis>(build_kernel_basis(dim, mc.conv1_kernel, mc.radial, mc.angular, K, true));
  auto b2 = std::make_shared<KernelBasis>(build_kernel_basis(dim, mc.conv2_kernel, mc.radial, mc.angular, K));
  add({.name = "conv_type1", .grid_only = true, .cutoff = K, .channels = 1, .extent = mc.conv1_kernel + 3,
       .make = [b1](std::mt19937_64& rng) -> LayerFn {
         auto w = std::make_shared<std::vector<cplx>>(b1->weight_count(1, 3));
         fill_normal(*w, rng);
         return [b1, w](const FourierField& f) { return conv_type1(trivial_part(f), *b1, *w, 3); };
       }});
  add({.name = "conv_type2", .grid_only = true, .cutoff = K, .channels = 3, .extent = mc.conv2_kernel + 3,
       .make = [b2](std::mt19937_64& rng) -> LayerFn {
         auto w = std::make_shared<std::vector<cplx>>(b2->weight_count(3, 2));
         fill_normal(*w, rng);
         return [b2, w](const FourierField& f) { return conv_type2(f, *b2, *w, 2); };
       }});
  const int pool = std::max(2, mc.pool);
  add({.name = "avg_pool", .grid_only = true, .cutoff = K, .channels = 2, .extent = 3 * pool,
       .make = [pool](std::mt19937_64&) -> LayerFn {
         return [pool](const FourierField& f) { return avg_pool(f, pool); };
       }});
  // A batch of three fields travels as one field with three channel groups.
  constexpr int kBatch = 3, kBnChannels = 2;
  add({.name = "batch_norm", .grid_only = true, .cutoff = K, .channels = kBatch * kBnChannels, .extent = 4,
       .make = [](std::mt19937_64& rng) -> LayerFn {
         return [seed = rng()](const FourierField& f) {
           std::vector<FourierField> batch;
           for (int b = 0; b < kBatch; ++b) batch.push_back(channel_range(f, b * kBnChannels, kBnChannels));
           std::vector<double> gain(static_cast<size_t>(f.num_irreps()) * kBnChannels);
           std::mt19937_64 r(seed);
           std::uniform_real_distribution<double> u(0.5, 2.0);
           for (auto& g : gain) g = u(r);
           return concat_channels(steerable_batch_norm(batch, gain, {}, true).out);
         };
       }});
  add({.name = "model", .grid_only = true, .serial = true, .cutoff = K, .channels = 1, .extent = mc.input_size,
       .tolerance = o.model_tolerance, .make = [mc](std::mt19937_64& rng) -> LayerFn {
         auto model = std::make_shared<Model>(mc);
         model->init(rng);
         return [model](const FourierField& f) {
           const FourierField in = trivial_part(f);
           const auto logits = model->forward(std::span<const FourierField>(&in, 1), {})[0];
           FourierField out(f.dim(), 0, static_cast<int>(logits.size()), GridLayout::centered(f.dim(), {1, 1, 1}));
           for (size_t c = 0; c < logits.size(); ++c) out.at(0, 0, 0, static_cast<int>(c)) = logits[c];
           return out;
         };
       }});
  return out;
}

}  // namespace

AuditMode parse_audit_mode(const std::string& name) {
  if (name == "point-set") return AuditMode::PointSet;
  if (name == "grid-exact") return AuditMode::GridExact;
  throw std::invalid_argument("unknown audit mode '" + name + "' (expected point-set or grid-exact)");
}

std::string to_string(AuditMode mode) { return mode == AuditMode::PointSet ? "point-set" : "grid-exact"; }

const AuditSummary* AuditReport::find(std::string_view name) const {
  for (const auto& s : summaries)
    if (s.name == name) return &s;
  return nullptr;
}

std::string AuditReport::to_json() const {
  json j;
  j["kind"] = kind;
  j["pass"] = pass;
  j["summaries"] = json::array();
  for (const auto& s : summaries) {
    json e = {{"name", s.name},         {"mode", s.mode},           {"count", s.count},
              {"max_error", s.max_error}, {"mean_error", s.mean_error}, {"tolerance", s.tolerance},
              {"pass", s.pass}};
    e["worst"] = s.worst.empty() ? json(nullptr) : json::parse(s.worst);
    j["summaries"].push_back(e);
  }
  j["entries"] = json::array();
  for (const auto& e : entries)
    j["entries"].push_back({{"layer", e.layer}, {"slot", e.slot}, {"sample", e.sample}, {"error", e.error}});
  return j.dump(2);
}

AuditOptions audit_options(const ExperimentConfig& config, AuditMode mode) {
  AuditOptions o;
  o.samples = config.audit.samples;
  o.tolerance = config.audit.tolerance;
  o.model_tolerance = config.audit.model_tolerance;
  o.mode = mode;
  o.seed = config.seed;
  o.sites = config.audit.sites;
  return o;
}

std::vector<std::string> audited_layers() { return {kAuditBindings.begin(), kAuditBindings.end()}; }

bool grid_only_layer(std::string_view layer) {
  return layer == "conv_type1" || layer == "conv_type2" || layer == "avg_pool" || layer == "batch_norm" ||
         layer == "model";
}

std::vector<Rotation> lattice_rotations(int dim) {
  std::vector<Rotation> out;
  if (dim == 2) {
    for (int q = 0; q < 4; ++q) out.push_back(Rotation::from_matrix(2, [&] {
      const int c[4] = {1, 0, -1, 0}, s[4] = {0, 1, 0, -1};
      return std::array<double, 9>{double(c[q]), double(s[q]), 0, double(-s[q]), double(c[q]), 0, 0, 0, 1};
    }()));
    return out;
  }
  if (dim != 3) throw std::invalid_argument("lattice rotations exist for dimension 2 or 3");
  std::array<int, 3> p{0, 1, 2};
  do {
    for (int signs = 0; signs < 8; ++signs) {
      std::array<double, 9> m{};
      for (int r = 0; r < 3; ++r) m[r * 3 + p[r]] = (signs >> r) & 1 ? -1.0 : 1.0;
      const double det = m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
                         m[2] * (m[3] * m[7] - m[4] * m[6]);
      if (det > 0) out.push_back(Rotation::from_matrix(3, m));
    }
  } while (std::next_permutation(p.begin(), p.end()));
  return out;
}

AuditReport audit_equivariance(const ExperimentConfig& config, const std::string& target,
                               const AuditOptions& options) {
  config.model.validate();
  if (options.samples < 1) throw std::invalid_argument("audit needs at least one group sample");
  if (!(options.tolerance > 0.0)) throw std::invalid_argument("audit tolerance must be positive");
  const auto bindings = make_bindings(config, options);
  AuditReport report;
  report.kind = "equivariance";
  bool matched = false;
  for (const auto& b : bindings) {
    if (target != "all" && target != b.name) continue;
    matched = true;
    report.summaries.push_back(run_binding(b, config.model.dim, options, &report.entries));
    report.pass = report.pass && report.summaries.back().pass;
  }
  if (!matched) {
    std::string names;
    for (auto n : kAuditBindings) names += (names.empty() ? "" : ", ") + std::string(n);
    throw std::invalid_argument("unknown audit target '" + target + "' (expected all, " + names + ")");
  }
  return report;
}

AuditSummary audit_layer(const std::string& name, const LayerFn& layer, int dim, int cutoff, int channels,
                         const AuditOptions& options, std::vector<AuditEntry>* entries) {
  Binding b{.name = name, .cutoff = cutoff, .channels = channels, .tolerance = options.tolerance,
            .make = [&layer](std::mt19937_64&) { return layer; }};
  return run_binding(b, dim, options, entries);
}

AuditReport audit_gradients(Model& model, const Batch& batch, double fd_step, double tolerance, int max_coords,
                            std::uint64_t seed) {
  if (!(fd_step > 0.0) || !std::isfinite(fd_step))
    throw std::invalid_argument("finite-difference step must be positive and finite");
  if (!(tolerance > 0.0)) throw std::invalid_argument("gradient tolerance must be positive");
  if (batch.fields.empty()) throw std::invalid_argument("gradient audit needs a non-empty batch");
  const RunMode mode{.train = true, .dropout = false, .update_running = false};
  auto& store = model.params();
  model.loss_and_backward(batch.fields, batch.labels, mode);
  const std::vector<double> analytic = store.grads;
  for (size_t i = 0; i < analytic.size(); ++i)
    if (!std::isfinite(analytic[i]))
      throw NumericError("backward", "non-finite analytic gradient in " + store.owner(i));

  std::vector<size_t> coords(store.size());
  std::iota(coords.begin(), coords.end(), size_t{0});
  if (max_coords > 0 && static_cast<size_t>(max_coords) < coords.size()) {
    auto rng = derived_rng(seed, {name_hash("audit_gradients")});
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(max_coords);
    std::sort(coords.begin(), coords.end());
  }

  AuditReport report;
  report.kind = "gradient";
  std::vector<double> worst_a, worst_n;
  std::vector<size_t> worst_i;
  for (size_t i : coords) {
    const double p = store.params[i];
    store.params[i] = p + fd_step;
    const double lp = model.loss(batch.fields, batch.labels, mode);
    store.params[i] = p - fd_step;
    const double lm = model.loss(batch.fields, batch.labels, mode);
    store.params[i] = p;
    const double numeric = (lp - lm) / (2.0 * fd_step);
    const double a = analytic[i];
    const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});

    const std::string& owner = store.owner(i);
    if (report.summaries.empty() || report.summaries.back().name != owner) {
      AuditSummary fresh;
      fresh.name = owner;
      fresh.mode = "finite-difference";
      fresh.tolerance = tolerance;
      report.summaries.push_back(fresh);
      worst_a.push_back(0.0);
      worst_n.push_back(0.0);
      worst_i.push_back(i);
    }
    auto& s = report.summaries.back();
    if (s.count == 0 || err > s.max_error || std::isnan(err)) {
      s.max_error = err;
      worst_a.back() = a;
      worst_n.back() = numeric;
      worst_i.back() = i;
    }
    s.mean_error += err;
    ++s.count;
  }
  for (size_t k = 0; k < report.summaries.size(); ++k) {
    auto& s = report.summaries[k];
    s.mean_error /= s.count;
    s.pass = s.max_error <= tolerance;
    const auto& slice = store.slices()[store.find(s.name)];
    s.worst = json{{"slice", s.name},
                   {"index", worst_i[k] - slice.offset},
                   {"analytic", worst_a[k]},
                   {"numeric", worst_n[k]},
                   {"error", s.max_error}}
                  .dump();
    report.pass = report.pass && s.pass;
  }
  // Leave the gradient vector as the analytic result.
  store.grads = analytic;
  return report;
}

std::vector<FourierField> attention_maps(const Model& model, const FourierField& input, int layer,
                                         const std::vector<int>& heads) {
  const auto& mc = model.config();
  const AttentionConfig ac = mc.attention();
  std::vector<int> selected = heads;
  if (selected.empty()) {
    selected.resize(ac.heads);
    std::iota(selected.begin(), selected.end(), 0);
  }
  for (int h : selected)
    if (h < 0 || h >= ac.heads)
      throw std::invalid_argument("head " + std::to_string(h) + " out of range (model has " +
                                  std::to_string(ac.heads) + " heads)");
  if (!input.is_grid()) throw std::invalid_argument("attention maps need a grid input");
  const FourierField z = steerable_layer_norm(model.encoder_input(input, layer), kNormEps, ac.ln_sqrt);
  const auto params = model.attention_params(layer);
  const int n = z.num_sites(), ni = z.num_irreps();
  std::vector<FourierField> maps;
  for (int h : selected) {
    const auto sc = attention_scores(z, params, ac, h);
    FourierField map(z.dim(), 0, ni, z.grid());
    for (int slot = 0; slot < ni; ++slot)
      for (int i = 0; i < n; ++i) {
        double row = 0.0, best = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < n; ++j) {
          row += sc.a(slot, i, j);
          best = std::max(best, sc.a(slot, i, j));
        }
        if (!ac.paper_literal_softmax && std::abs(row - 1.0) > 1e-9)
          throw NumericError("attention", "attention row " + std::to_string(i) + " of head " + std::to_string(h) +
                                              " sums to " + std::to_string(row));
        map.at(0, i, 0, slot) = best;
      }
    maps.push_back(std::move(map));
  }
  return maps;
}

std::vector<std::filesystem::path> export_attention_maps(const Model& model, const FourierField& input, int layer,
                                                         const std::vector<int>& heads,
                                                         const std::filesystem::path& out_dir) {
  const auto maps = attention_maps(model, input, layer, heads);
  std::vector<int> selected = heads;
  if (selected.empty())
    for (int h = 0; h < model.config().heads; ++h) selected.push_back(h);
  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> written;
  const int K = model.config().cutoff, dim = model.config().dim;
  for (size_t k = 0; k < maps.size(); ++k) {
    const std::string stem = "attention_layer" + std::to_string(layer) + "_head" + std::to_string(selected[k]);
    const auto stfl = out_dir / (stem + ".stfl");
    write_field(maps[k], stfl);
    const auto csv = out_dir / (stem + ".csv");
    std::ofstream out(csv);
    if (!out) throw FormatError(FormatError::Kind::Io, "path", "cannot write " + csv.string());
    out << "site,x,y,z,irrep,max_alpha\n";
    char buf[160];
    for (int s = 0; s < maps[k].num_sites(); ++s) {
      const auto p = maps[k].site_position(s);
      for (int c = 0; c < maps[k].channels(); ++c) {
        std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%s,%.17g\n", s, p[0], p[1], p[2],
                      irrep_label(dim, K, c).c_str(), maps[k].at(0, s, 0, c).real());
        out << buf;
      }
    }
    written.push_back(stfl);
    written.push_back(csv);
  }
  return written;
}

}  // namespace steerkit
