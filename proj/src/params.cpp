#include "steerkit/params.hpp"

#include "bytes.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace steerkit {

namespace {

constexpr char kMagic[] = "STCK";
constexpr std::uint32_t kVersion = 1;

size_t element_count(const std::vector<int>& shape) {
  size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw std::invalid_argument("negative parameter dimension");
    n *= static_cast<size_t>(d);
  }
  return n;
}

void register_slice(std::vector<ParamSlice>& list, std::vector<double>& storage, const std::string& name,
                    std::vector<int> shape, bool complex) {
  for (const auto& s : list)
    if (s.name == name) throw std::invalid_argument("duplicate parameter name '" + name + "'");
  ParamSlice s{name, storage.size(), element_count(shape) * (complex ? 2 : 1), std::move(shape), complex};
  storage.resize(storage.size() + s.size, 0.0);
  list.push_back(std::move(s));
}

size_t find_in(const std::vector<ParamSlice>& list, const std::string& name) {
  for (size_t i = 0; i < list.size(); ++i)
    if (list[i].name == name) return i;
  throw std::invalid_argument("unknown parameter '" + name + "'");
}

}  // namespace

size_t ParamStore::add(const std::string& name, std::vector<int> shape, bool complex) {
  register_slice(slices_, params, name, std::move(shape), complex);
  grads.resize(params.size(), 0.0);
  adam_m.resize(params.size(), 0.0);
  adam_v.resize(params.size(), 0.0);
  return slices_.size() - 1;
}

size_t ParamStore::add_buffer(const std::string& name, std::vector<int> shape) {
  register_slice(buffer_slices_, buffers, name, std::move(shape), false);
  return buffer_slices_.size() - 1;
}

size_t ParamStore::find(const std::string& name) const { return find_in(slices_, name); }
size_t ParamStore::find_buffer(const std::string& name) const { return find_in(buffer_slices_, name); }

const ParamSlice& ParamStore::checked(size_t slice, bool want_complex) const {
  const auto& s = slices_.at(slice);
  if (want_complex && !s.complex) throw std::invalid_argument("parameter '" + s.name + "' is real");
  return s;
}

std::span<double> ParamStore::values(size_t slice) {
  const auto& s = checked(slice, false);
  return std::span<double>(params).subspan(s.offset, s.size);
}
std::span<const double> ParamStore::values(size_t slice) const {
  const auto& s = checked(slice, false);
  return std::span<const double>(params).subspan(s.offset, s.size);
}
std::span<double> ParamStore::grad(size_t slice) {
  const auto& s = checked(slice, false);
  return std::span<double>(grads).subspan(s.offset, s.size);
}
std::span<const double> ParamStore::grad(size_t slice) const {
  const auto& s = checked(slice, false);
  return std::span<const double>(grads).subspan(s.offset, s.size);
}
std::span<cplx> ParamStore::cvalues(size_t slice) {
  const auto& s = checked(slice, true);
  return {reinterpret_cast<cplx*>(params.data() + s.offset), s.size / 2};
}
std::span<const cplx> ParamStore::cvalues(size_t slice) const {
  const auto& s = checked(slice, true);
  return {reinterpret_cast<const cplx*>(params.data() + s.offset), s.size / 2};
}
std::span<cplx> ParamStore::cgrad(size_t slice) {
  const auto& s = checked(slice, true);
  return {reinterpret_cast<cplx*>(grads.data() + s.offset), s.size / 2};
}
std::span<double> ParamStore::buffer(size_t slice) {
  const auto& s = buffer_slices_.at(slice);
  return std::span<double>(buffers).subspan(s.offset, s.size);
}
std::span<const double> ParamStore::buffer(size_t slice) const {
  const auto& s = buffer_slices_.at(slice);
  return std::span<const double>(buffers).subspan(s.offset, s.size);
}

const std::string& ParamStore::owner(size_t index) const {
  for (const auto& s : slices_)
    if (index >= s.offset && index < s.offset + s.size) return s.name;
  throw std::out_of_range("coordinate " + std::to_string(index) + " is outside every parameter");
}

void ParamStore::zero_grad() { std::fill(grads.begin(), grads.end(), 0.0); }

void adam_step(ParamStore& store, const AdamOptions& o) {
  ++store.adam_step;
  const double t = static_cast<double>(store.adam_step);
  const double c1 = 1.0 - std::pow(o.beta1, t);
  const double c2 = 1.0 - std::pow(o.beta2, t);
  for (size_t i = 0; i < store.params.size(); ++i) {
    const double g = store.grads[i];
    double& m = store.adam_m[i];
    double& v = store.adam_v[i];
    m = o.beta1 * m + (1.0 - o.beta1) * g;
    v = o.beta2 * v + (1.0 - o.beta2) * g * g;
    const double theta = store.params[i];
    store.params[i] = theta - o.lr * ((m / c1) / (std::sqrt(v / c2) + o.eps) + o.weight_decay * theta);
  }
}

double step_decay_lr(double lr, double decay, int every, int epoch) {
  if (every <= 0) return lr;
  return lr * std::pow(decay, epoch / every);
}

namespace {

void write_manifest(detail::ByteWriter& w, const std::vector<ParamSlice>& list) {
  w.le(static_cast<std::uint32_t>(list.size()));
  for (const auto& s : list) {
    w.str(s.name);
    w.le(static_cast<std::uint8_t>(s.complex));
    w.le(static_cast<std::uint32_t>(s.shape.size()));
    for (int d : s.shape) w.le(static_cast<std::int32_t>(d));
    w.le(static_cast<std::uint64_t>(s.offset));
    w.le(static_cast<std::uint64_t>(s.size));
  }
}

void check_manifest(detail::ByteReader& r, const std::vector<ParamSlice>& list, const std::string& what) {
  const auto count = r.le<std::uint32_t>(what + " count");
  if (count != list.size())
    throw FormatError(FormatError::Kind::CountMismatch, what,
                      "checkpoint has " + std::to_string(count) + " " + what + " entries, model expects " +
                          std::to_string(list.size()));
  for (const auto& s : list) {
    const auto name = r.str(what + " name");
    const bool complex = r.le<std::uint8_t>(what + " flags") != 0;
    const auto rank = r.le<std::uint32_t>(what + " rank");
    std::vector<int> shape(rank);
    for (auto& d : shape) d = r.le<std::int32_t>(what + " shape");
    const auto offset = r.le<std::uint64_t>(what + " offset");
    const auto size = r.le<std::uint64_t>(what + " size");
    if (name != s.name || complex != s.complex || shape != s.shape || offset != s.offset || size != s.size)
      throw FormatError(FormatError::Kind::BadHeader, what,
                        "checkpoint entry '" + name + "' does not match model entry '" + s.name + "'");
  }
}

void write_doubles(detail::ByteWriter& w, const std::vector<double>& v) {
  w.le(static_cast<std::uint64_t>(v.size()));
  for (double x : v) w.le(x);
}

void read_doubles(detail::ByteReader& r, std::vector<double>& v, const std::string& field) {
  const auto n = r.le<std::uint64_t>(field + " length");
  if (n != v.size())
    throw FormatError(FormatError::Kind::CountMismatch, field,
                      field + ": checkpoint holds " + std::to_string(n) + " values, model expects " +
                          std::to_string(v.size()));
  r.need(n * 8, field);
  for (auto& x : v) x = r.le<double>(field);
}

CheckpointMeta read_header(detail::ByteReader& r) {
  if (r.fixed(4, "magic") != kMagic) throw FormatError(FormatError::Kind::BadMagic, "magic", "not an STCK checkpoint");
  const auto version = r.le<std::uint32_t>("version");
  if (version != kVersion)
    throw FormatError(FormatError::Kind::VersionMismatch, "version",
                      "unsupported checkpoint version " + std::to_string(version));
  CheckpointMeta meta;
  meta.epoch = r.le<std::int32_t>("epoch");
  meta.config_json = r.str("config");
  return meta;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParamStore& store, const CheckpointMeta& meta) {
  detail::ByteWriter w;
  w.bytes(kMagic, 4);
  w.le(kVersion);
  w.le(static_cast<std::int32_t>(meta.epoch));
  w.str(meta.config_json);
  write_manifest(w, store.slices());
  write_manifest(w, store.buffer_slices());
  write_doubles(w, store.params);
  write_doubles(w, store.buffers);
  write_doubles(w, store.adam_m);
  write_doubles(w, store.adam_v);
  w.le(store.adam_step);
  detail::write_file_bytes(path, w.buffer());
}

CheckpointMeta load_checkpoint(const std::filesystem::path& path, ParamStore& store) {
  const auto bytes = detail::read_file_bytes(path);
  detail::ByteReader r(bytes);
  const auto meta = read_header(r);
  check_manifest(r, store.slices(), "parameter");
  check_manifest(r, store.buffer_slices(), "buffer");
  // Parse into scratch first so a truncated file leaves the store untouched.
  auto params = store.params, buffers = store.buffers, m = store.adam_m, v = store.adam_v;
  read_doubles(r, params, "parameters");
  read_doubles(r, buffers, "buffers");
  read_doubles(r, m, "adam_m");
  read_doubles(r, v, "adam_v");
  const auto step = r.le<std::uint64_t>("adam_step");
  if (r.remaining() != 0) throw FormatError(FormatError::Kind::BadHeader, "payload", "trailing bytes after checkpoint payload");
  store.params = std::move(params);
  store.buffers = std::move(buffers);
  store.adam_m = std::move(m);
  store.adam_v = std::move(v);
  store.adam_step = step;
  return meta;
}

CheckpointMeta read_checkpoint_meta(const std::filesystem::path& path) {
  const auto bytes = detail::read_file_bytes(path);
  detail::ByteReader r(bytes);
  return read_header(r);
}

}  // namespace steerkit
