#include "steerkit/config.hpp"

#include "steerkit/errors.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>

namespace steerkit {

namespace {

using nlohmann::json;

// Walks one JSON object, remembering which keys were consumed.
class Reader {
 public:
  Reader(const json& j, std::string prefix) : j_(j), prefix_(std::move(prefix)) {
    if (!j_.is_object()) throw ConfigError(where(), where() + ": expected an object");
  }

  void get(const char* key, int& out) {
    if (const json* v = take(key)) {
      if (!v->is_number_integer()) fail(key, "expected an integer");
      const auto x = v->get<long long>();
      if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) fail(key, "out of range");
      out = static_cast<int>(x);
    }
  }
  void get(const char* key, std::uint64_t& out) {
    if (const json* v = take(key)) {
      if (!v->is_number_unsigned()) fail(key, "expected a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }
  void get(const char* key, double& out) {
    if (const json* v = take(key)) {
      if (!v->is_number()) fail(key, "expected a number");
      out = v->get<double>();
    }
  }
  void get(const char* key, bool& out) {
    if (const json* v = take(key)) {
      if (!v->is_boolean()) fail(key, "expected true or false");
      out = v->get<bool>();
    }
  }
  void get(const char* key, std::string& out) {
    if (const json* v = take(key)) {
      if (!v->is_string()) fail(key, "expected a string");
      out = v->get<std::string>();
    }
  }
  void get(const char* key, MixingMode& out) {
    std::string s;
    if (!j_.contains(key)) return;
    get(key, s);
    try {
      out = parse_mixing_mode(s);
    } catch (const std::invalid_argument&) {
      fail(key, "expected identity, shared-scalar or full-matrix, got '" + s + "'");
    }
  }
  template <typename Fn>
  void object(const char* key, Fn fn) {
    if (const json* v = take(key)) {
      Reader r(*v, path(key));
      fn(r);
      r.finish();
    }
  }
  void finish() const {
    for (const auto& [k, _] : j_.items())
      if (!seen_.count(k)) throw ConfigError(path(k), path(k) + ": unknown key");
  }

 private:
  std::string path(const std::string& key) const { return prefix_.empty() ? key : prefix_ + "." + key; }
  std::string where() const { return prefix_.empty() ? "config" : prefix_; }
  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    throw ConfigError(path(key), path(key) + ": " + what);
  }
  const json* take(const char* key) {
    if (!j_.contains(key)) return nullptr;
    seen_.insert(key);
    return &j_.at(key);
  }

  const json& j_;
  std::string prefix_;
  std::set<std::string> seen_;
};

}  // namespace

void ExperimentConfig::validate() const {
  model.validate();
  auto fail = [](const std::string& key, const std::string& what) { throw ConfigError(key, key + ": " + what); };
  const auto& o = optimizer;
  if (!(o.lr > 0.0)) fail("optimizer.lr", "must be positive");
  if (!(o.lr_decay > 0.0 && o.lr_decay <= 1.0)) fail("optimizer.lr_decay", "must lie in (0, 1]");
  if (o.decay_every < 0) fail("optimizer.decay_every", "must be non-negative");
  if (!(o.weight_decay >= 0.0)) fail("optimizer.weight_decay", "must be non-negative");
  if (o.epochs < 0) fail("optimizer.epochs", "must be non-negative");
  if (o.batch < 1) fail("optimizer.batch", "must be positive");
  const auto& d = dataset;
  if (d.kind == "none") {
    // audit-only configurations
  } else if (d.kind == "synthetic") {
    if (model.dim != 2) fail("dataset.kind", "synthetic shapes are two-dimensional");
    if (model.classes > 6) fail("dataset.classes", "synthetic shapes provide at most 6 classes");
  } else if (d.kind == "idx") {
    if (model.dim != 2) fail("dataset.kind", "IDX images are two-dimensional");
    for (auto [key, v] : {std::pair{"dataset.train_images", &d.train_images}, {"dataset.train_labels", &d.train_labels},
                          {"dataset.test_images", &d.test_images}, {"dataset.test_labels", &d.test_labels}})
      if (v->empty()) fail(key, "required for IDX datasets");
  } else {
    fail("dataset.kind", "expected synthetic, idx or none, got '" + d.kind + "'");
  }
  if (d.train < 1) fail("dataset.train", "must be positive");
  if (d.test < 1) fail("dataset.test", "must be positive");
  if (d.test_rotations < 0) fail("dataset.test_rotations", "must be non-negative");
  const auto& a = audit;
  if (a.samples < 1) fail("audit.samples", "must be positive");
  if (a.sites < 1) fail("audit.sites", "must be positive");
  if (!(a.tolerance > 0.0)) fail("audit.tolerance", "must be positive");
  if (!(a.model_tolerance > 0.0)) fail("audit.model_tolerance", "must be positive");
  if (!(a.fd_step > 0.0)) fail("audit.fd_step", "must be positive");
  if (!(a.grad_tolerance > 0.0)) fail("audit.grad_tolerance", "must be positive");
  if (a.grad_batch < 1) fail("audit.grad_batch", "must be positive");
  if (a.max_coords < 0) fail("audit.max_coords", "must be non-negative");
}

ExperimentConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("config", std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig c;
  auto& m = c.model;
  Reader r(j, "");
  r.get("seed", c.seed);
  r.get("dimension", m.dim);
  r.get("cutoff", m.cutoff);
  r.get("radial", m.radial);
  r.get("angular", m.angular);
  r.get("d_model", m.d_model);
  r.get("heads", m.heads);
  r.get("layers", m.layers);
  r.object("mixing", [&](Reader& s) {
    s.get("first", m.mix1);
    s.get("second", m.mix2);
  });
  r.object("variants", [&](Reader& s) {
    s.get("paper_literal_softmax", m.paper_literal_softmax);
    s.get("key_from_query_site", m.key_from_query_site);
    s.get("ln_sqrt", m.ln_sqrt);
  });
  r.object("architecture", [&](Reader& s) {
    s.get("input_size", m.input_size);
    s.get("conv1_channels", m.conv1_channels);
    s.get("conv1_kernel", m.conv1_kernel);
    s.get("conv2_kernel", m.conv2_kernel);
    s.get("pool", m.pool);
    s.get("final_channels", m.final_channels);
    s.get("hidden", m.hidden);
    s.get("dropout", m.dropout);
  });
  r.object("optimizer", [&](Reader& s) {
    auto& o = c.optimizer;
    s.get("lr", o.lr);
    s.get("lr_decay", o.lr_decay);
    s.get("decay_every", o.decay_every);
    s.get("weight_decay", o.weight_decay);
    s.get("epochs", o.epochs);
    s.get("batch", o.batch);
  });
  r.object("dataset", [&](Reader& s) {
    auto& d = c.dataset;
    s.get("kind", d.kind);
    s.get("classes", m.classes);
    s.get("train", d.train);
    s.get("test", d.test);
    s.get("test_rotations", d.test_rotations);
    s.get("train_images", d.train_images);
    s.get("train_labels", d.train_labels);
    s.get("test_images", d.test_images);
    s.get("test_labels", d.test_labels);
  });
  r.object("audit", [&](Reader& s) {
    auto& a = c.audit;
    s.get("samples", a.samples);
    s.get("sites", a.sites);
    s.get("tolerance", a.tolerance);
    s.get("model_tolerance", a.model_tolerance);
    s.get("fd_step", a.fd_step);
    s.get("grad_tolerance", a.grad_tolerance);
    s.get("grad_batch", a.grad_batch);
    s.get("max_coords", a.max_coords);
  });
  r.finish();
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_json(const ExperimentConfig& c) {
  const auto& m = c.model;
  json j = {
      {"seed", c.seed},
      {"dimension", m.dim},
      {"cutoff", m.cutoff},
      {"radial", m.radial},
      {"angular", m.angular},
      {"d_model", m.d_model},
      {"heads", m.heads},
      {"layers", m.layers},
      {"mixing", {{"first", to_string(m.mix1)}, {"second", to_string(m.mix2)}}},
      {"variants",
       {{"paper_literal_softmax", m.paper_literal_softmax},
        {"key_from_query_site", m.key_from_query_site},
        {"ln_sqrt", m.ln_sqrt}}},
      {"architecture",
       {{"input_size", m.input_size},
        {"conv1_channels", m.conv1_channels},
        {"conv1_kernel", m.conv1_kernel},
        {"conv2_kernel", m.conv2_kernel},
        {"pool", m.pool},
        {"final_channels", m.final_channels},
        {"hidden", m.hidden},
        {"dropout", m.dropout}}},
      {"optimizer",
       {{"lr", c.optimizer.lr},
        {"lr_decay", c.optimizer.lr_decay},
        {"decay_every", c.optimizer.decay_every},
        {"weight_decay", c.optimizer.weight_decay},
        {"epochs", c.optimizer.epochs},
        {"batch", c.optimizer.batch}}},
      {"dataset",
       {{"kind", c.dataset.kind},
        {"classes", m.classes},
        {"train", c.dataset.train},
        {"test", c.dataset.test},
        {"test_rotations", c.dataset.test_rotations},
        {"train_images", c.dataset.train_images},
        {"train_labels", c.dataset.train_labels},
        {"test_images", c.dataset.test_images},
        {"test_labels", c.dataset.test_labels}}},
      {"audit",
       {{"samples", c.audit.samples},
        {"sites", c.audit.sites},
        {"tolerance", c.audit.tolerance},
        {"model_tolerance", c.audit.model_tolerance},
        {"fd_step", c.audit.fd_step},
        {"grad_tolerance", c.audit.grad_tolerance},
        {"grad_batch", c.audit.grad_batch},
        {"max_coords", c.audit.max_coords}}},
  };
  return j.dump(2);
}

}  // namespace steerkit
