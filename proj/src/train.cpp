#include "steerkit/train.hpp"

#include "steerkit/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <ostream>

namespace steerkit {

namespace {

enum Stream : std::uint64_t { kInit = 1, kTrainData, kTestData, kShuffle, kDropout, kTestRotations };

std::string format_row(const EpochMetrics& m) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g\n", m.epoch, m.loss, m.train_accuracy, m.test_accuracy,
                m.lr);
  return buf;
}

constexpr char kHeader[] = "epoch,loss,train_accuracy,test_accuracy,lr\n";

Batch slice(const Batch& b, std::span<const size_t> idx) {
  Batch out;
  for (size_t i : idx) {
    out.fields.push_back(b.fields[i]);
    out.labels.push_back(b.labels[i]);
  }
  return out;
}

int argmax(const std::vector<double>& v) { return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin()); }

void check_labels(const Batch& b, int classes, const char* what) {
  for (int y : b.labels)
    if (y < 0 || y >= classes)
      throw ConfigError("dataset.classes", std::string(what) + " label " + std::to_string(y) + " outside [0, " +
                                               std::to_string(classes) + ")");
}

}  // namespace

std::mt19937_64 derived_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> stream) {
  std::vector<std::uint32_t> words{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  for (auto s : stream) {
    words.push_back(static_cast<std::uint32_t>(s));
    words.push_back(static_cast<std::uint32_t>(s >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return std::mt19937_64(seq);
}

ShapeSets synthetic_samples(const ExperimentConfig& config) {
  auto train_rng = derived_rng(config.seed, {kTrainData});
  auto test_rng = derived_rng(config.seed, {kTestData});
  return {sample_shapes(config.dataset.train, config.model.classes, train_rng),
          sample_shapes(config.dataset.test, config.model.classes, test_rng)};
}

Datasets load_datasets(const ExperimentConfig& config) {
  config.validate();
  const auto& m = config.model;
  const auto& d = config.dataset;
  Datasets out;
  if (d.kind == "none") throw ConfigError("dataset.kind", "dataset.kind: this configuration has no dataset");
  if (d.kind == "synthetic") {
    if (m.input_size < 12)
      throw ConfigError("architecture.input_size", "architecture.input_size: synthetic shapes need at least 12 pixels");
    auto sets = synthetic_samples(config);
    auto lift = [&](const std::vector<ShapeSample>& samples) {
      std::vector<int> labels;
      for (const auto& s : samples) labels.push_back(s.label);
      return lift_images(render_shapes(samples, m.input_size), labels, m.input_size, m.cutoff);
    };
    out.train = lift(sets.train);
    out.test = lift(sets.test);
    out.test_samples = std::move(sets.test);
  } else {
    out.train = load_idx(d.train_images, d.train_labels, m.cutoff);
    out.test = load_idx(d.test_images, d.test_labels, m.cutoff);
    for (const auto* b : {&out.train, &out.test})
      if (!b->fields.empty() && b->fields[0].grid().extent[0] != m.input_size)
        throw ConfigError("architecture.input_size", "IDX images are " + std::to_string(b->fields[0].grid().extent[0]) +
                                                         " pixels wide but the model expects " +
                                                         std::to_string(m.input_size));
  }
  check_labels(out.train, m.classes, "training");
  check_labels(out.test, m.classes, "test");
  return out;
}

double accuracy(Model& model, const Batch& batch, int chunk) {
  if (batch.fields.empty()) return 0.0;
  size_t correct = 0;
  for (size_t start = 0; start < batch.fields.size(); start += chunk) {
    const size_t n = std::min<size_t>(chunk, batch.fields.size() - start);
    const auto logits = model.forward(std::span<const FourierField>(batch.fields).subspan(start, n), {});
    for (size_t i = 0; i < n; ++i) correct += argmax(logits[i]) == batch.labels[start + i];
  }
  return static_cast<double>(correct) / static_cast<double>(batch.fields.size());
}

TrainResult run_training(const ExperimentConfig& config, const TrainOptions& options) {
  return run_training(config, load_datasets(config), options);
}

TrainResult run_training(const ExperimentConfig& config, const Datasets& data, const TrainOptions& options) {
  config.validate();
  Model model(config.model);
  auto init_rng = derived_rng(config.seed, {kInit});
  model.init(init_rng);

  std::filesystem::create_directories(options.out_dir);
  TrainResult result;
  result.checkpoint = options.out_dir / "checkpoint.stck";
  result.metrics = options.out_dir / "metrics.csv";
  int start = 0;
  if (!options.resume.empty()) {
    start = load_checkpoint(options.resume, model.params()).epoch;
  }
  std::ofstream csv(result.metrics, start > 0 ? std::ios::app : std::ios::trunc);
  if (!csv) throw FormatError(FormatError::Kind::Io, "path", "cannot write " + result.metrics.string());
  if (start == 0) csv << kHeader;

  const auto& o = config.optimizer;
  const size_t N = data.train.fields.size();
  const size_t num_batches = std::max<size_t>(1, N / static_cast<size_t>(o.batch));
  int end = o.epochs;
  if (options.stop_after >= 0) end = std::min(end, start + options.stop_after);
  for (int epoch = start; epoch < end; ++epoch) {
    const double lr = step_decay_lr(o.lr, o.lr_decay, o.decay_every, epoch);
    std::vector<size_t> order(N);
    std::iota(order.begin(), order.end(), size_t{0});
    auto shuffle_rng = derived_rng(config.seed, {kShuffle, static_cast<std::uint64_t>(epoch)});
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0.0;
    size_t correct = 0;
    for (size_t b = 0; b < num_batches; ++b) {
      const size_t lo = b * N / num_batches, hi = (b + 1) * N / num_batches;
      const auto batch = slice(data.train, std::span<const size_t>(order).subspan(lo, hi - lo));
      const std::uint64_t dropout_seed =
          derived_rng(config.seed, {kDropout, static_cast<std::uint64_t>(epoch), b})();
      std::vector<std::vector<double>> logits;
      const double loss = model.loss_and_backward(batch.fields, batch.labels,
                                                  {.train = true, .dropout_seed = dropout_seed}, &logits);
      adam_step(model.params(), {.lr = lr, .weight_decay = o.weight_decay});
      loss_sum += loss * static_cast<double>(hi - lo);
      for (size_t i = 0; i < logits.size(); ++i) correct += argmax(logits[i]) == batch.labels[i];
    }
    EpochMetrics m;
    m.epoch = epoch + 1;
    m.loss = loss_sum / static_cast<double>(N);
    m.train_accuracy = static_cast<double>(correct) / static_cast<double>(N);
    m.test_accuracy = accuracy(model, data.test);
    m.lr = lr;
    csv << format_row(m) << std::flush;
    save_checkpoint(result.checkpoint, model.params(), {epoch + 1, config_to_json(config)});
    if (options.progress)
      *options.progress << "epoch " << m.epoch << "/" << o.epochs << "  loss " << m.loss << "  train "
                        << m.train_accuracy << "  test " << m.test_accuracy << "  lr " << lr << std::endl;
    result.history.push_back(m);
  }
  if (start >= end && !std::filesystem::exists(result.checkpoint))
    save_checkpoint(result.checkpoint, model.params(), {start, config_to_json(config)});
  return result;
}

EvalResult evaluate(Model& model, const ExperimentConfig& config, const Datasets& data) {
  EvalResult r;
  r.count = static_cast<int>(data.test.fields.size());
  r.accuracy = accuracy(model, data.test);
  const int size = config.model.input_size, cutoff = config.model.cutoff;
  auto rot_rng = derived_rng(config.seed, {kTestRotations});
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  if (!data.test_samples.empty()) {
    auto upright = data.test_samples;
    for (auto& s : upright) s.angle = 0.0;
    r.unrotated_accuracy = accuracy(model, lift_images(render_shapes(upright, size), data.test.labels, size, cutoff));
    for (int k = 0; k < config.dataset.test_rotations; ++k)
      r.rotated.push_back(
          accuracy(model, lift_images(render_shapes(data.test_samples, size, angle(rot_rng)), data.test.labels, size, cutoff)));
  } else {
    r.unrotated_accuracy = r.accuracy;
    for (int k = 0; k < config.dataset.test_rotations; ++k) {
      GroupElement g = GroupElement::identity(2);
      g.rotation = Rotation::so2(angle(rot_rng));
      Batch rotated{{}, data.test.labels};
      for (const auto& f : data.test.fields) rotated.fields.push_back(act_group(f, g, Interpolation::Linear));
      r.rotated.push_back(accuracy(model, rotated));
    }
  }
  if (!r.rotated.empty()) {
    r.rotated_mean = std::accumulate(r.rotated.begin(), r.rotated.end(), 0.0) / r.rotated.size();
    double var = 0.0;
    for (double a : r.rotated) var += (a - r.rotated_mean) * (a - r.rotated_mean);
    r.rotated_std = std::sqrt(var / r.rotated.size());
  }
  return r;
}

EvalResult run_eval(const ExperimentConfig& config, const std::filesystem::path& checkpoint) {
  Model model(config.model);
  load_checkpoint(checkpoint, model.params());
  return evaluate(model, config, load_datasets(config));
}

Model load_model(const std::filesystem::path& checkpoint, ExperimentConfig* config_out) {
  const auto meta = read_checkpoint_meta(checkpoint);
  const auto config = parse_config(meta.config_json);
  Model model(config.model);
  load_checkpoint(checkpoint, model.params());
  if (config_out) *config_out = config;
  return model;
}

}  // namespace steerkit
