// steerkit command-line front end.
//
// Exit status: 0 success or audit pass, 1 audit failure (or a numeric failure
// during a run), 2 usage, configuration or input error.

#include "steerkit/audit.hpp"
#include "steerkit/errors.hpp"
#include "steerkit/train.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>

namespace fs = std::filesystem;
using namespace steerkit;

namespace {

constexpr int kPass = 0, kAuditFail = 1, kUsage = 2;

struct Global {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

ExperimentConfig resolve_config(const Global& g) {
  ExperimentConfig c = g.config.empty() ? parse_config("{}") : load_config(g.config);
  if (g.seed) c.seed = *g.seed;
  return c;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw FormatError(FormatError::Kind::Io, "path", "cannot write " + path.string());
  out << text << "\n";
}

void print_summaries(const AuditReport& r) {
  std::printf("%-24s %-18s %8s %12s %12s %10s  %s\n", "name", "mode", "count", "max", "mean", "tolerance", "result");
  for (const auto& s : r.summaries)
    std::printf("%-24s %-18s %8d %12.3e %12.3e %10.1e  %s\n", s.name.c_str(), s.mode.c_str(), s.count, s.max_error,
                s.mean_error, s.tolerance, s.pass ? "PASS" : "FAIL");
  for (const auto& s : r.summaries)
    if (!s.pass) std::printf("worst %s: %s\n", s.name.c_str(), s.worst.c_str());
  std::printf("%s audit: %s\n", r.kind.c_str(), r.pass ? "PASS" : "FAIL");
}

// Architecture from --config when given (the checkpoint must match it),
// otherwise from the config stored in the checkpoint. Without a checkpoint
// the weights are freshly initialized from the seed.
Model make_model(const Global& g, const std::string& checkpoint, ExperimentConfig& cfg) {
  if (!checkpoint.empty() && g.config.empty()) {
    Model m = load_model(checkpoint, &cfg);
    if (g.seed) cfg.seed = *g.seed;
    return m;
  }
  cfg = resolve_config(g);
  Model m(cfg.model);
  if (!checkpoint.empty()) {
    load_checkpoint(checkpoint, m.params());
  } else {
    auto rng = derived_rng(cfg.seed, {1});
    m.init(rng);
  }
  return m;
}

Batch random_batch(const Model& m, int n, std::uint64_t seed) {
  auto rng = derived_rng(seed, {0x6772616421ull});
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> label(0, m.config().classes - 1);
  const int s = m.config().input_size;
  const size_t pixels = static_cast<size_t>(s) * s * (m.config().dim == 3 ? s : 1);
  Batch b;
  for (int i = 0; i < n; ++i) {
    std::vector<double> img(pixels);
    for (auto& v : img) v = u(rng);
    b.fields.push_back(m.lift(img));
    b.labels.push_back(label(rng));
  }
  return b;
}

std::vector<std::uint8_t> to_bytes(const std::vector<std::vector<double>>& images) {
  std::vector<std::uint8_t> out;
  for (const auto& img : images)
    for (double v : img) out.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Steerable transformer toolkit: equivariance and gradient audits, training, evaluation."};
  app.require_subcommand(1);
  app.fallthrough();
  Global g;
  app.add_option("--config", g.config, "Experiment config (JSON); defaults describe the desk model")
      ->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Override the config seed");
  app.add_option("--out", g.out, "Output directory");

  auto* eq = app.add_subcommand("audit-equiv", "Check layer equivariance under random or lattice rotations");
  std::string target = "all", mode_name = "point-set";
  std::optional<int> samples, threads;
  std::optional<double> tolerance;
  eq->add_option("--target", target, "all, model or a layer name");
  eq->add_option("--mode", mode_name, "point-set or grid-exact")->check(CLI::IsMember({"point-set", "grid-exact"}));
  eq->add_option("--samples", samples, "Group samples per layer");
  eq->add_option("--tolerance", tolerance, "Maximum relative error per layer");
  eq->add_option("--threads", threads, "Worker threads (0 = all cores)");

  auto* grad = app.add_subcommand("audit-grad", "Compare analytic gradients with central finite differences");
  std::optional<double> fd_step, grad_tol;
  std::optional<int> max_coords, grad_batch;
  std::string grad_ckpt;
  grad->add_option("--fd-step", fd_step, "Finite-difference step");
  grad->add_option("--tolerance", grad_tol, "Maximum relative error per coordinate");
  grad->add_option("--max-coords", max_coords, "Check a seeded random subset of coordinates (0 = all)");
  grad->add_option("--batch", grad_batch, "Random images in the audit batch");
  grad->add_option("--checkpoint", grad_ckpt, "Audit these weights instead of a fresh initialization");

  auto* train = app.add_subcommand("train", "Train the classifier, logging metrics and checkpoints per epoch");
  std::string resume;
  int stop_after = -1;
  bool quiet = false;
  train->add_option("--resume", resume, "Checkpoint to continue from")->check(CLI::ExistingFile);
  train->add_option("--stop-after", stop_after, "Stop after this many more epochs");
  train->add_flag("--quiet", quiet, "No per-epoch progress");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint, including randomly rotated test sets");
  std::string eval_ckpt;
  eval->add_option("--checkpoint", eval_ckpt, "Checkpoint to evaluate")->required()->check(CLI::ExistingFile);

  auto* attn = app.add_subcommand("attnmap", "Export per-head maximum attention maps for one test image");
  std::string attn_ckpt;
  int attn_layer = 0, attn_index = 0, attn_quarter_turns = 0;
  std::vector<int> attn_heads;
  attn->add_option("--checkpoint", attn_ckpt, "Trained weights (default: fresh initialization)");
  attn->add_option("--layer", attn_layer, "Encoder layer");
  attn->add_option("--heads", attn_heads, "Heads to export (default: all)")->delimiter(',');
  attn->add_option("--index", attn_index, "Test image index");
  attn->add_option("--quarter-turns", attn_quarter_turns, "Rotate the image by this many 90 degree turns first");

  auto* gen = app.add_subcommand("gen-data", "Write the synthetic dataset as IDX files");
  bool goldens = false;
  gen->add_flag("--goldens", goldens, "Also write zero-rotation glyph stencils as text");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kPass : kUsage;
  }

  try {
    if (*eq) {
      const auto cfg = resolve_config(g);
      auto o = audit_options(cfg, parse_audit_mode(mode_name));
      if (samples) o.samples = *samples;
      if (tolerance) o.tolerance = *tolerance;
      if (threads) o.threads = *threads;
      const auto r = audit_equivariance(cfg, target, o);
      print_summaries(r);
      if (!g.out.empty()) write_text(fs::path(g.out) / "audit_equivariance.json", r.to_json());
      return r.pass ? kPass : kAuditFail;
    }
    if (*grad) {
      ExperimentConfig cfg;
      Model m = make_model(g, grad_ckpt, cfg);
      const auto batch = random_batch(m, grad_batch.value_or(cfg.audit.grad_batch), cfg.seed);
      const auto r = audit_gradients(m, batch, fd_step.value_or(cfg.audit.fd_step),
                                     grad_tol.value_or(cfg.audit.grad_tolerance),
                                     max_coords.value_or(cfg.audit.max_coords), cfg.seed);
      print_summaries(r);
      if (!g.out.empty()) write_text(fs::path(g.out) / "audit_gradients.json", r.to_json());
      return r.pass ? kPass : kAuditFail;
    }
    if (*train) {
      const auto cfg = resolve_config(g);
      TrainOptions opts;
      opts.out_dir = g.out.empty() ? fs::path("steerkit-run") : fs::path(g.out);
      opts.resume = resume;
      opts.stop_after = stop_after;
      if (!quiet) opts.progress = &std::cout;
      const auto r = run_training(cfg, opts);
      std::cout << "metrics: " << r.metrics.string() << "\ncheckpoint: " << r.checkpoint.string() << "\n";
      return kPass;
    }
    if (*eval) {
      ExperimentConfig cfg;
      Model m = make_model(g, eval_ckpt, cfg);
      const auto e = evaluate(m, cfg, load_datasets(cfg));
      const nlohmann::json j = {{"count", e.count},
                                {"accuracy", e.accuracy},
                                {"unrotated_accuracy", e.unrotated_accuracy},
                                {"rotated_accuracy", e.rotated},
                                {"rotated_mean", e.rotated_mean},
                                {"rotated_std", e.rotated_std}};
      std::cout << j.dump(2) << "\n";
      if (!g.out.empty()) write_text(fs::path(g.out) / "eval.json", j.dump(2));
      return kPass;
    }
    if (*attn) {
      ExperimentConfig cfg;
      Model m = make_model(g, attn_ckpt, cfg);
      const auto data = load_datasets(cfg);
      if (attn_index < 0 || attn_index >= static_cast<int>(data.test.fields.size()))
        throw std::invalid_argument("--index " + std::to_string(attn_index) + " outside the test set");
      FourierField x = data.test.fields[attn_index];
      if (attn_quarter_turns % 4 != 0)
        x = act_group(x, GroupElement::pure_rotation(Rotation::so2(attn_quarter_turns * std::numbers::pi / 2)),
                      Interpolation::ExactPermutation);
      const auto files =
          export_attention_maps(m, x, attn_layer, attn_heads, g.out.empty() ? fs::path("attention") : fs::path(g.out));
      for (const auto& f : files) std::cout << f.string() << "\n";
      return kPass;
    }
    if (*gen) {
      const auto cfg = resolve_config(g);
      if (cfg.dataset.kind != "synthetic")
        throw ConfigError("dataset.kind", "dataset.kind: gen-data writes the synthetic dataset");
      if (cfg.model.input_size < 12)
        throw ConfigError("architecture.input_size", "architecture.input_size: synthetic shapes need at least 12 pixels");
      const fs::path out = g.out.empty() ? fs::path("data") : fs::path(g.out);
      fs::create_directories(out);
      const auto sets = synthetic_samples(cfg);
      const int n = cfg.model.input_size;
      for (auto [name, samples] : {std::pair{"train", &sets.train}, {"test", &sets.test}}) {
        IdxImages images{static_cast<int>(samples->size()), n, n, to_bytes(render_shapes(*samples, n))};
        std::vector<std::uint8_t> labels;
        for (const auto& s : *samples) labels.push_back(static_cast<std::uint8_t>(s.label));
        write_idx_images(out / (std::string(name) + "-images.idx"), images);
        write_idx_labels(out / (std::string(name) + "-labels.idx"), labels);
        std::cout << (out / (std::string(name) + "-images.idx")).string() << "\n"
                  << (out / (std::string(name) + "-labels.idx")).string() << "\n";
      }
      if (goldens) {
        const auto& names = glyph_names();
        for (size_t k = 0; k < names.size(); ++k) {
          const auto img = render_glyph(static_cast<int>(k), n, 0.0, 0.0, 0.0);
          std::string text;
          char buf[32];
          for (int y = 0; y < n; ++y) {
            for (int x = 0; x < n; ++x) {
              std::snprintf(buf, sizeof buf, x ? " %.17g" : "%.17g", img[static_cast<size_t>(y) * n + x]);
              text += buf;
            }
            if (y + 1 < n) text += "\n";
          }
          write_text(out / ("glyph_" + names[k] + ".txt"), text);
        }
      }
      return kPass;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const FormatError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kUsage;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure in " << e.layer() << ": " << e.what() << "\n";
    return kAuditFail;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
