#include "steerkit/audit.hpp"
#include "steerkit/errors.hpp"
#include "steerkit/group.hpp"
#include "steerkit/train.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <memory>
#include <optional>

namespace py = pybind11;
using namespace steerkit;

namespace {

using CArray = py::array_t<cplx>;
using DArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

Rotation rotation_from(int dim, const DArray& m) {
  if (m.ndim() != 2 || m.shape(0) != dim || m.shape(1) != dim)
    throw std::invalid_argument("rotation must be a " + std::to_string(dim) + "x" + std::to_string(dim) + " array");
  std::array<double, 9> full{};
  for (int r = 0; r < 3; ++r) full[r * 3 + r] = 1.0;
  auto a = m.unchecked<2>();
  for (int r = 0; r < dim; ++r)
    for (int c = 0; c < dim; ++c) full[r * 3 + c] = a(r, c);
  return Rotation::from_matrix(dim, full);
}

DArray rotation_array(const Rotation& r) {
  const int d = r.dim();
  DArray out({d, d});
  auto a = out.mutable_unchecked<2>();
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) a(i, j) = r(i, j);
  return out;
}

// Images as (n, s, s) or (n, s, s, s) arrays, x fastest.
std::vector<FourierField> lift_all(const Model& m, const DArray& images) {
  const auto& c = m.config();
  if (images.ndim() != c.dim + 1)
    throw std::invalid_argument("images must have shape (n" + std::string(c.dim == 2 ? ", s, s)" : ", s, s, s)"));
  for (int a = 1; a <= c.dim; ++a)
    if (images.shape(a) != c.input_size)
      throw std::invalid_argument("image side must be " + std::to_string(c.input_size));
  const size_t pixels = static_cast<size_t>(images.size() / std::max<py::ssize_t>(1, images.shape(0)));
  std::vector<FourierField> out;
  for (py::ssize_t i = 0; i < images.shape(0); ++i)
    out.push_back(m.lift(std::span<const double>(images.data() + i * pixels, pixels)));
  return out;
}

DArray map_array(const FourierField& f) {
  DArray out({f.num_sites(), f.channels()});
  auto a = out.mutable_unchecked<2>();
  for (int s = 0; s < f.num_sites(); ++s)
    for (int c = 0; c < f.channels(); ++c) a(s, c) = f.at(0, s, 0, c).real();
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Steerable transformer core";

  auto config_error = py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  (void)config_error;

  m.def("parse_config", [](const std::string& text) { return config_to_json(parse_config(text)); },
        "Validate a JSON config and return it with every default filled in.");

  m.def("irrep_matrix",
        [](int dim, int index, const DArray& rotation) {
          const IrrepId id = dim == 2 ? IrrepId::so2(index) : IrrepId::so3(index);
          const CMatrix d = irrep_eval(id, rotation_from(dim, rotation));
          CArray out({d.rows, d.cols});
          std::copy(d.data.begin(), d.data.end(), out.mutable_data());
          return out;
        },
        py::arg("dim"), py::arg("index"), py::arg("rotation"));
  m.def("haar_rotation", [](int dim, std::uint64_t seed) { return rotation_array(haar_random_rotation(group_for_dim(dim), seed)); },
        py::arg("dim"), py::arg("seed"));
  m.def("clebsch_gordan",
        [](int l1, int l2, int l) {
          const CGBlock& b = clebsch_gordan(l1, l2, l);
          DArray out({2 * l1 + 1, 2 * l2 + 1, 2 * l + 1});
          std::copy(b.values().begin(), b.values().end(), out.mutable_data());
          return out;
        },
        py::arg("l1"), py::arg("l2"), py::arg("l"));
  m.def("spherical_harmonics",
        [](int l, const std::array<double, 3>& x) {
          const auto y = spherical_harmonics(l, x);
          CArray out(static_cast<py::ssize_t>(y.size()));
          std::copy(y.begin(), y.end(), out.mutable_data());
          return out;
        },
        py::arg("l"), py::arg("direction"));

  m.def("audit_equivariance",
        [](const std::string& config, const std::string& target, const std::string& mode, std::optional<int> samples,
           std::optional<double> tolerance, std::optional<std::uint64_t> seed, int threads) {
          const auto cfg = parse_config(config);
          auto o = audit_options(cfg, parse_audit_mode(mode));
          if (samples) o.samples = *samples;
          if (tolerance) o.tolerance = *tolerance;
          if (seed) o.seed = *seed;
          o.threads = threads;
          py::gil_scoped_release release;
          return audit_equivariance(cfg, target, o).to_json();
        },
        py::arg("config"), py::arg("target") = "all", py::arg("mode") = "point-set", py::arg("samples") = py::none(),
        py::arg("tolerance") = py::none(), py::arg("seed") = py::none(), py::arg("threads") = 0);

  m.def("train",
        [](const std::string& config, const std::filesystem::path& out_dir, const std::filesystem::path& resume,
           int stop_after) {
          const auto cfg = parse_config(config);
          TrainOptions o{out_dir, resume, stop_after, nullptr};
          TrainResult r;
          {
            py::gil_scoped_release release;
            r = run_training(cfg, o);
          }
          py::list history;
          for (const auto& e : r.history)
            history.append(py::dict(py::arg("epoch") = e.epoch, py::arg("loss") = e.loss,
                                    py::arg("train_accuracy") = e.train_accuracy,
                                    py::arg("test_accuracy") = e.test_accuracy, py::arg("lr") = e.lr));
          return history;
        },
        py::arg("config"), py::arg("out_dir"), py::arg("resume") = std::filesystem::path(), py::arg("stop_after") = -1);

  m.def("evaluate",
        [](const std::filesystem::path& checkpoint, std::optional<std::string> config) {
          ExperimentConfig cfg;
          std::unique_ptr<Model> model;
          if (config) {
            cfg = parse_config(*config);
            model = std::make_unique<Model>(cfg.model);
            load_checkpoint(checkpoint, model->params());
          } else {
            model = std::make_unique<Model>(load_model(checkpoint, &cfg));
          }
          EvalResult r;
          {
            py::gil_scoped_release release;
            r = evaluate(*model, cfg, load_datasets(cfg));
          }
          return py::dict(py::arg("count") = r.count, py::arg("accuracy") = r.accuracy,
                          py::arg("unrotated_accuracy") = r.unrotated_accuracy, py::arg("rotated") = r.rotated,
                          py::arg("rotated_mean") = r.rotated_mean, py::arg("rotated_std") = r.rotated_std);
        },
        py::arg("checkpoint"), py::arg("config") = py::none());

  py::class_<Model>(m, "Model")
      .def(py::init([](const std::string& config, std::optional<std::uint64_t> seed) {
             const auto cfg = parse_config(config);
             auto model = std::make_unique<Model>(cfg.model);
             auto rng = derived_rng(seed.value_or(cfg.seed), {1});
             model->init(rng);
             return model;
           }),
           py::arg("config"), py::arg("seed") = py::none())
      .def_static("load", [](const std::filesystem::path& checkpoint) { return std::make_unique<Model>(load_model(checkpoint)); })
      .def_property_readonly("num_parameters", [](const Model& self) { return self.params().params.size(); })
      .def_property_readonly("classes", [](const Model& self) { return self.config().classes; })
      .def("logits",
           [](Model& self, const DArray& images) {
             const auto fields = lift_all(self, images);
             std::vector<std::vector<double>> logits;
             {
               py::gil_scoped_release release;
               logits = self.forward(fields, {});
             }
             DArray out({static_cast<py::ssize_t>(logits.size()), static_cast<py::ssize_t>(self.config().classes)});
             for (size_t i = 0; i < logits.size(); ++i) std::copy(logits[i].begin(), logits[i].end(), out.mutable_data(i, 0));
             return out;
           },
           py::arg("images"), "Eval-mode logits, one row per image.")
      .def("attention_maps",
           [](const Model& self, DArray image, int layer) {
             std::vector<py::ssize_t> shape{1};
             for (py::ssize_t a = 0; a < image.ndim(); ++a) shape.push_back(image.shape(a));
             const auto fields = lift_all(self, DArray::ensure(image.reshape(shape)));
             py::list out;
             for (const auto& f : attention_maps(self, fields[0], layer)) out.append(map_array(f));
             return out;
           },
           py::arg("image"), py::arg("layer") = 0,
           "Per-head max_j attention weight, shape (sites, irreps), for one image.");
}
