#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "restorekit/align.hpp"
#include "restorekit/cli.hpp"
#include "restorekit/diffusion.hpp"
#include "restorekit/error.hpp"
#include "restorekit/evalkit.hpp"
#include "restorekit/io.hpp"
#include "restorekit/rng.hpp"

namespace py = pybind11;
using namespace restorekit;
using nlohmann::json;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

// Python side uses (H, W, 3) arrays; the library stores planes.
Image to_image(const Array& a) {
  if (a.ndim() != 3 || a.shape(2) != 3) throw ShapeError("expected an array of shape (H, W, 3)");
  const int h = static_cast<int>(a.shape(0)), w = static_cast<int>(a.shape(1));
  Image img(h, w);
  auto r = a.unchecked<3>();
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) img.at(c, y, x) = r(y, x, c);
  return img;
}

Array to_array(const Image& img) {
  Array a({img.height(), img.width(), 3});
  auto m = a.mutable_unchecked<3>();
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x) m(y, x, c) = img.at(c, y, x);
  return a;
}

py::object to_py(const json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

json from_py(const py::object& o) {
  return json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

struct Schedule {
  SchedulePlan plan;
};

class Model {
 public:
  explicit Model(const std::string& path) : loaded_(load_checkpoint(read_file(path))) {}
  Array restore(const Array& lq, int steps, std::uint64_t seed) const {
    const auto plan = build_schedule(loaded_.meta.schedule);
    return to_array(sample(plan, loaded_.denoiser, to_image(lq), steps, seed));
  }
  py::dict meta() const {
    py::dict d;
    d["schedule"] = to_py(loaded_.meta.schedule);
    d["strategy"] = loaded_.meta.strategy;
    d["iteration"] = loaded_.meta.iteration;
    d["phase"] = loaded_.meta.phase;
    return d;
  }

 private:
  LoadedDenoiser loaded_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "restorekit core bindings";

  auto base = py::register_exception<Error>(m, "RestorekitError", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base);
  py::register_exception<ShapeError>(m, "ShapeError", base);
  py::register_exception<ValidationError>(m, "ValidationError", base);
  py::register_exception<SizeError>(m, "SizeError", base);

  py::class_<Schedule>(m, "Schedule")
      .def_property_readonly("T", [](const Schedule& s) { return s.plan.T(); })
      .def_property_readonly("alpha_bar", [](const Schedule& s) { return s.plan.alpha_bar(); })
      .def_property_readonly("beta_bar", [](const Schedule& s) { return s.plan.beta_bar(); })
      .def_property_readonly("delta_bar", [](const Schedule& s) { return s.plan.delta_bar(); })
      .def_property_readonly("gamma_bar", [](const Schedule& s) { return s.plan.gamma_bar(); })
      .def("timesteps", [](const Schedule& s, int k) { return subsample_timesteps(s.plan, k); }, py::arg("k"));

  m.def(
      "build_schedule",
      [](int T, double gamma_T, const std::string& shape, double delta_max) {
        return Schedule{build_schedule({T, gamma_T, schedule_shape_from_string(shape), delta_max})};
      },
      py::arg("T") = 100, py::arg("gamma_T") = 0.3, py::arg("shape") = "linear", py::arg("delta_max") = 0.05);

  m.def(
      "forward_sample",
      [](const Schedule& s, const Array& hq, const Array& lq, int t, const Array& noise) {
        return to_array(forward_sample(s.plan, to_image(hq), to_image(lq), t, to_image(noise)));
      },
      py::arg("schedule"), py::arg("hq"), py::arg("lq"), py::arg("t"), py::arg("noise"));

  m.def(
      "sample_with",
      [](const Schedule& s, const std::function<Array(Array, Array, int)>& fn, const Array& lq, int steps,
         std::uint64_t seed) {
        struct Callback : Denoiser {
          const std::function<Array(Array, Array, int)>* f;
          Image predict(const Image& x, const Image& lq, int t) const override {
            return to_image((*f)(to_array(x), to_array(lq), t));
          }
        } cb;
        cb.f = &fn;
        return to_array(sample(s.plan, cb, to_image(lq), steps, seed));
      },
      py::arg("schedule"), py::arg("predict"), py::arg("lq"), py::arg("steps") = 4, py::arg("seed") = 0,
      "Few-step sampler with a Python residual predictor predict(x_t, lq, t).");

  m.def("taxonomy", &taxonomy);
  m.def("isolated_categories", &isolated_categories);
  m.def("coupled_categories", &coupled_categories);
  m.def(
      "degrade",
      [](const Array& clean, const std::string& category, std::uint64_t seed) {
        Rng rng(seed);
        const DegradationSpec spec = sample_spec(category, rng);
        return py::make_tuple(to_array(apply(spec, to_image(clean))), to_py(spec));
      },
      py::arg("clean"), py::arg("category"), py::arg("seed") = 0,
      "Degrade a clean image; returns (lq, spec).");
  m.def("procedural_image", [](int h, int w, std::uint64_t seed) { return to_array(procedural_image(h, w, seed)); },
        py::arg("height"), py::arg("width"), py::arg("seed") = 0);

  m.def("psnr", [](const Array& a, const Array& b, double peak) { return psnr(to_image(a), to_image(b), peak); },
        py::arg("a"), py::arg("b"), py::arg("peak") = 1.0);
  m.def("ssim", [](const Array& a, const Array& b, double peak) { return ssim(to_image(a), to_image(b), peak); },
        py::arg("a"), py::arg("b"), py::arg("peak") = 1.0);
  m.def(
      "tile_restore",
      [](const std::function<Array(Array)>& fn, const Array& img, int tile, int overlap) {
        const RestoreFn wrapped = [&](const Image& x) { return to_image(fn(to_array(x))); };
        return to_array(tile_restore(wrapped, to_image(img), tile, overlap));
      },
      py::arg("fn"), py::arg("image"), py::arg("tile"), py::arg("overlap"));

  m.def(
      "match_sequences",
      [](const py::object& records, double tolerance) {
        const auto recs = from_py(records).get<std::vector<SequenceRecord>>();
        std::vector<SequenceRecord> gts, lqs;
        for (const auto& r : recs) (r.role == SequenceRole::kGT ? gts : lqs).push_back(r);
        return to_py(to_json(match_sequences(gts, lqs, tolerance)));
      },
      py::arg("records"), py::arg("tolerance") = 0.2);

  m.def("preset_config", [](const std::string& name) { return to_py(to_json(preset_config(name))); },
        py::arg("name") = "desk");
  m.def("parse_config", [](const py::object& o) { return to_py(to_json(parse_run_config(from_py(o)))); },
        py::arg("config"), "Validate a partial config and return it with preset defaults filled in.");

  py::class_<Model>(m, "Model")
      .def(py::init<const std::string&>(), py::arg("checkpoint"))
      .def("restore", &Model::restore, py::arg("lq"), py::arg("steps") = 4, py::arg("seed") = 0)
      .def_property_readonly("meta", &Model::meta);

  m.def(
      "run",
      [](const std::vector<std::string>& args) {
        std::vector<std::string> full = {"restorekit"};
        full.insert(full.end(), args.begin(), args.end());
        std::vector<const char*> argv;
        for (const auto& a : full) argv.push_back(a.c_str());
        std::ostringstream out, err;
        int status;
        {
          py::gil_scoped_release release;
          status = run_command(static_cast<int>(argv.size()), argv.data(), out, err);
        }
        return py::make_tuple(status, out.str(), err.str());
      },
      py::arg("args"), "Run a restorekit command in-process; returns (status, stdout, stderr).");
}
