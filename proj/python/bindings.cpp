#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "ucomp/checkpoint.hpp"
#include "ucomp/cli.hpp"
#include "ucomp/data.hpp"
#include "ucomp/error.hpp"
#include "ucomp/geometry.hpp"
#include "ucomp/inference.hpp"

namespace py = pybind11;
using namespace ucomp;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

PointCloud to_cloud(const Array& a) {
  if (a.ndim() != 2 || a.shape(1) != 3) throw ShapeError("expected an (n, 3) array");
  const auto n = static_cast<std::size_t>(a.shape(0));
  return PointCloud(Tensor({n, 3}, std::vector<double>(a.data(), a.data() + 3 * n)));
}

Array to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Array out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

Array to_array(const PointCloud& c) { return to_array(c.tensor()); }

std::vector<PointCloud> to_clouds(const std::vector<Array>& arrays) {
  std::vector<PointCloud> out;
  for (const auto& a : arrays) out.push_back(to_cloud(a));
  return out;
}

Reduction reduction(const std::string& name) { return parse_reduction(name); }

}  // namespace

PYBIND11_MODULE(_ucomp, m) {
  m.doc() = "Unpaired point cloud completion engine";

  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  m.def("full_chamfer", [](const Array& a, const Array& b, const std::string& r) {
    return full_chamfer(to_cloud(a), to_cloud(b), reduction(r));
  }, py::arg("a"), py::arg("b"), py::arg("reduction") = "mean");
  m.def("partial_chamfer", [](const Array& from, const Array& to, const std::string& r) {
    return partial_chamfer(to_cloud(from), to_cloud(to), reduction(r));
  }, py::arg("source"), py::arg("target"), py::arg("reduction") = "mean");
  m.def("eval_metric", [](const Array& pred, const Array& truth) {
    return eval_metric(to_cloud(pred), to_cloud(truth));
  }, "Mean-reduced Chamfer distance scaled by 1e4.");
  m.def("normalize", [](const Array& a) { return to_array(normalize_to_unit_cube(to_cloud(a))); });

  m.def("generate_complete", [](const std::string& category, std::size_t points, std::uint64_t seed) {
    Rng rng(seed);
    return to_array(generate_complete(parse_category(category), points, rng));
  }, py::arg("category"), py::arg("points") = 2048, py::arg("seed") = 0);
  m.def("make_partial", [](const Array& cloud, std::array<double, 3> view, double tau, std::size_t resolution,
                           std::uint64_t seed) {
    Rng rng(seed);
    const PointCloud c = to_cloud(cloud);
    return to_array(make_partial(c, view, tau, resolution ? resolution : c.size(), rng));
  }, py::arg("cloud"), py::arg("view"), py::arg("tau") = 0.5, py::arg("resolution") = 0, py::arg("seed") = 0);
  m.def("view_directions", [] {
    const auto v = view_directions();
    return std::vector<std::array<double, 3>>(v.begin(), v.end());
  });

  m.def("read_xyz", [](const std::string& p) { return to_array(read_xyz(p)); });
  m.def("write_xyz", [](const std::string& p, const Array& a) { write_xyz(p, to_cloud(a)); });
  m.def("read_ply", [](const std::string& p) { return to_array(read_ply(p)); });
  m.def("write_ply", [](const std::string& p, const Array& a) { write_ply(p, to_cloud(a)); });

  py::class_<NetworkBundle>(m, "Model")
      .def_static("load", [](const std::string& path) { return load_networks(read_checkpoint(path)); })
      .def_property_readonly("points", [](const NetworkBundle& n) { return n.config().points; })
      .def_property_readonly("code_dim", [](const NetworkBundle& n) { return n.transfer_y.code_dim(); })
      .def("complete", [](const NetworkBundle& n, const std::vector<Array>& partials) {
        const auto clouds = to_clouds(partials);
        std::vector<Array> out;
        for (const auto& c : complete_clouds(n, clouds)) out.push_back(to_array(c));
        return out;
      }, "Completions of a list of partial clouds sharing one point count.")
      .def("predict_incomplete", [](const NetworkBundle& n, const std::vector<Array>& completes,
                                    std::optional<Array> codes) {
        const auto clouds = to_clouds(completes);
        Tensor z;
        if (codes) {
          const Array& c = *codes;
          if (c.ndim() != 2) throw ShapeError("codes must be a 2-d array");
          z = Tensor({static_cast<std::size_t>(c.shape(0)), static_cast<std::size_t>(c.shape(1))},
                     std::vector<double>(c.data(), c.data() + c.size()));
        }
        std::vector<Array> out;
        for (const auto& c : predict_incomplete(n, clouds, z)) out.push_back(to_array(c));
        return out;
      }, py::arg("completes"), py::arg("codes") = py::none())
      .def("complete_representation", [](const NetworkBundle& n, const std::vector<Array>& completes) {
        return to_array(complete_representation(n, to_clouds(completes)));
      })
      .def("transferred_representation", [](const NetworkBundle& n, const std::vector<Array>& partials) {
        return to_array(transferred_representation(n, to_clouds(partials)));
      });

  m.def("run_cli", [](std::vector<std::string> args) {
    args.insert(args.begin(), "ucomp");
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return py::make_tuple(code, out.str(), err.str());
  }, "Runs `ucomp <args>` in-process; returns (exit code, stdout, stderr).");
}
