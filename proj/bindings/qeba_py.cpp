#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>

#include "qeba/attack.hpp"
#include "qeba/directions.hpp"
#include "qeba/experiment.hpp"
#include "qeba/gradest.hpp"
#include "qeba/subspace.hpp"
#include "qeba/theory.hpp"

namespace py = pybind11;
using namespace qeba;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Image to_image(const Array& arr) {
  if (arr.ndim() != 3) {
    throw DimensionError("expected a (C, H, W) array");
  }
  const ImageShape shape{static_cast<int>(arr.shape(0)),
                         static_cast<int>(arr.shape(1)),
                         static_cast<int>(arr.shape(2))};
  Eigen::VectorXd data(shape.size());
  std::copy(arr.data(), arr.data() + shape.size(), data.data());
  return Image(shape, std::move(data));
}

Array from_image(const Image& img) {
  Array arr({static_cast<py::ssize_t>(img.shape.channels),
             static_cast<py::ssize_t>(img.shape.height),
             static_cast<py::ssize_t>(img.shape.width)});
  std::copy(img.data.data(), img.data.data() + img.size(),
            arr.mutable_data());
  return arr;
}

Eigen::VectorXd to_vector(const Array& arr) {
  Eigen::VectorXd v(arr.size());
  std::copy(arr.data(), arr.data() + arr.size(), v.data());
  return v;
}

Array from_vector(const Eigen::VectorXd& v) {
  return Array(std::vector<py::ssize_t>{static_cast<py::ssize_t>(v.size())},
               v.data());
}

Array from_matrix(const Eigen::MatrixXd& m) {
  Array arr({static_cast<py::ssize_t>(m.rows()),
             static_cast<py::ssize_t>(m.cols())});
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      arr.mutable_at(i, j) = m(i, j);
    }
  }
  return arr;
}

py::dict estimate_to_dict(const GradEstimate& est) {
  py::dict out;
  out["direction"] = from_vector(est.direction);
  out["raw"] = from_vector(est.raw);
  out["batch"] = est.batch;
  out["delta"] = est.delta;
  out["queries_used"] = est.queries_used;
  out["degenerate"] = est.degenerate;
  return out;
}

py::dict report_to_dict(const BoundReport& r) {
  py::dict out;
  out["n"] = r.n;
  out["B"] = r.batch;
  out["rho"] = r.rho;
  out["delta"] = r.delta;
  out["L"] = r.lipschitz;
  out["grad_norm"] = r.grad_norm;
  out["c_n"] = r.c_n;
  out["lower"] = r.lower;
  out["upper"] = r.upper;
  out["measured"] = r.measured;
  out["stderr"] = r.stderr_mean;
  out["trials"] = r.trials;
  out["measured_proj"] = r.measured_proj;
  out["stderr_proj"] = r.stderr_proj;
  return out;
}

}  // namespace

PYBIND11_MODULE(_qeba, m) {
  m.doc() = "Query-efficient decision-only blackbox attack toolkit";

  py::register_exception<ConfigError>(m, "ConfigError");
  py::register_exception<QueryBudgetError>(m, "QueryBudgetError");

  // ----- core -----
  m.def(
      "mse", [](const Array& a, const Array& b) { return mse(to_image(a), to_image(b)); },
      py::arg("a"), py::arg("b"),
      "Mean squared error between two (C, H, W) images");
  m.def(
      "l2", [](const Array& v) { return to_vector(v).norm(); }, py::arg("v"));
  m.def(
      "sample_unit_directions",
      [](Eigen::Index n, Eigen::Index batch, std::uint64_t seed,
         bool orthogonalize) {
        RngStream rng(seed);
        return from_matrix(sample_unit_directions(n, batch, rng, orthogonalize));
      },
      py::arg("n"), py::arg("B"), py::arg("seed"),
      py::arg("orthogonalize") = false,
      "B unit directions in R^n as an (n, B) array");
  m.def(
      "discretize",
      [](const Array& x) { return from_image(discretize(to_image(x))); },
      py::arg("x"), "Round every pixel onto the 8-bit grid");
  m.def(
      "smooth_image",
      [](int channels, int height, int width, std::uint64_t seed,
         double amplitude) {
        return from_image(
            smooth_image({channels, height, width}, seed, amplitude));
      },
      py::arg("channels"), py::arg("height"), py::arg("width"),
      py::arg("seed"), py::arg("amplitude") = 0.4);
  m.def(
      "save_qimg",
      [](const Array& img, const std::filesystem::path& path) {
        save_qimg(to_image(img), path);
      },
      py::arg("image"), py::arg("path"));
  m.def(
      "load_qimg",
      [](const std::filesystem::path& path) {
        return from_image(load_qimg(path));
      },
      py::arg("path"));

  // ----- victims and oracles -----
  py::class_<AnalyticVictim>(m, "Victim")
      .def_property_readonly("dim",
                             [](const AnalyticVictim& v) { return v.dim; })
      .def_property_readonly(
          "lipschitz",
          [](const AnalyticVictim& v) -> std::optional<double> {
            return v.grad_lipschitz;
          })
      .def(
          "score",
          [](const AnalyticVictim& v, const Array& x) {
            return v.score(to_vector(x));
          },
          py::arg("x"))
      .def(
          "grad",
          [](const AnalyticVictim& v, const Array& x) {
            return from_vector(v.grad(to_vector(x)));
          },
          py::arg("x"))
      .def(
          "sign",
          [](const AnalyticVictim& v, const Array& x) {
            return v.sign(to_vector(x));
          },
          py::arg("x"), "Whitebox sign of the score (not query-counted)");

  m.def(
      "linear_victim",
      [](const Array& w, double b) {
        return make_linear_victim(to_vector(w), b);
      },
      py::arg("w"), py::arg("b"));
  m.def(
      "quadratic_victim",
      [](const Array& center, double radius) {
        return make_quadratic_victim(to_image(center), radius);
      },
      py::arg("center"), py::arg("radius"));
  m.def("mlp_victim", &make_mlp_victim, py::arg("weights_file"),
        py::arg("mal_class") = 0);

  py::class_<HardLabelOracle>(m, "Oracle")
      .def(py::init([](const AnalyticVictim& victim,
                       std::optional<std::uint64_t> budget, bool discretized) {
             return discretized
                        ? HardLabelOracle::from_victim_discretized(victim,
                                                                   budget)
                        : HardLabelOracle::from_victim(victim, budget);
           }),
           py::arg("victim"), py::arg("budget") = py::none(),
           py::arg("discretized") = false)
      .def(
          "phi",
          [](HardLabelOracle& o, const Array& x) { return o.phi(to_image(x)); },
          py::arg("x"), "Hard-label decision in {-1, +1}; counts one query")
      .def_property_readonly("query_count", &HardLabelOracle::query_count)
      .def_property_readonly("remaining", &HardLabelOracle::remaining);

  // ----- subspaces -----
  py::class_<SubspaceBasis>(m, "Basis")
      .def_property_readonly("n", &SubspaceBasis::n)
      .def_property_readonly("m", &SubspaceBasis::m)
      .def_property_readonly("orthonormal", &SubspaceBasis::orthonormal)
      .def(
          "forward",
          [](const SubspaceBasis& b, const Array& v) {
            return from_vector(b.forward(to_vector(v)));
          },
          py::arg("v"))
      .def(
          "adjoint",
          [](const SubspaceBasis& b, const Array& x) {
            return from_vector(b.adjoint(to_vector(x)));
          },
          py::arg("x"))
      .def("matrix", [](const SubspaceBasis& b) {
        return from_matrix(b.materialize());
      });

  m.def("full_basis", &SubspaceBasis::full, py::arg("m"));
  m.def(
      "spatial_basis",
      [](int channels, int height, int width, int r, bool orthonormalize) {
        return SubspaceBasis::spatial({channels, height, width}, r,
                                      orthonormalize);
      },
      py::arg("channels"), py::arg("height"), py::arg("width"), py::arg("r"),
      py::arg("orthonormalize") = false);
  m.def(
      "dct_basis",
      [](int channels, int side, int r) {
        return SubspaceBasis::dct({channels, side, side}, r);
      },
      py::arg("channels"), py::arg("side"), py::arg("r"));
  m.def(
      "random_basis",
      [](Eigen::Index m_dim, Eigen::Index n, std::uint64_t seed) {
        RngStream rng(seed);
        return SubspaceBasis::random_orthonormal(m_dim, n, rng);
      },
      py::arg("m"), py::arg("n"), py::arg("seed"));
  m.def(
      "aligned_basis",
      [](const Array& g, Eigen::Index n, std::uint64_t seed) {
        RngStream rng(seed);
        return SubspaceBasis::span_containing(to_vector(g), n, rng);
      },
      py::arg("g"), py::arg("n"), py::arg("seed"),
      "Orthonormal basis whose span contains g");
  m.def(
      "rho",
      [](const SubspaceBasis& basis, const Array& g) {
        return rho(basis, to_vector(g));
      },
      py::arg("basis"), py::arg("g"),
      "Captured fraction of the gradient norm");
  m.def("save_basis", &save_basis, py::arg("basis"), py::arg("path"));
  m.def("load_basis", &load_basis, py::arg("path"));
  m.def(
      "build_gradient_store",
      [](const std::vector<AnalyticVictim>& victims,
         const std::vector<Array>& probes, const std::filesystem::path& path) {
        std::vector<Image> images;
        images.reserve(probes.size());
        for (const auto& p : probes) images.push_back(to_image(p));
        build_gradient_store(victims, images, path);
      },
      py::arg("victims"), py::arg("probes"), py::arg("path"));
  m.def(
      "pca_basis",
      [](const std::filesystem::path& store_path, Eigen::Index n,
         Eigen::Index oversample, int power_iters, std::uint64_t seed) {
        RngStream rng(seed);
        return pca_basis(GradientStore::open(store_path), n, oversample,
                         power_iters, rng);
      },
      py::arg("store_path"), py::arg("n"), py::arg("oversample") = 10,
      py::arg("power_iters") = 2, py::arg("seed") = 0);

  // ----- gradient estimation -----
  m.def(
      "estimate_gradient",
      [](const Array& x, const SubspaceBasis& basis, Eigen::Index batch,
         double delta, HardLabelOracle& oracle, std::uint64_t seed,
         bool orthogonalize, bool control_variate, bool discretized) {
        RngStream rng(seed);
        GradEstimateOptions options;
        options.orthogonalize = orthogonalize;
        options.control_variate = control_variate;
        const Image image = to_image(x);
        const GradEstimate est =
            discretized
                ? estimate_gradient_discretized(image, basis, batch, delta,
                                                oracle, rng, options)
                : estimate_gradient(image, basis, batch, delta, oracle, rng,
                                    options);
        return estimate_to_dict(est);
      },
      py::arg("x"), py::arg("basis"), py::arg("B"), py::arg("delta"),
      py::arg("oracle"), py::arg("seed"), py::arg("orthogonalize") = false,
      py::arg("control_variate") = false, py::arg("discretized") = false);

  // ----- attack -----
  m.def("step_size", &step_size, py::arg("t"), py::arg("dist"));
  m.def(
      "probe_delta",
      [](double dist, Eigen::Index m_dim) -> std::optional<double> {
        return probe_delta(dist, m_dim);
      },
      py::arg("dist"), py::arg("m"),
      "dist/m, or None once the attack has converged");
  m.def(
      "binary_search_projection",
      [](const Array& target, const Array& x_hat, HardLabelOracle& oracle,
         double theta) {
        double alpha = 0.0;
        const Image out = binary_search_projection(to_image(target),
                                                   to_image(x_hat), oracle,
                                                   theta, &alpha);
        return py::make_tuple(from_image(out), alpha);
      },
      py::arg("target"), py::arg("x_hat"), py::arg("oracle"),
      py::arg("theta"));
  m.def(
      "run_attack",
      [](const AnalyticVictim& victim, const Array& source,
         const Array& target, const SubspaceBasis& basis, Eigen::Index batch,
         std::uint64_t max_queries, double theta, std::uint64_t seed,
         bool discretized) {
        AttackConfig config;
        config.source = to_image(source);
        config.target = to_image(target);
        config.batch = batch;
        config.max_queries = max_queries;
        config.theta = theta;
        config.seed = seed;
        config.discretized = discretized;
        auto oracle =
            discretized
                ? HardLabelOracle::from_victim_discretized(victim, max_queries)
                : HardLabelOracle::from_victim(victim, max_queries);
        const AttackTrace trace = run_attack(config, oracle, basis);

        py::list records;
        for (const auto& rec : trace.records) {
          py::dict row;
          row["iteration"] = rec.iteration;
          row["cumulative_queries"] = rec.cumulative_queries;
          row["mse"] = rec.mse;
          row["xi"] = rec.xi;
          row["delta"] = rec.delta;
          row["alpha"] = rec.alpha;
          row["step_failures"] = rec.step_failures;
          records.append(row);
        }
        py::dict out;
        out["records"] = records;
        out["final_image"] = from_image(trace.final_image);
        out["converged"] = trace.converged;
        out["queries"] = oracle.query_count();
        return out;
      },
      py::arg("victim"), py::arg("source"), py::arg("target"),
      py::arg("basis"), py::arg("B") = 100, py::arg("max_queries") = 20000,
      py::arg("theta") = 1e-3, py::arg("seed") = 0,
      py::arg("discretized") = false,
      "Full attack loop; returns the trace records and the final image");

  // ----- theory -----
  m.def("c_coefficient", &c_coefficient, py::arg("n"));
  m.def("expected_cosine", &expected_cosine, py::arg("n"), py::arg("B"),
        py::arg("rho"),
        "Limit cosine c_n*sqrt(rho*B/n); rho is the captured energy "
        "fraction");
  m.def("lower_bound_factor", &lower_bound_factor, py::arg("n"),
        py::arg("delta"), py::arg("lipschitz"), py::arg("grad_norm"));
  m.def("coordinate_density", &coordinate_density, py::arg("x"), py::arg("n"));
  m.def(
      "measure_cosine",
      [](const AnalyticVictim& victim, const Array& point,
         const SubspaceBasis& basis, Eigen::Index batch, double delta,
         Eigen::Index trials, std::uint64_t seed, bool orthogonalize) {
        RngStream rng(seed);
        return report_to_dict(measure_cosine(victim, to_image(point), basis,
                                             batch, delta, trials, rng,
                                             orthogonalize));
      },
      py::arg("victim"), py::arg("point"), py::arg("basis"), py::arg("B"),
      py::arg("delta"), py::arg("trials"), py::arg("seed"),
      py::arg("orthogonalize") = true,
      "Whitebox Monte Carlo validation of the cosine bounds");
  m.def(
      "linear_boundary_point",
      [](const Array& w, double b, int channels, int height, int width,
         std::uint64_t seed) {
        RngStream rng(seed);
        return from_image(linear_boundary_point(to_vector(w), b,
                                                {channels, height, width},
                                                rng));
      },
      py::arg("w"), py::arg("b"), py::arg("channels"), py::arg("height"),
      py::arg("width"), py::arg("seed"));
}
