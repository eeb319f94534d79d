#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "hetdr/bootstrap.hpp"
#include "hetdr/counterfactual.hpp"
#include "hetdr/debias.hpp"
#include "hetdr/error.hpp"
#include "hetdr/markov.hpp"
#include "hetdr/panel.hpp"
#include "hetdr/projection.hpp"
#include "hetdr/quantile.hpp"
#include "hetdr/simulation.hpp"

namespace py = pybind11;
using namespace hetdr;

namespace {

ThresholdGrid make_grid(const std::vector<UnitDesign>& designs, const std::vector<double>& points,
                        const std::vector<double>& levels) {
  return points.empty() ? pooled_threshold_grid(designs, levels) : ThresholdGrid(points);
}

struct Model {
  PanelDataset data;
  CoefficientField field;
};

Model fit(const PanelDataset& data, std::vector<double> grid_points, std::vector<double> grid_levels,
          const std::string& link, int lags, bool constant, bool covariates, const std::string& debias, int nw_lags) {
  DesignOptions dopts{lags, constant, covariates};
  const auto designs = build_regressors(data, dopts);
  DebiasOptions opts;
  opts.method = parse_debias(debias);
  opts.nw_lags = nw_lags;
  py::gil_scoped_release release;
  return {data, estimate_field(designs, make_grid(designs, grid_points, grid_levels), Link::parse(link), opts)};
}

CounterfactualSpec spec_of(const Model& m, const std::string& g, const std::string& h, long period) {
  CounterfactualSpec s;
  s.z = m.data.z;
  s.w = m.data.w;
  s.g = CharTransform::parse(g, m.data.z_names);
  s.h = CovariateTransform::parse(h);
  s.period = period;
  s.dist.bias_correction = m.field.correction != "none";
  return s;
}

BootstrapOptions boot(int draws, double level, const std::string& scale, std::uint64_t seed) {
  BootstrapOptions b;
  b.draws = draws;
  b.level = level;
  b.scale = parse_scale(scale);
  b.seed = seed;
  return b;
}

py::dict band_dict(const BootstrapBand& b) {
  py::dict d;
  d["points"] = b.points;
  d["estimate"] = b.estimate;
  d["scale"] = b.scale;
  d["lower"] = b.lower;
  d["upper"] = b.upper;
  d["critical"] = b.critical;
  d["included"] = b.included;
  return d;
}

}  // namespace

PYBIND11_MODULE(_hetdr, m) {
  m.doc() = "Heterogeneous dynamic distribution regression";

  static py::exception<Error> exc(m, "HetdrError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      PyErr_SetString(exc.ptr(), e.what());
    }
  });

  py::class_<PanelDataset>(m, "Panel")
      .def_property_readonly("n_units", &PanelDataset::size)
      .def_readonly("z", &PanelDataset::z)
      .def_readonly("w", &PanelDataset::w)
      .def_readonly("z_names", &PanelDataset::z_names)
      .def_readonly("w_names", &PanelDataset::w_names)
      .def_property_readonly("unit_ids", [](const PanelDataset& d) {
        std::vector<std::string> ids;
        for (const auto& u : d.units) ids.push_back(u.id);
        return ids;
      })
      .def("outcomes", [](const PanelDataset& d, std::size_t i) { return d.units.at(i).y; });

  m.def(
      "load_panel",
      [](const std::string& path, bool z_constant) {
        PanelSchema s;
        s.z_constant = z_constant;
        return load_panel(path, s);
      },
      py::arg("path"), py::arg("z_constant") = true);
  m.def(
      "parse_panel",
      [](const std::string& text, bool z_constant) {
        PanelSchema s;
        s.z_constant = z_constant;
        return parse_panel(text, s);
      },
      py::arg("text"), py::arg("z_constant") = true);
  m.def(
      "simulate_panel", [](int n, int t, std::uint64_t seed) { return generate_dynamic_dr({n, t}, seed).data; },
      py::arg("n"), py::arg("t"), py::arg("seed"),
      "Dynamic DR design: Pr(y_t <= y | y_{t-1}) = Phi(y_{t-1} theta(y)(w + gamma)); z = w = (w_i).");

  py::class_<Model>(m, "Model")
      .def_property_readonly("grid", [](const Model& x) { return x.field.grid.points; })
      .def_property_readonly("n_units", [](const Model& x) { return x.field.units(); })
      .def_property_readonly("correction", [](const Model& x) { return x.field.correction; })
      .def("beta",
           [](const Model& x, std::size_t i, std::size_t j) -> py::object {
             const auto& c = x.field.cells.at(i).at(j);
             if (!c.has_beta()) return py::none();
             return py::cast(Eigen::VectorXd(c.beta));
           })
      .def("status", [](const Model& x, std::size_t i, std::size_t j) {
        return std::string(to_string(x.field.cells.at(i).at(j).status));
      });

  m.def("fit", &fit, py::arg("panel"), py::arg("grid_points") = std::vector<double>{},
        py::arg("grid_levels") = std::vector<double>{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9},
        py::arg("link") = "logit", py::arg("lags") = 1, py::arg("constant") = true, py::arg("covariates") = true,
        py::arg("debias") = "analytical", py::arg("nw_lags") = -1,
        "Per-unit, per-threshold distribution regression with the chosen bias correction.");

  m.def(
      "project",
      [](const Model& x) {
        std::vector<Eigen::MatrixXd> out;
        for (const auto& p : project_all(x.field, x.data.z, x.data.w)) out.push_back(p.theta);
        return out;
      },
      py::arg("model"), "theta(y) for every grid point (d_x x d_z each).");

  m.def(
      "theta_band",
      [](const Model& x, const Eigen::VectorXd& eta, int draws, double level, const std::string& scale,
         std::uint64_t seed) {
        py::gil_scoped_release release;
        auto b = band_projection(x.field, x.data.z, x.data.w, eta, boot(draws, level, scale, seed));
        py::gil_scoped_acquire acquire;
        return band_dict(b);
      },
      py::arg("model"), py::arg("eta"), py::arg("draws") = 500, py::arg("level") = 0.95, py::arg("scale") = "iqr",
      py::arg("seed") = 20240607);

  m.def(
      "distributions",
      [](const Model& x, const std::string& g, const std::string& h, long period) {
        const auto s = spec_of(x, g, h, period);
        const auto ref = reference_rows(x.field, s.period);
        const auto f = estimate_distribution(x.field, ref.x, s.dist);
        const auto gf = counterfactual_coefficients(x.field, project_all(x.field, s.z, s.w), s.z, s.g);
        const auto gg = estimate_distribution(gf, s.h.apply(ref.x, x.field.designs.front().layout), s.dist);
        return py::make_tuple(f.values, gg.values);
      },
      py::arg("model"), py::arg("gtransform") = "none", py::arg("transform") = "none", py::arg("period") = 1,
      "(F_t, G_t) on the grid.");

  m.def(
      "quantile_effect_band",
      [](const Model& x, const std::vector<double>& levels, const std::string& g, const std::string& h, long period,
         int draws, double level, const std::string& scale, std::uint64_t seed) {
        const auto s = spec_of(x, g, h, period);
        QeBand q;
        {
          py::gil_scoped_release release;
          q = band_qe(x.field, s, levels, boot(draws, level, scale, seed));
        }
        auto d = band_dict(q.band);
        d["qe"] = q.curve.values;
        return d;
      },
      py::arg("model"), py::arg("levels"), py::arg("gtransform") = "none", py::arg("transform") = "none",
      py::arg("period") = 1, py::arg("draws") = 500, py::arg("level") = 0.95, py::arg("scale") = "iqr",
      py::arg("seed") = 20240607);

  m.def(
      "rearranged_inverse",
      [](const std::vector<double>& grid, const std::vector<double>& values, double tau) {
        return rearranged_inverse(grid, values, tau).value;
      },
      py::arg("grid"), py::arg("values"), py::arg("tau"));
  m.def(
      "quantile_effect",
      [](const std::vector<double>& grid, const std::vector<double>& f, const std::vector<double>& g,
         const std::vector<double>& levels) { return quantile_effect(ThresholdGrid(grid), f, g, levels).values; },
      py::arg("grid"), py::arg("f"), py::arg("g"), py::arg("levels"));

  m.def("ergodic", &ergodic, py::arg("p"), "Stationary law of a column-stochastic matrix.");
  m.def(
      "stationary_laws",
      [](const PanelDataset& data, const std::string& link, const std::string& debias) {
        ChainOptions o;
        o.debias.method = parse_debias(debias);
        const auto designs = build_regressors(data, DesignOptions{1, true, false});
        ChainSet cs;
        {
          py::gil_scoped_release release;
          cs = build_chains(designs, Link::parse(link), o);
        }
        py::list out;
        for (const auto& c : cs.chains) {
          if (c)
            out.append(py::make_tuple(c->states, c->pi));
          else
            out.append(py::none());
        }
        return out;
      },
      py::arg("panel"), py::arg("link") = "logit", py::arg("debias") = "analytical",
      "Per-unit (states, pi) from a first-order chain, or None for flagged units.");

  m.def("theta_curve", &theta_curve, py::arg("y"));
  m.def("true_quantile_effect", &true_quantile_effect_exact, py::arg("levels"), py::arg("shift") = 0.5);
  m.def(
      "toy_experiment",
      [](int n, int t, int reps, int draws, std::uint64_t seed) {
        ToyDesign d;
        d.n = n;
        d.t = t;
        d.reps = reps;
        d.draws = draws;
        d.seed = seed;
        std::vector<ToyRow> rows;
        {
          py::gil_scoped_release release;
          rows = toy_experiment(d);
        }
        py::list out;
        for (const auto& r : rows) {
          py::dict x;
          x["var_beta"] = r.variance;
          x["true_sd"] = r.true_sd;
          x["bootstrap"] = r.bootstrap;
          x["plugin_over"] = r.plugin_over;
          x["plugin_under"] = r.plugin_under;
          out.append(x);
        }
        return out;
      },
      py::arg("n") = 100, py::arg("t") = 10, py::arg("reps") = 1000, py::arg("draws") = 500, py::arg("seed") = 1);
}
