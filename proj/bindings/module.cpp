#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "fusion/common.hpp"
#include "fusion/datagen.hpp"
#include "fusion/dataset.hpp"
#include "fusion/discrepancy.hpp"
#include "fusion/estimators.hpp"
#include "fusion/feasibility.hpp"
#include "fusion/metrics.hpp"
#include "fusion/moments.hpp"

namespace py = pybind11;
using namespace fusion;

namespace {

std::vector<int> source_codes(const Dataset& ds) {
  std::vector<int> out(ds.source.size());
  for (std::size_t i = 0; i < ds.source.size(); ++i)
    out[i] = static_cast<int>(ds.source[i]);
  return out;
}

py::dict metrics_dict(const EvalMetrics& m) {
  py::dict d;
  d["qini"] = m.qini;
  d["mse_tau"] = m.mse_tau;
  d["mape"] = m.mape;
  d["g_norm"] = m.g_norm;
  d["mmd"] = m.mmd;
  d["marginal_tv"] = m.marginal_tv;
  d["r_obs"] = m.r_obs;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "constrained joint estimation over randomized and observational data";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<StateError>(m, "StateError", PyExc_RuntimeError);
  py::register_exception<DivergenceError>(m, "DivergenceError", PyExc_RuntimeError);

  py::class_<Dataset>(m, "Dataset")
      .def_readonly("x", &Dataset::x)
      .def_readonly("y", &Dataset::y)
      .def_readonly("t", &Dataset::t)
      .def_readonly("tau_true", &Dataset::tau_true)
      .def_property_readonly("source", &source_codes)
      .def_property_readonly("n", &Dataset::n)
      .def_property_readonly("dim", &Dataset::dim)
      .def_property_readonly("arms", &Dataset::arms)
      .def_property_readonly("marginal_probs",
                             [](const Dataset& d) { return d.probs.marginal; })
      .def("rows_of",
           [](const Dataset& d, int source) { return d.rows_of(static_cast<Source>(source)); },
           py::arg("source"), "0 = randomized, 1 = observational");

  py::class_<SyntheticConfig>(m, "SyntheticConfig")
      .def(py::init<>())
      .def_readwrite("n_rct", &SyntheticConfig::n_rct)
      .def_readwrite("n_obs", &SyntheticConfig::n_obs)
      .def_readwrite("n_cont", &SyntheticConfig::n_cont)
      .def_readwrite("n_cat", &SyntheticConfig::n_cat)
      .def_readwrite("n_levels", &SyntheticConfig::n_levels)
      .def_readwrite("sigma_rct", &SyntheticConfig::sigma_rct)
      .def_readwrite("sigma_obs", &SyntheticConfig::sigma_obs)
      .def_readwrite("overlap_dial", &SyntheticConfig::overlap_dial)
      .def_readwrite("exclusion_frac", &SyntheticConfig::exclusion_frac);

  py::class_<SyntheticDataset>(m, "SyntheticDataset")
      .def_readonly("data", &SyntheticDataset::data)
      .def_readonly("seed", &SyntheticDataset::seed)
      .def("true_tau", [](const SyntheticDataset& sd) { return true_tau(sd); })
      .def("true_mu0", [](const SyntheticDataset& sd) { return true_mu0(sd); });

  m.def("gen_synthetic", &gen_synthetic, py::arg("config"), py::arg("seed"));
  m.def("write_dataset_csv", &write_dataset_csv, py::arg("dataset"), py::arg("path"));
  m.def("read_dataset_csv", &read_dataset_csv, py::arg("path"));
  m.def("write_synthetic_sidecar", &write_synthetic_sidecar, py::arg("dataset"),
        py::arg("path"));

  py::class_<Split>(m, "Split")
      .def_readonly("train_rct", &Split::train_rct)
      .def_readonly("train_obs", &Split::train_obs)
      .def_readonly("eval_rct", &Split::eval_rct)
      .def_readonly("eval_obs", &Split::eval_obs);
  m.def("make_split", &make_split, py::arg("dataset"), py::arg("eval_frac"), py::arg("seed"));

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("rho", &TrainConfig::rho)
      .def_readwrite("lambda_ov", &TrainConfig::lambda_ov)
      .def_readwrite("lambda_cap", &TrainConfig::lambda_cap)
      .def_readwrite("alpha", &TrainConfig::alpha)
      .def_readwrite("steps", &TrainConfig::steps)
      .def_readwrite("batch_obs", &TrainConfig::batch_obs)
      .def_readwrite("batch_rct", &TrainConfig::batch_rct)
      .def_readwrite("eta_primal", &TrainConfig::eta_primal)
      .def_readwrite("eta_dual", &TrainConfig::eta_dual)
      .def_readwrite("eta_critic", &TrainConfig::eta_critic)
      .def_readwrite("critic_steps", &TrainConfig::critic_steps)
      .def_readwrite("step_s0", &TrainConfig::step_s0)
      .def_readwrite("use_rep", &TrainConfig::use_rep)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("log_every", &TrainConfig::log_every);

  py::class_<ModelBundle>(m, "ModelBundle")
      .def_property_readonly("method", [](const ModelBundle& b) { return to_string(b.method); })
      .def_readonly("nu", &ModelBundle::nu)
      .def_readonly("steps_run", &ModelBundle::steps_run)
      .def("predict_tau", &ModelBundle::predict_tau, py::arg("x"), py::arg("arm") = 1)
      .def("predict_m", &ModelBundle::predict_m, py::arg("x"), py::arg("t"))
      .def("trace", [](const ModelBundle& b) {
        py::list rows;
        for (const TraceRow& r : b.trace.rows) {
          py::dict d;
          d["step"] = r.step;
          d["r_obs"] = r.r_obs;
          d["g_norm"] = r.g_norm;
          d["eps_ov"] = r.eps_ov;
          d["nu_norm"] = r.nu_norm;
          d["objective"] = r.objective;
          rows.append(d);
        }
        return rows;
      });

  m.def(
      "train",
      [](const Dataset& ds, const Split& split, const std::string& method,
         const TrainConfig& cfg) {
        return train_model(ds, split, cfg, train_method_from_string(method));
      },
      py::arg("dataset"), py::arg("split"), py::arg("method"), py::arg("config"));
  m.def(
      "evaluate",
      [](ModelBundle& bundle, const Dataset& ds, const Split& split, std::uint64_t seed) {
        return metrics_dict(evaluate_model(bundle, ds, split, seed));
      },
      py::arg("bundle"), py::arg("dataset"), py::arg("split"), py::arg("seed"));

  m.def(
      "mmd_joint",
      [](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
        MmdResult r = mmd_joint(a, b);
        py::dict d;
        d["value"] = r.value;
        d["raw_sq"] = r.raw_sq;
        d["bandwidth"] = r.bandwidth;
        return d;
      },
      py::arg("a"), py::arg("b"));
  m.def("joint_features", &joint_features, py::arg("features"), py::arg("t"), py::arg("arms"));
  m.def("moment_estimate", &moment_estimate, py::arg("dataset"), py::arg("rows"),
        py::arg("m"));

  m.def("qini_area", &qini_area, py::arg("tau_hat"), py::arg("t"), py::arg("y"));
  m.def("mse", &mse, py::arg("a"), py::arg("b"));
  m.def("mape_deciles", &mape_deciles, py::arg("tau_hat"), py::arg("tau_true"));

  py::class_<GapConfig>(m, "GapConfig")
      .def(py::init<>())
      .def_readwrite("restarts", &GapConfig::restarts)
      .def_readwrite("steps", &GapConfig::steps)
      .def_readwrite("batch", &GapConfig::batch)
      .def_readwrite("eta", &GapConfig::eta)
      .def_readwrite("max_rows", &GapConfig::max_rows)
      .def_readwrite("seed", &GapConfig::seed);
  m.def(
      "feasibility_gap",
      [](const Dataset& ds, const std::string& family, const GapConfig& cfg) {
        const std::vector<int> rct = ds.rows_of(Source::kRct);
        GapResult r = feasibility_gap(ds, rct, gap_family_from_string(family), cfg);
        py::dict d;
        d["gap"] = r.gap;
        d["residual"] = r.residual;
        d["best_restart"] = r.best_restart;
        d["per_restart"] = r.per_restart;
        return d;
      },
      py::arg("dataset"), py::arg("family"), py::arg("config"),
      "family: raw_linear, raw_net or rep_net");
}
