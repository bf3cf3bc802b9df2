#include "fairdice/harness.hpp"
#include "fairdice/losses.hpp"
#include "fairdice/metrics.hpp"
#include "fairdice/tabular.hpp"
#include "fairdice/trainer.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace fairdice;

namespace {

py::array_t<double> as_array(const std::vector<double>& v, std::size_t rows, std::size_t cols) {
  py::array_t<double> out({rows, cols});
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

std::vector<double> to_vector(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  return {a.data(), a.data() + a.size()};
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Offline fair multi-objective RL with stationary distribution correction";

  py::register_exception<TrainingError>(m, "TrainingError", PyExc_RuntimeError);
  py::register_exception<SolverError>(m, "SolverError", PyExc_RuntimeError);

  m.def("soft_chi2_f", &soft_chi2_f, py::arg("w"));
  m.def("f_prime_inverse", &f_prime_inverse, py::arg("y"));
  m.def("w_star", &w_star, py::arg("e"), py::arg("beta"));

  m.def("nsw", [](const std::vector<double>& r) { return nsw(r).value; }, py::arg("returns"),
        "Sum of log returns; -inf when any return is non-positive.");
  m.def("jain_index", [](const std::vector<double>& r) { return jain_index(r); }, py::arg("returns"));
  m.def(
      "kruskal_wallis",
      [](const std::vector<std::vector<double>>& groups) {
        const auto kw = kruskal_wallis(groups);
        return py::make_tuple(kw.h, kw.p);
      },
      py::arg("groups"), "Returns (H, p).");

  py::class_<HyperParams>(m, "HyperParams")
      .def(py::init([](double alpha, double beta, double lambda_gp, double gamma) {
             HyperParams hp{.alpha = alpha, .beta = beta, .lambda_gp = lambda_gp, .gamma = gamma};
             hp.validate();
             return hp;
           }),
           py::arg("alpha") = 1.0, py::arg("beta") = 1.0, py::arg("lambda_gp") = 0.0, py::arg("gamma") = 0.99)
      .def_readwrite("alpha", &HyperParams::alpha)
      .def_readwrite("beta", &HyperParams::beta)
      .def_readwrite("lambda_gp", &HyperParams::lambda_gp)
      .def_readwrite("gamma", &HyperParams::gamma);

  py::class_<TransitionDataset>(m, "Dataset")
      .def_property_readonly("env_id", [](const TransitionDataset& d) { return d.meta.env_id; })
      .def_property_readonly("behavior", [](const TransitionDataset& d) { return d.meta.behavior; })
      .def_property_readonly("n_objectives", [](const TransitionDataset& d) { return d.n_objectives; })
      .def_property_readonly("obs_dim", [](const TransitionDataset& d) { return d.obs_dim; })
      .def_property_readonly("actions", [](const TransitionDataset& d) { return d.actions; })
      .def_property_readonly("rewards",
                             [](const TransitionDataset& d) { return as_array(d.rewards, d.size(), d.n_objectives); })
      .def_property_readonly("obs", [](const TransitionDataset& d) { return as_array(d.obs, d.size(), d.obs_dim); })
      .def("__len__", &TransitionDataset::size)
      .def("save", [](const TransitionDataset& d, const std::filesystem::path& p) { write_dataset(d, p); });

  m.def(
      "generate_dataset",
      [](const std::string& env, const std::string& behavior, std::size_t trajectories, std::size_t horizon,
         std::uint64_t seed) {
        harness::DataRequest req;
        req.env = env;
        req.behavior = behavior;
        req.trajectories = trajectories;
        req.horizon = horizon;
        req.seed = seed;
        py::gil_scoped_release release;
        return harness::generate_dataset(req);
      },
      py::arg("env") = "four-rooms", py::arg("behavior") = "uniform", py::arg("trajectories") = 1000,
      py::arg("horizon") = 200, py::arg("seed") = 0);
  m.def("load_dataset", &read_dataset, py::arg("path"));

  py::class_<harness::TabularArtifact>(m, "TabularResult")
      .def_readonly("mu", &harness::TabularArtifact::mu)
      .def_readonly("nu", &harness::TabularArtifact::nu)
      .def_property_readonly("policy",
                             [](const harness::TabularArtifact& a) {
                               return as_array(a.policy.probs, a.policy.n_states, a.policy.n_actions);
                             })
      .def_property_readonly("converged", [](const harness::TabularArtifact& a) { return a.trace.converged; })
      .def("save", [](const harness::TabularArtifact& a, const std::filesystem::path& p) {
        harness::write_tabular_artifact(a, p);
      });

  m.def(
      "solve_tabular",
      [](const TransitionDataset& data, const HyperParams& hp, std::uint64_t seed) {
        py::gil_scoped_release release;
        return harness::train_tabular(data, hp, LossMode::FairDice, {}, seed);
      },
      py::arg("data"), py::arg("hp") = HyperParams{}, py::arg("seed") = 0,
      "Full-batch critic solve followed by closed-form policy extraction.");
  m.def(
      "evaluate_tabular",
      [](const TransitionDataset& data, const py::array_t<double, py::array::c_style | py::array::forcecast>& policy) {
        const auto env = harness::rebuild_tabular_env(data.meta);
        if (policy.ndim() != 2 || policy.shape(0) != env.n_states || policy.shape(1) != env.n_actions) {
          throw std::invalid_argument("policy must have shape (n_states, n_actions)");
        }
        TabularPolicy pi{env.n_states, env.n_actions, to_vector(policy)};
        return evaluate_tabular_policy(env, pi, env.gamma).returns;
      },
      py::arg("data"), py::arg("policy"), "Discounted per-objective returns of a tabular policy.");

  py::class_<TrainArtifact>(m, "NeuralResult")
      .def_property_readonly("mu", &TrainArtifact::mu)
      .def_readonly("critic_loss", &TrainArtifact::critic_loss)
      .def_readonly("policy_loss", &TrainArtifact::policy_loss)
      .def("action_probabilities",
           [](const TrainArtifact& a, const py::array_t<double, py::array::c_style | py::array::forcecast>& obs) {
             if (obs.ndim() != 2 || static_cast<std::size_t>(obs.shape(1)) != a.obs_dim) {
               throw std::invalid_argument("obs must have shape (batch, obs_dim)");
             }
             // numpy rows are samples; networks take samples as columns.
             nn::Matrix raw = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
                                  obs.data(), obs.shape(0), obs.shape(1))
                                  .transpose();
             const nn::Matrix p = policy_probabilities(a, raw);
             const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rows = p.transpose();
             return as_array({rows.data(), rows.data() + rows.size()}, rows.rows(), rows.cols());
           })
      .def("save", [](const TrainArtifact& a, const std::filesystem::path& p) { write_artifact(a, p); });

  m.def(
      "train",
      [](const TransitionDataset& data, const std::string& mode, const HyperParams& hp, std::size_t iterations,
         std::size_t batch_size, std::vector<std::size_t> hidden, std::uint64_t seed) {
        TrainConfig cfg;
        cfg.mode = parse_loss_mode(mode);
        cfg.hp = hp;
        cfg.iterations = iterations;
        cfg.batch_size = batch_size;
        cfg.hidden = std::move(hidden);
        cfg.seed = seed;
        py::gil_scoped_release release;
        return train(data, cfg);
      },
      py::arg("data"), py::arg("mode") = "fairdice", py::arg("hp") = HyperParams{}, py::arg("iterations") = 1000,
      py::arg("batch_size") = 256, py::arg("hidden") = std::vector<std::size_t>{256, 256}, py::arg("seed") = 0);
}
