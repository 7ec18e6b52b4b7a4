#include <pybind11/complex.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "xlbeam/experiment.hpp"
#include "xlbeam/gradcheck.hpp"
#include "xlbeam/protocol.hpp"
#include "xlbeam/training.hpp"

namespace py = pybind11;
using namespace xlbeam;

namespace {

using NpComplex =
    py::array_t<std::complex<double>, py::array::c_style | py::array::forcecast>;

ComplexMatrix to_matrix(const NpComplex& a) {
  if (a.ndim() != 2) throw ContractError("expected a 2-D complex array");
  ComplexMatrix m(static_cast<std::size_t>(a.shape(0)),
                  static_cast<std::size_t>(a.shape(1)));
  const auto r = a.unchecked<2>();
  for (py::ssize_t i = 0; i < a.shape(0); ++i)
    for (py::ssize_t j = 0; j < a.shape(1); ++j)
      m(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = r(i, j);
  return m;
}

py::array_t<std::complex<double>> to_numpy(const ComplexMatrix& m) {
  py::array_t<std::complex<double>> out(
      {static_cast<py::ssize_t>(m.rows()), static_cast<py::ssize_t>(m.cols())});
  auto w = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j)
      w(static_cast<py::ssize_t>(i), static_cast<py::ssize_t>(j)) = m(i, j);
  return out;
}

py::dict metrics_dict(const LinkMetrics& m) {
  py::dict d;
  d["sum_rate"] = m.sum_rate;
  d["sum_mse"] = m.sum_mse;
  d["sum_mse_db"] = m.sum_mse_db;
  d["sinr"] = m.sinr;
  return d;
}

}  // namespace

PYBIND11_MODULE(_xlbeam, m) {
  m.doc() = "Near/far-field multiuser hybrid beamforming simulator core";

  py::register_exception<ContractError>(m, "ContractError",
                                        PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_RuntimeError);

  py::class_<ScenarioConfig>(m, "ScenarioConfig")
      .def(py::init<>())
      .def_readwrite("M", &ScenarioConfig::M)
      .def_readwrite("K", &ScenarioConfig::K)
      .def_readwrite("N_RF", &ScenarioConfig::N_RF)
      .def_readwrite("L", &ScenarioConfig::L)
      .def_readwrite("carrier_hz", &ScenarioConfig::carrier_hz)
      .def_readwrite("r_min", &ScenarioConfig::r_min)
      .def_readwrite("r_max", &ScenarioConfig::r_max)
      .def_readwrite("snr_db", &ScenarioConfig::snr_db)
      .def_readwrite("pt", &ScenarioConfig::pt)
      .def_readwrite("seed", &ScenarioConfig::seed)
      .def("noise_variance", &ScenarioConfig::noise_variance)
      .def("validate", &ScenarioConfig::validate);

  m.def("rayleigh_distance",
        [](std::size_t elements, double carrier_hz, double spacing) {
          return rayleigh_distance(
              ArrayGeometry::ula(elements, carrier_hz, spacing));
        },
        py::arg("elements"), py::arg("carrier_hz") = 100e9,
        py::arg("spacing") = 0.0);

  m.def("array_response",
        [](std::size_t elements, double theta, double r, double carrier_hz) {
          return to_numpy(
              array_response(ArrayGeometry::ula(elements, carrier_hz), theta, r));
        },
        py::arg("elements"), py::arg("theta"), py::arg("r"),
        py::arg("carrier_hz") = 100e9);

  m.def("generate_channels",
        [](const ScenarioConfig& sc, std::size_t count, std::uint64_t seed) {
          py::list out;
          for (std::size_t i = 0; i < count; ++i) {
            RngStream rng = RngStream::derive(seed, "sample", 0, i);
            out.append(to_numpy(generate_channel_matrix(sc, rng).first));
          }
          return out;
        },
        py::arg("scenario"), py::arg("count"), py::arg("seed"));

  m.def("kkt_digital",
        [](const NpComplex& h, const NpComplex& f_rf, double pt,
           double sigma2) {
          const DigitalPrecoder d =
              kkt_digital(to_matrix(h), {to_matrix(f_rf)}, pt, sigma2);
          return py::make_tuple(to_numpy(d.f_bb), d.beta);
        },
        py::arg("H"), py::arg("F_RF"), py::arg("pt"), py::arg("sigma2"));

  m.def("concentrated_mse",
        [](const NpComplex& h, const NpComplex& f_rf, double pt,
           double sigma2) {
          return concentrated_mse(to_matrix(h), to_matrix(f_rf), pt, sigma2);
        },
        py::arg("H"), py::arg("F_RF"), py::arg("pt"), py::arg("sigma2"));

  m.def("sum_mse",
        [](const NpComplex& h, const NpComplex& f_rf, const NpComplex& f_bb,
           double beta, double sigma2) {
          return sum_mse(to_matrix(h), to_matrix(f_rf), to_matrix(f_bb), beta,
                         sigma2);
        },
        py::arg("H"), py::arg("F_RF"), py::arg("F_BB"), py::arg("beta"),
        py::arg("sigma2"));

  m.def("sinr_and_sum_rate",
        [](const NpComplex& h, const NpComplex& f_rf, const NpComplex& f_bb,
           double sigma2) {
          auto [sinr, rate] = sinr_and_sum_rate(to_matrix(h), to_matrix(f_rf),
                                                to_matrix(f_bb), sigma2);
          return py::make_tuple(sinr, rate);
        },
        py::arg("H"), py::arg("F_RF"), py::arg("F_BB"), py::arg("sigma2"));

  m.def("fully_digital_mmse",
        [](const NpComplex& h, double pt, double sigma2) {
          const FullyDigitalPrecoder fd =
              fully_digital_mmse(to_matrix(h), pt, sigma2);
          return py::make_tuple(to_numpy(fd.f), fd.beta);
        },
        py::arg("H"), py::arg("pt"), py::arg("sigma2"));

  m.def("random_cm_precoder",
        [](std::size_t m_antennas, std::size_t n_rf, std::uint64_t seed) {
          RngStream rng = RngStream::derive(seed, "random-cm");
          return to_numpy(random_cm_precoder(m_antennas, n_rf, rng).f_rf);
        },
        py::arg("m"), py::arg("n_rf"), py::arg("seed"));

  m.def("projected_gradient_reference",
        [](const NpComplex& h, double pt, double sigma2, std::size_t n_rf,
           std::size_t n_iter, std::uint64_t seed) {
          ReferenceOptimizerConfig cfg;
          cfg.n_iter = n_iter;
          RngStream rng = RngStream::derive(seed, "pg-ref");
          return to_numpy(projected_gradient_reference(to_matrix(h), cfg, pt,
                                                       sigma2, n_rf, rng)
                              .precoder.f_rf);
        },
        py::arg("H"), py::arg("pt"), py::arg("sigma2"), py::arg("n_rf"),
        py::arg("n_iter") = 500, py::arg("seed") = 1);

  py::class_<NetworkParams>(m, "Network")
      .def_static(
          "create",
          [](std::size_t m_ant, std::size_t k, std::size_t n_rf,
             std::size_t n, const std::vector<std::size_t>& hidden,
             const std::string& mode, std::uint64_t seed) {
            NetworkConfig cfg;
            cfg.M = m_ant;
            cfg.K = k;
            cfg.N_RF = n_rf;
            cfg.N = n;
            cfg.hidden = hidden;
            return init_network(cfg,
                                mode == "direct" ? NetworkMode::Direct
                                                 : NetworkMode::Indirect,
                                seed);
          },
          py::arg("m"), py::arg("k"), py::arg("n_rf"), py::arg("n"),
          py::arg("hidden"), py::arg("mode") = "indirect", py::arg("seed") = 1)
      .def_static("load", &load_checkpoint, py::arg("path"))
      .def("save",
           [](const NetworkParams& p, const std::string& path) {
             save_checkpoint(p, path, 0);
           },
           py::arg("path"))
      .def_property_readonly("mode",
                             [](const NetworkParams& p) {
                               return p.mode == NetworkMode::Direct
                                          ? "direct"
                                          : "indirect";
                             })
      .def_property_readonly("sensing_slots",
                             [](const NetworkParams& p) { return p.cfg.N; })
      .def("forward",
           [](const NetworkParams& p, const NpComplex& input,
              const std::string& mode) {
             return to_numpy(forward_infer(p, to_matrix(input),
                                           mode == "direct"
                                               ? NetworkMode::Direct
                                               : NetworkMode::Indirect)
                                 .f_rf);
           },
           py::arg("input"), py::arg("mode") = "indirect");

  m.def("run_indirect",
        [](const NpComplex& h, const NetworkParams& params,
           const ScenarioConfig& sc) {
          const HybridRun run = run_indirect(to_matrix(h), params, sc);
          py::dict d = metrics_dict(run.metrics);
          d["F_RF"] = to_numpy(run.f_rf.f_rf);
          d["F_BB"] = to_numpy(run.digital.f_bb);
          d["beta"] = run.digital.beta;
          return d;
        },
        py::arg("H"), py::arg("network"), py::arg("scenario"));

  m.def("run_direct",
        [](const NpComplex& h, const NetworkParams& params,
           const ScenarioConfig& sc, std::size_t repetitions, double damping,
           std::uint64_t seed, double ul_sigma2_override) {
          ProtocolConfig pc;
          pc.repetitions = repetitions;
          pc.damping = damping;
          pc.ul_sigma2_override = ul_sigma2_override;
          RngStream rng = RngStream::derive(seed, "protocol");
          const ProtocolTrace tr =
              run_direct(to_matrix(h), params, pc, sc, rng);
          py::dict d = metrics_dict(tr.metrics);
          d["F_RF"] = to_numpy(tr.f_rf.f_rf);
          d["H_eq"] = to_numpy(tr.h_eq_hat.h_eq);
          d["pilot_overhead"] = tr.pilot_overhead;
          d["trace_json"] = tr.to_json(false);
          return d;
        },
        py::arg("H"), py::arg("network"), py::arg("scenario"),
        py::arg("repetitions") = 1, py::arg("damping") = 1e-9,
        py::arg("seed") = 1, py::arg("ul_sigma2_override") = -1.0);

  m.def("train_from_json",
        [](const std::string& json_text) {
          const ExperimentSpec spec = parse_experiment_spec(json_text);
          DatasetTriple ds = generate_dataset(spec.scenario, spec.dataset_size);
          TrainResult r = fit(spec.mode, ds, spec.network_config(),
                              spec.training, spec.protocol.repetitions,
                              spec.protocol.damping);
          return py::make_tuple(r.params, r.best_val_sum_rate);
        },
        py::arg("config_json"));

  m.def("gradcheck_network",
        [](std::uint64_t seed) {
          const GradCheckReport rep = run_network_gradcheck(seed);
          return py::make_tuple(rep.max_rel_error, rep.pass);
        },
        py::arg("seed") = 1);

  m.attr("__version__") = "0.1.0";
}
