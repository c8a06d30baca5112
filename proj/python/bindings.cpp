// Python bindings for the ccatomo core.

#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ccatomo/calibration.hpp"
#include "ccatomo/errors.hpp"
#include "ccatomo/io.hpp"
#include "ccatomo/lattice_model.hpp"
#include "ccatomo/thermal.hpp"
#include "ccatomo/tomography.hpp"
#include "ccatomo/virtual_device.hpp"

namespace py = pybind11;
using namespace ccatomo;

namespace {

Spectrum make_spectrum(std::vector<double> grid, std::vector<double> values, SpectrumKind kind) {
  Spectrum s;
  s.grid = FrequencyGrid(std::move(grid));
  s.values = std::move(values);
  s.kind = kind;
  s.validate();
  return s;
}

py::tuple response_tuple(const std::pair<Spectrum, Spectrum>& rt) {
  return py::make_tuple(rt.first.values, rt.second.values);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Coupled-cavity-array tomography and thermal crosstalk calibration";
  m.attr("__version__") = CCATOMO_VERSION;

  // Messages start with the error kind, e.g. "invalid spec: ...".
  py::register_exception<Error>(m, "CcatomoError", PyExc_ValueError);

  py::enum_<SpectrumKind>(m, "SpectrumKind")
      .value("REFLECTION", SpectrumKind::Reflection)
      .value("TRANSMISSION", SpectrumKind::Transmission);

  m.def("to_wavelength", &to_wavelength, py::arg("detuning_ghz"), py::arg("ref_wavelength_nm") = kDefaultRefWavelengthNm);
  m.def("to_detuning", &to_detuning, py::arg("wavelength_offset_nm"),
        py::arg("ref_wavelength_nm") = kDefaultRefWavelengthNm);
  m.def("linewidth_from_q", &linewidth_from_q, py::arg("q"), py::arg("ref_wavelength_nm") = kDefaultRefWavelengthNm);

  py::class_<LatticeSpec>(m, "LatticeSpec")
      .def(py::init<>())
      .def(py::init([](std::vector<double> mu, std::vector<double> hop, std::vector<double> kappa, double gin,
                       double gout, double ref) {
             LatticeSpec s{std::move(mu), std::move(hop), std::move(kappa), gin, gout, ref};
             s.validate();
             return s;
           }),
           py::arg("mu"), py::arg("hop"), py::arg("kappa"), py::arg("gamma_in"), py::arg("gamma_out"),
           py::arg("ref_wavelength_nm") = kDefaultRefWavelengthNm)
      .def_readwrite("mu", &LatticeSpec::mu)
      .def_readwrite("hop", &LatticeSpec::hop)
      .def_readwrite("kappa", &LatticeSpec::kappa)
      .def_readwrite("gamma_in", &LatticeSpec::gamma_in)
      .def_readwrite("gamma_out", &LatticeSpec::gamma_out)
      .def_readwrite("ref_wavelength_nm", &LatticeSpec::ref_wavelength_nm)
      .def_property_readonly("n_sites", &LatticeSpec::n_sites)
      .def("validate", &LatticeSpec::validate)
      .def(py::self == py::self);

  py::class_<EffectiveHamiltonian>(m, "EffectiveHamiltonian")
      .def(py::init<CMatrix, double>(), py::arg("matrix"), py::arg("tol") = 1e-9)
      .def_property_readonly("matrix", &EffectiveHamiltonian::matrix)
      .def_property_readonly("dim", &EffectiveHamiltonian::dim)
      .def_property_readonly("hopping", &EffectiveHamiltonian::hopping)
      .def("with_detuning_shift", &EffectiveHamiltonian::with_detuning_shift, py::arg("shift_ghz"));

  py::class_<EigenSystem>(m, "EigenSystem")
      .def_readonly("values", &EigenSystem::values)
      .def_readonly("vectors", &EigenSystem::vectors)
      .def_readonly("quasi_defective", &EigenSystem::quasi_defective);

  m.def("build_h_eff", &build_h_eff, py::arg("spec"));
  m.def("eig_complex_symmetric", &eig_complex_symmetric, py::arg("h"), py::arg("tol") = kDefaultDefectTol,
        py::arg("throw_on_defect") = true);
  m.def("eigenvalues", &eigenvalues, py::arg("h"));
  m.def(
      "resolvent_response",
      [](const EffectiveHamiltonian& h, double gin, double gout, std::vector<double> grid) {
        return response_tuple(resolvent_response(h, gin, gout, FrequencyGrid(std::move(grid))));
      },
      py::arg("h"), py::arg("gamma_in"), py::arg("gamma_out"), py::arg("grid_ghz"),
      "Returns (|R|^2, |T|^2) on the grid.");
  m.def(
      "modal_response",
      [](const EigenSystem& eig, double gin, double gout, std::vector<double> grid) {
        return response_tuple(modal_response(eig, gin, gout, FrequencyGrid(std::move(grid))));
      },
      py::arg("eig"), py::arg("gamma_in"), py::arg("gamma_out"), py::arg("grid_ghz"));

  py::class_<LorentzianMode>(m, "LorentzianMode")
      .def(py::init<>())
      .def(py::init([](double a, double phi, double c, double w) { return LorentzianMode{a, phi, c, w}; }),
           py::arg("amplitude"), py::arg("phase"), py::arg("center"), py::arg("halfwidth"))
      .def_readwrite("amplitude", &LorentzianMode::amplitude)
      .def_readwrite("phase", &LorentzianMode::phase)
      .def_readwrite("center", &LorentzianMode::center)
      .def_readwrite("halfwidth", &LorentzianMode::halfwidth)
      .def_property_readonly("eigenvalue", &LorentzianMode::eigenvalue);

  py::class_<LorentzianSum>(m, "LorentzianSum")
      .def(py::init<>())
      .def_readwrite("modes", &LorentzianSum::modes)
      .def_property_readonly("gamma0", &LorentzianSum::gamma0)
      .def_property_readonly("residue_sum", &LorentzianSum::residue_sum)
      .def(
          "reflection",
          [](const LorentzianSum& l, std::vector<double> grid) {
            return l.reflection(FrequencyGrid(std::move(grid))).values;
          },
          py::arg("grid_ghz"));

  py::class_<FitConfig>(m, "FitConfig")
      .def(py::init<>())
      .def_readwrite("multi_starts", &FitConfig::multi_starts)
      .def_readwrite("max_evaluations", &FitConfig::max_evaluations)
      .def_readwrite("tolerance", &FitConfig::tolerance)
      .def_readwrite("residue_penalty_weight", &FitConfig::residue_penalty_weight)
      .def_readwrite("hop_penalty_weight", &FitConfig::hop_penalty_weight)
      .def_readwrite("margin_linewidths", &FitConfig::margin_linewidths)
      .def_readwrite("enforce_margin", &FitConfig::enforce_margin)
      .def_readwrite("seed", &FitConfig::seed);

  py::class_<FitReport>(m, "FitReport")
      .def_readonly("residual", &FitReport::residual)
      .def_readonly("penalty_residue", &FitReport::penalty_residue)
      .def_readonly("penalty_hops", &FitReport::penalty_hops)
      .def_readonly("objective", &FitReport::objective)
      .def_readonly("iterations", &FitReport::iterations)
      .def_readonly("converged", &FitReport::converged);

  py::class_<Reconstruction>(m, "Reconstruction")
      .def_readonly("hamiltonian", &Reconstruction::hamiltonian)
      .def_readonly("weights", &Reconstruction::weights)
      .def_readonly("gamma0", &Reconstruction::gamma0)
      .def_readonly("tail_residual", &Reconstruction::tail_residual);

  m.def(
      "fit_reflection",
      [](std::vector<double> grid, std::vector<double> values, int n_modes, const FitConfig& cfg) {
        return fit_reflection(make_spectrum(std::move(grid), std::move(values), SpectrumKind::Reflection), n_modes,
                              cfg);
      },
      py::arg("grid_ghz"), py::arg("values"), py::arg("n_modes"), py::arg("config") = FitConfig{},
      py::call_guard<py::gil_scoped_release>());
  m.def("reconstruct", [](const LorentzianSum& l) { return reconstruct(l); }, py::arg("modes"));
  m.def(
      "eigenvalues_from_transmission",
      [](std::vector<double> grid, std::vector<double> values, int n_modes, const FitConfig& cfg) {
        return eigenvalues_from_transmission(
            make_spectrum(std::move(grid), std::move(values), SpectrumKind::Transmission), n_modes, cfg);
      },
      py::arg("grid_ghz"), py::arg("values"), py::arg("n_modes"), py::arg("config") = FitConfig{},
      py::call_guard<py::gil_scoped_release>());
  m.def("lorentzians_from_hamiltonian", &lorentzians_from_hamiltonian, py::arg("h"), py::arg("gamma_in"));

  py::class_<CrosstalkModel>(m, "CrosstalkModel")
      .def(py::init<>())
      .def_static("zeros", &CrosstalkModel::zeros, py::arg("n_sites"))
      .def_readwrite("delta_nm", &CrosstalkModel::delta_nm)
      .def_readwrite("alpha_nm_per_v2", &CrosstalkModel::alpha_nm_per_v2)
      .def_readwrite("beta", &CrosstalkModel::beta)
      .def_readwrite("gamma", &CrosstalkModel::gamma)
      .def_property_readonly("n_sites", &CrosstalkModel::n_sites)
      .def("validate", &CrosstalkModel::validate)
      .def(py::self == py::self);

  m.def("orbit_index", [](int a, int b) { return orbit_table().index(a, b); }, py::arg("a"), py::arg("b"));
  m.def("orbit_count", [] { return orbit_table().orbit_count(); });
  m.def(
      "delta_mu", [](const CrosstalkModel& model, std::vector<double> v) { return delta_mu(model, {std::move(v)}); },
      py::arg("model"), py::arg("volts"));
  m.def(
      "predict_eigen",
      [](const EffectiveHamiltonian& h0, const CrosstalkModel& model, std::vector<double> v, double ref) {
        return predict_eigen(h0, model, {std::move(v)}, ref);
      },
      py::arg("h0"), py::arg("model"), py::arg("volts"), py::arg("ref_wavelength_nm") = kDefaultRefWavelengthNm);
  m.def("normalized_error", &normalized_error, py::arg("predicted"), py::arg("measured"), py::arg("j_norm_nm"));
  m.def("eta", &eta, py::arg("model"), py::arg("site"), py::arg("volts") = 1.0);
  m.def("j_norm", &j_norm, py::arg("h"), py::arg("ref_wavelength_nm") = kDefaultRefWavelengthNm);

  py::class_<DeviceRanges>(m, "DeviceRanges")
      .def(py::init<>())
      .def_readwrite("n_sites", &DeviceRanges::n_sites)
      .def_readwrite("mu_band_ghz", &DeviceRanges::mu_band_ghz)
      .def_readwrite("hop_min_ghz", &DeviceRanges::hop_min_ghz)
      .def_readwrite("hop_max_ghz", &DeviceRanges::hop_max_ghz)
      .def_readwrite("q_loaded", &DeviceRanges::q_loaded)
      .def_readwrite("port_fraction", &DeviceRanges::port_fraction)
      .def_readwrite("beta1", &DeviceRanges::beta1);

  py::class_<DeviceTruth>(m, "DeviceTruth")
      .def_readonly("spec", &DeviceTruth::spec)
      .def_readonly("model", &DeviceTruth::model)
      .def_readonly("seed", &DeviceTruth::seed);

  py::class_<SweepProtocol>(m, "SweepProtocol")
      .def(py::init<>())
      .def_readwrite("ramp_steps", &SweepProtocol::ramp_steps)
      .def_readwrite("ramp_v_max", &SweepProtocol::ramp_v_max)
      .def_readwrite("random_profiles", &SweepProtocol::random_profiles)
      .def_readwrite("random_v_max", &SweepProtocol::random_v_max)
      .def_readwrite("include_zero", &SweepProtocol::include_zero)
      .def_readwrite("seed", &SweepProtocol::seed);

  py::class_<NoiseSpec>(m, "NoiseSpec")
      .def(py::init([](double spectrum, double eigen_nm, std::uint64_t seed) { return NoiseSpec{spectrum, eigen_nm, seed}; }),
           py::arg("spectrum_mult_sigma") = 0.0, py::arg("eigen_sigma_nm") = 0.0, py::arg("seed") = 0);

  py::class_<SweepRecord>(m, "SweepRecord")
      .def_property_readonly("volts", [](const SweepRecord& r) { return r.profile.volts; })
      .def_readonly("measured_eigen_nm", &SweepRecord::measured_eigen_nm)
      .def_readonly("tag", &SweepRecord::tag);

  py::class_<SweepDataset>(m, "SweepDataset")
      .def_readonly("records", &SweepDataset::records)
      .def_readonly("h0", &SweepDataset::h0)
      .def_readonly("ref_wavelength_nm", &SweepDataset::ref_wavelength_nm)
      .def("__len__", [](const SweepDataset& d) { return d.records.size(); });

  m.def("generate_device", &generate_device, py::arg("seed"), py::arg("ranges") = DeviceRanges{});
  m.def(
      "device_spectrum",
      [](const DeviceTruth& t, std::vector<double> v, std::vector<double> grid, const NoiseSpec& noise,
         SpectrumKind kind) {
        return device_spectrum(t, {std::move(v)}, FrequencyGrid(std::move(grid)), noise, kind).values;
      },
      py::arg("truth"), py::arg("volts"), py::arg("grid_ghz"), py::arg("noise") = NoiseSpec{},
      py::arg("kind") = SpectrumKind::Reflection);
  m.def(
      "probe_grid", [](const DeviceTruth& t, std::size_t n, double margin) { return probe_grid(t, n, margin).points(); },
      py::arg("truth"), py::arg("points"), py::arg("margin_linewidths") = 15.0);
  m.def("generate_dataset", &generate_dataset, py::arg("truth"), py::arg("protocol"), py::arg("noise") = NoiseSpec{});

  py::class_<CalibrationConfig>(m, "CalibrationConfig")
      .def(py::init<>())
      .def_readwrite("max_evaluations", &CalibrationConfig::max_evaluations)
      .def_readwrite("init_jitter", &CalibrationConfig::init_jitter)
      .def_readwrite("seed", &CalibrationConfig::seed);

  py::class_<CalibrationResult>(m, "CalibrationResult")
      .def_readonly("model", &CalibrationResult::model)
      .def_readonly("per_record_error", &CalibrationResult::per_record_error)
      .def_readonly("per_record_mode_dev", &CalibrationResult::per_record_mode_dev)
      .def_readonly("mean_error", &CalibrationResult::mean_error)
      .def_readonly("converged", &CalibrationResult::converged);

  py::class_<HoldoutReport>(m, "HoldoutReport")
      .def_readonly("errors", &HoldoutReport::errors)
      .def_readonly("mode_deviation", &HoldoutReport::mode_deviation)
      .def_readonly("mean_error", &HoldoutReport::mean_error)
      .def_readonly("max_error", &HoldoutReport::max_error)
      .def_readonly("mean_mode_deviation", &HoldoutReport::mean_mode_deviation)
      .def_readonly("quantiles", &HoldoutReport::quantiles);

  m.def("fit_full", &fit_full, py::arg("dataset"), py::arg("config") = CalibrationConfig{},
        py::call_guard<py::gil_scoped_release>());
  m.def("holdout_evaluate", &holdout_evaluate, py::arg("model"), py::arg("holdout"));

  m.def("model_to_json", &io::model_to_json, py::arg("model"));
  m.def("model_from_json", &io::model_from_json, py::arg("text"));
  m.def(
      "device_to_json", [](const DeviceTruth& t) { return io::device_to_json({t.spec, t.model, t.seed}); },
      py::arg("truth"));
  m.def(
      "spec_from_device_json", [](const std::string& text) { return io::device_from_json(text).spec; },
      py::arg("text"));
}
