// ccatomo: command-line front end for coupled-cavity tomography and thermal
// crosstalk calibration.

#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ccatomo/calibration.hpp"
#include "ccatomo/errors.hpp"
#include "ccatomo/io.hpp"
#include "ccatomo/lattice_model.hpp"
#include "ccatomo/thermal.hpp"
#include "ccatomo/tomography.hpp"
#include "ccatomo/virtual_device.hpp"

namespace {

using namespace ccatomo;

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitNotConverged = 4;

// Writes to `path`, or to standard output when the path is empty or "-".
void emit(const std::string& path, const std::string& contents) {
  if (path.empty() || path == "-") {
    std::cout << contents;
    std::cout.flush();
  } else {
    io::write_file(path, contents);
  }
}

std::vector<double> parse_numbers(const std::string& text, const std::string& what) {
  std::string cleaned = text;
  for (char& c : cleaned)
    if (c == ',' || c == ';') c = ' ';
  std::istringstream in(cleaned);
  std::vector<double> out;
  std::string token;
  while (in >> token) {
    std::size_t used = 0;
    double x = 0.0;
    try {
      x = std::stod(token, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != token.size() || !std::isfinite(x))
      throw Error(ErrorKind::InvalidProfile, what + ": '" + token + "' is not a number");
    out.push_back(x);
  }
  return out;
}

struct VoltageArgs {
  std::string list;
  std::string file;

  void attach(CLI::App* cmd) {
    auto* a = cmd->add_option("--volts", list, "Comma-separated heater voltages (V); default all zero");
    auto* b = cmd->add_option("--volts-file", file, "File of heater voltages separated by commas or whitespace");
    a->excludes(b);
  }

  VoltageProfile profile(std::size_t n) const {
    VoltageProfile v;
    if (!file.empty()) v.volts = parse_numbers(io::read_file(file), "voltage file");
    else if (!list.empty()) v.volts = parse_numbers(list, "--volts");
    else v.volts.assign(n, 0.0);
    v.validate(n);
    return v;
  }
};

io::HamiltonianFile load_hamiltonian(const std::string& path, double tol = 1e-9) {
  return io::hamiltonian_from_json(io::read_file(path), tol);
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string device, out, kind = "R", axis = "detuning";
  VoltageArgs volts;
  std::optional<double> start, stop, wl_start, wl_stop;
  std::size_t points = 2001;
  double margin = 15.0;
  double noise = 0.0;
  std::uint64_t seed = 0;
};

int run_simulate(const SimulateArgs& a) {
  const auto device = io::device_from_json(io::read_file(a.device));
  const std::size_t n = device.spec.n_sites();
  DeviceTruth truth;
  truth.spec = device.spec;
  const auto v = a.volts.profile(n);
  if (device.model) {
    truth.model = *device.model;
  } else {
    for (double x : v.volts)
      if (x != 0.0)
        throw Error(ErrorKind::InvalidProfile,
                    "device file has no crosstalk model, so voltages must be zero");
    truth.model = CrosstalkModel::zeros(n);
    std::fill(truth.model.alpha_nm_per_v2.begin(), truth.model.alpha_nm_per_v2.end(), 1.0);
  }

  const double ref = device.spec.ref_wavelength_nm;
  FrequencyGrid grid;
  if (a.start || a.stop) {
    if (!a.start || !a.stop) throw Error(ErrorKind::InvalidSpec, "--start and --stop go together");
    grid = FrequencyGrid::linspace(*a.start, *a.stop, a.points);
  } else if (a.wl_start || a.wl_stop) {
    if (!a.wl_start || !a.wl_stop)
      throw Error(ErrorKind::InvalidSpec, "--wl-start and --wl-stop go together");
    grid = FrequencyGrid::from_wavelength_range(*a.wl_start, *a.wl_stop, a.points, ref);
  } else {
    grid = probe_grid(truth, a.points, a.margin);
  }

  NoiseSpec noise;
  noise.spectrum_mult_sigma = a.noise;
  noise.seed = a.seed;
  const auto kind = a.kind == "T" ? SpectrumKind::Transmission : SpectrumKind::Reflection;
  const auto spectrum = device_spectrum(truth, v, grid, noise, kind);
  emit(a.out, io::spectrum_to_csv(spectrum, a.axis == "wavelength" ? io::Axis::Wavelength
                                                                    : io::Axis::Detuning,
                                  ref));
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct TomographyArgs {
  std::string in, out, report;
  int modes = 0;
  FitConfig fit;
  std::optional<double> gamma_out;
  double ref = kDefaultRefWavelengthNm;
};

int run_tomography(TomographyArgs a) {
  if (a.modes < 1) throw Error(ErrorKind::InvalidSpec, "--modes must be at least 1");
  const auto csv = io::spectrum_from_csv(io::read_file(a.in), a.ref);
  if (csv.spectrum.kind != SpectrumKind::Reflection)
    throw Error(ErrorKind::InvalidSpec, "tomography needs a reflection spectrum");
  auto [modes, report] = fit_reflection(csv.spectrum, a.modes, a.fit);
  ReconstructConfig rc;
  rc.hop_floor = a.fit.hop_floor;
  rc.normalization_tol = a.fit.normalization_tol;
  const auto rec = reconstruct(modes, rc);

  io::HamiltonianFile h;
  h.hamiltonian = rec.hamiltonian;
  h.gamma_in = rec.gamma0;
  h.gamma_out = a.gamma_out.value_or(rec.gamma0);
  h.ref_wavelength_nm = csv.ref_wavelength_nm;
  emit(a.out, io::hamiltonian_to_json(h));
  if (!a.report.empty()) io::write_file(a.report, io::fit_report_to_json(modes, report, rec));
  if (!report.converged) {
    std::cerr << "ccatomo: fit did not converge (objective " << report.objective << ")\n";
    return kExitNotConverged;
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct CalibrateArgs {
  std::string h0, dataset, holdout, out, errors, holdout_errors;
  CalibrationConfig config;
};

int run_calibrate(const CalibrateArgs& a) {
  const auto h0 = load_hamiltonian(a.h0);
  const auto ds = io::dataset_from_json(io::read_file(a.dataset), h0.hamiltonian);
  auto result = fit_full(ds, a.config);

  std::vector<std::string> tags;
  for (const auto& r : ds.records) tags.push_back(r.tag);
  if (!a.errors.empty())
    io::write_file(a.errors, io::record_errors_to_csv(tags, result.per_record_error,
                                                      result.per_record_mode_dev));
  std::cout << "records," << ds.records.size() << "\n"
            << "mean_error_nm," << io::format_double(result.mean_error) << "\n";
  if (!a.holdout.empty()) {
    const auto hold = io::dataset_from_json(io::read_file(a.holdout), h0.hamiltonian);
    const auto rep = holdout_evaluate(result.model, hold);
    result.holdout_error = rep.mean_error;
    std::cout << "holdout_mean_error_nm," << io::format_double(rep.mean_error) << "\n"
              << "holdout_mean_mode_deviation," << io::format_double(rep.mean_mode_deviation)
              << "\n";
    if (!a.holdout_errors.empty()) {
      std::vector<std::string> htags;
      for (const auto& r : hold.records) htags.push_back(r.tag);
      io::write_file(a.holdout_errors,
                     io::record_errors_to_csv(htags, rep.errors, rep.mode_deviation));
    }
  }
  io::write_file(a.out, io::model_to_json(result.model));
  if (!result.converged) {
    std::cerr << "ccatomo: calibration did not converge within the evaluation budget\n";
    return kExitNotConverged;
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct PredictArgs {
  std::string h0, model, out;
  VoltageArgs volts;
};

int run_predict(const PredictArgs& a) {
  const auto h0 = load_hamiltonian(a.h0);
  const auto model = io::crosstalk_from_json(io::read_file(a.model));
  const auto v = a.volts.profile(model.n_sites());
  emit(a.out, io::eigen_to_csv(predict_eigen(h0.hamiltonian, model, v, h0.ref_wavelength_nm)));
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct GenDeviceArgs {
  std::string out, hamiltonian_out;
  std::uint64_t seed = 0;
  DeviceRanges ranges;
};

int run_gen_device(const GenDeviceArgs& a) {
  const auto truth = generate_device(a.seed, a.ranges);
  io::DeviceFile file{truth.spec, truth.model, a.seed};
  io::write_file(a.out, io::device_to_json(file));
  if (!a.hamiltonian_out.empty()) {
    io::HamiltonianFile h{build_h_eff(truth.spec), truth.spec.gamma_in, truth.spec.gamma_out,
                          truth.spec.ref_wavelength_nm};
    io::write_file(a.hamiltonian_out, io::hamiltonian_to_json(h));
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct GenDatasetArgs {
  std::string device, out;
  // Default sweep: zero record, 5-step ramps on 8 heaters and 247 random
  // profiles, 288 records in all.
  SweepProtocol protocol{.ramp_steps = 5, .random_profiles = 247};
  bool no_zero = false;
  double eigen_noise_nm = 0.0;
  double eigen_noise_jnorm = 0.0;
  double spectrum_noise = 0.0;
  std::uint64_t seed = 0;
};

int run_gen_dataset(GenDatasetArgs a) {
  const auto device = io::device_from_json(io::read_file(a.device));
  if (!device.model)
    throw Error(ErrorKind::InvalidSpec, "device file needs a crosstalk model to generate sweeps");
  DeviceTruth truth{device.spec, *device.model, device.seed.value_or(0)};
  a.protocol.include_zero = !a.no_zero;
  a.protocol.seed = a.seed;
  NoiseSpec noise;
  noise.eigen_sigma_nm = a.eigen_noise_nm;
  if (a.eigen_noise_jnorm > 0.0) {
    if (a.eigen_noise_nm > 0.0)
      throw Error(ErrorKind::InvalidSpec,
                  "--eigen-noise-nm and --eigen-noise-jnorm are mutually exclusive");
    noise.eigen_sigma_nm =
        a.eigen_noise_jnorm * j_norm(build_h_eff(device.spec), device.spec.ref_wavelength_nm);
  }
  noise.spectrum_mult_sigma = a.spectrum_noise;
  noise.seed = stream_seed(a.seed, 7);
  io::write_file(a.out, io::dataset_to_json(generate_dataset(truth, a.protocol, noise)));
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct EtaArgs {
  std::string model;
  std::size_t site = 0;
  double volts = 1.0;
  bool all = false;
};

int run_eta(const EtaArgs& a) {
  const auto model = io::crosstalk_from_json(io::read_file(a.model));
  if (a.all) {
    std::cout << "site,eta\n";
    for (std::size_t s = 0; s + 1 < model.n_sites(); ++s)
      std::cout << s << "," << io::format_double(eta(model, s, a.volts)) << "\n";
  } else {
    std::cout << io::format_double(eta(model, a.site, a.volts)) << "\n";
  }
  return kExitOk;
}

void add_fit_options(CLI::App* cmd, FitConfig& fit) {
  cmd->add_option("--multi-starts", fit.multi_starts, "Number of optimizer starts")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd->add_option("--max-evaluations", fit.max_evaluations, "Residual evaluations per start")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd->add_option("--margin", fit.margin_linewidths,
                  "Required gap between outer dips and grid edge, in linewidths")
      ->capture_default_str();
  cmd->add_flag("!--no-margin-check", fit.enforce_margin, "Skip the grid-margin precondition");
  cmd->add_option("--seed", fit.seed, "Seed for the randomized restarts")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Coupled-cavity array Hamiltonian tomography and thermal crosstalk calibration"};
  app.name("ccatomo");
  app.set_version_flag("--version", io::generator_string());
  app.require_subcommand(1);
  app.footer("Exit codes: 0 success, 2 invalid input, 3 numerical failure, 4 fit did not converge.");

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Synthesize a reflection or transmission spectrum");
  simulate->add_option("--device", sim.device, "Device JSON file")->required();
  sim.volts.attach(simulate);
  simulate->add_option("--kind", sim.kind, "R (reflection) or T (transmission)")
      ->capture_default_str()
      ->check(CLI::IsMember({"R", "T"}));
  simulate->add_option("--start", sim.start, "First grid detuning (GHz)");
  simulate->add_option("--stop", sim.stop, "Last grid detuning (GHz)");
  simulate->add_option("--wl-start", sim.wl_start, "Lower grid wavelength (nm)");
  simulate->add_option("--wl-stop", sim.wl_stop, "Upper grid wavelength (nm)");
  simulate->add_option("--points", sim.points, "Grid points")->capture_default_str()->check(CLI::Range(2, 100000000));
  simulate->add_option("--auto-margin", sim.margin,
                       "Without explicit bounds, pad the eigenvalue span by this many linewidths")
      ->capture_default_str();
  simulate->add_option("--axis", sim.axis, "First column: detuning or wavelength")
      ->capture_default_str()
      ->check(CLI::IsMember({"detuning", "wavelength"}));
  simulate->add_option("--noise", sim.noise, "Relative multiplicative noise (sigma)")->capture_default_str();
  simulate->add_option("--seed", sim.seed, "Noise seed")->capture_default_str();
  simulate->add_option("--out,-o", sim.out, "Output CSV (default: standard output)");

  TomographyArgs tomo;
  auto* tomography = app.add_subcommand("tomography", "Recover H_eff from a reflection spectrum");
  tomography->add_option("--in,-i", tomo.in, "Reflection spectrum CSV")->required();
  tomography->add_option("--modes", tomo.modes, "Number of modes (lattice sites)")->required();
  add_fit_options(tomography, tomo.fit);
  tomography->add_option("--gamma-out", tomo.gamma_out,
                         "Output-port coupling (GHz) recorded in the result; default equals the input port");
  tomography->add_option("--ref-wavelength", tomo.ref,
                         "Reference wavelength (nm) when the spectrum file does not state one")
      ->capture_default_str();
  tomography->add_option("--out,-o", tomo.out, "Output Hamiltonian JSON (default: standard output)");
  tomography->add_option("--report", tomo.report, "Write a JSON fit report");

  CalibrateArgs cal;
  auto* calibrate = app.add_subcommand("calibrate", "Fit the thermal crosstalk model to a sweep dataset");
  calibrate->add_option("--h0", cal.h0, "Reference Hamiltonian JSON")->required();
  calibrate->add_option("--dataset", cal.dataset, "Sweep dataset JSON")->required();
  calibrate->add_option("--holdout", cal.holdout, "Hold-out dataset JSON");
  calibrate->add_option("--max-evaluations", cal.config.max_evaluations, "Optimizer iteration budget")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  calibrate->add_option("--jitter", cal.config.init_jitter, "Relative perturbation of the starting point")
      ->capture_default_str();
  calibrate->add_option("--seed", cal.config.seed, "Seed for the starting-point perturbation")
      ->capture_default_str();
  calibrate->add_option("--out,-o", cal.out, "Output crosstalk model JSON")->required();
  calibrate->add_option("--errors", cal.errors, "Per-record error CSV for the fitted records");
  calibrate->add_option("--holdout-errors", cal.holdout_errors, "Per-record error CSV for the hold-out");

  PredictArgs pred;
  auto* predict = app.add_subcommand("predict", "Predict eigen-wavelengths for a voltage profile");
  predict->add_option("--h0", pred.h0, "Reference Hamiltonian JSON")->required();
  predict->add_option("--model", pred.model, "Crosstalk model JSON")->required();
  pred.volts.attach(predict);
  predict->add_option("--out,-o", pred.out, "Output CSV (default: standard output)");

  GenDeviceArgs gdev;
  auto* gen_device = app.add_subcommand("gen-device", "Generate a random device with a planted crosstalk model");
  gen_device->add_option("--seed", gdev.seed, "Device seed")->capture_default_str();
  gen_device->add_option("--sites", gdev.ranges.n_sites, "Number of cavities")->capture_default_str();
  gen_device->add_option("--mu-band", gdev.ranges.mu_band_ghz, "Onsite detunings drawn from [-band, band] (GHz)")
      ->capture_default_str();
  gen_device->add_option("--hop-min", gdev.ranges.hop_min_ghz, "Smallest hopping rate (GHz)")->capture_default_str();
  gen_device->add_option("--hop-max", gdev.ranges.hop_max_ghz, "Largest hopping rate (GHz)")->capture_default_str();
  gen_device->add_option("--q", gdev.ranges.q_loaded, "Loaded quality factor")->capture_default_str();
  gen_device->add_option("--port-fraction", gdev.ranges.port_fraction,
                         "Share of an end cavity's linewidth that couples to its port")
      ->capture_default_str();
  gen_device->add_option("--ref-wavelength", gdev.ranges.ref_wavelength_nm, "Reference wavelength (nm)")
      ->capture_default_str();
  gen_device->add_option("--beta1", gdev.ranges.beta1, "Nearest-neighbor crosstalk ratio")->capture_default_str();
  gen_device->add_option("--out,-o", gdev.out, "Output device JSON")->required();
  gen_device->add_option("--hamiltonian-out", gdev.hamiltonian_out, "Also write the device's H_eff JSON");

  GenDatasetArgs gds;
  auto* gen_dataset = app.add_subcommand("gen-dataset", "Generate a calibration sweep from a device file");
  gen_dataset->add_option("--device", gds.device, "Device JSON with a crosstalk model")->required();
  gen_dataset->add_option("--ramp-steps", gds.protocol.ramp_steps, "Single-heater ramp steps per heater")
      ->capture_default_str();
  gen_dataset->add_option("--ramp-v-max", gds.protocol.ramp_v_max, "Largest ramp voltage (V)")->capture_default_str();
  gen_dataset->add_option("--random", gds.protocol.random_profiles, "Random multi-heater profiles")
      ->capture_default_str();
  gen_dataset->add_option("--random-v-max", gds.protocol.random_v_max, "Largest random voltage (V)")
      ->capture_default_str();
  gen_dataset->add_flag("--no-zero", gds.no_zero, "Omit the all-zero record");
  gen_dataset->add_option("--eigen-noise-nm", gds.eigen_noise_nm, "Gaussian noise on eigen-wavelengths (nm)")
      ->capture_default_str();
  gen_dataset->add_option("--eigen-noise-jnorm", gds.eigen_noise_jnorm,
                          "Gaussian noise on eigen-wavelengths as a fraction of J_norm");
  gen_dataset->add_flag("--full-pipeline", gds.protocol.full_pipeline,
                        "Extract eigenvalues by fitting simulated transmission spectra");
  gen_dataset->add_option("--spectrum-noise", gds.spectrum_noise,
                          "Relative spectrum noise for --full-pipeline")
      ->capture_default_str();
  gen_dataset->add_option("--seed", gds.seed, "Profile and noise seed")->capture_default_str();
  gen_dataset->add_option("--out,-o", gds.out, "Output dataset JSON")->required();

  EtaArgs eargs;
  auto* eta_cmd = app.add_subcommand("eta", "Nearest-neighbor crosstalk ratio of a model");
  eta_cmd->add_option("--model", eargs.model, "Crosstalk model JSON")->required();
  eta_cmd->add_option("--site", eargs.site, "Driven heater")->capture_default_str();
  eta_cmd->add_option("--volts", eargs.volts, "Drive voltage (V)")->capture_default_str();
  eta_cmd->add_flag("--all", eargs.all, "Print the ratio for every site with a right neighbor");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*simulate) return run_simulate(sim);
    if (*tomography) return run_tomography(tomo);
    if (*calibrate) return run_calibrate(cal);
    if (*predict) return run_predict(pred);
    if (*gen_device) return run_gen_device(gdev);
    if (*gen_dataset) return run_gen_dataset(gds);
    if (*eta_cmd) return run_eta(eargs);
  } catch (const Error& e) {
    std::cerr << "ccatomo: " << e.what() << "\n";
    return is_numerical(e.kind()) ? kExitNumerical : kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "ccatomo: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitValidation;
}
