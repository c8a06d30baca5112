#pragma once

#include <cstdint>

#include "ccatomo/calibration.hpp"
#include "ccatomo/lattice_model.hpp"
#include "ccatomo/thermal.hpp"
#include "ccatomo/tomography.hpp"

namespace ccatomo {

// Sampling ranges for synthetic devices. Defaults describe an 8-site racetrack
// array near 1550 nm with loaded Q ~ 8.5e4.
struct DeviceRanges {
  std::size_t n_sites = 8;
  double ref_wavelength_nm = kDefaultRefWavelengthNm;
  double mu_band_ghz = 10.0;  // mu uniform in [-band, band]
  double hop_min_ghz = 10.0;
  double hop_max_ghz = 50.0;
  double q_loaded = 8.5e4;
  // Share of the end sites' loaded linewidth that goes to the port.
  double port_fraction = 0.5;
  double alpha_min = 0.3;  // nm/V^2
  double alpha_max = 0.6;
  double delta_band_nm = 0.01;
  double beta1 = 0.024;
  double beta_decay = 0.3;  // beta_{d+1} = beta_d * decay
  double gamma_min = 0.002;  // |gamma| uniform in [min, max], random sign
  double gamma_max = 0.01;

  void validate() const;
};

struct DeviceTruth {
  LatticeSpec spec;
  CrosstalkModel model;
  std::uint64_t seed = 0;

  bool operator==(const DeviceTruth&) const = default;
};

struct NoiseSpec {
  double spectrum_mult_sigma = 0.0;
  double eigen_sigma_nm = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SweepProtocol {
  // Single-heater ramps: `ramp_steps` voltages from ramp_v_max/steps to ramp_v_max.
  std::size_t ramp_steps = 0;
  double ramp_v_max = 0.8;
  // Random multi-heater profiles, each voltage uniform in [0, random_v_max].
  std::size_t random_profiles = 0;
  double random_v_max = 0.8;
  bool include_zero = true;
  std::uint64_t seed = 0;
  // Extract eigenvalues by fitting simulated transmission spectra instead of
  // diagonalizing directly (slow).
  bool full_pipeline = false;
  std::size_t pipeline_points = 4000;

  void validate() const;
};

// Independent RNG stream for (seed, stream index).
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t index);

DeviceTruth generate_device(std::uint64_t seed, const DeviceRanges& ranges = {});

// Applies the crosstalk shifts to the device, synthesizes |R|^2 or |T|^2 and
// applies multiplicative noise.
Spectrum device_spectrum(const DeviceTruth& truth, const VoltageProfile& v,
                         const FrequencyGrid& grid, const NoiseSpec& noise, SpectrumKind kind);

// Probe grid covering every eigenvalue of the (unshifted) device with
// `margin_linewidths` loaded linewidths to spare on each side.
FrequencyGrid probe_grid(const DeviceTruth& truth, std::size_t points,
                         double margin_linewidths = 15.0);

SweepDataset generate_dataset(const DeviceTruth& truth, const SweepProtocol& protocol,
                              const NoiseSpec& noise);

}  // namespace ccatomo
