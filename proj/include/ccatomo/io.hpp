#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ccatomo/calibration.hpp"
#include "ccatomo/lattice_model.hpp"
#include "ccatomo/thermal.hpp"
#include "ccatomo/tomography.hpp"

namespace ccatomo::io {

inline constexpr int kFormatVersion = 1;

// "ccatomo <library version>", embedded in every file written.
std::string generator_string();

// Shortest decimal form that parses back to the same double.
std::string format_double(double x);

struct DeviceFile {
  LatticeSpec spec;
  std::optional<CrosstalkModel> model;
  std::optional<std::uint64_t> seed;

  bool operator==(const DeviceFile&) const = default;
};

struct HamiltonianFile {
  EffectiveHamiltonian hamiltonian;
  double gamma_in = 0.0;
  double gamma_out = 0.0;
  double ref_wavelength_nm = kDefaultRefWavelengthNm;

  bool operator==(const HamiltonianFile&) const = default;
};

// JSON documents. Loaders reject unknown fields, missing fields, a wrong
// `format` tag or a newer `version` with Error(Schema), then run the domain
// validation of the loaded object.
std::string device_to_json(const DeviceFile& device);
DeviceFile device_from_json(const std::string& text);

std::string hamiltonian_to_json(const HamiltonianFile& h);
// `tol` bounds the symmetry, band and passivity checks (GHz).
HamiltonianFile hamiltonian_from_json(const std::string& text, double tol = 1e-9);

std::string model_to_json(const CrosstalkModel& model);
CrosstalkModel model_from_json(const std::string& text);
// Accepts either a crosstalk document or a device document carrying a model.
CrosstalkModel crosstalk_from_json(const std::string& text);

// Dataset files carry the records and reference wavelength only; the reference
// Hamiltonian travels in its own file.
std::string dataset_to_json(const SweepDataset& dataset);
SweepDataset dataset_from_json(const std::string& text, const EffectiveHamiltonian& h0);

// Spectrum CSV: a `# ccatomo ...` comment line carrying kind and reference
// wavelength, a header `detuning_ghz,value` or `wavelength_nm,value`, then one
// sample per row. Wavelength files are written in ascending wavelength.
enum class Axis { Detuning, Wavelength };

std::string spectrum_to_csv(const Spectrum& spectrum, Axis axis,
                            double ref_wavelength_nm = kDefaultRefWavelengthNm);

struct SpectrumCsv {
  Spectrum spectrum;  // always on an increasing detuning grid
  Axis axis = Axis::Detuning;
  double ref_wavelength_nm = kDefaultRefWavelengthNm;
};

// `ref_wavelength_nm` is used when the file does not state one.
SpectrumCsv spectrum_from_csv(const std::string& text,
                              double ref_wavelength_nm = kDefaultRefWavelengthNm);

// Per-record calibration errors: index,tag,error,mode_deviation.
std::string record_errors_to_csv(const std::vector<std::string>& tags,
                                 const std::vector<double>& errors,
                                 const std::vector<double>& mode_deviation);

// mode,wavelength_nm
std::string eigen_to_csv(const std::vector<double>& wavelengths_nm);

// Fit summary for `tomography --report`.
std::string fit_report_to_json(const LorentzianSum& modes, const FitReport& report,
                               const Reconstruction& reconstruction);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& contents);

}  // namespace ccatomo::io
