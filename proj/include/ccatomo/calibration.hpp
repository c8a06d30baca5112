#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ccatomo/lattice_model.hpp"
#include "ccatomo/thermal.hpp"

namespace ccatomo {

struct SweepRecord {
  VoltageProfile profile;
  std::vector<double> measured_eigen_nm;  // sorted ascending
  std::string tag;

  bool operator==(const SweepRecord&) const = default;
};

struct SweepDataset {
  std::vector<SweepRecord> records;
  EffectiveHamiltonian h0;
  double ref_wavelength_nm = kDefaultRefWavelengthNm;

  // Throws InvalidProfile on a dimension mismatch or unsorted record.
  void validate() const;
};

struct SingleHeaterFit {
  std::size_t heater = 0;
  double alpha = 0.0;
  std::vector<std::size_t> neighbors;  // sites within the crosstalk window
  std::vector<double> beta_prime;      // nm/V^2, aligned with `neighbors`
  double mean_error = 0.0;
  bool converged = false;
};

struct CalibrationConfig {
  long max_evaluations = 60;  // LM iterations; each costs a full Jacobian
  double tolerance = 1e-12;
  // Relative random perturbation of the starting point; 0 keeps the seeded start.
  double init_jitter = 0.0;
  std::uint64_t seed = 0;
  // Heater efficiency assumed for heaters without single-drive records.
  double alpha_fallback = 0.4;
};

struct CalibrationResult {
  CrosstalkModel model;
  std::vector<double> per_record_error;     // ||d||^2 / j_norm per record (nm)
  std::vector<double> per_record_mode_dev;  // mean |d| / j_norm per record
  double mean_error = 0.0;
  std::optional<double> holdout_error;
  long iterations = 0;
  bool converged = false;
};

struct HoldoutReport {
  std::vector<double> errors;          // ||d||^2 / j_norm per record (nm)
  std::vector<double> mode_deviation;  // mean |d| / j_norm per record
  double mean_error = 0.0;
  double max_error = 0.0;
  double mean_mode_deviation = 0.0;
  // min, 25%, median, 75%, max of `errors`
  std::array<double, 5> quantiles{};
};

// Onsite shifts (nm) that reproduce one set of measured eigen-wavelengths.
std::vector<double> invert_onsite_shift(const EffectiveHamiltonian& h0,
                                        const std::vector<double>& measured_eigen_nm,
                                        double ref_wavelength_nm);

// Fits alpha_n and beta'_{nm} (|m-n| <= 3) from records that drive only `heater`.
// `baseline_nm`, when non-empty, is added to every record's onsite shifts.
SingleHeaterFit fit_single_heater(const EffectiveHamiltonian& h0,
                                  const std::vector<SweepRecord>& records, std::size_t heater,
                                  double ref_wavelength_nm,
                                  const std::vector<double>& baseline_nm = {});

CalibrationResult fit_full(const SweepDataset& dataset, const CalibrationConfig& config = {});

HoldoutReport holdout_evaluate(const CrosstalkModel& model, const SweepDataset& holdout);

// Records in `dataset` that drive only `heater` (other voltages exactly zero,
// this one positive).
std::vector<SweepRecord> single_drive_records(const SweepDataset& dataset, std::size_t heater);

}  // namespace ccatomo
