#pragma once

namespace ccatomo {

// Speed of light expressed in nm * GHz, so that lambda[nm] * nu[GHz] = c.
inline constexpr double kSpeedOfLightNmGHz = 299792458.0;

inline constexpr double kDefaultRefWavelengthNm = 1550.0;

// First-order detuning <-> wavelength-offset conversion about a reference
// wavelength: d_lambda = -(lambda_ref^2 / c) * d_nu.
double to_wavelength(double detuning_ghz, double ref_wavelength_nm);
double to_detuning(double wavelength_offset_nm, double ref_wavelength_nm);

// Loaded linewidth (GHz) of a resonance with quality factor q at the given wavelength.
double linewidth_from_q(double q, double ref_wavelength_nm);

}  // namespace ccatomo
