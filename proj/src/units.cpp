#include "ccatomo/units.hpp"

namespace ccatomo {

double to_wavelength(double detuning_ghz, double ref_wavelength_nm) {
  return -(ref_wavelength_nm * ref_wavelength_nm / kSpeedOfLightNmGHz) * detuning_ghz;
}

double to_detuning(double wavelength_offset_nm, double ref_wavelength_nm) {
  return -(kSpeedOfLightNmGHz / (ref_wavelength_nm * ref_wavelength_nm)) * wavelength_offset_nm;
}

double linewidth_from_q(double q, double ref_wavelength_nm) {
  return kSpeedOfLightNmGHz / (ref_wavelength_nm * q);
}

}  // namespace ccatomo
