#pragma once

#include <array>
#include <cstddef>
#include <utility>
#include <vector>

#include "ccatomo/lattice_model.hpp"

namespace ccatomo {

// Crosstalk reaches at most this many sites away from a heater.
inline constexpr int kCrosstalkWindow = 3;
inline constexpr std::size_t kBetaCount = 3;
inline constexpr std::size_t kGammaCount = 12;

struct VoltageProfile {
  std::vector<double> volts;

  std::size_t size() const { return volts.size(); }
  void validate(std::size_t n_sites) const;
  bool operator==(const VoltageProfile&) const = default;
};

// Maps the unordered offset pairs {a, b} (a != b, |a|,|b| <= 3) to the 12
// orbits of the negation symmetry {a, b} ~ {-a, -b}.
class OrbitTable {
 public:
  struct Entry {
    int a;
    int b;
    int orbit;
  };

  OrbitTable();

  // Orbit index of the pair {a, b}; order of a and b does not matter.
  int index(int a, int b) const;
  // All 21 pairs with a < b, in lexicographic order.
  const std::vector<Entry>& pairs() const { return pairs_; }
  // Canonical representative of each orbit.
  std::pair<int, int> representative(int orbit) const { return reps_[std::size_t(orbit)]; }
  std::size_t orbit_count() const { return reps_.size(); }

 private:
  std::vector<Entry> pairs_;
  std::vector<std::pair<int, int>> reps_;
  std::array<int, 49> lookup_{};
};

const OrbitTable& orbit_table();

// Voltage-to-potential map. Shifts are in wavelength units (nm).
struct CrosstalkModel {
  std::vector<double> delta_nm;         // onsite corrections
  std::vector<double> alpha_nm_per_v2;  // heater efficiencies, > 0
  std::array<double, kBetaCount> beta{};    // neighbor response at distance 1, 2, 3
  std::array<double, kGammaCount> gamma{};  // cross-term coefficients, by orbit

  std::size_t n_sites() const { return alpha_nm_per_v2.size(); }
  void validate() const;
  static CrosstalkModel zeros(std::size_t n_sites);

  bool operator==(const CrosstalkModel&) const = default;
};

// Onsite potential shifts (nm) for a voltage profile.
std::vector<double> delta_mu(const CrosstalkModel& model, const VoltageProfile& v);

// Single-heater response: (self shift, neighbor shift) = (alpha v^2, beta' v^2).
std::pair<double, double> single_heater_shift(double alpha_nm_per_v2, double beta_prime_nm_per_v2,
                                              double volts);

// Sorted (ascending) eigen-wavelengths in nm of h0 with the modelled shifts
// added to its diagonal.
std::vector<double> predict_eigen(const EffectiveHamiltonian& h0, const CrosstalkModel& model,
                                  const VoltageProfile& v, double ref_wavelength_nm);

// Same, for explicit onsite shifts in nm.
std::vector<double> eigen_wavelengths(const EffectiveHamiltonian& h0,
                                      const std::vector<double>& shift_nm,
                                      double ref_wavelength_nm);

// ||predicted - measured||^2 / j_norm after positional pairing.
double normalized_error(const std::vector<double>& predicted, const std::vector<double>& measured,
                        double j_norm_nm);

// Mean |predicted - measured| per mode, as a fraction of j_norm.
double mean_mode_deviation(const std::vector<double>& predicted,
                           const std::vector<double>& measured, double j_norm_nm);

// Ratio of the shift at site+1 to the shift at `site` for a lone heater at
// `site`. The drive level cancels; `volts` must still be positive.
double eta(const CrosstalkModel& model, std::size_t site, double volts = 1.0);

// Mean |Re J| converted to a wavelength span (nm).
double j_norm(const EffectiveHamiltonian& h, double ref_wavelength_nm);

}  // namespace ccatomo
