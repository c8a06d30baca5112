#pragma once

#include <cstdint>
#include <vector>

#include "ccatomo/lattice_model.hpp"

namespace ccatomo {

// One complex-Lorentzian term A e^{j phi} / (omega - center + j halfwidth) of
// the reflection amplitude.
struct LorentzianMode {
  double amplitude = 0.0;  // GHz, >= 0
  double phase = 0.0;      // radians in (-pi, pi]
  double center = 0.0;     // GHz
  double halfwidth = 1.0;  // GHz, > 0

  cplx residue() const { return std::polar(amplitude, phase); }
  cplx eigenvalue() const { return {center, -halfwidth}; }
  static LorentzianMode from_residue(cplx residue, double center, double halfwidth);
};

struct LorentzianSum {
  std::vector<LorentzianMode> modes;

  cplx residue_sum() const;
  // Port rate recovered from the residue sum: Re(sum A e^{j phi}).
  double gamma0() const { return residue_sum().real(); }
  // |R(omega)|^2 of the modal expansion.
  double reflection(double omega) const;
  Spectrum reflection(const FrequencyGrid& grid) const;
  void sort_by_center();
};

struct FitConfig {
  int multi_starts = 8;
  long max_evaluations = 200;  // per start
  double tolerance = 1e-14;
  double residue_penalty_weight = 1.0;
  double hop_penalty_weight = 1.0;
  // Width (GHz) of the smoothing used so the absolute-value penalties can be
  // handed to a least-squares refiner.
  double penalty_smoothing = 1e-4;
  // Required distance between outermost dip and grid edge, in linewidths (FWHM).
  double margin_linewidths = 5.0;
  bool enforce_margin = true;
  double hop_floor = 1e-9;
  double normalization_tol = 1e-2;
  std::uint64_t seed = 0;
};

struct FitReport {
  double residual = 0.0;         // sum of squared spectral misfits
  double penalty_residue = 0.0;  // |Im(sum A e^{j phi})|
  double penalty_hops = 0.0;     // sum |Im J_i|
  double objective = 0.0;        // residual + weighted penalties
  long iterations = 0;
  bool converged = false;
  int best_start = 0;
};

struct ReconstructConfig {
  double hop_floor = 1e-9;
  // Allowed |sum_a <v_n|e_a>^2 - 1| at any site.
  double normalization_tol = 1e-2;
};

struct Reconstruction {
  EffectiveHamiltonian hamiltonian;
  // weights(n, a) = <v_n|e_a>; rows are sites, columns modes.
  CMatrix weights;
  double gamma0 = 0.0;
  // Norm of the residual vector left after the last site (zero for exact data).
  double tail_residual = 0.0;
};

// Seeds for the reflection fit from the deepest dips of |R|^2.
LorentzianSum seed_modes(const Spectrum& spectrum, int n_modes);

std::pair<LorentzianSum, FitReport> fit_reflection(const Spectrum& spectrum, int n_modes,
                                                   const FitConfig& config = {});

// Site-by-site recovery of the tridiagonal Hamiltonian from the modal
// eigenvalues and their port-0 spectral weights.
Reconstruction reconstruct(const LorentzianSum& lsum, const ReconstructConfig& config = {});

// Transmission fits fix the eigenvalues only; the spectral weights are not
// identifiable from |T|^2.
CVector eigenvalues_from_transmission(const Spectrum& spectrum, int n_modes,
                                      const FitConfig& config = {});

// Normalized L2 misfit ||T_pred - T_meas||^2 / ||T_meas||^2 of the transmission
// predicted by a recovered Hamiltonian.
double validate_reconstruction(const EffectiveHamiltonian& h, double gamma_in, double gamma_out,
                               const Spectrum& measured_t);

// Same misfit between two spectra; throws ResampleRequired when their grids differ.
double spectral_misfit(const Spectrum& predicted, const Spectrum& measured);

// Convenience for the closed loop: modal parameters of a known Hamiltonian.
LorentzianSum lorentzians_from_hamiltonian(const EffectiveHamiltonian& h, double gamma_in);

}  // namespace ccatomo
