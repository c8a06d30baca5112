#pragma once

#include <complex>
#include <cstddef>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ccatomo/units.hpp"

namespace ccatomo {

using cplx = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;

// Physical description of an N-site lossy coupled cavity array. All rates in
// GHz, detunings relative to the reference wavelength.
struct LatticeSpec {
  std::vector<double> mu;     // onsite detunings, length N
  std::vector<double> hop;    // hopping rates J_n, length N-1, strictly positive
  std::vector<double> kappa;  // intrinsic loss rates, length N
  double gamma_in = 0.0;      // port coupling at site 0
  double gamma_out = 0.0;     // port coupling at site N-1
  double ref_wavelength_nm = kDefaultRefWavelengthNm;

  std::size_t n_sites() const { return mu.size(); }
  // Throws Error(InvalidSpec) when any invariant is violated.
  void validate() const;

  bool operator==(const LatticeSpec&) const = default;
};

// Complex symmetric tridiagonal matrix. The imaginary part of the diagonal
// carries losses and port couplings (-j*rate/2), so it is never positive.
class EffectiveHamiltonian {
 public:
  EffectiveHamiltonian() = default;
  // Validates symmetry, the tridiagonal band and passivity up to `tol`
  // (absolute, in GHz).
  explicit EffectiveHamiltonian(CMatrix m, double tol = 1e-9);

  static EffectiveHamiltonian from_bands(const CVector& diagonal, const CVector& hopping,
                                         double tol = 1e-9);

  const CMatrix& matrix() const { return m_; }
  Eigen::Index dim() const { return m_.rows(); }
  CVector diagonal() const { return m_.diagonal(); }
  // Super-diagonal entries J_0..J_{N-2}.
  CVector hopping() const;

  // Adds a real detuning (GHz) to every diagonal entry.
  EffectiveHamiltonian with_detuning_shift(const Eigen::VectorXd& shift_ghz) const;

  bool operator==(const EffectiveHamiltonian& o) const { return m_ == o.m_; }

 private:
  CMatrix m_;
};

// Eigenpairs under the unconjugated bilinear form: column a of `vectors`
// satisfies sum_n v(n,a)^2 = 1. Modes are sorted by ascending real part.
struct EigenSystem {
  CVector values;
  CMatrix vectors;
  std::vector<bool> quasi_defective;

  bool any_flagged() const;
};

class FrequencyGrid {
 public:
  FrequencyGrid() = default;
  explicit FrequencyGrid(std::vector<double> points_ghz);

  static FrequencyGrid linspace(double lo_ghz, double hi_ghz, std::size_t n);
  // Evenly spaced wavelengths, returned as increasing detunings.
  static FrequencyGrid from_wavelength_range(double lo_nm, double hi_nm, std::size_t n,
                                             double ref_wavelength_nm);

  const std::vector<double>& points() const { return points_; }
  std::size_t size() const { return points_.size(); }
  double front() const { return points_.front(); }
  double back() const { return points_.back(); }
  double operator[](std::size_t i) const { return points_[i]; }

  bool operator==(const FrequencyGrid&) const = default;

 private:
  std::vector<double> points_;
};

enum class SpectrumKind { Reflection, Transmission };

struct Spectrum {
  FrequencyGrid grid;
  std::vector<double> values;
  SpectrumKind kind = SpectrumKind::Reflection;

  void validate() const;
  bool operator==(const Spectrum&) const = default;
};

EffectiveHamiltonian build_h_eff(const LatticeSpec& spec);

inline constexpr double kDefaultDefectTol = 1e-8;

// Dense complex eigensolver followed by unconjugated renormalization. A mode
// whose raw self-product |v^T v| falls below `tol` is quasi-defective; with
// `throw_on_defect` set this raises DegenerateSpectrum carrying the mode index.
EigenSystem eig_complex_symmetric(const EffectiveHamiltonian& h, double tol = kDefaultDefectTol,
                                  bool throw_on_defect = true);

// Eigenvalues only, sorted by ascending real part.
CVector eigenvalues(const EffectiveHamiltonian& h);

// |R|^2 and |T|^2 from a direct linear solve at every grid point.
std::pair<Spectrum, Spectrum> resolvent_response(const EffectiveHamiltonian& h, double gamma_in,
                                                 double gamma_out, const FrequencyGrid& grid);

// |R|^2 and |T|^2 from the eigenmode expansion of the resolvent.
std::pair<Spectrum, Spectrum> modal_response(const EigenSystem& eig, double gamma_in,
                                             double gamma_out, const FrequencyGrid& grid);

}  // namespace ccatomo
