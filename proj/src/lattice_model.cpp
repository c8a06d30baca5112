#include "ccatomo/lattice_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "ccatomo/errors.hpp"

namespace ccatomo {

namespace {

constexpr cplx kJ{0.0, 1.0};

std::vector<Eigen::Index> ascending_real_order(const CVector& values) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(values.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    if (values(a).real() != values(b).real()) return values(a).real() < values(b).real();
    return values(a).imag() < values(b).imag();
  });
  return order;
}

}  // namespace

void LatticeSpec::validate() const {
  const std::size_t n = mu.size();
  if (n == 0) throw Error(ErrorKind::InvalidSpec, "lattice needs at least one site");
  if (kappa.size() != n)
    throw Error(ErrorKind::InvalidSpec, "kappa has " + std::to_string(kappa.size()) +
                                            " entries, expected " + std::to_string(n));
  if (hop.size() + 1 != n)
    throw Error(ErrorKind::InvalidSpec, "hop has " + std::to_string(hop.size()) +
                                            " entries, expected " + std::to_string(n - 1));
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(mu[i])) throw Error(ErrorKind::InvalidSpec, "non-finite mu", long(i));
    if (!(kappa[i] >= 0.0)) throw Error(ErrorKind::InvalidSpec, "negative kappa", long(i));
  }
  for (std::size_t i = 0; i + 1 < n; ++i)
    if (!(hop[i] > 0.0) || !std::isfinite(hop[i]))
      throw Error(ErrorKind::InvalidSpec, "hopping rates must be real and positive", long(i));
  if (!(gamma_in >= 0.0) || !(gamma_out >= 0.0))
    throw Error(ErrorKind::InvalidSpec, "port coupling rates must be non-negative");
  if (!(ref_wavelength_nm > 0.0))
    throw Error(ErrorKind::InvalidSpec, "reference wavelength must be positive");
}

EffectiveHamiltonian::EffectiveHamiltonian(CMatrix m, double tol) : m_(std::move(m)) {
  if (m_.rows() != m_.cols() || m_.rows() == 0)
    throw Error(ErrorKind::InvalidSpec, "Hamiltonian must be a non-empty square matrix");
  const Eigen::Index n = m_.rows();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (m_(i, i).imag() > tol)
      throw Error(ErrorKind::InvalidSpec, "diagonal entry has positive imaginary part (gain)",
                  long(i));
    for (Eigen::Index k = 0; k < n; ++k) {
      if (!std::isfinite(m_(i, k).real()) || !std::isfinite(m_(i, k).imag()))
        throw Error(ErrorKind::InvalidSpec, "non-finite matrix entry", long(i));
      if (std::abs(i - k) > 1 && std::abs(m_(i, k)) > tol)
        throw Error(ErrorKind::InvalidSpec, "matrix is not tridiagonal", long(i));
      if (std::abs(m_(i, k) - m_(k, i)) > tol)
        throw Error(ErrorKind::InvalidSpec, "matrix is not transpose-symmetric", long(i));
    }
  }
}

EffectiveHamiltonian EffectiveHamiltonian::from_bands(const CVector& diagonal,
                                                      const CVector& hopping, double tol) {
  const Eigen::Index n = diagonal.size();
  if (n == 0 || hopping.size() + 1 != n)
    throw Error(ErrorKind::InvalidSpec, "band sizes do not describe a tridiagonal matrix");
  CMatrix m = CMatrix::Zero(n, n);
  m.diagonal() = diagonal;
  for (Eigen::Index i = 0; i + 1 < n; ++i) {
    m(i, i + 1) = hopping(i);
    m(i + 1, i) = hopping(i);
  }
  return EffectiveHamiltonian(std::move(m), tol);
}

CVector EffectiveHamiltonian::hopping() const {
  const Eigen::Index n = dim();
  CVector j(std::max<Eigen::Index>(n - 1, 0));
  for (Eigen::Index i = 0; i + 1 < n; ++i) j(i) = m_(i, i + 1);
  return j;
}

EffectiveHamiltonian EffectiveHamiltonian::with_detuning_shift(
    const Eigen::VectorXd& shift_ghz) const {
  if (shift_ghz.size() != dim())
    throw Error(ErrorKind::InvalidProfile, "detuning shift length does not match dimension");
  EffectiveHamiltonian out = *this;
  for (Eigen::Index i = 0; i < dim(); ++i) out.m_(i, i) += shift_ghz(i);
  return out;
}

bool EigenSystem::any_flagged() const {
  return std::any_of(quasi_defective.begin(), quasi_defective.end(), [](bool b) { return b; });
}

FrequencyGrid::FrequencyGrid(std::vector<double> points_ghz) : points_(std::move(points_ghz)) {
  if (points_.size() < 2) throw Error(ErrorKind::InsufficientData, "grid needs at least 2 points");
  for (std::size_t i = 0; i < points_.size(); ++i) {
    if (!std::isfinite(points_[i]))
      throw Error(ErrorKind::InvalidSpec, "non-finite grid point", long(i));
    if (i > 0 && !(points_[i] > points_[i - 1]))
      throw Error(ErrorKind::InvalidSpec, "grid is not strictly increasing", long(i));
  }
}

FrequencyGrid FrequencyGrid::linspace(double lo_ghz, double hi_ghz, std::size_t n) {
  if (n < 2) throw Error(ErrorKind::InsufficientData, "grid needs at least 2 points");
  std::vector<double> p(n);
  const double step = (hi_ghz - lo_ghz) / double(n - 1);
  for (std::size_t i = 0; i < n; ++i) p[i] = lo_ghz + step * double(i);
  p.back() = hi_ghz;
  return FrequencyGrid(std::move(p));
}

FrequencyGrid FrequencyGrid::from_wavelength_range(double lo_nm, double hi_nm, std::size_t n,
                                                   double ref_wavelength_nm) {
  if (n < 2) throw Error(ErrorKind::InsufficientData, "grid needs at least 2 points");
  if (!(ref_wavelength_nm > 0.0))
    throw Error(ErrorKind::InvalidSpec, "reference wavelength must be positive");
  std::vector<double> p(n);
  const double step = (hi_nm - lo_nm) / double(n - 1);
  // Longer wavelength means lower frequency, so walk the range backwards.
  for (std::size_t i = 0; i < n; ++i) {
    const double wl = (i + 1 == n) ? lo_nm : hi_nm - step * double(i);
    p[i] = to_detuning(wl - ref_wavelength_nm, ref_wavelength_nm);
  }
  return FrequencyGrid(std::move(p));
}

void Spectrum::validate() const {
  if (values.size() != grid.size())
    throw Error(ErrorKind::InvalidSpec, "spectrum has " + std::to_string(values.size()) +
                                            " values for " + std::to_string(grid.size()) +
                                            " grid points");
  for (std::size_t i = 0; i < values.size(); ++i)
    if (!(values[i] >= 0.0) || !std::isfinite(values[i]))
      throw Error(ErrorKind::InvalidSpec, "spectrum values must be finite and non-negative",
                  long(i));
}

EffectiveHamiltonian build_h_eff(const LatticeSpec& spec) {
  spec.validate();
  const auto n = static_cast<Eigen::Index>(spec.n_sites());
  CVector diag(n);
  for (Eigen::Index i = 0; i < n; ++i)
    diag(i) = cplx(spec.mu[std::size_t(i)], -0.5 * spec.kappa[std::size_t(i)]);
  diag(0) -= kJ * (0.5 * spec.gamma_in);
  diag(n - 1) -= kJ * (0.5 * spec.gamma_out);
  CVector hop(n - 1);
  for (Eigen::Index i = 0; i + 1 < n; ++i) hop(i) = spec.hop[std::size_t(i)];
  return EffectiveHamiltonian::from_bands(diag, hop);
}

EigenSystem eig_complex_symmetric(const EffectiveHamiltonian& h, double tol,
                                  bool throw_on_defect) {
  const Eigen::Index n = h.dim();
  Eigen::ComplexEigenSolver<CMatrix> solver(h.matrix(), true);
  if (solver.info() != Eigen::Success)
    throw Error(ErrorKind::DegenerateSpectrum, "eigensolver failed to converge");

  const auto order = ascending_real_order(solver.eigenvalues());
  EigenSystem out;
  out.values.resize(n);
  out.vectors.resize(n, n);
  out.quasi_defective.assign(std::size_t(n), false);

  for (Eigen::Index a = 0; a < n; ++a) {
    const Eigen::Index src = order[std::size_t(a)];
    out.values(a) = solver.eigenvalues()(src);
    CVector v = solver.eigenvectors().col(src);
    const cplx self = (v.transpose() * v)(0, 0);
    if (std::abs(self) < tol) {
      out.quasi_defective[std::size_t(a)] = true;
      if (throw_on_defect)
        throw Error(ErrorKind::DegenerateSpectrum,
                    "mode " + std::to_string(a) + " has vanishing unconjugated norm", long(a));
      out.vectors.col(a) = v;
      continue;
    }
    v /= std::sqrt(self);
    const double scale = v.cwiseAbs().maxCoeff();
    for (Eigen::Index i = 0; i < n; ++i) {
      if (std::abs(v(i)) > 1e-12 * scale) {
        if (v(i).real() < 0.0 || (v(i).real() == 0.0 && v(i).imag() < 0.0)) v = -v;
        break;
      }
    }
    out.vectors.col(a) = v;
  }
  return out;
}

CVector eigenvalues(const EffectiveHamiltonian& h) {
  Eigen::ComplexEigenSolver<CMatrix> solver(h.matrix(), false);
  if (solver.info() != Eigen::Success)
    throw Error(ErrorKind::DegenerateSpectrum, "eigensolver failed to converge");
  const auto order = ascending_real_order(solver.eigenvalues());
  CVector out(h.dim());
  for (Eigen::Index a = 0; a < h.dim(); ++a) out(a) = solver.eigenvalues()(order[std::size_t(a)]);
  return out;
}

std::pair<Spectrum, Spectrum> resolvent_response(const EffectiveHamiltonian& h, double gamma_in,
                                                 double gamma_out, const FrequencyGrid& grid) {
  if (!(gamma_in >= 0.0) || !(gamma_out >= 0.0))
    throw Error(ErrorKind::InvalidSpec, "port coupling rates must be non-negative");
  const Eigen::Index n = h.dim();
  const double t_scale = std::sqrt(gamma_in * gamma_out);
  Spectrum r{grid, std::vector<double>(grid.size()), SpectrumKind::Reflection};
  Spectrum t{grid, std::vector<double>(grid.size()), SpectrumKind::Transmission};
  CVector rhs = CVector::Zero(n);
  rhs(0) = 1.0;
  const CMatrix identity = CMatrix::Identity(n, n);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const CMatrix a = grid[i] * identity - h.matrix();
    Eigen::PartialPivLU<CMatrix> lu(a);
    if (!(lu.rcond() > 1e-14))
      throw Error(ErrorKind::SingularFrequency,
                  "resolvent is singular at grid point " + std::to_string(i) + " (" +
                      std::to_string(grid[i]) + " GHz)",
                  long(i));
    const CVector x = lu.solve(rhs);
    r.values[i] = std::norm(1.0 - kJ * gamma_in * x(0));
    t.values[i] = std::norm(-kJ * t_scale * x(n - 1));
  }
  return {std::move(r), std::move(t)};
}

std::pair<Spectrum, Spectrum> modal_response(const EigenSystem& eig, double gamma_in,
                                             double gamma_out, const FrequencyGrid& grid) {
  if (eig.any_flagged())
    throw Error(ErrorKind::DegenerateSpectrum,
                "quasi-defective modes present; use the resolvent route instead");
  if (!(gamma_in >= 0.0) || !(gamma_out >= 0.0))
    throw Error(ErrorKind::InvalidSpec, "port coupling rates must be non-negative");
  const Eigen::Index n = eig.values.size();
  const double t_scale = std::sqrt(gamma_in * gamma_out);
  CVector refl_residue(n), trans_residue(n);
  for (Eigen::Index a = 0; a < n; ++a) {
    refl_residue(a) = eig.vectors(0, a) * eig.vectors(0, a);
    trans_residue(a) = eig.vectors(n - 1, a) * eig.vectors(0, a);
  }
  Spectrum r{grid, std::vector<double>(grid.size()), SpectrumKind::Reflection};
  Spectrum t{grid, std::vector<double>(grid.size()), SpectrumKind::Transmission};
  for (std::size_t i = 0; i < grid.size(); ++i) {
    cplx g00 = 0.0, gn0 = 0.0;
    for (Eigen::Index a = 0; a < n; ++a) {
      const cplx pole = 1.0 / (grid[i] - eig.values(a));
      g00 += refl_residue(a) * pole;
      gn0 += trans_residue(a) * pole;
    }
    r.values[i] = std::norm(1.0 - kJ * gamma_in * g00);
    t.values[i] = std::norm(-kJ * t_scale * gn0);
  }
  return {std::move(r), std::move(t)};
}

}  // namespace ccatomo
