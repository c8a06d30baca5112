#include "ccatomo/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "ccatomo/errors.hpp"
#include "least_squares.hpp"

namespace ccatomo {

namespace {

// Eigen-wavelengths without eigenvectors; the fit evaluates this thousands of
// times per Jacobian.
void fast_eigen_wavelengths(const EffectiveHamiltonian& h0, const std::vector<double>& shift_nm,
                            double ref_nm, double* out) {
  CMatrix m = h0.matrix();
  for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, i) += to_detuning(shift_nm[std::size_t(i)], ref_nm);
  Eigen::ComplexEigenSolver<CMatrix> solver(m, false);
  if (solver.info() != Eigen::Success)
    throw Error(ErrorKind::DegenerateSpectrum, "eigensolver failed to converge");
  const auto n = std::size_t(m.rows());
  for (std::size_t a = 0; a < n; ++a)
    out[a] = ref_nm + to_wavelength(solver.eigenvalues()(Eigen::Index(a)).real(), ref_nm);
  std::sort(out, out + n);
}

bool drives_only(const VoltageProfile& v, std::size_t heater) {
  for (std::size_t i = 0; i < v.volts.size(); ++i) {
    if (i == heater) {
      if (!(v.volts[i] > 0.0)) return false;
    } else if (v.volts[i] != 0.0) {
      return false;
    }
  }
  return true;
}

bool all_zero(const VoltageProfile& v) {
  return std::all_of(v.volts.begin(), v.volts.end(), [](double x) { return x == 0.0; });
}

// Parameter layout of the full model: delta (N), alpha (N), beta (3), gamma (12).
Eigen::VectorXd pack(const CrosstalkModel& m) {
  const auto n = Eigen::Index(m.n_sites());
  Eigen::VectorXd x(2 * n + Eigen::Index(kBetaCount + kGammaCount));
  for (Eigen::Index i = 0; i < n; ++i) {
    x(i) = m.delta_nm[std::size_t(i)];
    x(n + i) = m.alpha_nm_per_v2[std::size_t(i)];
  }
  for (std::size_t d = 0; d < kBetaCount; ++d) x(2 * n + Eigen::Index(d)) = m.beta[d];
  for (std::size_t g = 0; g < kGammaCount; ++g)
    x(2 * n + Eigen::Index(kBetaCount + g)) = m.gamma[g];
  return x;
}

CrosstalkModel unpack(const Eigen::VectorXd& x, std::size_t n_sites) {
  const auto n = Eigen::Index(n_sites);
  CrosstalkModel m;
  m.delta_nm.resize(n_sites);
  m.alpha_nm_per_v2.resize(n_sites);
  for (Eigen::Index i = 0; i < n; ++i) {
    m.delta_nm[std::size_t(i)] = x(i);
    m.alpha_nm_per_v2[std::size_t(i)] = x(n + i);
  }
  for (std::size_t d = 0; d < kBetaCount; ++d) m.beta[d] = x(2 * n + Eigen::Index(d));
  for (std::size_t g = 0; g < kGammaCount; ++g)
    m.gamma[g] = x(2 * n + Eigen::Index(kBetaCount + g));
  return m;
}

// delta_mu without the positivity checks, so the optimizer may probe freely.
std::vector<double> model_shift(const CrosstalkModel& m, const VoltageProfile& v) {
  CrosstalkModel probe = m;
  for (auto& a : probe.alpha_nm_per_v2) a = std::abs(a);
  return delta_mu(probe, v);
}

}  // namespace

void SweepDataset::validate() const {
  const auto n = std::size_t(h0.dim());
  if (n == 0) throw Error(ErrorKind::InvalidProfile, "dataset has no reference Hamiltonian");
  for (std::size_t r = 0; r < records.size(); ++r) {
    records[r].profile.validate(n);
    const auto& e = records[r].measured_eigen_nm;
    if (e.size() != n)
      throw Error(ErrorKind::InvalidProfile,
                  "record " + std::to_string(r) + " has " + std::to_string(e.size()) +
                      " eigenvalues, expected " + std::to_string(n),
                  long(r));
    if (!std::is_sorted(e.begin(), e.end()))
      throw Error(ErrorKind::InvalidProfile, "record " + std::to_string(r) + " is not sorted",
                  long(r));
  }
}

std::vector<SweepRecord> single_drive_records(const SweepDataset& dataset, std::size_t heater) {
  std::vector<SweepRecord> out;
  for (const auto& r : dataset.records)
    if (drives_only(r.profile, heater)) out.push_back(r);
  return out;
}

std::vector<double> invert_onsite_shift(const EffectiveHamiltonian& h0,
                                        const std::vector<double>& measured_eigen_nm,
                                        double ref_wavelength_nm) {
  const auto n = std::size_t(h0.dim());
  if (measured_eigen_nm.size() != n)
    throw Error(ErrorKind::InvalidProfile, "eigenvalue count does not match dimension");
  const detail::ResidualFn rows = [&](const Eigen::VectorXd& x, Eigen::VectorXd& r) {
    std::vector<double> shift(x.data(), x.data() + x.size());
    std::vector<double> wl(n);
    fast_eigen_wavelengths(h0, shift, ref_wavelength_nm, wl.data());
    r.resize(Eigen::Index(n));
    for (std::size_t i = 0; i < n; ++i) r(Eigen::Index(i)) = wl[i] - measured_eigen_nm[i];
  };
  const detail::JacobianFn jac = [&](const Eigen::VectorXd& x, Eigen::MatrixXd& j) {
    detail::central_difference_jacobian(rows, x, Eigen::Index(n), j, 1e-6, 1e-7);
  };
  detail::LmOptions opts;
  opts.max_evaluations = 100;
  opts.ftol = opts.xtol = 1e-14;
  const auto lm = detail::levenberg_marquardt(Eigen::VectorXd::Zero(Eigen::Index(n)),
                                              Eigen::Index(n), rows, jac, opts);
  return {lm.x.data(), lm.x.data() + lm.x.size()};
}

SingleHeaterFit fit_single_heater(const EffectiveHamiltonian& h0,
                                  const std::vector<SweepRecord>& records, std::size_t heater,
                                  double ref_wavelength_nm, const std::vector<double>& baseline_nm) {
  const auto n = std::size_t(h0.dim());
  if (heater >= n) throw Error(ErrorKind::InvalidSpec, "heater index out of range", long(heater));
  if (!baseline_nm.empty() && baseline_nm.size() != n)
    throw Error(ErrorKind::InvalidProfile, "baseline length does not match dimension");

  SingleHeaterFit fit;
  fit.heater = heater;
  for (int d = -kCrosstalkWindow; d <= kCrosstalkWindow; ++d) {
    const long m = long(heater) + d;
    if (d != 0 && m >= 0 && m < long(n)) fit.neighbors.push_back(std::size_t(m));
  }
  const std::size_t n_params = 1 + fit.neighbors.size();

  std::size_t informative = 0;
  for (std::size_t r = 0; r < records.size(); ++r) {
    records[r].profile.validate(n);
    if (records[r].measured_eigen_nm.size() != n)
      throw Error(ErrorKind::InvalidProfile, "record eigenvalue count mismatch", long(r));
    for (std::size_t i = 0; i < n; ++i)
      if (i != heater && records[r].profile.volts[i] != 0.0)
        throw Error(ErrorKind::Precondition,
                    "record " + std::to_string(r) + " drives a heater other than " +
                        std::to_string(heater),
                    long(r));
    if (records[r].profile.volts[heater] > 0.0) ++informative;
  }
  if (informative < n_params)
    throw Error(ErrorKind::Underdetermined,
                std::to_string(informative) + " driven records for " + std::to_string(n_params) +
                    " free parameters");

  const std::vector<double> base = baseline_nm.empty() ? std::vector<double>(n, 0.0) : baseline_nm;
  const double jn = j_norm(h0, ref_wavelength_nm);
  const double scale = 1.0 / std::sqrt(jn);

  auto shifts = [&](const Eigen::VectorXd& x, double v2) {
    std::vector<double> s = base;
    s[heater] += x(0) * v2;
    for (std::size_t k = 0; k < fit.neighbors.size(); ++k)
      s[fit.neighbors[k]] += x(Eigen::Index(k + 1)) * v2;
    return s;
  };
  const auto m_rows = Eigen::Index(records.size() * n);
  const detail::ResidualFn rows = [&](const Eigen::VectorXd& x, Eigen::VectorXd& r) {
    r.resize(m_rows);
    std::vector<double> wl(n);
    for (std::size_t k = 0; k < records.size(); ++k) {
      const double v = records[k].profile.volts[heater];
      fast_eigen_wavelengths(h0, shifts(x, v * v), ref_wavelength_nm, wl.data());
      for (std::size_t i = 0; i < n; ++i)
        r(Eigen::Index(k * n + i)) = (wl[i] - records[k].measured_eigen_nm[i]) * scale;
    }
  };
  const detail::JacobianFn jac = [&](const Eigen::VectorXd& x, Eigen::MatrixXd& j) {
    detail::central_difference_jacobian(rows, x, m_rows, j, 1e-6, 1e-8);
  };

  // The eigenvalue sum follows the trace, so the mean wavelength shift per V^2
  // bounds the total deposited shift; attribute it to the driven site.
  double num = 0.0, den = 0.0;
  std::vector<double> base_wl(n);
  fast_eigen_wavelengths(h0, base, ref_wavelength_nm, base_wl.data());
  for (const auto& r : records) {
    const double v2 = r.profile.volts[heater] * r.profile.volts[heater];
    double shift = 0.0;
    for (std::size_t i = 0; i < n; ++i) shift += r.measured_eigen_nm[i] - base_wl[i];
    num += shift * v2;
    den += v2 * v2;
  }
  Eigen::VectorXd x0 = Eigen::VectorXd::Zero(Eigen::Index(n_params));
  x0(0) = den > 0.0 ? num / den : 0.0;

  detail::LmOptions opts;
  opts.max_evaluations = 100;
  opts.ftol = opts.xtol = 1e-14;
  const auto lm = detail::levenberg_marquardt(x0, m_rows, rows, jac, opts);
  fit.alpha = lm.x(0);
  for (std::size_t k = 0; k < fit.neighbors.size(); ++k)
    fit.beta_prime.push_back(lm.x(Eigen::Index(k + 1)));
  fit.mean_error = lm.residual_norm * lm.residual_norm / double(records.size());
  fit.converged = lm.converged && fit.alpha > 0.0;
  return fit;
}

CalibrationResult fit_full(const SweepDataset& dataset, const CalibrationConfig& config) {
  dataset.validate();
  const auto n = std::size_t(dataset.h0.dim());
  const std::size_t n_params = 2 * n + kBetaCount + kGammaCount;
  if (dataset.records.size() < n_params)
    throw Error(ErrorKind::Underdetermined, std::to_string(dataset.records.size()) +
                                                " records for " + std::to_string(n_params) +
                                                " free parameters");
  const double ref = dataset.ref_wavelength_nm;
  const double jn = j_norm(dataset.h0, ref);

  // Seeding: delta from a zero-drive record, alpha and beta from single-heater ramps.
  CrosstalkModel seed = CrosstalkModel::zeros(n);
  for (const auto& r : dataset.records)
    if (all_zero(r.profile)) {
      seed.delta_nm = invert_onsite_shift(dataset.h0, r.measured_eigen_nm, ref);
      break;
    }
  std::array<double, kBetaCount> beta_sum{};
  std::array<int, kBetaCount> beta_count{};
  std::vector<double> alphas;
  std::vector<bool> have_alpha(n, false);
  for (std::size_t h = 0; h < n; ++h) {
    const auto recs = single_drive_records(dataset, h);
    if (recs.size() < 1 + 2 * std::size_t(kCrosstalkWindow)) continue;
    SingleHeaterFit f;
    try {
      f = fit_single_heater(dataset.h0, recs, h, ref, seed.delta_nm);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::Underdetermined) continue;
      throw;
    }
    if (!(f.alpha > 0.0)) continue;
    seed.alpha_nm_per_v2[h] = f.alpha;
    have_alpha[h] = true;
    alphas.push_back(f.alpha);
    for (std::size_t k = 0; k < f.neighbors.size(); ++k) {
      const auto d = std::size_t(std::abs(long(f.neighbors[k]) - long(h)));
      beta_sum[d - 1] += f.beta_prime[k] / f.alpha;
      ++beta_count[d - 1];
    }
  }
  const double alpha_default =
      alphas.empty() ? config.alpha_fallback
                     : std::accumulate(alphas.begin(), alphas.end(), 0.0) / double(alphas.size());
  for (std::size_t h = 0; h < n; ++h)
    if (!have_alpha[h]) seed.alpha_nm_per_v2[h] = alpha_default;
  for (std::size_t d = 0; d < kBetaCount; ++d)
    seed.beta[d] = beta_count[d] > 0 ? beta_sum[d] / beta_count[d] : 0.0;

  Eigen::VectorXd x0 = pack(seed);
  if (config.init_jitter > 0.0) {
    std::mt19937_64 rng(config.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Eigen::Index i = 0; i < x0.size(); ++i) {
      const bool is_gamma = i >= Eigen::Index(2 * n + kBetaCount);
      // Gamma seeds sit at zero, so perturb them on an absolute scale.
      x0(i) = is_gamma ? x0(i) + config.init_jitter * 0.01 * normal(rng)
                       : x0(i) * (1.0 + config.init_jitter * normal(rng));
    }
  }

  const auto& records = dataset.records;
  const auto m_rows = Eigen::Index(records.size() * n);
  const double scale = 1.0 / std::sqrt(jn);
  const detail::ResidualFn rows = [&](const Eigen::VectorXd& x, Eigen::VectorXd& r) {
    r.resize(m_rows);
    const auto model = unpack(x, n);
    std::vector<double> wl(n);
    for (std::size_t k = 0; k < records.size(); ++k) {
      fast_eigen_wavelengths(dataset.h0, model_shift(model, records[k].profile), ref, wl.data());
      for (std::size_t i = 0; i < n; ++i)
        r(Eigen::Index(k * n + i)) = (wl[i] - records[k].measured_eigen_nm[i]) * scale;
    }
  };
  const detail::JacobianFn jac = [&](const Eigen::VectorXd& x, Eigen::MatrixXd& j) {
    detail::central_difference_jacobian(rows, x, m_rows, j, 1e-6, 1e-8);
  };

  detail::LmOptions opts;
  opts.max_evaluations = config.max_evaluations;
  opts.ftol = opts.xtol = config.tolerance;
  const auto lm = detail::levenberg_marquardt(x0, m_rows, rows, jac, opts);

  CalibrationResult out;
  out.model = unpack(lm.x, n);
  out.iterations = lm.iterations;
  out.converged = lm.converged;
  for (double a : out.model.alpha_nm_per_v2)
    if (!(a > 0.0)) out.converged = false;
  if (out.converged) {
    const auto report = holdout_evaluate(out.model, dataset);
    out.per_record_error = report.errors;
    out.per_record_mode_dev = report.mode_deviation;
    out.mean_error = report.mean_error;
  } else {
    CrosstalkModel probe = out.model;
    for (auto& a : probe.alpha_nm_per_v2) a = std::abs(a);
    std::vector<double> wl(n);
    for (const auto& r : records) {
      fast_eigen_wavelengths(dataset.h0, delta_mu(probe, r.profile), ref, wl.data());
      out.per_record_error.push_back(normalized_error(wl, r.measured_eigen_nm, jn));
      out.per_record_mode_dev.push_back(mean_mode_deviation(wl, r.measured_eigen_nm, jn));
    }
    out.mean_error = std::accumulate(out.per_record_error.begin(), out.per_record_error.end(), 0.0) /
                     double(records.size());
  }
  return out;
}

HoldoutReport holdout_evaluate(const CrosstalkModel& model, const SweepDataset& holdout) {
  model.validate();
  holdout.validate();
  const auto n = std::size_t(holdout.h0.dim());
  if (model.n_sites() != n)
    throw Error(ErrorKind::InvalidProfile, "model and hold-out dimensions differ");
  HoldoutReport out;
  if (holdout.records.empty()) return out;
  const double jn = j_norm(holdout.h0, holdout.ref_wavelength_nm);
  for (const auto& r : holdout.records) {
    const auto pred = predict_eigen(holdout.h0, model, r.profile, holdout.ref_wavelength_nm);
    out.errors.push_back(normalized_error(pred, r.measured_eigen_nm, jn));
    out.mode_deviation.push_back(mean_mode_deviation(pred, r.measured_eigen_nm, jn));
  }
  const double count = double(out.errors.size());
  out.mean_error = std::accumulate(out.errors.begin(), out.errors.end(), 0.0) / count;
  out.max_error = *std::max_element(out.errors.begin(), out.errors.end());
  out.mean_mode_deviation =
      std::accumulate(out.mode_deviation.begin(), out.mode_deviation.end(), 0.0) / count;
  std::vector<double> sorted = out.errors;
  std::sort(sorted.begin(), sorted.end());
  const std::array<double, 5> probs{0.0, 0.25, 0.5, 0.75, 1.0};
  for (std::size_t q = 0; q < probs.size(); ++q) {
    const double pos = probs[q] * (count - 1.0);
    const auto lo = std::size_t(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    out.quantiles[q] = sorted[lo] + (pos - double(lo)) * (sorted[hi] - sorted[lo]);
  }
  return out;
}

}  // namespace ccatomo
