#include "ccatomo/tomography.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>

#include "ccatomo/errors.hpp"
#include "least_squares.hpp"

namespace ccatomo {

namespace {

constexpr cplx kJ{0.0, 1.0};
constexpr int kParamsPerMode = 4;  // Re c, Im c, center, log halfwidth
// Penalty (GHz) charged for every hop when the recursion breaks down mid-fit.
constexpr double kBrokenChainPenalty = 10.0;
// Noisy fits plateau long before the relative tolerances trigger.
constexpr long kStallWindow = 20;
constexpr double kStallTolerance = 1e-5;

// ---------------------------------------------------------------------------
// Parameter packing

Eigen::VectorXd pack(const LorentzianSum& s) {
  Eigen::VectorXd x(kParamsPerMode * Eigen::Index(s.modes.size()));
  for (std::size_t a = 0; a < s.modes.size(); ++a) {
    const auto& m = s.modes[a];
    const cplx c = m.residue();
    const auto k = Eigen::Index(kParamsPerMode * a);
    x(k) = c.real();
    x(k + 1) = c.imag();
    x(k + 2) = m.center;
    x(k + 3) = std::log(m.halfwidth);
  }
  return x;
}

LorentzianSum unpack(const Eigen::VectorXd& x) {
  LorentzianSum s;
  const auto n = x.size() / kParamsPerMode;
  s.modes.reserve(std::size_t(n));
  for (Eigen::Index a = 0; a < n; ++a) {
    const auto k = kParamsPerMode * a;
    s.modes.push_back(
        LorentzianMode::from_residue({x(k), x(k + 1)}, x(k + 2), std::exp(x(k + 3))));
  }
  return s;
}

// Signed square root of the pseudo-Huber function: squares to ~|p| away from
// zero and is smooth through zero.
double smoothed_abs_root(double p, double width) {
  const double h = std::sqrt(p * p + width * width) - width;
  return std::copysign(std::sqrt(std::max(h, 0.0)), p);
}

// ---------------------------------------------------------------------------
// Site-by-site recursion (non-throwing core, also used inside the fit)

struct RecursionResult {
  CVector diagonal;
  CVector hopping;
  CMatrix weights;
  double tail_residual = 0.0;
  long broken_at = -1;
};

RecursionResult run_recursion(const CVector& eps, const CVector& residues, double gamma0,
                              double hop_floor) {
  const Eigen::Index n = eps.size();
  RecursionResult out;
  out.diagonal = CVector::Zero(n);
  out.hopping = CVector::Zero(std::max<Eigen::Index>(n - 1, 0));
  out.weights = CMatrix::Zero(n, n);
  for (Eigen::Index a = 0; a < n; ++a) out.weights(0, a) = std::sqrt(residues(a) / gamma0);

  for (Eigen::Index site = 0; site < n; ++site) {
    const CVector w = out.weights.row(site).transpose();
    const cplx mu = (eps.array() * w.array().square()).sum();
    out.diagonal(site) = mu;
    CVector r = (eps.array() - mu) * w.array();
    if (site > 0) r -= out.hopping(site - 1) * out.weights.row(site - 1).transpose();
    if (site + 1 == n) {
      out.tail_residual = r.norm();
      break;
    }
    // Principal root: non-negative real part, so all hops share one sign.
    const cplx hop = std::sqrt(r.array().square().sum());
    if (!(std::abs(hop) > hop_floor) || !(std::abs(hop.real()) > 1e-12) ||
        !std::isfinite(hop.real()) || !std::isfinite(hop.imag())) {
      out.broken_at = long(site);
      return out;
    }
    out.hopping(site) = hop;
    out.weights.row(site + 1) = (r / hop).transpose();
  }
  return out;
}

void split_modes(const LorentzianSum& s, CVector& eps, CVector& residues) {
  const auto n = Eigen::Index(s.modes.size());
  eps.resize(n);
  residues.resize(n);
  for (Eigen::Index a = 0; a < n; ++a) {
    eps(a) = s.modes[std::size_t(a)].eigenvalue();
    residues(a) = s.modes[std::size_t(a)].residue();
  }
}

// ---------------------------------------------------------------------------
// Spectral models

// Reflection: g = 1 - j sum c p, P = |g|^2.
void reflection_rows(const Eigen::VectorXd& x, const std::vector<double>& grid,
                     const std::vector<double>& measured, Eigen::VectorXd& r) {
  const Eigen::Index n = x.size() / kParamsPerMode;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    cplx g = 1.0;
    for (Eigen::Index a = 0; a < n; ++a) {
      const auto k = kParamsPerMode * a;
      const cplx c{x(k), x(k + 1)};
      g -= kJ * c / cplx(grid[i] - x(k + 2), std::exp(x(k + 3)));
    }
    r(Eigen::Index(i)) = std::norm(g) - measured[i];
  }
}

void reflection_jacobian(const Eigen::VectorXd& x, const std::vector<double>& grid,
                         Eigen::MatrixXd& jac) {
  const Eigen::Index n = x.size() / kParamsPerMode;
  std::vector<cplx> p(std::size_t(n), 0.0), c(std::size_t(n), 0.0);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    cplx g = 1.0;
    for (Eigen::Index a = 0; a < n; ++a) {
      const auto k = kParamsPerMode * a;
      c[std::size_t(a)] = {x(k), x(k + 1)};
      p[std::size_t(a)] = 1.0 / cplx(grid[i] - x(k + 2), std::exp(x(k + 3)));
      g -= kJ * c[std::size_t(a)] * p[std::size_t(a)];
    }
    const cplx gc = std::conj(g);
    const auto row = Eigen::Index(i);
    for (Eigen::Index a = 0; a < n; ++a) {
      const auto k = kParamsPerMode * a;
      const cplx pa = p[std::size_t(a)], ca = c[std::size_t(a)];
      const double beta = std::exp(x(k + 3));
      jac(row, k) = 2.0 * (gc * (-kJ * pa)).real();
      jac(row, k + 1) = 2.0 * (gc * pa).real();
      jac(row, k + 2) = 2.0 * (gc * (-kJ * ca * pa * pa)).real();
      jac(row, k + 3) = 2.0 * (gc * (-ca * pa * pa * beta)).real();
    }
  }
}

// Transmission: g = sum c p, P = |g|^2.
void transmission_rows(const Eigen::VectorXd& x, const std::vector<double>& grid,
                       const std::vector<double>& measured, Eigen::VectorXd& r) {
  const Eigen::Index n = x.size() / kParamsPerMode;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    cplx g = 0.0;
    for (Eigen::Index a = 0; a < n; ++a) {
      const auto k = kParamsPerMode * a;
      g += cplx(x(k), x(k + 1)) / cplx(grid[i] - x(k + 2), std::exp(x(k + 3)));
    }
    r(Eigen::Index(i)) = std::norm(g) - measured[i];
  }
}

void transmission_jacobian(const Eigen::VectorXd& x, const std::vector<double>& grid,
                           Eigen::MatrixXd& jac) {
  const Eigen::Index n = x.size() / kParamsPerMode;
  std::vector<cplx> p(std::size_t(n), 0.0), c(std::size_t(n), 0.0);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    cplx g = 0.0;
    for (Eigen::Index a = 0; a < n; ++a) {
      const auto k = kParamsPerMode * a;
      c[std::size_t(a)] = {x(k), x(k + 1)};
      p[std::size_t(a)] = 1.0 / cplx(grid[i] - x(k + 2), std::exp(x(k + 3)));
      g += c[std::size_t(a)] * p[std::size_t(a)];
    }
    const cplx gc = std::conj(g);
    const auto row = Eigen::Index(i);
    for (Eigen::Index a = 0; a < n; ++a) {
      const auto k = kParamsPerMode * a;
      const cplx pa = p[std::size_t(a)], ca = c[std::size_t(a)];
      const double beta = std::exp(x(k + 3));
      jac(row, k) = 2.0 * (gc * pa).real();
      jac(row, k + 1) = 2.0 * (gc * kJ * pa).real();
      jac(row, k + 2) = 2.0 * (gc * ca * pa * pa).real();
      jac(row, k + 3) = 2.0 * (gc * (-kJ * ca * pa * pa * beta)).real();
    }
  }
}

// ---------------------------------------------------------------------------
// Physicality penalties

struct Penalties {
  double residue = 0.0;    // Im(sum c)
  CVector hops;            // recovered J_i (complex)
  bool broken = false;
};

Penalties evaluate_penalties(const LorentzianSum& s, double hop_floor) {
  Penalties p;
  const cplx sum = s.residue_sum();
  p.residue = sum.imag();
  const auto n = Eigen::Index(s.modes.size());
  p.hops = CVector::Zero(std::max<Eigen::Index>(n - 1, 0));
  if (n < 2) return p;
  if (!(sum.real() > 0.0)) {
    p.broken = true;
    return p;
  }
  CVector eps, res;
  split_modes(s, eps, res);
  const auto rec = run_recursion(eps, res, sum.real(), hop_floor);
  if (rec.broken_at >= 0) {
    p.broken = true;
    return p;
  }
  p.hops = rec.hopping;
  return p;
}

double hop_penalty(const Penalties& p) {
  if (p.broken) return kBrokenChainPenalty * double(std::max<Eigen::Index>(p.hops.size(), 1));
  return p.hops.imag().cwiseAbs().sum();
}

void penalty_rows(const Eigen::VectorXd& x, const FitConfig& cfg, Eigen::VectorXd& out) {
  const auto lsum = unpack(x);
  const auto pen = evaluate_penalties(lsum, cfg.hop_floor);
  out(0) = std::sqrt(cfg.residue_penalty_weight) * smoothed_abs_root(pen.residue, cfg.penalty_smoothing);
  for (Eigen::Index i = 0; i < pen.hops.size(); ++i) {
    const double im = pen.broken ? kBrokenChainPenalty : pen.hops(i).imag();
    out(1 + i) = std::sqrt(cfg.hop_penalty_weight) * smoothed_abs_root(im, cfg.penalty_smoothing);
  }
}

// ---------------------------------------------------------------------------
// Dip / peak detection

struct Feature {
  std::size_t index = 0;
  double center = 0.0;
  double depth = 0.0;  // positive feature size
  double halfwidth = 0.0;
};

double robust_noise(const std::vector<double>& v) {
  if (v.size() < 3) return 0.0;
  std::vector<double> d2;
  d2.reserve(v.size() - 2);
  for (std::size_t i = 1; i + 1 < v.size(); ++i)
    d2.push_back(std::abs(v[i + 1] - 2.0 * v[i] + v[i - 1]));
  auto mid = d2.begin() + std::ptrdiff_t(d2.size() / 2);
  std::nth_element(d2.begin(), mid, d2.end());
  // Second differences of white noise have standard deviation sqrt(6) sigma.
  return 1.4826 * (*mid) / std::sqrt(6.0);
}

std::vector<double> boxcar(const std::vector<double>& v, std::size_t half) {
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::size_t lo = i >= half ? i - half : 0;
    const std::size_t hi = std::min(v.size() - 1, i + half);
    double s = 0.0;
    for (std::size_t k = lo; k <= hi; ++k) s += v[k];
    out[i] = s / double(hi - lo + 1);
  }
  return out;
}

// Finds the strongest features of `signal`, where a feature is a local maximum
// of `signal` measured against zero. Overlapping detections are suppressed.
std::vector<Feature> find_features(const std::vector<double>& grid, std::vector<double> signal,
                                   std::size_t max_count) {
  const double noise = robust_noise(signal);
  if (noise > 1e-6) signal = boxcar(signal, 2);
  const double threshold = std::max(1e-9, 4.0 * noise);

  std::vector<Feature> candidates;
  for (std::size_t i = 1; i + 1 < signal.size(); ++i) {
    if (signal[i] > signal[i - 1] && signal[i] >= signal[i + 1] && signal[i] > threshold) {
      Feature f;
      f.index = i;
      f.depth = signal[i];
      // Parabolic refinement of the extremum position.
      const double y0 = signal[i - 1], y1 = signal[i], y2 = signal[i + 1];
      const double denom = y0 - 2.0 * y1 + y2;
      double shift = denom != 0.0 ? 0.5 * (y0 - y2) / denom : 0.0;
      shift = std::clamp(shift, -0.5, 0.5);
      const double step = shift >= 0 ? grid[i + 1] - grid[i] : grid[i] - grid[i - 1];
      f.center = grid[i] + shift * step;
      // Half-height crossings on either side, linearly interpolated.
      const double half = 0.5 * signal[i];
      std::size_t l = i;
      while (l > 0 && signal[l] > half) --l;
      double left = grid[l];
      if (signal[l] <= half && l < i)
        left = grid[l] + (half - signal[l]) / (signal[l + 1] - signal[l]) * (grid[l + 1] - grid[l]);
      std::size_t r = i;
      while (r + 1 < signal.size() && signal[r] > half) ++r;
      double right = grid[r];
      if (signal[r] <= half && r > i)
        right = grid[r] - (half - signal[r]) / (signal[r - 1] - signal[r]) * (grid[r] - grid[r - 1]);
      const double min_step = grid[std::min(i + 1, grid.size() - 1)] - grid[i];
      f.halfwidth = std::max(0.5 * (right - left), min_step);
      candidates.push_back(f);
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Feature& a, const Feature& b) { return a.depth > b.depth; });
  std::vector<Feature> accepted;
  for (const auto& c : candidates) {
    if (accepted.size() >= max_count) break;
    const bool overlaps = std::any_of(accepted.begin(), accepted.end(), [&](const Feature& a) {
      return std::abs(a.center - c.center) < a.halfwidth;
    });
    if (!overlaps) accepted.push_back(c);
  }
  return accepted;
}

double typical_halfwidth(const std::vector<Feature>& features, const FrequencyGrid& grid) {
  if (features.empty()) return 5.0 * (grid.back() - grid.front()) / double(grid.size() - 1);
  std::vector<double> w;
  for (const auto& f : features) w.push_back(f.halfwidth);
  std::nth_element(w.begin(), w.begin() + std::ptrdiff_t(w.size() / 2), w.end());
  return w[w.size() / 2];
}

void check_margin(const std::vector<Feature>& features, const FrequencyGrid& grid,
                  const FitConfig& cfg) {
  if (!cfg.enforce_margin) return;
  double strongest = 0.0;
  for (const auto& f : features) strongest = std::max(strongest, f.depth);
  const double linewidth = 2.0 * typical_halfwidth(features, grid);
  for (const auto& f : features) {
    if (f.depth < 1e-3 * strongest) continue;
    const double need = cfg.margin_linewidths * linewidth;
    if (f.center - grid.front() < need || grid.back() - f.center < need)
      throw Error(ErrorKind::Precondition,
                  "feature at " + std::to_string(f.center) +
                      " GHz is closer to the grid edge than the required margin of " +
                      std::to_string(cfg.margin_linewidths) +
                      " linewidths; extend the probe range",
                  long(f.index));
  }
}

void check_fit_input(const Spectrum& spectrum, int n_modes, SpectrumKind kind) {
  spectrum.validate();
  if (n_modes < 1) throw Error(ErrorKind::InvalidSpec, "mode count must be at least 1");
  if (spectrum.grid.size() < 3)
    throw Error(ErrorKind::InsufficientData, "spectrum needs at least 3 points");
  if (spectrum.kind != kind)
    throw Error(ErrorKind::InvalidSpec, kind == SpectrumKind::Reflection
                                            ? "expected a reflection spectrum"
                                            : "expected a transmission spectrum");
}

std::vector<double> uniform_centers(const FrequencyGrid& grid, std::size_t count) {
  std::vector<double> c(count);
  const double span = grid.back() - grid.front();
  for (std::size_t k = 0; k < count; ++k)
    c[k] = grid.front() + span * (double(k) + 0.5) / double(count);
  return c;
}

// ---------------------------------------------------------------------------
// Rational seeding. A power spectrum |g|^2 where g has poles eps_a is a real
// rational function with poles eps_a and conj(eps_a); vector fitting finds
// them by repeated pole relocation.

struct PoleFit {
  CVector poles;     // lower half plane
  CVector residues;  // residue of the fitted power spectrum at each pole
  double constant = 0.0;
};

// Columns 2 Re(q) and -2 Im(q) with q = 1/(w - p), so that c1, c2 give the
// pair r/(w - p) + conj(r)/(w - conj p) with r = c1 + j c2.
void pole_columns(const std::vector<double>& grid, const CVector& poles, Eigen::MatrixXd& a,
                  Eigen::Index offset) {
  for (Eigen::Index k = 0; k < poles.size(); ++k)
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const cplx q = 1.0 / (grid[i] - poles(k));
      a(Eigen::Index(i), offset + 2 * k) = 2.0 * q.real();
      a(Eigen::Index(i), offset + 2 * k + 1) = -2.0 * q.imag();
    }
}

Eigen::VectorXd scaled_solve(Eigen::MatrixXd a, const Eigen::VectorXd& b) {
  Eigen::VectorXd scale = a.colwise().norm().transpose();
  for (Eigen::Index j = 0; j < scale.size(); ++j)
    if (!(scale(j) > 0.0)) scale(j) = 1.0;
  a = a * scale.cwiseInverse().asDiagonal();
  Eigen::VectorXd x = a.colPivHouseholderQr().solve(b);
  return x.cwiseQuotient(scale);
}

// Zeros of s(w) = d + sum over poles and their conjugates, as the eigenvalues
// of diag(p) - ones * (r/d)^T.
CVector rational_zeros(const CVector& poles, const CVector& residues, double d) {
  const Eigen::Index n = poles.size();
  CMatrix m = CMatrix::Zero(2 * n, 2 * n);
  CVector r(2 * n);
  for (Eigen::Index k = 0; k < n; ++k) {
    m(k, k) = poles(k);
    m(n + k, n + k) = std::conj(poles(k));
    r(k) = residues(k) / d;
    r(n + k) = std::conj(residues(k)) / d;
  }
  m -= CVector::Ones(2 * n) * r.transpose();
  Eigen::ComplexEigenSolver<CMatrix> es(m, false);
  return es.eigenvalues();
}

// Picks one member of each conjugate pair: the `n` roots with the smallest
// (lower) or largest (upper) imaginary part.
CVector half_plane(const CVector& roots, Eigen::Index n, bool lower, double min_gap) {
  std::vector<cplx> v(roots.data(), roots.data() + roots.size());
  std::sort(v.begin(), v.end(), [](cplx a, cplx b) { return a.imag() < b.imag(); });
  if (!lower) std::reverse(v.begin(), v.end());
  CVector out(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    cplx z = v[std::size_t(k)];
    if (lower && z.imag() > -min_gap) z = {z.real(), -min_gap};
    if (!lower && z.imag() < 0.0) z = std::conj(z);
    out(k) = z;
  }
  return out;
}

PoleFit vector_fit(const std::vector<double>& grid, const std::vector<double>& f, CVector poles,
                   bool with_constant, int iterations) {
  const auto m = Eigen::Index(grid.size());
  const Eigen::Index n = poles.size();
  const Eigen::Index nd = with_constant ? 1 : 0;
  const double min_gap = 1e-3 * (grid.back() - grid.front()) / double(grid.size());
  Eigen::VectorXd b = Eigen::Map<const Eigen::VectorXd>(f.data(), m);

  for (int it = 0; it < iterations; ++it) {
    Eigen::MatrixXd a(m, 4 * n + nd);
    pole_columns(grid, poles, a, 0);
    if (with_constant) a.col(2 * n).setOnes();
    Eigen::MatrixXd sigma(m, 2 * n);
    pole_columns(grid, poles, sigma, 0);
    a.rightCols(2 * n) = -(b.asDiagonal() * sigma);
    const Eigen::VectorXd x = scaled_solve(a, b);
    CVector rs(n);
    for (Eigen::Index k = 0; k < n; ++k)
      rs(k) = {x(2 * n + nd + 2 * k), x(2 * n + nd + 2 * k + 1)};
    const CVector next = half_plane(rational_zeros(poles, rs, 1.0), n, true, min_gap);
    if (!next.allFinite()) break;
    const double moved = (next - poles).cwiseAbs().maxCoeff();
    poles = next;
    if (moved < 1e-10 * (1.0 + poles.cwiseAbs().maxCoeff())) break;
  }

  Eigen::MatrixXd a(m, 2 * n + nd);
  pole_columns(grid, poles, a, 0);
  if (with_constant) a.col(2 * n).setOnes();
  const Eigen::VectorXd x = scaled_solve(a, b);
  PoleFit out;
  out.poles = poles;
  out.residues.resize(n);
  for (Eigen::Index k = 0; k < n; ++k) out.residues(k) = {x(2 * k), x(2 * k + 1)};
  out.constant = with_constant ? x(2 * n) : 0.0;
  return out;
}

CVector initial_poles(const std::vector<Feature>& features, const FrequencyGrid& grid,
                      std::size_t count) {
  const double width = typical_halfwidth(features, grid);
  std::vector<cplx> p;
  for (const auto& f : features) p.emplace_back(f.center, -f.halfwidth);
  for (double c : uniform_centers(grid, count - features.size())) p.emplace_back(c, -width);
  CVector out(Eigen::Index(p.size()));
  for (std::size_t k = 0; k < p.size(); ++k) out(Eigen::Index(k)) = p[k];
  return out;
}

// Reflection amplitude from the fitted |R|^2: poles are the eigenvalues, and
// each zero of R is known up to conjugation. Every assignment is tried and the
// one whose recursion gives the most nearly real hopping wins.
std::optional<Eigen::VectorXd> rational_reflection_seed(const Spectrum& spectrum,
                                                        const std::vector<Feature>& features,
                                                        int n_modes, const FitConfig& cfg) {
  const auto fit = vector_fit(spectrum.grid.points(), spectrum.values,
                              initial_poles(features, spectrum.grid, std::size_t(n_modes)), true,
                              40);
  if (!(fit.constant > 0.0) || !fit.poles.allFinite() || !fit.residues.allFinite())
    return std::nullopt;
  const Eigen::Index n = n_modes;
  const CVector upper = half_plane(rational_zeros(fit.poles, fit.residues, fit.constant), n,
                                   false, 0.0);
  const CVector& eps = fit.poles;

  std::optional<Eigen::VectorXd> best;
  double best_cost = std::numeric_limits<double>::infinity();
  CVector zeros(n), res(n);
  const std::uint64_t combos = std::uint64_t(1) << std::min<Eigen::Index>(n, 20);
  for (std::uint64_t mask = 0; mask < combos; ++mask) {
    for (Eigen::Index k = 0; k < n; ++k)
      zeros(k) = (mask >> k) & 1U ? std::conj(upper(k)) : upper(k);
    for (Eigen::Index a = 0; a < n; ++a) {
      cplx num = 1.0, den = 1.0;
      for (Eigen::Index k = 0; k < n; ++k) {
        num *= eps(a) - zeros(k);
        if (k != a) den *= eps(a) - eps(k);
      }
      res(a) = kJ * num / den;
    }
    const cplx sum = res.sum();
    if (!(sum.real() > 0.0)) continue;
    const auto rec = run_recursion(eps, res, sum.real(), cfg.hop_floor);
    if (rec.broken_at >= 0) continue;
    const double cost = std::abs(sum.imag()) + rec.hopping.imag().cwiseAbs().sum();
    if (cost < best_cost) {
      best_cost = cost;
      Eigen::VectorXd x(kParamsPerMode * n);
      for (Eigen::Index a = 0; a < n; ++a) {
        x(kParamsPerMode * a) = res(a).real();
        x(kParamsPerMode * a + 1) = res(a).imag();
        x(kParamsPerMode * a + 2) = eps(a).real();
        x(kParamsPerMode * a + 3) = std::log(-eps(a).imag());
      }
      best = x;
    }
  }
  return best;
}

// Transmission of a chain has no finite zeros, so |T|^2 = K / |prod (w - eps)|^2
// and the residues follow from the poles and one real scale.
std::optional<Eigen::VectorXd> rational_transmission_seed(const Spectrum& spectrum,
                                                          const std::vector<Feature>& features,
                                                          int n_modes) {
  const auto& grid = spectrum.grid.points();
  const auto fit = vector_fit(grid, spectrum.values,
                              initial_poles(features, spectrum.grid, std::size_t(n_modes)), false,
                              40);
  if (!fit.poles.allFinite() || !fit.residues.allFinite()) return std::nullopt;
  const CVector& eps = fit.poles;
  const Eigen::Index n = n_modes;
  std::vector<double> scales;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    double q = spectrum.values[i];
    for (Eigen::Index k = 0; k < n; ++k) q *= std::norm(grid[i] - eps(k));
    scales.push_back(q);
  }
  std::nth_element(scales.begin(), scales.begin() + std::ptrdiff_t(scales.size() / 2), scales.end());
  const double k_scale = std::sqrt(std::max(scales[scales.size() / 2], 0.0));
  if (!(k_scale > 0.0) || !std::isfinite(k_scale)) return std::nullopt;
  Eigen::VectorXd x(kParamsPerMode * n);
  for (Eigen::Index a = 0; a < n; ++a) {
    cplx den = 1.0;
    for (Eigen::Index k = 0; k < n; ++k)
      if (k != a) den *= eps(a) - eps(k);
    const cplx c = k_scale / den;
    x(kParamsPerMode * a) = c.real();
    x(kParamsPerMode * a + 1) = c.imag();
    x(kParamsPerMode * a + 2) = eps(a).real();
    x(kParamsPerMode * a + 3) = std::log(-eps(a).imag());
  }
  return x;
}

// ---------------------------------------------------------------------------
// Multi-start driver

struct StartResult {
  Eigen::VectorXd x;
  double objective = std::numeric_limits<double>::infinity();
  double residual = 0.0;
  long iterations = 0;
  bool converged = false;
};

Eigen::VectorXd jitter(const Eigen::VectorXd& x, std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd out = x;
  const Eigen::Index n = x.size() / kParamsPerMode;
  for (Eigen::Index a = 0; a < n; ++a) {
    const auto k = kParamsPerMode * a;
    const double beta = std::exp(x(k + 3));
    const double mag = std::hypot(x(k), x(k + 1));
    const double phase = std::atan2(x(k + 1), x(k)) + 0.3 * scale * normal(rng);
    const double new_mag = mag * std::exp(0.4 * scale * normal(rng));
    out(k) = new_mag * std::cos(phase);
    out(k + 1) = new_mag * std::sin(phase);
    out(k + 2) = x(k + 2) + 0.3 * scale * beta * normal(rng);
    out(k + 3) = x(k + 3) + 0.25 * scale * normal(rng);
  }
  return out;
}

// Moves the weakest mode of `x` to the strongest unexplained feature: the
// largest missing dip (reflection) or peak (transmission) in the misfit after
// smoothing over one linewidth. Collapsed modes, narrower than two grid steps,
// count as weakest.
template <class RowsFn>
Eigen::VectorXd reseed_weakest(const Eigen::VectorXd& x, const Spectrum& spectrum,
                               const RowsFn& rows, int skip, double default_halfwidth,
                               bool reflection) {
  const auto m = Eigen::Index(spectrum.grid.size());
  Eigen::VectorXd r(m);
  rows(x, r);
  const double step = (spectrum.grid.back() - spectrum.grid.front()) / double(m - 1);
  const Eigen::Index n = x.size() / kParamsPerMode;
  std::vector<std::pair<double, Eigen::Index>> strength;
  for (Eigen::Index a = 0; a < n; ++a) {
    const auto k = kParamsPerMode * a;
    const double beta = std::exp(x(k + 3));
    const double s = beta < 2.0 * step ? -1.0 : std::hypot(x(k), x(k + 1)) / beta;
    strength.emplace_back(std::isfinite(s) ? s : -1.0, a);
  }
  std::stable_sort(strength.begin(), strength.end());
  const Eigen::Index victim = strength[std::size_t(skip % n)].second;

  std::vector<double> missing(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < m; ++i) missing[std::size_t(i)] = reflection ? r(i) : -r(i);
  const auto half = std::size_t(std::max(1.0, std::round(default_halfwidth / step)));
  missing = boxcar(missing, half);
  const auto worst = std::size_t(std::max_element(missing.begin(), missing.end()) - missing.begin());

  Eigen::VectorXd out = x;
  const auto k = kParamsPerMode * victim;
  const double depth = std::clamp(std::abs(r(Eigen::Index(worst))), 0.0, 1.0);
  const double beta = default_halfwidth;
  const double mag = reflection ? beta * (1.0 - std::sqrt(1.0 - depth)) : beta * std::sqrt(depth);
  out(k) = mag;
  out(k + 1) = 0.0;
  out(k + 2) = spectrum.grid[worst];
  out(k + 3) = std::log(beta);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

LorentzianMode LorentzianMode::from_residue(cplx residue, double center, double halfwidth) {
  LorentzianMode m;
  m.amplitude = std::abs(residue);
  m.phase = m.amplitude > 0.0 ? std::arg(residue) : 0.0;
  if (m.phase == -M_PI) m.phase = M_PI;
  m.center = center;
  m.halfwidth = halfwidth;
  return m;
}

cplx LorentzianSum::residue_sum() const {
  cplx s = 0.0;
  for (const auto& m : modes) s += m.residue();
  return s;
}

double LorentzianSum::reflection(double omega) const {
  cplx g = 1.0;
  for (const auto& m : modes) g -= kJ * m.residue() / (omega - m.eigenvalue());
  return std::norm(g);
}

Spectrum LorentzianSum::reflection(const FrequencyGrid& grid) const {
  Spectrum s{grid, std::vector<double>(grid.size()), SpectrumKind::Reflection};
  for (std::size_t i = 0; i < grid.size(); ++i) s.values[i] = reflection(grid[i]);
  return s;
}

void LorentzianSum::sort_by_center() {
  std::stable_sort(modes.begin(), modes.end(),
                   [](const LorentzianMode& a, const LorentzianMode& b) { return a.center < b.center; });
}

LorentzianSum seed_modes(const Spectrum& spectrum, int n_modes) {
  spectrum.validate();
  if (n_modes < 1) throw Error(ErrorKind::InvalidSpec, "mode count must be at least 1");
  if (spectrum.grid.size() < 3)
    throw Error(ErrorKind::InsufficientData, "spectrum needs at least 3 points");

  std::vector<double> dip(spectrum.values.size());
  for (std::size_t i = 0; i < dip.size(); ++i) dip[i] = std::max(0.0, 1.0 - spectrum.values[i]);
  const auto features = find_features(spectrum.grid.points(), dip, std::size_t(n_modes));

  LorentzianSum out;
  for (const auto& f : features) {
    const double depth = std::min(f.depth, 1.0);
    // |R|^2 at the bottom of an isolated dip is (1 - A/beta)^2; take the
    // under-coupled root.
    const double amplitude = f.halfwidth * (1.0 - std::sqrt(1.0 - depth));
    out.modes.push_back({amplitude, 0.0, f.center, f.halfwidth});
  }
  const double width = typical_halfwidth(features, spectrum.grid);
  const auto missing = std::size_t(n_modes) - features.size();
  for (double c : uniform_centers(spectrum.grid, missing)) out.modes.push_back({0.0, 0.0, c, width});
  out.sort_by_center();
  return out;
}

std::pair<LorentzianSum, FitReport> fit_reflection(const Spectrum& spectrum, int n_modes,
                                                   const FitConfig& config) {
  check_fit_input(spectrum, n_modes, SpectrumKind::Reflection);
  std::vector<Feature> features;
  {
    std::vector<double> dip(spectrum.values.size());
    for (std::size_t i = 0; i < dip.size(); ++i) dip[i] = std::max(0.0, 1.0 - spectrum.values[i]);
    features = find_features(spectrum.grid.points(), dip, std::size_t(n_modes));
    check_margin(features, spectrum.grid, config);
  }
  const LorentzianSum seeds = seed_modes(spectrum, n_modes);
  const auto& grid = spectrum.grid.points();
  const auto& measured = spectrum.values;
  const auto m_spec = Eigen::Index(grid.size());
  const auto m_total = m_spec + Eigen::Index(n_modes);  // 1 residue row + (N-1) hop rows

  const detail::ResidualFn rows = [&](const Eigen::VectorXd& x, Eigen::VectorXd& r) {
    r.resize(m_total);
    Eigen::VectorXd spec_part(m_spec);
    reflection_rows(x, grid, measured, spec_part);
    r.head(m_spec) = spec_part;
    Eigen::VectorXd pen(n_modes);
    penalty_rows(x, config, pen);
    r.tail(n_modes) = pen;
  };
  const detail::ResidualFn pen_rows = [&](const Eigen::VectorXd& x, Eigen::VectorXd& r) {
    r.resize(n_modes);
    penalty_rows(x, config, r);
  };
  const detail::JacobianFn jac = [&](const Eigen::VectorXd& x, Eigen::MatrixXd& j) {
    j.resize(m_total, x.size());
    Eigen::MatrixXd spec_j(m_spec, x.size());
    reflection_jacobian(x, grid, spec_j);
    j.topRows(m_spec) = spec_j;
    Eigen::VectorXd p0(n_modes);
    pen_rows(x, p0);
    Eigen::MatrixXd pen_j;
    detail::forward_difference_jacobian(pen_rows, x, p0, pen_j, 1e-8, 1e-10);
    j.bottomRows(n_modes) = pen_j;
  };

  detail::LmOptions opts;
  opts.max_evaluations = config.max_evaluations;
  opts.ftol = config.tolerance;
  opts.xtol = config.tolerance;
  opts.stall_window = kStallWindow;
  opts.stall_tol = kStallTolerance;

  auto run = [&](const Eigen::VectorXd& x0) {
    StartResult s;
    const auto lm = detail::levenberg_marquardt(x0, m_total, rows, jac, opts);
    s.x = lm.x;
    Eigen::VectorXd r(m_spec);
    reflection_rows(s.x, grid, measured, r);
    s.residual = r.squaredNorm();
    const auto lsum = unpack(s.x);
    const auto pen = evaluate_penalties(lsum, config.hop_floor);
    s.objective = s.residual + config.residue_penalty_weight * std::abs(pen.residue) +
                  config.hop_penalty_weight * hop_penalty(pen);
    if (!std::isfinite(s.objective)) s.objective = std::numeric_limits<double>::infinity();
    s.iterations = lm.iterations;
    s.converged = lm.converged;
    return s;
  };

  const double default_width = typical_halfwidth(
      [&] {
        std::vector<Feature> f;
        for (const auto& mode : seeds.modes) f.push_back({0, mode.center, 1.0, mode.halfwidth});
        return f;
      }(),
      spectrum.grid);

  // Start 0 runs from the rational seed (or the detected dips when that
  // fails); later starts reseed the best optimum so far or jitter the seeds.
  // Noiseless data that start 0 already reproduces exactly needs no more starts.
  const auto rational = rational_reflection_seed(spectrum, features, n_modes, config);
  std::vector<StartResult> results;
  results.push_back(run(rational ? *rational : pack(seeds)));
  auto best_so_far = [&] {
    std::size_t b = 0;
    for (std::size_t k = 1; k < results.size(); ++k)
      if (results[k].objective < results[b].objective) b = k;
    return b;
  };
  const double scale = Eigen::Map<const Eigen::VectorXd>(measured.data(), m_spec).squaredNorm();
  auto exact = [&](const StartResult& r) {
    return r.residual <= 1e-20 * scale && r.objective - r.residual <= 1e-6;
  };
  // Reseeds move the next-weakest mode of the best optimum so far; a reseed
  // that improves on it restarts the walk from the weakest mode.
  int skip = 0;
  for (int k = 1; k < config.multi_starts && !exact(results[best_so_far()]); ++k) {
    std::mt19937_64 rng(config.seed * 0x9E3779B97F4A7C15ULL + std::uint64_t(k));
    Eigen::VectorXd x0;
    const bool reseed = k % 2 == 1 && !(k == 1 && rational);
    if (k == 1 && rational)
      x0 = pack(seeds);
    else if (reseed)
      x0 = reseed_weakest(results[best_so_far()].x, spectrum,
                          [&](const Eigen::VectorXd& x, Eigen::VectorXd& r) {
                            reflection_rows(x, grid, measured, r);
                          },
                          skip, default_width, true);
    else
      x0 = jitter(pack(seeds), rng, 1.0);
    const double before = results[best_so_far()].objective;
    results.push_back(run(x0));
    if (reseed) skip = results.back().objective < before ? 0 : skip + 1;
  }

  const std::size_t best = best_so_far();
  const auto& b = results[best];
  LorentzianSum lsum = unpack(b.x);
  lsum.sort_by_center();
  const auto pen = evaluate_penalties(lsum, config.hop_floor);
  FitReport report;
  report.residual = b.residual;
  report.penalty_residue = std::abs(pen.residue);
  report.penalty_hops = hop_penalty(pen);
  report.objective = b.objective;
  report.iterations = b.iterations;
  report.converged = (b.converged || exact(b)) && !pen.broken;
  report.best_start = int(best);
  return {std::move(lsum), report};
}

Reconstruction reconstruct(const LorentzianSum& lsum, const ReconstructConfig& config) {
  if (lsum.modes.empty()) throw Error(ErrorKind::InvalidSpec, "no modes to reconstruct from");
  for (std::size_t a = 0; a < lsum.modes.size(); ++a)
    if (!(lsum.modes[a].halfwidth > 0.0) || !(lsum.modes[a].amplitude >= 0.0))
      throw Error(ErrorKind::InvalidSpec, "mode needs positive halfwidth and amplitude", long(a));
  LorentzianSum sorted = lsum;
  sorted.sort_by_center();
  const cplx sum = sorted.residue_sum();
  const double gamma0 = sum.real();
  if (!(gamma0 > 0.0))
    throw Error(ErrorKind::InconsistentModes, "residue sum has non-positive real part");

  CVector eps, res;
  split_modes(sorted, eps, res);
  const auto rec = run_recursion(eps, res, gamma0, config.hop_floor);
  if (rec.broken_at >= 0)
    throw Error(ErrorKind::BrokenChain,
                "hopping rate after site " + std::to_string(rec.broken_at) +
                    " vanishes or has no usable real part",
                rec.broken_at);

  for (Eigen::Index site = 0; site < eps.size(); ++site) {
    const cplx norm = rec.weights.row(site).array().square().sum();
    if (std::abs(norm - 1.0) > config.normalization_tol)
      throw Error(ErrorKind::InconsistentModes,
                  "spectral weights at site " + std::to_string(site) + " sum to " +
                      std::to_string(norm.real()) + (norm.imag() < 0 ? "" : "+") +
                      std::to_string(norm.imag()) + "j",
                  long(site));
  }

  Reconstruction out;
  // Recovered matrices may carry tiny positive imaginary diagonals from fit noise.
  out.hamiltonian = EffectiveHamiltonian::from_bands(rec.diagonal, rec.hopping,
                                                     std::numeric_limits<double>::infinity());
  out.weights = rec.weights;
  out.gamma0 = gamma0;
  out.tail_residual = rec.tail_residual;
  return out;
}

CVector eigenvalues_from_transmission(const Spectrum& spectrum, int n_modes,
                                      const FitConfig& config) {
  check_fit_input(spectrum, n_modes, SpectrumKind::Transmission);
  const auto& grid = spectrum.grid.points();
  const auto& measured = spectrum.values;
  const auto features = find_features(grid, measured, std::size_t(n_modes));
  check_margin(features, spectrum.grid, config);
  const double width = typical_halfwidth(features, spectrum.grid);

  // Residues of the end-to-end Green's function alternate in sign along the
  // sorted spectrum of a chain with same-sign hops.
  struct Seed {
    double center, halfwidth, magnitude;
  };
  std::vector<Seed> seeds;
  for (const auto& f : features) seeds.push_back({f.center, f.halfwidth, f.halfwidth * std::sqrt(f.depth)});
  for (double c : uniform_centers(spectrum.grid, std::size_t(n_modes) - features.size()))
    seeds.push_back({c, width, 0.0});
  std::stable_sort(seeds.begin(), seeds.end(),
                   [](const Seed& a, const Seed& b) { return a.center < b.center; });
  auto seed_vector = [&](bool alternate) {
    Eigen::VectorXd x(kParamsPerMode * n_modes);
    for (int a = 0; a < n_modes; ++a) {
      const auto& s = seeds[std::size_t(a)];
      const double sign = (alternate && (a % 2 == 1)) ? -1.0 : 1.0;
      x(kParamsPerMode * a) = sign * s.magnitude;
      x(kParamsPerMode * a + 1) = 0.0;
      x(kParamsPerMode * a + 2) = s.center;
      x(kParamsPerMode * a + 3) = std::log(s.halfwidth);
    }
    return x;
  };

  const auto m = Eigen::Index(grid.size());
  const detail::ResidualFn rows = [&](const Eigen::VectorXd& x, Eigen::VectorXd& r) {
    r.resize(m);
    transmission_rows(x, grid, measured, r);
  };
  const detail::JacobianFn jac = [&](const Eigen::VectorXd& x, Eigen::MatrixXd& j) {
    j.resize(m, x.size());
    transmission_jacobian(x, grid, j);
  };
  detail::LmOptions opts;
  opts.max_evaluations = config.max_evaluations;
  opts.ftol = config.tolerance;
  opts.xtol = config.tolerance;
  opts.stall_window = kStallWindow;
  opts.stall_tol = kStallTolerance;

  const auto rational = rational_transmission_seed(spectrum, features, n_modes);
  const double scale = Eigen::Map<const Eigen::VectorXd>(measured.data(), m).squaredNorm();
  Eigen::VectorXd best;
  double best_res = std::numeric_limits<double>::infinity();
  Eigen::VectorXd first;
  // Start 0 is the rational seed when available; the same-sign and
  // alternating-sign dip seeds, reseeds and jitters follow.
  const int offset = rational ? 1 : 0;
  for (int k = 0; k < std::max(config.multi_starts, 1) + offset; ++k) {
    if (k > 0 && best_res <= 1e-20 * scale) break;
    const int j = k - offset;
    Eigen::VectorXd x0;
    if (j < 0) {
      x0 = *rational;
    } else if (j == 0) {
      x0 = seed_vector(true);
    } else if (j == 1) {
      x0 = seed_vector(false);
    } else if (j % 2 == 0) {
      x0 = reseed_weakest(best.size() ? best : first, spectrum, rows, (j - 2) / 2, width, false);
    } else {
      std::mt19937_64 rng(config.seed * 0x9E3779B97F4A7C15ULL + std::uint64_t(j));
      x0 = jitter(seed_vector(true), rng, 1.0);
    }
    const auto lm = detail::levenberg_marquardt(x0, m, rows, jac, opts);
    Eigen::VectorXd r(m);
    rows(lm.x, r);
    const double res = r.squaredNorm();
    if (k == 0) first = lm.x;
    if (std::isfinite(res) && res < best_res) {
      best_res = res;
      best = lm.x;
    }
  }
  if (best.size() == 0) best = first;

  CVector eps(n_modes);
  for (int a = 0; a < n_modes; ++a)
    eps(a) = cplx(best(kParamsPerMode * a + 2), -std::exp(best(kParamsPerMode * a + 3)));
  std::vector<cplx> sorted(eps.data(), eps.data() + eps.size());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](cplx a, cplx b) { return a.real() < b.real(); });
  for (int a = 0; a < n_modes; ++a) eps(a) = sorted[std::size_t(a)];
  return eps;
}

double validate_reconstruction(const EffectiveHamiltonian& h, double gamma_in, double gamma_out,
                               const Spectrum& measured_t) {
  measured_t.validate();
  if (measured_t.kind != SpectrumKind::Transmission)
    throw Error(ErrorKind::InvalidSpec, "validation needs a transmission spectrum");
  const auto predicted = resolvent_response(h, gamma_in, gamma_out, measured_t.grid).second;
  return spectral_misfit(predicted, measured_t);
}

double spectral_misfit(const Spectrum& predicted, const Spectrum& measured) {
  if (!(predicted.grid == measured.grid))
    throw Error(ErrorKind::ResampleRequired,
                "spectra are sampled on different grids; resample before comparing");
  if (predicted.values.size() != measured.values.size())
    throw Error(ErrorKind::ResampleRequired, "spectra have different lengths");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < predicted.values.size(); ++i) {
    const double d = predicted.values[i] - measured.values[i];
    num += d * d;
    den += measured.values[i] * measured.values[i];
  }
  if (num == 0.0) return 0.0;
  return den > 0.0 ? num / den : std::numeric_limits<double>::infinity();
}

LorentzianSum lorentzians_from_hamiltonian(const EffectiveHamiltonian& h, double gamma_in) {
  const auto eig = eig_complex_symmetric(h);
  LorentzianSum s;
  for (Eigen::Index a = 0; a < eig.values.size(); ++a) {
    const cplx residue = gamma_in * eig.vectors(0, a) * eig.vectors(0, a);
    s.modes.push_back(
        LorentzianMode::from_residue(residue, eig.values(a).real(), -eig.values(a).imag()));
  }
  return s;
}

}  // namespace ccatomo
