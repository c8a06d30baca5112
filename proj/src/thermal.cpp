#include "ccatomo/thermal.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ccatomo/errors.hpp"

namespace ccatomo {

namespace {

constexpr int kSpan = 2 * kCrosstalkWindow + 1;

int slot(int a, int b) { return (a + kCrosstalkWindow) * kSpan + (b + kCrosstalkWindow); }

// Orbit key: the lexicographically smaller of {a, b} and {-a, -b}, each written
// with its smaller element first.
std::pair<int, int> canonical(int a, int b) {
  std::pair<int, int> p{std::min(a, b), std::max(a, b)};
  std::pair<int, int> q{std::min(-a, -b), std::max(-a, -b)};
  return std::max(p, q);
}

// Zero-involving orbits first, then {a,-a}, then the rest.
int orbit_class(std::pair<int, int> rep) {
  if (rep.first == 0 || rep.second == 0) return 0;
  if (rep.first == -rep.second) return 1;
  return 2;
}

}  // namespace

void VoltageProfile::validate(std::size_t n_sites) const {
  if (volts.size() != n_sites)
    throw Error(ErrorKind::InvalidProfile, "profile has " + std::to_string(volts.size()) +
                                               " voltages for " + std::to_string(n_sites) +
                                               " sites");
  for (std::size_t i = 0; i < volts.size(); ++i)
    if (!(volts[i] >= 0.0) || !std::isfinite(volts[i]))
      throw Error(ErrorKind::InvalidProfile, "voltages must be finite and non-negative", long(i));
}

OrbitTable::OrbitTable() {
  lookup_.fill(-1);
  std::vector<std::pair<int, int>> reps;
  for (int a = -kCrosstalkWindow; a <= kCrosstalkWindow; ++a)
    for (int b = a + 1; b <= kCrosstalkWindow; ++b) {
      const auto rep = canonical(a, b);
      if (std::find(reps.begin(), reps.end(), rep) == reps.end()) reps.push_back(rep);
    }
  std::stable_sort(reps.begin(), reps.end(), [](auto x, auto y) {
    const int cx = orbit_class(x), cy = orbit_class(y);
    if (cx != cy) return cx < cy;
    const int mx = std::max(std::abs(x.first), std::abs(x.second));
    const int my = std::max(std::abs(y.first), std::abs(y.second));
    if (mx != my) return mx < my;
    return x < y;
  });
  reps_ = reps;
  for (int a = -kCrosstalkWindow; a <= kCrosstalkWindow; ++a)
    for (int b = a + 1; b <= kCrosstalkWindow; ++b) {
      const auto rep = canonical(a, b);
      const int orbit = int(std::find(reps_.begin(), reps_.end(), rep) - reps_.begin());
      pairs_.push_back({a, b, orbit});
      lookup_[std::size_t(slot(a, b))] = orbit;
      lookup_[std::size_t(slot(b, a))] = orbit;
    }
}

int OrbitTable::index(int a, int b) const {
  if (a == b || std::abs(a) > kCrosstalkWindow || std::abs(b) > kCrosstalkWindow)
    throw Error(ErrorKind::InvalidSpec, "offset pair outside the crosstalk window");
  return lookup_[std::size_t(slot(a, b))];
}

const OrbitTable& orbit_table() {
  static const OrbitTable table;
  return table;
}

void CrosstalkModel::validate() const {
  const std::size_t n = alpha_nm_per_v2.size();
  if (n == 0) throw Error(ErrorKind::InvalidSpec, "crosstalk model needs at least one site");
  if (delta_nm.size() != n)
    throw Error(ErrorKind::InvalidSpec, "delta and alpha lengths differ");
  for (std::size_t i = 0; i < n; ++i) {
    if (!(alpha_nm_per_v2[i] > 0.0) || !std::isfinite(alpha_nm_per_v2[i]))
      throw Error(ErrorKind::InvalidSpec, "heater efficiency alpha must be positive", long(i));
    if (!std::isfinite(delta_nm[i]))
      throw Error(ErrorKind::InvalidSpec, "non-finite delta", long(i));
  }
  for (double b : beta)
    if (!std::isfinite(b)) throw Error(ErrorKind::InvalidSpec, "non-finite beta");
  for (double g : gamma)
    if (!std::isfinite(g)) throw Error(ErrorKind::InvalidSpec, "non-finite gamma");
}

CrosstalkModel CrosstalkModel::zeros(std::size_t n_sites) {
  CrosstalkModel m;
  m.delta_nm.assign(n_sites, 0.0);
  m.alpha_nm_per_v2.assign(n_sites, 1.0);
  return m;
}

std::vector<double> delta_mu(const CrosstalkModel& model, const VoltageProfile& v) {
  const std::size_t n = model.n_sites();
  v.validate(n);
  const auto& table = orbit_table();
  const auto in_range = [n](long i) { return i >= 0 && i < long(n); };

  // Heater drive terms alpha_i V_i^2 and sqrt(alpha_i) V_i.
  std::vector<double> power(n), root(n);
  for (std::size_t i = 0; i < n; ++i) {
    power[i] = model.alpha_nm_per_v2[i] * v.volts[i] * v.volts[i];
    root[i] = std::sqrt(model.alpha_nm_per_v2[i]) * v.volts[i];
  }

  std::vector<double> out(n);
  for (std::size_t site = 0; site < n; ++site) {
    const long s = long(site);
    double shift = model.delta_nm[site] + power[site];
    for (int d = 1; d <= kCrosstalkWindow; ++d) {
      const double b = model.beta[std::size_t(d - 1)];
      if (in_range(s - d)) shift += b * power[std::size_t(s - d)];
      if (in_range(s + d)) shift += b * power[std::size_t(s + d)];
    }
    for (const auto& p : table.pairs()) {
      if (!in_range(s + p.a) || !in_range(s + p.b)) continue;
      shift += model.gamma[std::size_t(p.orbit)] * root[std::size_t(s + p.a)] *
               root[std::size_t(s + p.b)];
    }
    out[site] = shift;
  }
  return out;
}

std::pair<double, double> single_heater_shift(double alpha_nm_per_v2, double beta_prime_nm_per_v2,
                                              double volts) {
  if (!(volts >= 0.0)) throw Error(ErrorKind::InvalidProfile, "voltage must be non-negative");
  const double v2 = volts * volts;
  return {alpha_nm_per_v2 * v2, beta_prime_nm_per_v2 * v2};
}

std::vector<double> eigen_wavelengths(const EffectiveHamiltonian& h0,
                                      const std::vector<double>& shift_nm,
                                      double ref_wavelength_nm) {
  if (Eigen::Index(shift_nm.size()) != h0.dim())
    throw Error(ErrorKind::InvalidProfile, "shift vector does not match Hamiltonian dimension");
  Eigen::VectorXd shift_ghz(h0.dim());
  for (Eigen::Index i = 0; i < h0.dim(); ++i)
    shift_ghz(i) = to_detuning(shift_nm[std::size_t(i)], ref_wavelength_nm);
  const auto eig = eig_complex_symmetric(h0.with_detuning_shift(shift_ghz));
  std::vector<double> wl(std::size_t(h0.dim()));
  for (Eigen::Index a = 0; a < h0.dim(); ++a)
    wl[std::size_t(a)] = ref_wavelength_nm + to_wavelength(eig.values(a).real(), ref_wavelength_nm);
  std::sort(wl.begin(), wl.end());
  return wl;
}

std::vector<double> predict_eigen(const EffectiveHamiltonian& h0, const CrosstalkModel& model,
                                  const VoltageProfile& v, double ref_wavelength_nm) {
  if (Eigen::Index(model.n_sites()) != h0.dim())
    throw Error(ErrorKind::InvalidProfile, "model and Hamiltonian dimensions differ");
  return eigen_wavelengths(h0, delta_mu(model, v), ref_wavelength_nm);
}

double normalized_error(const std::vector<double>& predicted, const std::vector<double>& measured,
                        double j_norm_nm) {
  if (predicted.size() != measured.size())
    throw Error(ErrorKind::InvalidProfile, "predicted and measured spectra differ in length");
  if (!(j_norm_nm > 0.0)) throw Error(ErrorKind::InvalidSpec, "j_norm must be positive");
  double s = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double d = predicted[i] - measured[i];
    s += d * d;
  }
  return s / j_norm_nm;
}

double mean_mode_deviation(const std::vector<double>& predicted,
                           const std::vector<double>& measured, double j_norm_nm) {
  if (predicted.size() != measured.size())
    throw Error(ErrorKind::InvalidProfile, "predicted and measured spectra differ in length");
  if (!(j_norm_nm > 0.0)) throw Error(ErrorKind::InvalidSpec, "j_norm must be positive");
  if (predicted.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) s += std::abs(predicted[i] - measured[i]);
  return s / double(predicted.size()) / j_norm_nm;
}

double eta(const CrosstalkModel& model, std::size_t site, double volts) {
  if (site + 1 >= model.n_sites())
    throw Error(ErrorKind::InvalidSpec, "site " + std::to_string(site) + " has no right neighbor",
                long(site));
  if (!(volts > 0.0)) throw Error(ErrorKind::InvalidProfile, "drive voltage must be positive");
  // The shifts are linear in the deposited power alpha V^2, which cancels in
  // the ratio; evaluating at unit power keeps the cancellation exact.
  CrosstalkModel drive = model;
  std::fill(drive.delta_nm.begin(), drive.delta_nm.end(), 0.0);
  drive.alpha_nm_per_v2[site] = 1.0;
  VoltageProfile v{std::vector<double>(model.n_sites(), 0.0)};
  v.volts[site] = 1.0;
  const auto shift = delta_mu(drive, v);
  return shift[site + 1] / shift[site];
}

double j_norm(const EffectiveHamiltonian& h, double ref_wavelength_nm) {
  if (h.dim() < 2) throw Error(ErrorKind::InvalidSpec, "j_norm needs at least two sites");
  const CVector hops = h.hopping();
  const double mean = hops.real().cwiseAbs().mean();
  return std::abs(to_wavelength(mean, ref_wavelength_nm));
}

}  // namespace ccatomo
