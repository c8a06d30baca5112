#include "ccatomo/virtual_device.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "ccatomo/errors.hpp"

namespace ccatomo {

namespace {

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(stream),
                    std::uint32_t(stream >> 32)};
  return std::mt19937_64(seq);
}

EffectiveHamiltonian shifted_hamiltonian(const DeviceTruth& truth, const VoltageProfile& v) {
  const auto h = build_h_eff(truth.spec);
  const auto shift_nm = delta_mu(truth.model, v);
  Eigen::VectorXd shift_ghz(h.dim());
  for (Eigen::Index i = 0; i < h.dim(); ++i)
    shift_ghz(i) = to_detuning(shift_nm[std::size_t(i)], truth.spec.ref_wavelength_nm);
  return h.with_detuning_shift(shift_ghz);
}

FrequencyGrid grid_around(const CVector& eps, double linewidth, std::size_t points, double margin) {
  double lo = eps(0).real(), hi = eps(0).real();
  for (Eigen::Index a = 1; a < eps.size(); ++a) {
    lo = std::min(lo, eps(a).real());
    hi = std::max(hi, eps(a).real());
  }
  return FrequencyGrid::linspace(lo - margin * linewidth, hi + margin * linewidth, points);
}

double loaded_linewidth(const LatticeSpec& spec) {
  double widest = 0.0;
  for (std::size_t i = 0; i < spec.n_sites(); ++i) {
    double w = spec.kappa[i];
    if (i == 0) w += spec.gamma_in;
    if (i + 1 == spec.n_sites()) w += spec.gamma_out;
    widest = std::max(widest, w);
  }
  return widest;
}

}  // namespace

void DeviceRanges::validate() const {
  auto bad = [](const std::string& what) { throw Error(ErrorKind::InvalidSpec, what); };
  if (n_sites == 0) bad("device needs at least one site");
  if (!(ref_wavelength_nm > 0.0)) bad("reference wavelength must be positive");
  if (!(mu_band_ghz >= 0.0)) bad("detuning band must be non-negative");
  if (!(hop_min_ghz > 0.0) || !(hop_max_ghz >= hop_min_ghz)) bad("invalid hopping range");
  if (!(q_loaded > 0.0)) bad("quality factor must be positive");
  if (!(port_fraction >= 0.0 && port_fraction <= 1.0)) bad("port fraction must lie in [0, 1]");
  if (!(alpha_min > 0.0) || !(alpha_max >= alpha_min)) bad("invalid heater efficiency range");
  if (!(delta_band_nm >= 0.0)) bad("delta band must be non-negative");
  if (!(gamma_min >= 0.0) || !(gamma_max >= gamma_min)) bad("invalid cross-term range");
  if (!std::isfinite(beta1) || !std::isfinite(beta_decay)) bad("non-finite beta parameters");
}

void NoiseSpec::validate() const {
  if (!(spectrum_mult_sigma >= 0.0) || !(eigen_sigma_nm >= 0.0))
    throw Error(ErrorKind::InvalidSpec, "noise levels must be non-negative");
}

void SweepProtocol::validate() const {
  if (ramp_steps > 0 && !(ramp_v_max > 0.0))
    throw Error(ErrorKind::InvalidSpec, "ramp needs a positive maximum voltage");
  if (random_profiles > 0 && !(random_v_max > 0.0))
    throw Error(ErrorKind::InvalidSpec, "random profiles need a positive maximum voltage");
  if (ramp_steps == 0 && random_profiles == 0 && !include_zero)
    throw Error(ErrorKind::InvalidSpec, "protocol produces no records");
  if (full_pipeline && pipeline_points < 3)
    throw Error(ErrorKind::InvalidSpec, "pipeline grid needs at least 3 points");
}

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t index) {
  return make_rng(seed, index)();
}

DeviceTruth generate_device(std::uint64_t seed, const DeviceRanges& ranges) {
  ranges.validate();
  auto rng = make_rng(seed, 0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  const std::size_t n = ranges.n_sites;
  const double linewidth = linewidth_from_q(ranges.q_loaded, ranges.ref_wavelength_nm);

  DeviceTruth truth;
  truth.seed = seed;
  auto& spec = truth.spec;
  spec.ref_wavelength_nm = ranges.ref_wavelength_nm;
  for (std::size_t i = 0; i < n; ++i) spec.mu.push_back(uniform(-ranges.mu_band_ghz, ranges.mu_band_ghz));
  for (std::size_t i = 0; i + 1 < n; ++i)
    spec.hop.push_back(uniform(ranges.hop_min_ghz, ranges.hop_max_ghz));
  spec.kappa.assign(n, linewidth);
  const double port = ranges.port_fraction * linewidth;
  if (n == 1) {
    spec.gamma_in = spec.gamma_out = 0.5 * port;
    spec.kappa[0] = linewidth - port;
  } else {
    spec.gamma_in = spec.gamma_out = port;
    spec.kappa.front() = linewidth - port;
    spec.kappa.back() = linewidth - port;
  }

  auto& model = truth.model;
  for (std::size_t i = 0; i < n; ++i) {
    model.alpha_nm_per_v2.push_back(uniform(ranges.alpha_min, ranges.alpha_max));
    model.delta_nm.push_back(uniform(-ranges.delta_band_nm, ranges.delta_band_nm));
  }
  model.beta[0] = ranges.beta1;
  for (std::size_t d = 1; d < kBetaCount; ++d) model.beta[d] = model.beta[d - 1] * ranges.beta_decay;
  for (auto& g : model.gamma) {
    const double mag = uniform(ranges.gamma_min, ranges.gamma_max);
    g = unit(rng) < 0.5 ? -mag : mag;
  }
  spec.validate();
  model.validate();
  return truth;
}

Spectrum device_spectrum(const DeviceTruth& truth, const VoltageProfile& v,
                         const FrequencyGrid& grid, const NoiseSpec& noise, SpectrumKind kind) {
  noise.validate();
  const auto h = shifted_hamiltonian(truth, v);
  auto [r, t] = resolvent_response(h, truth.spec.gamma_in, truth.spec.gamma_out, grid);
  Spectrum out = kind == SpectrumKind::Reflection ? std::move(r) : std::move(t);
  if (noise.spectrum_mult_sigma > 0.0) {
    auto rng = make_rng(noise.seed, 0);
    std::normal_distribution<double> normal(0.0, noise.spectrum_mult_sigma);
    for (auto& value : out.values) value = std::max(0.0, value * (1.0 + normal(rng)));
  }
  return out;
}

FrequencyGrid probe_grid(const DeviceTruth& truth, std::size_t points, double margin_linewidths) {
  const auto h = build_h_eff(truth.spec);
  return grid_around(eigenvalues(h), loaded_linewidth(truth.spec), points, margin_linewidths);
}

SweepDataset generate_dataset(const DeviceTruth& truth, const SweepProtocol& protocol,
                              const NoiseSpec& noise) {
  protocol.validate();
  noise.validate();
  const std::size_t n = truth.spec.n_sites();
  const double ref = truth.spec.ref_wavelength_nm;

  SweepDataset ds;
  ds.h0 = build_h_eff(truth.spec);
  ds.ref_wavelength_nm = ref;

  std::vector<std::pair<VoltageProfile, std::string>> profiles;
  if (protocol.include_zero) profiles.emplace_back(VoltageProfile{std::vector<double>(n, 0.0)}, "zero");
  for (std::size_t h = 0; h < n && protocol.ramp_steps > 0; ++h)
    for (std::size_t k = 1; k <= protocol.ramp_steps; ++k) {
      VoltageProfile v{std::vector<double>(n, 0.0)};
      v.volts[h] = protocol.ramp_v_max * double(k) / double(protocol.ramp_steps);
      profiles.emplace_back(std::move(v), "ramp h" + std::to_string(h) + " step " + std::to_string(k));
    }
  for (std::size_t r = 0; r < protocol.random_profiles; ++r) {
    auto rng = make_rng(protocol.seed, r);
    std::uniform_real_distribution<double> volts(0.0, protocol.random_v_max);
    VoltageProfile v{std::vector<double>(n)};
    for (auto& x : v.volts) x = volts(rng);
    profiles.emplace_back(std::move(v), "random " + std::to_string(r));
  }

  const double linewidth = loaded_linewidth(truth.spec);
  for (std::size_t idx = 0; idx < profiles.size(); ++idx) {
    const auto& [v, tag] = profiles[idx];
    std::vector<double> eig;
    if (protocol.full_pipeline) {
      const auto h = shifted_hamiltonian(truth, v);
      const auto grid = grid_around(eigenvalues(h), linewidth, protocol.pipeline_points, 15.0);
      NoiseSpec spectral = noise;
      spectral.seed = stream_seed(noise.seed, idx);
      const auto t = device_spectrum(truth, v, grid, spectral, SpectrumKind::Transmission);
      const auto eps = eigenvalues_from_transmission(t, int(n));
      for (Eigen::Index a = 0; a < eps.size(); ++a)
        eig.push_back(ref + to_wavelength(eps(a).real(), ref));
      std::sort(eig.begin(), eig.end());
    } else {
      eig = predict_eigen(ds.h0, truth.model, v, ref);
    }
    if (noise.eigen_sigma_nm > 0.0) {
      auto rng = make_rng(noise.seed, 1'000'000 + idx);
      std::normal_distribution<double> normal(0.0, noise.eigen_sigma_nm);
      for (auto& e : eig) e += normal(rng);
      std::sort(eig.begin(), eig.end());
    }
    ds.records.push_back({v, std::move(eig), tag});
  }
  return ds;
}

}  // namespace ccatomo
