#include <doctest.h>

#include <cmath>

#include "ccatomo/errors.hpp"
#include "ccatomo/virtual_device.hpp"

using namespace ccatomo;

namespace {

VoltageProfile zero_profile(std::size_t n) { return VoltageProfile{std::vector<double>(n, 0.0)}; }

}  // namespace

TEST_SUITE("virtual_device") {

TEST_CASE("generation is reproducible") {
  CHECK(generate_device(42) == generate_device(42));
  CHECK_FALSE(generate_device(42) == generate_device(43));
  CHECK(stream_seed(1, 2) == stream_seed(1, 2));
  CHECK(stream_seed(1, 2) != stream_seed(1, 3));
}

TEST_CASE("loaded linewidth matches the Q target") {
  const auto d = generate_device(5);
  const double lw = 299792458.0 / 1550.0 / 8.5e4;
  CHECK(lw == doctest::Approx(2.28).epsilon(1e-2));
  const auto& s = d.spec;
  CHECK(s.kappa.front() + s.gamma_in == doctest::Approx(lw).epsilon(1e-12));
  CHECK(s.kappa.back() + s.gamma_out == doctest::Approx(lw).epsilon(1e-12));
  for (std::size_t i = 1; i + 1 < s.n_sites(); ++i) CHECK(s.kappa[i] == doctest::Approx(lw).epsilon(1e-12));
  for (double j : s.hop) {
    CHECK(j >= 10.0);
    CHECK(j <= 50.0);
  }
}

TEST_CASE("planted model has the paper's parameter counts") {
  const auto d = generate_device(5);
  CHECK(d.model.delta_nm.size() == 8);
  CHECK(d.model.alpha_nm_per_v2.size() == 8);
  CHECK(d.model.beta.size() == 3);
  CHECK(d.model.gamma.size() == 12);
  CHECK(d.model.beta[0] == 0.024);
}

TEST_CASE("invalid ranges") {
  DeviceRanges r;
  r.hop_min_ghz = 60.0;
  CHECK_THROWS_AS(generate_device(1, r), Error);
  r = {};
  r.q_loaded = -1.0;
  CHECK_THROWS_AS(generate_device(1, r), Error);
  r = {};
  r.port_fraction = 1.5;
  CHECK_THROWS_AS(generate_device(1, r), Error);
}

TEST_CASE("noiseless spectrum passes through the lattice model") {
  auto d = generate_device(9);
  std::fill(d.model.delta_nm.begin(), d.model.delta_nm.end(), 0.0);
  const auto grid = probe_grid(d, 801);
  const auto [r, t] = resolvent_response(build_h_eff(d.spec), d.spec.gamma_in, d.spec.gamma_out, grid);
  CHECK(device_spectrum(d, zero_profile(8), grid, {}, SpectrumKind::Reflection) == r);
  CHECK(device_spectrum(d, zero_profile(8), grid, {}, SpectrumKind::Transmission) == t);
}

TEST_CASE("spectral noise is reproducible and has the nominal spread") {
  const auto d = generate_device(9);
  const auto grid = probe_grid(d, 10001);
  NoiseSpec n;
  n.spectrum_mult_sigma = 0.01;
  n.seed = 5;
  const auto clean = device_spectrum(d, zero_profile(8), grid, {}, SpectrumKind::Reflection);
  const auto a = device_spectrum(d, zero_profile(8), grid, n, SpectrumKind::Reflection);
  CHECK(a == device_spectrum(d, zero_profile(8), grid, n, SpectrumKind::Reflection));
  double sum = 0.0, sq = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (clean.values[i] < 1e-6) continue;
    const double rel = a.values[i] / clean.values[i] - 1.0;
    sum += rel;
    sq += rel * rel;
    ++count;
  }
  const double mean = sum / double(count);
  const double sigma = std::sqrt(sq / double(count) - mean * mean);
  CHECK(count > 9000);
  CHECK(sigma == doctest::Approx(0.01).epsilon(0.2));
}

TEST_CASE("probe grid leaves room on both sides") {
  const auto d = generate_device(3);
  const auto grid = probe_grid(d, 2001, 15.0);
  const auto ev = eigenvalues(build_h_eff(d.spec));
  CHECK(grid.size() == 2001);
  CHECK(grid.front() < ev(0).real() - 15.0 * 2.0);
  CHECK(grid.back() > ev(7).real() + 15.0 * 2.0);
}

TEST_CASE("dataset record counts") {
  const auto d = generate_device(4);
  SweepProtocol ramps;
  ramps.ramp_steps = 12;
  const auto a = generate_dataset(d, ramps, {});
  CHECK(a.records.size() == 97);
  CHECK(a.records.front().tag == "zero");
  std::size_t single = 0;
  for (std::size_t h = 0; h < 8; ++h) single += single_drive_records(a, h).size();
  CHECK(single == 96);

  SweepProtocol random;
  random.random_profiles = 288;
  random.include_zero = false;
  CHECK(generate_dataset(d, random, {}).records.size() == 288);

  SweepProtocol none;
  none.include_zero = false;
  CHECK_THROWS_AS(generate_dataset(d, none, {}), Error);
}

TEST_CASE("clean datasets are reproduced by the thermal prediction") {
  const auto d = generate_device(4);
  SweepProtocol p;
  p.ramp_steps = 3;
  p.random_profiles = 10;
  const auto ds = generate_dataset(d, p, {});
  for (const auto& r : ds.records)
    CHECK(r.measured_eigen_nm == predict_eigen(ds.h0, d.model, r.profile, ds.ref_wavelength_nm));
}

TEST_CASE("eigen noise is reproducible and order independent") {
  const auto d = generate_device(4);
  SweepProtocol p;
  p.random_profiles = 10;
  NoiseSpec n;
  n.eigen_sigma_nm = 0.001;
  n.seed = 8;
  const auto a = generate_dataset(d, p, n);
  const auto b = generate_dataset(d, p, n);
  CHECK(a.records == b.records);
  p.random_profiles = 5;
  const auto c = generate_dataset(d, p, n);
  for (std::size_t i = 0; i < c.records.size(); ++i) CHECK(c.records[i] == a.records[i]);
}

TEST_CASE("full pipeline extraction agrees with direct diagonalization") {
  const auto d = generate_device(4);
  SweepProtocol p;
  p.random_profiles = 2;
  p.include_zero = false;
  const auto direct = generate_dataset(d, p, {});
  p.full_pipeline = true;
  p.pipeline_points = 2001;
  const auto fitted = generate_dataset(d, p, {});
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t i = 0; i < 8; ++i)
      CHECK(std::abs(fitted.records[r].measured_eigen_nm[i] - direct.records[r].measured_eigen_nm[i]) < 1e-6);
}

}  // TEST_SUITE
