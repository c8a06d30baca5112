#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "ccatomo/io.hpp"
#include "ccatomo/virtual_device.hpp"

using namespace ccatomo;
namespace fs = std::filesystem;

namespace {

const fs::path& workdir() {
  static const fs::path dir = [] {
    fs::path d = fs::path(CCATOMO_TEST_WORKDIR) / "cli";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string at(const std::string& name) { return (workdir() / name).string(); }

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

Result run(const std::string& args) {
  const std::string err_path = at("stderr.txt");
  const std::string cmd = std::string(CCATOMO_CLI) + " " + args + " 2> " + err_path;
  Result r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  std::size_t got;
  while ((got = fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, got);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.err = io::read_file(err_path);
  return r;
}

std::string slurp(const std::string& name) { return io::read_file(at(name)); }

void put(const std::string& name, const std::string& text) { io::write_file(at(name), text); }

// Bare device (no crosstalk model) for the spectral commands.
LatticeSpec bare_device(std::uint64_t seed, bool lossless = false) {
  auto s = generate_device(seed).spec;
  if (lossless) std::fill(s.kappa.begin(), s.kappa.end(), 0.0);
  put("bare.json", io::device_to_json({s, std::nullopt, std::nullopt}));
  return s;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("version and help") {
  const auto v = run("--version");
  CHECK(v.code == 0);
  CHECK(v.out.find(io::generator_string()) != std::string::npos);
  for (const char* cmd : {"simulate", "tomography", "calibrate", "predict", "gen-device", "gen-dataset", "eta"}) {
    const auto h = run(std::string(cmd) + " --help");
    CHECK(h.code == 0);
    CHECK(h.out.find("Usage") != std::string::npos);
  }
  CHECK(run("").code == 2);
  CHECK(run("frobnicate").code == 2);
}

TEST_CASE("gen-device is a function of its seed") {
  REQUIRE(run("gen-device --seed 5 --out " + at("d1.json") + " --hamiltonian-out " + at("h1.json")).code == 0);
  REQUIRE(run("gen-device --seed 5 --out " + at("d2.json") + " --hamiltonian-out " + at("h2.json")).code == 0);
  REQUIRE(run("gen-device --seed 6 --out " + at("d3.json")).code == 0);
  CHECK(slurp("d1.json") == slurp("d2.json"));
  CHECK(slurp("h1.json") == slurp("h2.json"));
  CHECK(slurp("d1.json") != slurp("d3.json"));
  const auto dev = io::device_from_json(slurp("d1.json"));
  CHECK(dev.spec == generate_device(5).spec);
  CHECK(*dev.model == generate_device(5).model);
  CHECK(slurp("d1.json").find(io::generator_string()) != std::string::npos);
}

TEST_CASE("simulate is deterministic") {
  REQUIRE(run("gen-device --seed 5 --out " + at("d.json")).code == 0);
  const std::string base = "simulate --device " + at("d.json") + " --points 501";
  REQUIRE(run(base + " --noise 0.01 --seed 3 --out " + at("s1.csv")).code == 0);
  REQUIRE(run(base + " --noise 0.01 --seed 3 --out " + at("s2.csv")).code == 0);
  REQUIRE(run(base + " --noise 0.01 --seed 4 --out " + at("s3.csv")).code == 0);
  CHECK(slurp("s1.csv") == slurp("s2.csv"));
  CHECK(slurp("s1.csv") != slurp("s3.csv"));
  REQUIRE(run(base + " --out " + at("z1.csv")).code == 0);
  REQUIRE(run(base + " --volts 0,0,0,0,0,0,0,0 --out " + at("z2.csv")).code == 0);
  CHECK(slurp("z1.csv") == slurp("z2.csv"));
  const auto stdout_run = run(base);
  CHECK(stdout_run.out == slurp("z1.csv"));
  CHECK(run(base + " --volts 1,2 --out " + at("x.csv")).code == 2);
  CHECK(run(base + " --volts 0,0,0,0,0,0,0,abc --out " + at("x.csv")).code == 2);
}

TEST_CASE("lossless device files conserve power row by row") {
  bare_device(8, true);
  const std::string base = "simulate --device " + at("bare.json") + " --start -150 --stop 150 --points 1501";
  REQUIRE(run(base + " --kind R --out " + at("r.csv")).code == 0);
  REQUIRE(run(base + " --kind T --out " + at("t.csv")).code == 0);
  const auto r = io::spectrum_from_csv(slurp("r.csv")).spectrum;
  const auto t = io::spectrum_from_csv(slurp("t.csv")).spectrum;
  REQUIRE(r.grid == t.grid);
  double worst = 0.0;
  for (std::size_t i = 0; i < r.values.size(); ++i) worst = std::max(worst, std::abs(r.values[i] + t.values[i] - 1.0));
  CHECK(worst < 1e-9);
}

TEST_CASE("tomography recovers the simulated device") {
  const auto s = bare_device(21);
  REQUIRE(run("simulate --device " + at("bare.json") + " --kind R --axis wavelength --out " + at("r.csv")).code == 0);
  const auto res = run("tomography --in " + at("r.csv") + " --modes 8 --out " + at("hrec.json") + " --report " +
                       at("report.json"));
  REQUIRE(res.code == 0);
  const auto rec = io::hamiltonian_from_json(slurp("hrec.json"));
  const auto h = build_h_eff(s);
  const double jn = h.hopping().real().mean();
  for (Eigen::Index n = 0; n < 8; ++n)
    CHECK(std::abs(rec.hamiltonian.matrix()(n, n) - h.matrix()(n, n)) < 0.01 * jn);
  for (Eigen::Index n = 0; n < 7; ++n)
    CHECK(std::abs(rec.hamiltonian.matrix()(n, n + 1) - h.matrix()(n, n + 1)) < 0.02 * h.matrix()(n, n + 1).real());
  CHECK(rec.gamma_in == doctest::Approx(s.gamma_in).epsilon(1e-6));
  const auto report = slurp("report.json");
  CHECK(report.find("\"converged\": true") != std::string::npos);
  CHECK(report.find("\"modes\"") != std::string::npos);

  // same input, same bytes
  REQUIRE(run("tomography --in " + at("r.csv") + " --modes 8 --out " + at("hrec2.json")).code == 0);
  CHECK(slurp("hrec.json") == slurp("hrec2.json"));
}

TEST_CASE("tomography input errors") {
  bare_device(21);
  REQUIRE(run("simulate --device " + at("bare.json") + " --out " + at("r.csv")).code == 0);
  CHECK(run("tomography --in " + at("r.csv") + " --modes 0 --out " + at("x.json")).code == 2);
  CHECK(run("tomography --in " + at("missing.csv") + " --modes 8 --out " + at("x.json")).code == 2);

  // dips pressed against the grid edge
  const auto spec = io::device_from_json(slurp("bare.json")).spec;
  const auto ev = eigenvalues(build_h_eff(spec));
  std::ostringstream flags;
  flags << " --start " << ev(0).real() - 1.0 << " --stop " << ev(7).real() + 40.0;
  REQUIRE(run("simulate --device " + at("bare.json") + flags.str() + " --out " + at("edge.csv")).code == 0);
  const auto edge = run("tomography --in " + at("edge.csv") + " --modes 8 --out " + at("x.json"));
  CHECK(edge.code == 2);
  CHECK(edge.err.find("margin") != std::string::npos);

  REQUIRE(run("simulate --device " + at("bare.json") + " --kind T --out " + at("t.csv")).code == 0);
  CHECK(run("tomography --in " + at("t.csv") + " --modes 8 --out " + at("x.json")).code == 2);
}

TEST_CASE("numerical failure exits with 3") {
  LatticeSpec s;
  s.mu = {0.0, 0.0};
  s.hop = {5.0};
  s.kappa = {0.0, 0.0};
  put("dimer.json", io::device_to_json({s, std::nullopt, std::nullopt}));
  const auto r = run("simulate --device " + at("dimer.json") + " --start -5 --stop 5 --points 3 --out " + at("x.csv"));
  CHECK(r.code == 3);
  CHECK(r.err.find("singular") != std::string::npos);
}

TEST_CASE("non-converged fit exits with 4 and still writes its files") {
  bare_device(21);
  REQUIRE(run("simulate --device " + at("bare.json") + " --noise 0.02 --seed 1 --out " + at("noisy.csv")).code == 0);
  fs::remove(at("nc.json"));
  fs::remove(at("nc_report.json"));
  const auto r = run("tomography --in " + at("noisy.csv") + " --modes 8 --multi-starts 1 --max-evaluations 2 --out " +
                     at("nc.json") + " --report " + at("nc_report.json"));
  CHECK(r.code == 4);
  CHECK(fs::exists(at("nc.json")));
  CHECK(slurp("nc_report.json").find("\"converged\": false") != std::string::npos);
}

TEST_CASE("calibration workflow") {
  REQUIRE(run("gen-device --seed 9 --out " + at("dev.json") + " --hamiltonian-out " + at("h0.json")).code == 0);
  REQUIRE(run("gen-dataset --device " + at("dev.json") + " --seed 2 --out " + at("ds.json")).code == 0);
  REQUIRE(run("gen-dataset --device " + at("dev.json") + " --seed 2 --out " + at("ds2.json")).code == 0);
  CHECK(slurp("ds.json") == slurp("ds2.json"));
  REQUIRE(run("gen-dataset --device " + at("dev.json") + " --seed 3 --ramp-steps 0 --random 20 --no-zero --out " +
              at("hold.json")).code == 0);

  const auto cal = run("calibrate --h0 " + at("h0.json") + " --dataset " + at("ds.json") + " --holdout " +
                       at("hold.json") + " --out " + at("model.json") + " --errors " + at("err.csv") +
                       " --holdout-errors " + at("herr.csv"));
  REQUIRE(cal.code == 0);
  CHECK(cal.out.find("records,288\n") != std::string::npos);
  const auto fitted = io::model_from_json(slurp("model.json"));
  const auto truth = *io::device_from_json(slurp("dev.json")).model;
  auto close = [](double a, double b) { return std::abs(a - b) <= 1e-2 * std::abs(b); };
  for (std::size_t i = 0; i < 8; ++i) {
    CHECK(close(fitted.alpha_nm_per_v2[i], truth.alpha_nm_per_v2[i]));
    CHECK(close(fitted.delta_nm[i], truth.delta_nm[i]));
  }
  for (std::size_t d = 0; d < 3; ++d) CHECK(close(fitted.beta[d], truth.beta[d]));
  for (std::size_t g = 0; g < 12; ++g) CHECK(close(fitted.gamma[g], truth.gamma[g]));
  std::istringstream rows(slurp("err.csv"));
  std::string line;
  int n = 0;
  while (std::getline(rows, line)) ++n;
  CHECK(n == 2 + 288);

  // noisy sweeps are reproducible by seed
  REQUIRE(run("gen-dataset --device " + at("dev.json") + " --eigen-noise-jnorm 0.01 --seed 4 --ramp-steps 2 --random 40 --out " +
              at("n1.json")).code == 0);
  REQUIRE(run("gen-dataset --device " + at("dev.json") + " --eigen-noise-jnorm 0.01 --seed 4 --ramp-steps 2 --random 40 --out " +
              at("n2.json")).code == 0);
  CHECK(slurp("n1.json") == slurp("n2.json"));
  const std::string jitter = "calibrate --h0 " + at("h0.json") + " --dataset " + at("n1.json") +
                             " --jitter 0.1 --seed 5 --max-evaluations 5 --out ";
  const auto j1 = run(jitter + at("m1.json"));
  const auto j2 = run(jitter + at("m2.json"));
  CHECK(j1.code == j2.code);
  CHECK(slurp("m1.json") == slurp("m2.json"));

  // 20 records cannot pin 31 parameters
  const auto under = run("calibrate --h0 " + at("h0.json") + " --dataset " + at("hold.json") + " --out " + at("x.json"));
  CHECK(under.code == 2);
  CHECK(under.err.find("underdetermined") != std::string::npos);
  CHECK(run("calibrate --h0 " + at("dev.json") + " --dataset " + at("ds.json") + " --out " + at("x.json")).code == 2);
}

TEST_CASE("predict and eta") {
  REQUIRE(run("gen-device --seed 9 --out " + at("dev.json") + " --hamiltonian-out " + at("h0.json")).code == 0);
  auto model = *io::device_from_json(slurp("dev.json")).model;
  std::fill(model.delta_nm.begin(), model.delta_nm.end(), 0.0);
  put("nodelta.json", io::model_to_json(model));

  const auto p = run("predict --h0 " + at("h0.json") + " --model " + at("nodelta.json"));
  REQUIRE(p.code == 0);
  const auto h0 = io::hamiltonian_from_json(slurp("h0.json"));
  const auto expected = eigen_wavelengths(h0.hamiltonian, std::vector<double>(8, 0.0), h0.ref_wavelength_nm);
  CHECK(p.out == io::eigen_to_csv(expected));
  const auto p2 = run("predict --h0 " + at("h0.json") + " --model " + at("nodelta.json") +
                      " --volts 0.3,0,0,0.5,0,0,0,0.1 --out " + at("pred.csv"));
  CHECK(p2.code == 0);
  CHECK(slurp("pred.csv") == io::eigen_to_csv(predict_eigen(h0.hamiltonian, model, {{0.3, 0, 0, 0.5, 0, 0, 0, 0.1}},
                                                            h0.ref_wavelength_nm)));

  const auto e = run("eta --model " + at("nodelta.json"));
  CHECK(e.code == 0);
  CHECK(e.out == "0.024\n");
  CHECK(run("eta --model " + at("nodelta.json") + " --volts 0.2").out == run("eta --model " + at("nodelta.json") + " --volts 0.8").out);
  CHECK(run("eta --model " + at("nodelta.json") + " --site 7").code == 2);
}

TEST_CASE("schema violations exit with 2") {
  REQUIRE(run("gen-device --seed 9 --out " + at("dev.json")).code == 0);
  auto text = slurp("dev.json");
  text.insert(text.find('{') + 1, "\n  \"colour\": \"blue\",");
  put("bad.json", text);
  const auto r = run("simulate --device " + at("bad.json") + " --out " + at("x.csv"));
  CHECK(r.code == 2);
  CHECK(r.err.find("colour") != std::string::npos);
  put("garbage.json", "not json");
  CHECK(run("eta --model " + at("garbage.json")).code == 2);
}

}  // TEST_SUITE
