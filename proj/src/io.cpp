#include "ccatomo/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ccatomo/errors.hpp"

namespace ccatomo::io {

namespace {

using Json = nlohmann::ordered_json;

[[noreturn]] void schema(const std::string& what) { throw Error(ErrorKind::Schema, what); }

// Field access on one JSON object that remembers which keys were read, so that
// leftovers can be reported as unknown.
class Fields {
 public:
  Fields(const Json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) schema(where_ + " must be a JSON object");
  }

  const Json& get(const std::string& key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) schema(where_ + " is missing field '" + key + "'");
    return *it;
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  double number(const std::string& key) {
    const Json& v = get(key);
    if (!v.is_number()) schema(where_ + "." + key + " must be a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) schema(where_ + "." + key + " must be finite");
    return x;
  }

  std::uint64_t unsigned_int(const std::string& key) {
    const Json& v = get(key);
    if (!v.is_number_unsigned()) schema(where_ + "." + key + " must be a non-negative integer");
    return v.get<std::uint64_t>();
  }

  std::string string(const std::string& key) {
    const Json& v = get(key);
    if (!v.is_string()) schema(where_ + "." + key + " must be a string");
    return v.get<std::string>();
  }

  std::vector<double> numbers(const std::string& key) {
    const Json& v = get(key);
    if (!v.is_array()) schema(where_ + "." + key + " must be an array of numbers");
    std::vector<double> out;
    out.reserve(v.size());
    for (const auto& e : v) {
      if (!e.is_number()) schema(where_ + "." + key + " must be an array of numbers");
      out.push_back(e.get<double>());
      if (!std::isfinite(out.back())) schema(where_ + "." + key + " must hold finite numbers");
    }
    return out;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (!seen_.count(key)) schema(where_ + " has unknown field '" + key + "'");
  }

 private:
  const Json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

Json parse(const std::string& text) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    schema(std::string("malformed JSON: ") + e.what());
  }
}

Json header(const std::string& format) {
  Json j;
  j["format"] = format;
  j["version"] = kFormatVersion;
  j["generator"] = generator_string();
  return j;
}

void check_header(Fields& f, const std::string& format) {
  const auto tag = f.string("format");
  if (tag != format) schema("expected format '" + format + "', found '" + tag + "'");
  const auto version = f.unsigned_int("version");
  if (version == 0 || version > std::uint64_t(kFormatVersion))
    schema("unsupported " + format + " version " + std::to_string(version));
  f.string("generator");
}

Json matrix_part(const CMatrix& m, bool imag) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(imag ? m(i, k).imag() : m(i, k).real());
    rows.push_back(std::move(row));
  }
  return rows;
}

void read_matrix_part(const Json& rows, std::size_t n, CMatrix& m, bool imag,
                      const std::string& where) {
  if (!rows.is_array() || rows.size() != n) schema(where + " must be an n x n nested array");
  for (std::size_t i = 0; i < n; ++i) {
    const Json& row = rows[i];
    if (!row.is_array() || row.size() != n) schema(where + " must be an n x n nested array");
    for (std::size_t k = 0; k < n; ++k) {
      if (!row[k].is_number()) schema(where + " must hold numbers");
      const double x = row[k].get<double>();
      if (!std::isfinite(x)) schema(where + " must hold finite numbers");
      auto& z = m(Eigen::Index(i), Eigen::Index(k));
      z = imag ? cplx(z.real(), x) : cplx(x, z.imag());
    }
  }
}

Json model_fields(const CrosstalkModel& model) {
  Json j;
  j["n_sites"] = model.n_sites();
  j["delta_nm"] = model.delta_nm;
  j["alpha_nm_per_v2"] = model.alpha_nm_per_v2;
  j["beta"] = model.beta;
  j["gamma"] = model.gamma;
  return j;
}

CrosstalkModel read_model_fields(Fields& f) {
  CrosstalkModel m;
  const auto n = f.unsigned_int("n_sites");
  m.delta_nm = f.numbers("delta_nm");
  m.alpha_nm_per_v2 = f.numbers("alpha_nm_per_v2");
  const auto beta = f.numbers("beta");
  const auto gamma = f.numbers("gamma");
  if (m.delta_nm.size() != n || m.alpha_nm_per_v2.size() != n)
    schema("crosstalk arrays must have n_sites entries");
  if (beta.size() != kBetaCount) schema("beta must have 3 entries");
  if (gamma.size() != kGammaCount) schema("gamma must have 12 entries");
  std::copy(beta.begin(), beta.end(), m.beta.begin());
  std::copy(gamma.begin(), gamma.end(), m.gamma.begin());
  m.validate();
  return m;
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

double parse_double(std::string_view s, std::size_t line) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  double x = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(x))
    schema("line " + std::to_string(line) + ": '" + std::string(s) + "' is not a finite number");
  return x;
}

}  // namespace

std::string generator_string() { return std::string("ccatomo ") + CCATOMO_VERSION; }

std::string format_double(double x) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  if (ec != std::errc()) throw Error(ErrorKind::Io, "number formatting failed");
  return std::string(buf, ptr);
}

// ---------------------------------------------------------------------------

std::string device_to_json(const DeviceFile& device) {
  device.spec.validate();
  Json j = header("ccatomo.device");
  if (device.seed) j["seed"] = *device.seed;
  Json lattice;
  lattice["n_sites"] = device.spec.n_sites();
  lattice["mu_ghz"] = device.spec.mu;
  lattice["hop_ghz"] = device.spec.hop;
  lattice["kappa_ghz"] = device.spec.kappa;
  lattice["gamma_in_ghz"] = device.spec.gamma_in;
  lattice["gamma_out_ghz"] = device.spec.gamma_out;
  lattice["ref_wavelength_nm"] = device.spec.ref_wavelength_nm;
  j["lattice"] = std::move(lattice);
  if (device.model) {
    device.model->validate();
    if (device.model->n_sites() != device.spec.n_sites())
      throw Error(ErrorKind::InvalidSpec, "crosstalk model and lattice differ in size");
    j["crosstalk"] = model_fields(*device.model);
  }
  return dump(j);
}

DeviceFile device_from_json(const std::string& text) {
  const Json j = parse(text);
  Fields f(j, "device");
  check_header(f, "ccatomo.device");
  DeviceFile out;
  if (f.has("seed")) out.seed = f.unsigned_int("seed");
  {
    Fields l(f.get("lattice"), "lattice");
    const auto n = l.unsigned_int("n_sites");
    out.spec.mu = l.numbers("mu_ghz");
    out.spec.hop = l.numbers("hop_ghz");
    out.spec.kappa = l.numbers("kappa_ghz");
    out.spec.gamma_in = l.number("gamma_in_ghz");
    out.spec.gamma_out = l.number("gamma_out_ghz");
    out.spec.ref_wavelength_nm = l.number("ref_wavelength_nm");
    l.finish();
    if (out.spec.mu.size() != n) schema("lattice.mu_ghz must have n_sites entries");
    out.spec.validate();
  }
  if (f.has("crosstalk")) {
    Fields c(f.get("crosstalk"), "crosstalk");
    out.model = read_model_fields(c);
    c.finish();
    if (out.model->n_sites() != out.spec.n_sites())
      schema("crosstalk model and lattice differ in size");
  }
  f.finish();
  return out;
}

std::string hamiltonian_to_json(const HamiltonianFile& h) {
  Json j = header("ccatomo.hamiltonian");
  j["n"] = h.hamiltonian.dim();
  j["real"] = matrix_part(h.hamiltonian.matrix(), false);
  j["imag"] = matrix_part(h.hamiltonian.matrix(), true);
  j["gamma_in_ghz"] = h.gamma_in;
  j["gamma_out_ghz"] = h.gamma_out;
  j["ref_wavelength_nm"] = h.ref_wavelength_nm;
  return dump(j);
}

HamiltonianFile hamiltonian_from_json(const std::string& text, double tol) {
  const Json j = parse(text);
  Fields f(j, "hamiltonian");
  check_header(f, "ccatomo.hamiltonian");
  const auto n = f.unsigned_int("n");
  if (n == 0) schema("hamiltonian.n must be positive");
  CMatrix m = CMatrix::Zero(Eigen::Index(n), Eigen::Index(n));
  read_matrix_part(f.get("real"), n, m, false, "hamiltonian.real");
  read_matrix_part(f.get("imag"), n, m, true, "hamiltonian.imag");
  HamiltonianFile out;
  out.gamma_in = f.number("gamma_in_ghz");
  out.gamma_out = f.number("gamma_out_ghz");
  out.ref_wavelength_nm = f.number("ref_wavelength_nm");
  f.finish();
  if (!(out.gamma_in >= 0.0) || !(out.gamma_out >= 0.0))
    throw Error(ErrorKind::InvalidSpec, "port couplings must be non-negative");
  if (!(out.ref_wavelength_nm > 0.0))
    throw Error(ErrorKind::InvalidSpec, "reference wavelength must be positive");
  out.hamiltonian = EffectiveHamiltonian(std::move(m), tol);
  return out;
}

std::string model_to_json(const CrosstalkModel& model) {
  model.validate();
  Json j = header("ccatomo.crosstalk");
  const Json fields = model_fields(model);
  for (auto it = fields.begin(); it != fields.end(); ++it) j[it.key()] = it.value();
  return dump(j);
}

CrosstalkModel model_from_json(const std::string& text) {
  const Json j = parse(text);
  Fields f(j, "crosstalk");
  check_header(f, "ccatomo.crosstalk");
  auto m = read_model_fields(f);
  f.finish();
  return m;
}

CrosstalkModel crosstalk_from_json(const std::string& text) {
  const Json j = parse(text);
  if (j.is_object() && j.contains("format") && j["format"] == "ccatomo.device") {
    auto d = device_from_json(text);
    if (!d.model) throw Error(ErrorKind::Schema, "device file has no crosstalk model");
    return *d.model;
  }
  return model_from_json(text);
}

std::string dataset_to_json(const SweepDataset& dataset) {
  Json j = header("ccatomo.dataset");
  j["n_sites"] = dataset.h0.dim();
  j["ref_wavelength_nm"] = dataset.ref_wavelength_nm;
  Json records = Json::array();
  for (const auto& r : dataset.records) {
    Json rec;
    rec["tag"] = r.tag;
    rec["volts"] = r.profile.volts;
    rec["measured_eigen_nm"] = r.measured_eigen_nm;
    records.push_back(std::move(rec));
  }
  j["records"] = std::move(records);
  return dump(j);
}

SweepDataset dataset_from_json(const std::string& text, const EffectiveHamiltonian& h0) {
  const Json j = parse(text);
  Fields f(j, "dataset");
  check_header(f, "ccatomo.dataset");
  const auto n = f.unsigned_int("n_sites");
  SweepDataset out;
  out.h0 = h0;
  out.ref_wavelength_nm = f.number("ref_wavelength_nm");
  const Json& records = f.get("records");
  if (!records.is_array()) schema("dataset.records must be an array");
  for (std::size_t i = 0; i < records.size(); ++i) {
    Fields r(records[i], "dataset.records[" + std::to_string(i) + "]");
    SweepRecord rec;
    rec.tag = r.string("tag");
    rec.profile.volts = r.numbers("volts");
    rec.measured_eigen_nm = r.numbers("measured_eigen_nm");
    r.finish();
    out.records.push_back(std::move(rec));
  }
  f.finish();
  if (Eigen::Index(n) != h0.dim())
    throw Error(ErrorKind::InvalidProfile, "dataset has " + std::to_string(n) +
                                               " sites but the reference Hamiltonian has " +
                                               std::to_string(h0.dim()));
  out.validate();
  return out;
}

// ---------------------------------------------------------------------------

std::string spectrum_to_csv(const Spectrum& spectrum, Axis axis, double ref_wavelength_nm) {
  spectrum.validate();
  std::string out = "# " + generator_string() + " kind=" +
                    (spectrum.kind == SpectrumKind::Reflection ? "reflection" : "transmission") +
                    " ref_wavelength_nm=" + format_double(ref_wavelength_nm) + "\n";
  const std::size_t n = spectrum.grid.size();
  if (axis == Axis::Detuning) {
    out += "detuning_ghz,value\n";
    for (std::size_t i = 0; i < n; ++i)
      out += format_double(spectrum.grid[i]) + "," + format_double(spectrum.values[i]) + "\n";
  } else {
    out += "wavelength_nm,value\n";
    for (std::size_t k = n; k-- > 0;)
      out += format_double(ref_wavelength_nm + to_wavelength(spectrum.grid[k], ref_wavelength_nm)) +
             "," + format_double(spectrum.values[k]) + "\n";
  }
  return out;
}

SpectrumCsv spectrum_from_csv(const std::string& text, double ref_wavelength_nm) {
  SpectrumCsv out;
  out.ref_wavelength_nm = ref_wavelength_nm;
  out.spectrum.kind = SpectrumKind::Reflection;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  std::vector<double> x, y;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.front() == '#') {
      std::istringstream words(line.substr(1));
      std::string w;
      while (words >> w) {
        if (w == "kind=transmission") out.spectrum.kind = SpectrumKind::Transmission;
        else if (w == "kind=reflection") out.spectrum.kind = SpectrumKind::Reflection;
        else if (w.rfind("ref_wavelength_nm=", 0) == 0)
          out.ref_wavelength_nm = parse_double(std::string_view(w).substr(18), lineno);
      }
      continue;
    }
    if (!have_header) {
      if (line == "detuning_ghz,value") out.axis = Axis::Detuning;
      else if (line == "wavelength_nm,value") out.axis = Axis::Wavelength;
      else schema("spectrum header must be 'detuning_ghz,value' or 'wavelength_nm,value'");
      have_header = true;
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos)
      schema("line " + std::to_string(lineno) + ": expected two comma-separated columns");
    x.push_back(parse_double(std::string_view(line).substr(0, comma), lineno));
    y.push_back(parse_double(std::string_view(line).substr(comma + 1), lineno));
  }
  if (!have_header) schema("spectrum file has no header line");
  if (!(out.ref_wavelength_nm > 0.0)) schema("reference wavelength must be positive");
  for (std::size_t i = 1; i < x.size(); ++i)
    if (!(x[i] > x[i - 1]))
      schema("first column must be strictly increasing (line " + std::to_string(i + 1) +
             " of the data)");
  if (out.axis == Axis::Wavelength) {
    std::vector<double> det(x.size()), val(y.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      det[x.size() - 1 - i] = to_detuning(x[i] - out.ref_wavelength_nm, out.ref_wavelength_nm);
      val[x.size() - 1 - i] = y[i];
    }
    x = std::move(det);
    y = std::move(val);
  }
  out.spectrum.grid = FrequencyGrid(std::move(x));
  out.spectrum.values = std::move(y);
  out.spectrum.validate();
  return out;
}

std::string record_errors_to_csv(const std::vector<std::string>& tags,
                                 const std::vector<double>& errors,
                                 const std::vector<double>& mode_deviation) {
  if (tags.size() != errors.size() || errors.size() != mode_deviation.size())
    throw Error(ErrorKind::InvalidSpec, "error columns differ in length");
  std::string out = "# " + generator_string() + "\nindex,tag,error,mode_deviation\n";
  for (std::size_t i = 0; i < errors.size(); ++i)
    out += std::to_string(i) + "," + csv_field(tags[i]) + "," + format_double(errors[i]) + "," +
           format_double(mode_deviation[i]) + "\n";
  return out;
}

std::string eigen_to_csv(const std::vector<double>& wavelengths_nm) {
  std::string out = "# " + generator_string() + "\nmode,wavelength_nm\n";
  for (std::size_t i = 0; i < wavelengths_nm.size(); ++i)
    out += std::to_string(i) + "," + format_double(wavelengths_nm[i]) + "\n";
  return out;
}

std::string fit_report_to_json(const LorentzianSum& modes, const FitReport& report,
                               const Reconstruction& reconstruction) {
  Json j = header("ccatomo.fit-report");
  j["residual"] = report.residual;
  j["penalty_residue_ghz"] = report.penalty_residue;
  j["penalty_hops_ghz"] = report.penalty_hops;
  j["objective"] = report.objective;
  j["iterations"] = report.iterations;
  j["converged"] = report.converged;
  j["best_start"] = report.best_start;
  j["gamma0_ghz"] = reconstruction.gamma0;
  j["tail_residual"] = reconstruction.tail_residual;
  Json list = Json::array();
  for (const auto& m : modes.modes) {
    Json e;
    e["amplitude_ghz"] = m.amplitude;
    e["phase_rad"] = m.phase;
    e["center_ghz"] = m.center;
    e["halfwidth_ghz"] = m.halfwidth;
    list.push_back(std::move(e));
  }
  j["modes"] = std::move(list);
  return dump(j);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot open '" + path + "' for writing");
  out << contents;
  if (!out) throw Error(ErrorKind::Io, "failed writing '" + path + "'");
}

}  // namespace ccatomo::io
