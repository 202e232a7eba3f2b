#include "ptdelta/cli.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include "ptdelta/oracle.hpp"

namespace ptdelta {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

std::string to_string(OutputFormat f) { return f == OutputFormat::Csv ? "csv" : "json"; }

BdgVariant parse_variant(const std::string& s) {
  if (s == "standard") return BdgVariant::Standard;
  if (s == "modified") return BdgVariant::Modified;
  throw UsageError("unknown variant '" + s + "' (standard|modified)");
}

OutputFormat parse_format(const std::string& s) {
  if (s == "csv") return OutputFormat::Csv;
  if (s == "json") return OutputFormat::Json;
  throw UsageError("unknown format '" + s + "' (csv|json)");
}

NonlinearityMode parse_mode(const std::string& s) {
  if (s == "norm-dependent") return NonlinearityMode::NormDependent;
  if (s == "norm-independent") return NonlinearityMode::NormIndependent;
  throw UsageError("unknown mode '" + s + "' (norm-dependent|norm-independent)");
}

namespace {

std::string mode_name(NonlinearityMode m) {
  return m == NonlinearityMode::NormDependent ? "norm-dependent" : "norm-independent";
}

std::string exact(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double x = 0.0;
  try {
    x = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || trim(v.substr(used)) != "" || !std::isfinite(x))
    throw UsageError("bad number for " + key + ": '" + v + "'");
  return x;
}

long long parse_integer(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  long long x = 0;
  try {
    x = std::stoll(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || trim(v.substr(used)) != "")
    throw UsageError("bad integer for " + key + ": '" + v + "'");
  return x;
}

}  // namespace

void set_config_value(RunConfig& c, const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  const auto num = [&] { return parse_double(key, v); };
  if (key == "gamma") c.trap.gamma = num();
  else if (key == "b") c.trap.b = num();
  else if (key == "mode") c.trap.mode = parse_mode(v);
  else if (key == "x_max") c.trap.x_max = num();
  else if (key == "abs_tol") c.trap.integrator.abs_tol = num();
  else if (key == "rel_tol") c.trap.integrator.rel_tol = num();
  else if (key == "max_step") c.trap.integrator.max_step = num();
  else if (key == "newton_tol") c.trap.newton.residual_tol = num();
  else if (key == "newton_max_iterations")
    c.trap.newton.max_iterations = static_cast<int>(parse_integer(key, v));
  else if (key == "fd_step") c.trap.newton.fd_step = num();
  else if (key == "gamma_min") c.gamma_min = num();
  else if (key == "gamma_max") c.gamma_max = num();
  else if (key == "gamma_step") c.gamma_step = num();
  else if (key == "g") {
    c.g_values.clear();
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ','))
      if (!trim(item).empty()) c.g_values.push_back(parse_double(key, item));
  } else if (key == "variant") c.variant = parse_variant(v);
  else if (key == "out") c.out_dir = v;
  else if (key == "format") c.format = parse_format(v);
  else if (key == "seed") c.seed = static_cast<std::uint64_t>(parse_integer(key, v));
  else if (key == "jobs") c.jobs = static_cast<int>(parse_integer(key, v));
  else if (key == "epsilon") c.epsilon = num();
  else if (key == "horizon") c.horizon = num();
  else if (key == "time_step") c.time_step = num();
  else throw UsageError("unknown config key '" + key + "'");
}

std::string serialize_config(const RunConfig& c) {
  std::ostringstream o;
  o << "gamma = " << exact(c.trap.gamma) << "\n";
  o << "b = " << exact(c.trap.b) << "\n";
  o << "mode = " << mode_name(c.trap.mode) << "\n";
  o << "x_max = " << exact(c.trap.x_max) << "\n";
  o << "abs_tol = " << exact(c.trap.integrator.abs_tol) << "\n";
  o << "rel_tol = " << exact(c.trap.integrator.rel_tol) << "\n";
  o << "max_step = " << exact(c.trap.integrator.max_step) << "\n";
  o << "newton_tol = " << exact(c.trap.newton.residual_tol) << "\n";
  o << "newton_max_iterations = " << c.trap.newton.max_iterations << "\n";
  o << "fd_step = " << exact(c.trap.newton.fd_step) << "\n";
  o << "gamma_min = " << exact(c.gamma_min) << "\n";
  o << "gamma_max = " << exact(c.gamma_max) << "\n";
  o << "gamma_step = " << exact(c.gamma_step) << "\n";
  o << "g = ";
  for (std::size_t i = 0; i < c.g_values.size(); ++i) o << (i ? "," : "") << exact(c.g_values[i]);
  o << "\n";
  o << "variant = " << to_string(c.variant) << "\n";
  o << "out = " << c.out_dir << "\n";
  o << "format = " << to_string(c.format) << "\n";
  o << "seed = " << c.seed << "\n";
  o << "jobs = " << c.jobs << "\n";
  o << "epsilon = " << exact(c.epsilon) << "\n";
  o << "horizon = " << exact(c.horizon) << "\n";
  o << "time_step = " << exact(c.time_step) << "\n";
  return o.str();
}

RunConfig parse_config(const std::string& text, RunConfig base) {
  std::istringstream in(text);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw UsageError("config line " + std::to_string(n) + ": expected key = value");
    set_config_value(base, trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return base;
}

RunConfig load_config(const fs::path& file, RunConfig base) {
  std::ifstream in(file);
  if (!in) throw UsageError("cannot read config file " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

bool operator==(const RunConfig& a, const RunConfig& b) {
  return serialize_config(a) == serialize_config(b);
}

void RunConfig::validate() const {
  trap.validate();
  if (!(gamma_step > 0)) throw UsageError("gamma_step must be positive");
  if (gamma_min < 0) throw UsageError("gamma_min must be >= 0");
  if (gamma_max < gamma_min) throw UsageError("empty gamma range");
  if (g_values.empty()) throw UsageError("no g values");
  if (jobs < 0) throw UsageError("jobs must be >= 0");
  if (!(epsilon >= 0 && epsilon <= 1e-3)) throw UsageError("epsilon must lie in [0, 1e-3]");
  if (!(horizon > 0) || !(time_step > 0)) throw UsageError("horizon and time_step must be positive");
}

std::vector<double> RunConfig::gamma_grid() const {
  std::vector<double> out;
  const auto n = static_cast<long>(std::floor((gamma_max - gamma_min) / gamma_step + 1e-9));
  for (long i = 0; i <= n; ++i) out.push_back(gamma_min + static_cast<double>(i) * gamma_step);
  return out;
}

fs::path RunConfig::output_dir() const {
  if (!out_dir.empty()) return out_dir;
  if (const char* env = std::getenv("PTDELTA_OUT"); env && *env) return env;
  return "ptdelta_out";
}

int RunConfig::worker_count() const {
  if (jobs > 0) return jobs;
  return std::max(1u, std::thread::hardware_concurrency());
}

// ---------------------------------------------------------------------------
// Tables and manifests
// ---------------------------------------------------------------------------

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) v = 0.0;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

void Table::add(std::vector<std::string> row) {
  if (row.size() != columns.size()) throw std::logic_error("table row width mismatch");
  for (auto& cell : row) std::replace(cell.begin(), cell.end(), ',', ';');
  rows.push_back(std::move(row));
}

std::string Table::csv() const {
  std::string out;
  for (std::size_t i = 0; i < columns.size(); ++i) out += (i ? "," : "") + columns[i];
  out += "\n";
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) out += (i ? "," : "") + r[i];
    out += "\n";
  }
  return out;
}

namespace {

json cell_json(const std::string& s) {
  if (s.empty()) return nullptr;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end && *end == '\0' && std::isfinite(v)) return v;
  return s;
}

}  // namespace

std::string Table::json() const {
  nlohmann::json j;
  j["columns"] = columns;
  j["rows"] = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json row = nlohmann::json::array();
    for (const auto& c : r) row.push_back(cell_json(c));
    j["rows"].push_back(std::move(row));
  }
  return j.dump(1) + "\n";
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 failed");
  std::ostringstream o;
  for (unsigned int i = 0; i < len; ++i)
    o << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return o.str();
}

namespace {

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json config_json(const RunConfig& c) {
  json j = json::object();
  std::istringstream in(serialize_config(c));
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    j[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return j;
}

class Run {
 public:
  Run(const RunConfig& c, std::string command, std::ostream& log)
      : config_(c), command_(std::move(command)), log_(log), dir_(c.output_dir()) {
    started_ = utc_now();
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec || !fs::is_directory(dir_))
      throw IoError("cannot create output directory " + dir_.string());
  }

  void write(const Table& t) {
    write_file(t.name + (config_.format == OutputFormat::Csv ? ".csv" : ".json"),
               config_.format == OutputFormat::Csv ? t.csv() : t.json());
  }

  void write_file(const std::string& name, const std::string& content) {
    const fs::path p = dir_ / name;
    {
      std::ofstream out(p, std::ios::binary | std::ios::trunc);
      if (!out) throw IoError("cannot write " + p.string());
      out << content;
      out.flush();
      if (!out) throw IoError("write failed for " + p.string());
    }
    files_.push_back({{"path", name}, {"sha256", sha256_hex(content)}, {"bytes", content.size()}});
    log_ << "wrote " << p.string() << "\n";
  }

  void diagnostic(json d) { diagnostics_.push_back(std::move(d)); }
  void summary(const std::string& key, json v) { summary_[key] = std::move(v); }
  std::ostream& log() { return log_; }

  int finish(int code) {
    write_file(command_ + "_config.txt", serialize_config(config_));
    json m;
    m["command"] = command_;
    m["config"] = config_json(config_);
    m["b"] = config_.trap.b;
    m["started"] = started_;
    m["finished"] = utc_now();
    m["exit_code"] = code;
    m["files"] = files_;
    m["diagnostics"] = diagnostics_;
    if (!summary_.empty()) m["summary"] = summary_;
    const fs::path p = dir_ / (command_ + "_manifest.json");
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + p.string());
    out << m.dump(2) << "\n";
    if (!out) throw IoError("write failed for " + p.string());
    return code;
  }

 private:
  const RunConfig& config_;
  std::string command_;
  std::ostream& log_;
  fs::path dir_;
  std::string started_;
  json files_ = json::array();
  json diagnostics_ = json::array();
  json summary_ = json::object();
};

std::string g_tag(double g) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "g%g", g);
  return buf;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char ch) { return std::tolower(ch); });
  return s;
}

TrapParams params_for(const RunConfig& c, double g, double gamma) {
  TrapParams p = c.trap;
  p.g = g;
  p.gamma = gamma;
  return p;
}

const StationaryState& nearest(const BranchCurve& curve, double gamma) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < curve.values.size(); ++i)
    if (std::abs(curve.values[i] - gamma) < std::abs(curve.values[best] - gamma)) best = i;
  return curve.states[best];
}

template <class T>
std::vector<std::optional<T>> parallel_map(std::size_t n, int workers,
                                           const std::function<T(std::size_t)>& f,
                                           std::vector<std::string>& errors) {
  std::vector<std::optional<T>> out(n);
  errors.assign(n, {});
  std::atomic<std::size_t> next{0};
  const auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        out[i] = f(i);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  const int k = std::max(1, std::min<int>(workers, static_cast<int>(n)));
  if (k == 1) {
    work();
    return out;
  }
  std::vector<std::thread> pool;
  for (int i = 0; i < k; ++i) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// spectrum
// ---------------------------------------------------------------------------

int cmd_spectrum(const RunConfig& c, std::ostream& log) {
  c.validate();
  Run run(c, "spectrum", log);
  const std::vector<double> grid = c.gamma_grid();
  bool partial = false;
  for (double g : c.g_values) {
    const TrapParams base = params_for(c, g, 0.0);
    std::vector<BranchCurve> curves;
    try {
      curves = gamma_branches(base, c.gamma_max);
    } catch (const std::exception& e) {
      run.diagnostic({{"g", g}, {"status", "failed"}, {"detail", e.what()}});
      partial = true;
      continue;
    }
    if (curves.empty()) {
      run.diagnostic({{"g", g}, {"status", "failed"}, {"detail", "no branch found"}});
      partial = true;
      continue;
    }
    for (const BranchCurve& curve : curves) {
      const Branch branch = curve.states.front().branch;
      const double lo = curve.values.front(), hi = curve.values.back();
      Table t{"spectrum_" + g_tag(g) + "_" + lower(to_string(branch)),
              {"gamma", "re_kappa", "im_kappa", "re_mu", "im_mu", "pt_symmetric", "norm",
               "residual", "iterations"},
              {}};
      int failures = 0;
      for (double gamma : grid) {
        if (gamma < lo - 1e-12 || gamma > hi + 1e-12) continue;
        const StationaryState& guess = nearest(curve, gamma);
        auto s = try_solve_stationary(params_for(c, g, gamma), guess.unknowns, branch);
        if (!s || s->pt_symmetric != guess.pt_symmetric) {
          ++failures;
          continue;
        }
        t.add({format_number(gamma), format_number(s->kappa.real()),
               format_number(s->kappa.imag()), format_number(s->mu.real()),
               format_number(s->mu.imag()), s->pt_symmetric ? "1" : "0", format_number(s->norm),
               format_number(s->residual_norm), std::to_string(s->iterations)});
      }
      if (!t.rows.empty()) run.write(t);
      partial = partial || failures > 0;
      run.diagnostic({{"g", g},
                      {"branch", to_string(branch)},
                      {"rows", t.rows.size()},
                      {"failures", failures},
                      {"gamma_first", lo},
                      {"gamma_last", hi},
                      {"terminated", curve.terminated}});
    }
  }
  return run.finish(partial ? kExitPartial : kExitOk);
}

// ---------------------------------------------------------------------------
// stability
// ---------------------------------------------------------------------------

int cmd_stability(const RunConfig& c, std::ostream& log) {
  c.validate();
  Run run(c, "stability", log);
  const std::string variant = to_string(c.variant);
  Table summary{"stability_summary_" + variant,
                {"g", "gamma_kappa", "gamma_omega", "delta_gamma", "variant", "status"},
                {}};
  bool not_found = false, partial = false;
  for (double g : c.g_values) {
    const TrapParams base = params_for(c, g, 0.0);
    try {
      const StationaryState h = [&] {
        for (const StationaryState& s : solve_all_states(base))
          if (s.branch == Branch::Ground) return s;
        throw NotFound("no ground state");
      }();
      const BranchCurve prefix = continue_branch(base, h, Parameter::Gamma, c.gamma_min, 0.01);
      if (prefix.terminated) throw NotFound("ground branch ends below gamma_min");
      const BranchCurve curve = continue_branch(prefix.states.back().params, prefix.states.back(),
                                                Parameter::Gamma, c.gamma_max, c.gamma_step);
      const StabilityCurve st = track_stability(curve, c.variant);
      Table t{"stability_" + g_tag(g) + "_" + variant,
              {"gamma", "re_omega", "im_omega", "stability", "residual"},
              {}};
      std::size_t k = 0;
      int lost = 0;
      for (const StabilityPoint& pt : st.points) {
        if (!pt.converged) {
          ++lost;
          continue;
        }
        const BdgSolution& sol = st.solutions[k++];
        t.add({format_number(pt.gamma), format_number(pt.omega.real()),
               format_number(pt.omega.imag()), to_string(pt.stability),
               format_number(sol.residual_norm)});
      }
      run.write(t);
      partial = partial || lost > 0;
      run.diagnostic({{"g", g}, {"points", st.points.size()}, {"lost", lost}});
    } catch (const std::exception& e) {
      run.diagnostic({{"g", g}, {"status", "failed"}, {"detail", e.what()}});
      partial = true;
    }

    std::optional<double> gk, gw;
    std::string status = "ok";
    try {
      gk = locate_pitchfork(params_for(c, g, 0.0));
    } catch (const NotFound& e) {
      status = std::string("pitchfork not found: ") + e.what();
    }
    try {
      gw = locate_stability_change(params_for(c, g, 0.0), c.variant);
    } catch (const NotFound& e) {
      status = (status == "ok" ? "" : status + "; ") + "stability change not found: " + e.what();
    }
    if (!gk || !gw) {
      not_found = true;
      log << "g = " << g << ": " << status << "\n";
    }
    summary.add({format_number(g), gk ? format_number(*gk) : "", gw ? format_number(*gw) : "",
                 gk && gw ? format_number(*gk - *gw) : "", variant, status});
  }
  run.write(summary);
  return run.finish(not_found ? kExitNotFound : partial ? kExitPartial : kExitOk);
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

int cmd_sweep(const RunConfig& c, std::ostream& log) {
  c.validate();
  Run run(c, "sweep", log);
  std::vector<std::string> errors;
  const std::function<DeltaGamma(std::size_t)> task = [&](std::size_t i) {
    return delta_gamma(params_for(c, c.g_values[i], 0.0), c.variant);
  };
  const auto results = parallel_map<DeltaGamma>(c.g_values.size(), c.worker_count(), task, errors);

  Table t{"sweep_" + to_string(c.variant),
          {"g", "gamma_kappa", "gamma_omega", "delta_gamma", "status"},
          {}};
  std::size_t failed = 0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const double g = c.g_values[i];
    if (results[i]) {
      const DeltaGamma& d = *results[i];
      t.add({format_number(g), format_number(d.gamma_kappa), format_number(d.gamma_omega),
             format_number(d.delta), "ok"});
    } else {
      ++failed;
      t.add({format_number(g), "", "", "", "failed: " + errors[i]});
      run.diagnostic({{"g", g}, {"status", "failed"}, {"detail", errors[i]}});
      log << "g = " << g << " failed: " << errors[i] << "\n";
    }
  }
  run.write(t);
  if (failed == results.size()) return run.finish(kExitNotFound);
  return run.finish(failed ? kExitPartial : kExitOk);
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

namespace {

struct Check {
  std::string name;
  std::string status;  // pass, fail, skipped
  double value = 0.0;
  double tolerance = 0.0;
  std::string detail;
};

Check measured(std::string name, double value, double tol, std::string detail = {}) {
  return {std::move(name), value < tol ? "pass" : "fail", value, tol, std::move(detail)};
}

Check failed(std::string name, double tol, const std::string& why) {
  return {std::move(name), "fail", std::nan(""), tol, why};
}

Check skipped(std::string name, std::string why) {
  return {std::move(name), "skipped", std::nan(""), 0.0, std::move(why)};
}

std::optional<StationaryState> state_of(const std::vector<StationaryState>& states, Branch b) {
  for (const auto& s : states)
    if (s.branch == b) return s;
  return std::nullopt;
}

void linear_checks(const RunConfig& c, std::vector<Check>& out) {
  const double b = c.trap.b;
  const TrapParams p0 = params_for(c, 0.0, 0.0);
  const auto states = solve_all_states(p0);
  const auto even = hermitian_linear_kappa(b, +1.0);
  const auto odd = hermitian_linear_kappa(b, -1.0);
  const auto ground = state_of(states, Branch::Ground);
  if (even && ground)
    out.push_back(measured("hermitian_even_kappa", std::abs(ground->kappa - *even), 1e-10));
  else
    out.push_back(failed("hermitian_even_kappa", 1e-10, "even state missing"));
  if (!odd) {
    out.push_back(skipped("hermitian_odd_kappa", "no odd bound state for b <= 1"));
  } else if (const auto ex = state_of(states, Branch::Excited)) {
    out.push_back(measured("hermitian_odd_kappa", std::abs(ex->kappa - *odd), 1e-10));
  } else {
    out.push_back(failed("hermitian_odd_kappa", 1e-10, "odd state missing"));
  }

  double spec_err = 0.0;
  const auto roots0 = linear_spectrum(0.0, b);
  for (const auto& r : roots0) {
    double d = std::abs(r - *even);
    if (odd) d = std::min(d, std::abs(r - *odd));
    spec_err = std::max(spec_err, d);
  }
  out.push_back(measured("linear_spectrum_fixed_points", spec_err, 1e-10,
                         std::to_string(roots0.size()) + " roots"));

  const LinearExceptionalPoint ep = linear_exceptional_point(b);
  double worst = 0.0;
  std::string where;
  for (int i = 1; i <= 5; ++i) {
    const double gamma = 0.9 * ep.gamma * i / 5.0;
    const auto roots = linear_spectrum(gamma, b);
    for (const auto& s : solve_all_states(params_for(c, 0.0, gamma))) {
      double d = 1e300;
      for (const auto& r : roots) d = std::min(d, std::abs(r - s.kappa));
      if (d > worst) {
        worst = d;
        where = "gamma = " + format_number(gamma);
      }
    }
  }
  out.push_back(measured("linear_branch_kappa", worst, 1e-8, where));

  try {
    const double t = locate_tangent(p0);
    out.push_back(measured("linear_exceptional_point", std::abs(t - ep.gamma), 1e-5,
                           "gamma_EP = " + format_number(t)));
  } catch (const std::exception& e) {
    out.push_back(failed("linear_exceptional_point", 1e-5, e.what()));
  }

  if (ground) {
    GridProblem gp;
    const GridResult r = grid_solve(gp, p0, grid_guess(*ground, gp), ground->kappa);
    out.push_back(measured("grid_kappa_g0_gamma0", std::abs(r.kappa - ground->kappa), 1e-4,
                           "extrapolation estimate " + format_number(r.error_estimate)));
  }
}

void nonlinear_checks(const RunConfig& c, double g, std::vector<Check>& out) {
  for (double gamma : {0.2, 0.3}) {
    const std::string name = "grid_kappa_" + g_tag(g) + "_gamma" + format_number(gamma);
    try {
      const TrapParams p = params_for(c, g, gamma);
      const auto ground = state_of(solve_all_states(p), Branch::Ground);
      if (!ground) throw NotFound("no ground state");
      GridProblem gp;
      const GridResult r = grid_solve(gp, p, grid_guess(*ground, gp), ground->kappa);
      out.push_back(measured(name, std::abs(r.kappa - ground->kappa), 1e-4,
                             "extrapolation estimate " + format_number(r.error_estimate)));
    } catch (const std::exception& e) {
      out.push_back(failed(name, 1e-4, e.what()));
    }
  }

  // Stationary properties just above the pitchfork, where all four states exist.
  try {
    const double gk = locate_pitchfork(params_for(c, g, 0.0));
    const TrapParams p = params_for(c, g, gk + 0.01);
    const auto states = solve_all_states(p);
    double norm_err = 0.0, pt_err = 0.0, mode_err = 0.0;
    for (const auto& s : states) {
      norm_err = std::max(norm_err, std::abs(s.norm - 1.0));
      if (s.branch == Branch::Ground || s.branch == Branch::Excited)
        pt_err = std::max(pt_err, s.pt_deviation);
      TrapParams q = p;
      q.mode = NonlinearityMode::NormIndependent;
      const StationaryState t = solve_stationary(q, s.unknowns, s.branch);
      mode_err = std::max(mode_err, std::abs(t.kappa - s.kappa));
    }
    out.push_back(measured("state_norm", norm_err, 1e-9));
    out.push_back(measured("state_pt_symmetry", pt_err, 1e-7));
    out.push_back(measured("state_mode_equivalence", mode_err, 1e-9));
    const auto plus = state_of(states, Branch::BrokenPlus);
    const auto minus = state_of(states, Branch::BrokenMinus);
    if (plus && minus)
      out.push_back(measured("broken_pair_conjugate",
                             std::abs(plus->kappa - std::conj(minus->kappa)), 1e-8));
    else
      out.push_back(failed("broken_pair_conjugate", 1e-8, "broken pair missing"));
  } catch (const std::exception& e) {
    out.push_back(failed("stationary_properties", 1e-9, e.what()));
  }

  try {
    const TrapParams p = params_for(c, g, 0.2);
    const BdgSolution m = tracked_mode(p, Branch::Ground, BdgVariant::Standard);
    const auto res = [&](const BdgUnknowns& u) {
      return bdg_residual(u, m.base, BdgVariant::Standard).lpNorm<Eigen::Infinity>();
    };
    out.push_back(measured("bdg_conjugate_partner", res(m.unknowns.conjugate_partner()), 1e-9));
    out.push_back(measured("bdg_pt_partner", res(m.unknowns.pt_partner()), 1e-9));
    const BdgRun r = integrate_bdg(m.unknowns, m.base, BdgVariant::Standard);
    out.push_back(measured("bdg_normalization", std::abs(r.normalization - 1.0), 1e-8));
  } catch (const std::exception& e) {
    out.push_back(failed("bdg_symmetries", 1e-9, e.what()));
  }

  try {
    const double gw = locate_stability_change(params_for(c, g, 0.0), BdgVariant::Standard);
    PropagationRun pr;
    pr.epsilon = c.epsilon;
    pr.T = c.horizon;
    pr.dt = c.time_step;
    for (double shift : {+0.01, -0.01}) {
      const TrapParams p = params_for(c, g, gw + shift);
      const BdgSolution m = tracked_mode(p, Branch::Ground, BdgVariant::Standard);
      const GrowthFit fit = fit_growth_rate(propagate(pr, p, m.base, &m));
      if (shift > 0) {
        const double im = m.omega.imag();
        out.push_back(fit.stable
                          ? failed("growth_rate_unstable", 0.05, "no growth detected")
                          : measured("growth_rate_unstable", std::abs(fit.rate - im) / im, 0.05,
                                     "rate " + format_number(fit.rate) + " vs Im omega " +
                                         format_number(im)));
      } else {
        out.push_back({"growth_rate_stable", fit.stable ? "pass" : "fail", fit.rate, 0.0,
                       "gamma = " + format_number(gw + shift)});
      }
    }
  } catch (const std::exception& e) {
    out.push_back(failed("growth_rate", 0.05, e.what()));
  }
}

}  // namespace

int cmd_verify(const RunConfig& c, std::ostream& log) {
  c.validate();
  Run run(c, "verify", log);
  std::vector<Check> checks;
  try {
    linear_checks(c, checks);
  } catch (const std::exception& e) {
    checks.push_back(failed("linear", 0.0, e.what()));
  }
  const auto g_it = std::find_if(c.g_values.begin(), c.g_values.end(), [](double g) { return g < 0; });
  if (g_it == c.g_values.end()) {
    for (const char* n : {"grid_kappa_nonlinear", "stationary_properties", "bdg_symmetries",
                          "growth_rate"})
      checks.push_back(skipped(n, "no attractive g in the configuration"));
  } else {
    nonlinear_checks(c, *g_it, checks);
  }

  Table t{"verify", {"check", "status", "value", "tolerance", "detail"}, {}};
  bool ok = true;
  for (const Check& k : checks) {
    ok = ok && k.status != "fail";
    t.add({k.name, k.status, format_number(k.value), format_number(k.tolerance), k.detail});
    log << k.status << " " << k.name << " " << format_number(k.value) << "\n";
  }
  run.write(t);
  run.summary("all_passed", ok);
  return run.finish(ok ? kExitOk : kExitVerifyFailed);
}

// ---------------------------------------------------------------------------
// propagate
// ---------------------------------------------------------------------------

int cmd_propagate(const RunConfig& c, std::ostream& log) {
  c.validate();
  Run run(c, "propagate", log);
  const double g = c.g_values.front();
  const TrapParams p = params_for(c, g, c.trap.gamma);
  std::optional<BdgSolution> mode;
  StationaryState state;
  try {
    mode = tracked_mode(p, Branch::Ground, c.variant);
    state = mode->base;
  } catch (const NotFound& e) {
    log << "no BdG mode (" << e.what() << "), propagating the unperturbed state\n";
    const auto states = solve_all_states(p);
    const auto ground = state_of(states, Branch::Ground);
    if (!ground) {
      log << "no ground state at this gamma\n";
      return run.finish(kExitNotFound);
    }
    state = *ground;
  }
  PropagationRun pr;
  pr.grid.mode = c.trap.mode;
  pr.epsilon = mode ? c.epsilon : 0.0;
  pr.T = c.horizon;
  pr.dt = c.time_step;
  const PropagationSeries s = propagate(pr, p, state, mode ? &*mode : nullptr);
  const GrowthFit fit = fit_growth_rate(s);

  const std::string tag = g_tag(g) + "_gamma" + format_number(c.trap.gamma);
  Table t{"propagate_" + tag,
          {"t", "norm", "re_overlap", "im_overlap", "fluctuation_amplitude"},
          {}};
  for (std::size_t i = 0; i < s.t.size(); ++i)
    t.add({format_number(s.t[i]), format_number(s.norm[i]), format_number(s.overlap[i].real()),
           format_number(s.overlap[i].imag()), format_number(s.amplitude[i])});
  run.write(t);
  Table sum{"propagate_summary_" + tag,
            {"g", "gamma", "mode", "variant", "re_omega", "im_omega", "fitted_rate", "stable",
             "epsilon", "truncated"},
            {}};
  sum.add({format_number(g), format_number(c.trap.gamma), mode_name(c.trap.mode),
           to_string(c.variant), mode ? format_number(mode->omega.real()) : "",
           mode ? format_number(mode->omega.imag()) : "", format_number(fit.rate),
           fit.stable ? "1" : "0", format_number(pr.epsilon), s.truncated ? "1" : "0"});
  run.write(sum);
  log << "fitted rate " << format_number(fit.rate) << (fit.stable ? " (stable)" : "") << "\n";
  return run.finish(kExitOk);
}

// ---------------------------------------------------------------------------
// Command line
// ---------------------------------------------------------------------------

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Stationary states and stability of a BEC in a PT-symmetric double-delta trap"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "ptdelta 1.0");

  std::map<std::string, std::string> given;
  std::vector<std::string> g_list;
  std::string config_file;

  const auto add_common = [&](CLI::App* sub) {
    const auto opt = [&, sub](const std::string& flag, const std::string& key,
                              const std::string& help) {
      sub->add_option_function<std::string>(
          flag, [&given, key](const std::string& v) { given[key] = v; }, help);
    };
    opt("--gamma-min", "gamma_min", "lower end of the gamma range");
    opt("--gamma-max", "gamma_max", "upper end of the gamma range");
    opt("--gamma-step", "gamma_step", "gamma step");
    sub->add_option("--g", g_list, "nonlinearity (repeatable)")->allow_extra_args(false);
    opt("--b", "b", "well half-separation");
    opt("--variant", "variant", "standard or modified");
    opt("--mode", "mode", "norm-dependent or norm-independent");
    opt("--out", "out", "output directory");
    opt("--format", "format", "csv or json");
    opt("--jobs", "jobs", "worker threads (0: all cores)");
    opt("--seed", "seed", "recorded seed");
    opt("--x-max", "x_max", "matching point (0: automatic)");
    opt("--gamma", "gamma", "working gamma (propagate)");
    opt("--epsilon", "epsilon", "perturbation amplitude (propagate)");
    opt("--horizon", "horizon", "propagation time (propagate)");
    opt("--dt", "time_step", "time step (propagate)");
    opt("--abs-tol", "abs_tol", "integrator absolute tolerance");
    opt("--rel-tol", "rel_tol", "integrator relative tolerance");
    sub->add_option("--config", config_file, "key = value config file");
  };

  using Command = int (*)(const RunConfig&, std::ostream&);
  const std::vector<std::pair<std::string, Command>> commands = {
      {"spectrum", cmd_spectrum},   {"stability", cmd_stability}, {"sweep", cmd_sweep},
      {"verify", cmd_verify},       {"propagate", cmd_propagate}};
  const std::map<std::string, std::string> descriptions = {
      {"spectrum", "stationary states along gamma for each g"},
      {"stability", "BdG eigenvalue along the ground branch and gamma_kappa, gamma_omega"},
      {"sweep", "delta gamma = gamma_kappa - gamma_omega for each g"},
      {"verify", "cross-checks against the independent oracles"},
      {"propagate", "time evolution of a perturbed ground state"}};
  std::vector<CLI::App*> subs;
  for (const auto& [name, fn] : commands) {
    CLI::App* sub = app.add_subcommand(name, descriptions.at(name));
    add_common(sub);
    subs.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    RunConfig config;
    if (!config_file.empty()) config = load_config(config_file, config);
    for (const auto& [k, v] : given) set_config_value(config, k, v);
    if (!g_list.empty()) {
      std::string joined;
      for (const auto& g : g_list) joined += (joined.empty() ? "" : ",") + g;
      set_config_value(config, "g", joined);
    }
    config.validate();
    for (std::size_t i = 0; i < subs.size(); ++i)
      if (subs[i]->parsed()) return commands[i].second(config, err);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const NotFound& e) {
    err << "not found: " << e.what() << "\n";
    return kExitNotFound;
  }
  return kExitUsage;
}

}  // namespace ptdelta
