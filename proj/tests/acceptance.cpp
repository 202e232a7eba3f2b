#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "ptdelta/cli.hpp"
#include "ptdelta/oracle.hpp"
#include "reference.hpp"

using namespace ptdelta;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

TrapParams trap(double g, double gamma, double b = 1.1) {
  TrapParams p;
  p.g = g;
  p.gamma = gamma;
  p.b = b;
  return p;
}

const StationaryState* find(const std::vector<StationaryState>& states, Branch b) {
  for (const auto& s : states)
    if (s.branch == b) return &s;
  return nullptr;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ptdelta_acceptance_" + name);
  fs::remove_all(p);
  return p;
}

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(std::move(cells));
  }
  return rows;
}

Outcome linear_equivalence() {
  const double ep = linear_exceptional_point(1.1).gamma;
  double worst = 0.0;
  int compared = 0;
  for (int i = 1; i <= 20; ++i) {
    const double gamma = 0.99 * ep * i / 20.0;
    const auto roots = linear_spectrum(gamma, 1.1);
    const auto states = solve_all_states(trap(0.0, gamma));
    if (states.size() != roots.size())
      return {false, "state count differs at gamma " + fmt("%.4f", gamma)};
    for (const auto& s : states) {
      double d = 1e300;
      for (const cplx r : roots) d = std::min(d, std::abs(r - s.kappa));
      worst = std::max(worst, d);
      ++compared;
    }
  }
  return {worst < 1e-8, std::to_string(compared) + " roots, max |dkappa| = " + fmt("%.2e", worst)};
}

Outcome hermitian_check() {
  const auto states = solve_all_states(trap(0.0, 0.0));
  const auto* even = find(states, Branch::Ground);
  const auto* odd = find(states, Branch::Excited);
  if (!even || !odd) return {false, "missing state"};
  const double de = std::abs(even->kappa - reference::hermitian_kappa(1.1, +1.0));
  const double dod = std::abs(odd->kappa - reference::hermitian_kappa(1.1, -1.0));
  return {de < 1e-10 && dod < 1e-10, "even " + fmt("%.2e", de) + ", odd " + fmt("%.2e", dod)};
}

bool headline_ok(const DeltaGamma& d) {
  return std::abs(d.gamma_kappa - 0.3071) <= 0.002 && std::abs(d.gamma_omega - 0.3138) <= 0.002 &&
         std::abs(d.delta + 0.0067) <= 0.001;
}

Outcome headline_numbers() {
  DeltaGamma d = delta_gamma(trap(-1.0, 0.0), BdgVariant::Standard);
  double b = 1.1;
  if (!headline_ok(d)) {
    bool found = false;
    for (int i = 0; i <= 8 && !found; ++i) {
      const double bb = 0.9 + 0.05 * i;
      try {
        const DeltaGamma e = delta_gamma(trap(-1.0, 0.0, bb), BdgVariant::Standard);
        if (headline_ok(e)) {
          d = e;
          b = bb;
          found = true;
        }
      } catch (const NotFound&) {
      }
    }
  }
  return {headline_ok(d), "b = " + fmt("%.2f", b) + ", gamma_kappa = " +
                              fmt("%.6f", d.gamma_kappa) + ", gamma_omega = " +
                              fmt("%.6f", d.gamma_omega) + ", delta = " + fmt("%.6f", d.delta)};
}

Outcome modified_collapse() {
  bool ok = true;
  std::string detail;
  for (double g : {-0.5, -1.0, -2.0}) {
    detail += (detail.empty() ? "" : "; ") + fmt("g = %g: ", g);
    try {
      const DeltaGamma d = delta_gamma(trap(g, 0.0), BdgVariant::Modified);
      ok = ok && std::abs(d.delta) < 1e-4;
      detail += "|diff| = " + fmt("%.2e", std::abs(d.delta));
    } catch (const NotFound& e) {
      ok = false;
      detail += std::string("not found (") + e.what() + ")";
      try {
        const BdgSolution m = tracked_mode(trap(g, 0.0), Branch::Ground, BdgVariant::Modified);
        if (classify(m.omega) == Stability::Unstable)
          detail += fmt(", ground state already unstable at gamma = 0 (Im omega = %.4f)",
                        m.omega.imag());
      } catch (const std::exception&) {
      }
    }
  }
  return {ok, detail};
}

Outcome delta_structure() {
  const fs::path dir = scratch("sweep");
  RunConfig c;
  c.g_values.clear();
  for (int k = 1; k <= 10; ++k) c.g_values.push_back(-0.1 * k);
  c.out_dir = dir.string();
  std::ostringstream log;
  const int code = cmd_sweep(c, log);
  if (code != kExitOk) return {false, "sweep exit code " + std::to_string(code) + ": " + log.str()};
  std::vector<double> dg;
  for (const auto& row : csv_rows(slurp(dir / "sweep_standard.csv")))
    dg.push_back(std::stod(row[3]));
  fs::remove_all(dir);
  int changes = 0;
  for (std::size_t i = 1; i < dg.size(); ++i)
    if ((dg[i] > 0) != (dg[i - 1] > 0)) ++changes;
  const bool ok = dg.front() > 0 && dg.back() < 0 && changes == 1 &&
                  std::abs(dg.front()) < std::abs(dg.back());
  std::string detail = "delta(-0.1) = " + fmt("%.6f", dg.front()) +
                       ", delta(-1) = " + fmt("%.6f", dg.back()) +
                       ", sign changes = " + std::to_string(changes);
  return {ok, detail};
}

Outcome stationary_properties() {
  double norm = 0, pt = 0, conj = 0, mode = 0;
  int count = 0;
  for (auto [g, gamma] : std::vector<std::pair<double, double>>{
           {-1.0, 0.2}, {-1.0, 0.32}, {-1.0, 0.38}, {-0.5, 0.39}, {0.0, 0.3}, {-0.3, 0.395}}) {
    const TrapParams p = trap(g, gamma);
    const auto states = solve_all_states(p);
    for (const auto& s : states) {
      ++count;
      norm = std::max(norm, std::abs(s.norm - 1.0));
      if (s.pt_symmetric) pt = std::max(pt, s.pt_deviation);
      TrapParams q = p;
      q.mode = NonlinearityMode::NormIndependent;
      mode = std::max(mode, std::abs(solve_stationary(q, s.unknowns, s.branch).kappa - s.kappa));
    }
    const auto* plus = find(states, Branch::BrokenPlus);
    const auto* minus = find(states, Branch::BrokenMinus);
    if (plus && minus) conj = std::max(conj, std::abs(plus->kappa - std::conj(minus->kappa)));
  }
  const bool ok = norm < 1e-9 && pt < 1e-7 && conj < 1e-8 && mode < 1e-9;
  return {ok, std::to_string(count) + " states, norm " + fmt("%.1e", norm) + ", PT " +
                  fmt("%.1e", pt) + ", conjugate pair " + fmt("%.1e", conj) + ", modes " +
                  fmt("%.1e", mode)};
}

Outcome bdg_symmetries() {
  double conj = 0, pt = 0, norm = 0;
  bool omega_ok = true;
  for (auto [g, gamma, variant] : std::vector<std::tuple<double, double, BdgVariant>>{
           {-1.0, 0.2, BdgVariant::Standard},
           {-1.0, 0.33, BdgVariant::Standard},
           {-0.5, 0.3, BdgVariant::Standard},
           {-1.0, 0.2, BdgVariant::Modified}}) {
    const BdgSolution m = tracked_mode(trap(g, gamma), Branch::Ground, variant);
    const auto res = [&](const BdgUnknowns& u) {
      return bdg_residual(u, m.base, variant).lpNorm<Eigen::Infinity>();
    };
    const BdgUnknowns c = m.unknowns.conjugate_partner();
    const BdgUnknowns p = m.unknowns.pt_partner();
    omega_ok = omega_ok && c.omega == -std::conj(m.omega) && p.omega == std::conj(m.omega);
    conj = std::max(conj, res(c));
    pt = std::max(pt, res(p));
    norm = std::max(norm, std::abs(integrate_bdg(m.unknowns, m.base, variant).normalization - 1.0));
  }
  const bool ok = omega_ok && conj < 1e-9 && pt < 1e-9 && norm < 1e-8;
  return {ok, "conjugate " + fmt("%.1e", conj) + ", PT " + fmt("%.1e", pt) + ", normalization " +
                  fmt("%.1e", norm)};
}

Outcome dynamics() {
  const double gw = locate_stability_change(trap(-1.0, 0.0), BdgVariant::Standard);
  PropagationRun run;
  const TrapParams up = trap(-1.0, gw + 0.01);
  const BdgSolution mu = tracked_mode(up, Branch::Ground, BdgVariant::Standard);
  const GrowthFit fu = fit_growth_rate(propagate(run, up, mu.base, &mu));
  const TrapParams down = trap(-1.0, gw - 0.01);
  const BdgSolution md = tracked_mode(down, Branch::Ground, BdgVariant::Standard);
  const GrowthFit fd = fit_growth_rate(propagate(run, down, md.base, &md));
  const double rel = std::abs(fu.rate - mu.omega.imag()) / mu.omega.imag();
  const bool ok = !fu.stable && rel < 0.05 && fd.stable;
  return {ok, "rate " + fmt("%.5f", fu.rate) + " vs Im omega " + fmt("%.5f", mu.omega.imag()) +
                  " (" + fmt("%.1f", 100 * rel) + "%), below: " + (fd.stable ? "stable" : "unstable")};
}

Outcome grid_agreement() {
  bool ok = true;
  std::string detail;
  for (auto [g, gamma] : std::vector<std::pair<double, double>>{{0.0, 0.0}, {-1.0, 0.2}, {-1.0, 0.3}}) {
    const auto states = solve_all_states(trap(g, gamma));
    const auto* s = find(states, Branch::Ground);
    if (!s) return {false, "ground state missing"};
    const StationaryState ground = *s;
    GridProblem gp;
    const GridResult r = grid_solve(gp, ground.params, grid_guess(ground, gp), ground.kappa);
    const double d = std::abs(r.kappa - ground.kappa);
    ok = ok && d < 1e-4;
    detail += (detail.empty() ? "" : ", ") + fmt("(%g, ", g) + fmt("%g): ", gamma) + fmt("%.1e", d);
  }
  return {ok, detail};
}

Outcome determinism() {
  RunConfig c;
  c.g_values = {-0.2, -0.6, -1.0};
  c.jobs = 2;
  std::string first;
  for (int run = 0; run < 2; ++run) {
    const fs::path dir = scratch("determinism" + std::to_string(run));
    c.out_dir = dir.string();
    std::ostringstream log;
    if (cmd_sweep(c, log) != kExitOk) return {false, "sweep failed: " + log.str()};
    const std::string csv = slurp(dir / "sweep_standard.csv");
    fs::remove_all(dir);
    if (run == 0) first = csv;
    else if (csv != first) return {false, "CSV differs between runs"};
  }
  return {true, "two runs byte-identical, sha256 " + sha256_hex(first).substr(0, 16)};
}

struct Criterion {
  int id;
  const char* name;
  double limit_s;  // 0: no runtime limit
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {1, "linear-oracle equivalence", 10, linear_equivalence},
      {2, "hermitian analytic check", 0, hermitian_check},
      {3, "headline numbers at g = -1", 300, headline_numbers},
      {4, "modified-variant collapse", 600, modified_collapse},
      {5, "delta gamma structure in g", 0, delta_structure},
      {6, "stationary-state properties", 0, stationary_properties},
      {7, "BdG symmetry suite", 0, bdg_symmetries},
      {8, "dynamics cross-check", 300, dynamics},
      {9, "grid-oracle agreement", 0, grid_agreement},
      {10, "sweep determinism", 0, determinism},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0;
  for (const Criterion& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.limit_s > 0 && secs > c.limit_s) {
      o.pass = false;
      o.detail += fmt(", over the %.0f s limit", c.limit_s);
    }
    failures += o.pass ? 0 : 1;
    std::printf("criterion %2d: %s  %s (%s; %.1f s)\n", c.id, o.pass ? "PASS" : "FAIL", c.name,
                o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
