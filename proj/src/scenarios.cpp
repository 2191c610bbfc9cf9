// Copyright 2026 The powersat Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "powersat/scenarios.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <functional>
#include <limits>
#include <random>
#include <sstream>
#include <thread>

#include <boost/math/quadrature/gauss.hpp>

#include "powersat/bandwidth.hpp"
#include "powersat/clfqp.hpp"
#include "powersat/descfun.hpp"
#include "powersat/grid.hpp"
#include "powersat/model.hpp"
#include "powersat/mpc.hpp"
#include "powersat/nlcontrol.hpp"
#include "powersat/optim.hpp"
#include "powersat/servo.hpp"
#include "powersat/sim.hpp"

namespace powersat::scenarios {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kInf = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------- helpers

template <class T>
T opt(const json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

Eigen::VectorXd opt_vec(const json& j, const char* key, Eigen::VectorXd fallback) {
  if (!j.contains(key)) return fallback;
  const auto v = j.at(key).get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

void add(Report& r, std::string name, CheckKind kind, int criterion, bool pass,
         double value, double limit, std::string note = "") {
  r.checks.push_back({std::move(name), kind, criterion, pass, value, limit, std::move(note)});
}

// Runs f(0..n-1), on separate threads when asked. The first exception is
// rethrown after all workers finish.
void for_each_index(int n, bool parallel, const std::function<void(int)>& f) {
  if (!parallel || n < 2) {
    for (int i = 0; i < n; ++i) f(i);
    return;
  }
  std::vector<std::exception_ptr> errs(n);
  std::vector<std::thread> workers;
  for (int i = 0; i < n; ++i) {
    workers.emplace_back([&, i] {
      try {
        f(i);
      } catch (...) {
        errs[i] = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  for (auto& e : errs) {
    if (e) std::rethrow_exception(e);
  }
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p);
  if (!f) throw std::runtime_error("cannot open " + p.string());
  return f;
}

sim::TrajectoryLog decimate(const sim::TrajectoryLog& in, int stride) {
  if (stride <= 1) return in;
  sim::TrajectoryLog out;
  for (size_t k = 0; k < in.size(); k += stride) {
    out.times.push_back(in.times[k]);
    out.states.push_back(in.states[k]);
    out.u_cmd.push_back(in.u_cmd[k]);
    out.u_applied.push_back(in.u_applied[k]);
    out.power_per_joint.push_back(in.power_per_joint[k]);
    out.power_total.push_back(in.power_total[k]);
    for (const auto& [name, s] : in.scalars) out.scalars[name].push_back(s[k]);
  }
  return out;
}

double max_of(const std::vector<double>& v) {
  return v.empty() ? -kInf : *std::max_element(v.begin(), v.end());
}

double max_joint_power(const sim::TrajectoryLog& log) {
  double m = -kInf;
  for (const auto& p : log.power_per_joint) m = std::max(m, p.maxCoeff());
  return m;
}

double json_num(double v) { return std::isfinite(v) ? v : std::nan(""); }

// ---------------------------------------------------------------- descfun

// First-harmonic coefficients of the lossless power limit by composite
// 10-point Gauss-Legendre on n nodes, with panel edges on the kinks of the
// integrand. Kinks are located by a sign scan of u v - p_max and bisection,
// so nothing here depends on the closed form.
descfun::Coeffs quadrature_coeffs(double A, double X, double phi, double p_max, int n) {
  auto excess = [&](double psi) {
    return A * std::sin(psi) * A * X * std::sin(psi + phi) - p_max;
  };
  auto y = [&](double psi) {
    const double u = A * std::sin(psi);
    const double v = A * X * std::sin(psi + phi);
    return u * v > p_max ? p_max / v : u;
  };
  std::vector<double> edges = {0.0};
  const int scan = std::max(n, 16);
  double prev = excess(0.0);
  for (int i = 1; i <= scan; ++i) {
    double lo = 2.0 * kPi * (i - 1) / scan, hi = 2.0 * kPi * i / scan;
    const double cur = excess(hi);
    if ((prev > 0.0) != (cur > 0.0)) {
      const bool lo_pos = prev > 0.0;
      for (int k = 0; k < 100; ++k) {
        const double mid = 0.5 * (lo + hi);
        ((excess(mid) > 0.0) == lo_pos ? lo : hi) = mid;
      }
      edges.push_back(0.5 * (lo + hi));
    }
    prev = cur;
  }
  edges.push_back(2.0 * kPi);
  // Panels halve in width toward both ends of each segment (the integrand
  // can be nearly singular there), then the remaining budget is spread over
  // the panels in proportion to their width.
  const int segments = static_cast<int>(edges.size()) - 1;
  const int budget = std::max(2, n / (10 * segments));
  const int layers = std::max(1, std::min(40, budget / 4));
  using GL = boost::math::quadrature::gauss<double, 10>;
  double c = 0.0, s = 0.0;
  for (int g = 0; g < segments; ++g) {
    const double a = edges[g], b = edges[g + 1], m = 0.5 * (a + b);
    std::vector<double> cuts = {a, m, b};
    for (int k = 1; k <= layers; ++k) {
      const double d = (m - a) * std::ldexp(1.0, -k);
      cuts.push_back(a + d);
      cuts.push_back(b - d);
    }
    std::sort(cuts.begin(), cuts.end());
    const int extra = std::max(0, budget - static_cast<int>(cuts.size()) + 1);
    for (size_t i = 0; i + 1 < cuts.size(); ++i) {
      const double lo = cuts[i], hi = cuts[i + 1];
      const int pieces = 1 + static_cast<int>(extra * (hi - lo) / (b - a));
      const double w = (hi - lo) / pieces;
      for (int k = 0; k < pieces; ++k) {
        const double pa = lo + k * w, pb = pa + w;
        c += GL::integrate([&](double t) { return y(t) * std::sin(t); }, pa, pb);
        s += GL::integrate([&](double t) { return y(t) * std::cos(t); }, pa, pb);
      }
    }
  }
  return {c / (kPi * A), s / (kPi * A)};
}

Report run_descfun(const json& cfg, const fs::path& out, const Flags& flags) {
  descfun::Example1 ex;
  ex.m = opt(cfg, "m", ex.m);
  ex.d = opt(cfg, "d", ex.d);
  ex.omega_n = opt(cfg, "omega_n", ex.omega_n);
  ex.zeta = opt(cfg, "zeta", ex.zeta);
  ex.p_max = opt(cfg, "p_max", ex.p_max);
  ex.qdot_max = opt(cfg, "qdot_max", ex.qdot_max);
  ex.u_max = opt(cfg, "u_max", ex.p_max / ex.qdot_max);
  const double a_lo = opt(cfg, "A_min", 1.0), a_hi = opt(cfg, "A_max", 500.0);
  const int a_n = opt(cfg, "A_points", 50);
  const double w_lo = opt(cfg, "omega_min", 1.0), w_hi = opt(cfg, "omega_max", 1e3);
  const int w_n = opt(cfg, "omega_points", 100);
  const int samples = opt(cfg, "oracle_samples", tol::kDfOracleSamples);
  require(ex.m > 0.0 && ex.d >= 0.0, "descfun: m > 0 and d >= 0 required");
  require(ex.p_max > 0.0 && ex.qdot_max > 0.0 && ex.u_max > 0.0,
          "descfun: p_max, qdot_max and u_max must be > 0");
  require(a_lo > 0.0 && a_hi >= a_lo && a_n >= 1 && w_lo > 0.0 && w_hi >= w_lo && w_n >= 1,
          "descfun: bad amplitude or frequency grid");
  require(samples >= 1, "descfun: oracle_samples must be >= 1");

  Report r;
  const auto A = logspace(a_lo, a_hi, a_n);
  const auto W = logspace(w_lo, w_hi, w_n);
  const descfun::NyquistTables t =
      descfun::nyquist_sweep(ex.gains(), ex.m, ex.d, ex.p_max, ex.u_max, A, W);
  {
    auto f = open_out(out / "descfun_points.csv");
    descfun::write_points_csv(f, t.points);
  }
  const std::pair<const char*, const std::vector<descfun::NyquistRow>*> tables[] = {
      {"nyquist_open_loop.csv", &t.open_loop},
      {"nyquist_nonlinearity.csv", &t.nonlinearity},
      {"nyquist_open_loop_with_n.csv", &t.open_loop_with_n},
      {"nyquist_saturation.csv", &t.saturation}};
  for (const auto& [file, rows] : tables) {
    auto f = open_out(out / file);
    descfun::write_nyquist_csv(f, *rows);
  }

  int active = 0;
  double xn_min = kInf, xn_max = -kInf, phi_min = kInf, active_phi_min = kInf;
  for (const auto& p : t.points) {
    xn_min = std::min(xn_min, p.XN);
    xn_max = std::max(xn_max, p.XN);
    phi_min = std::min(phi_min, p.phiN);
    if (p.window) {
      ++active;
      active_phi_min = std::min(active_phi_min, p.phiN);
    }
  }
  add(r, "gain_in_(0,1]", CheckKind::Invariant, 1, xn_min > 0.0 && xn_max <= 1.0, xn_max, 1.0);
  add(r, "phase_nonnegative", CheckKind::Invariant, 1, phi_min >= 0.0, phi_min, 0.0);
  add(r, "exact_phase_ge_saturation_phase", CheckKind::Acceptance, 1,
      active > 0 && active_phi_min >= 0.0, active > 0 ? active_phi_min : -1.0, 0.0,
      std::to_string(active) + " active points");

  // Closed form against quadrature on random active configurations.
  std::mt19937_64 rng(flags.seed);
  std::uniform_real_distribution<double> ua(1.0, 500.0), ux(0.01, 10.0), up(-1.5, 1.5);
  double worst = 0.0;
  int drawn = 0;
  while (drawn < samples) {
    const double a = ua(rng), x = ux(rng), phi = up(rng);
    if (!descfun::active_window(a, x, phi, ex.p_max)) continue;
    const auto cf = descfun::fourier_coeffs(a, x, phi, ex.p_max);
    const auto q = quadrature_coeffs(a, x, phi, ex.p_max, tol::kDfQuadraturePoints);
    worst = std::max({worst, std::abs(cf.c - q.c), std::abs(cf.s - q.s)});
    ++drawn;
  }
  add(r, "closed_form_vs_quadrature", CheckKind::Acceptance, 2, worst <= tol::kDfOracle, worst,
      tol::kDfOracle, std::to_string(drawn) + " configurations");

  r.measured = {{"points", t.points.size()}, {"active_points", active},
                {"XN_min", xn_min},         {"XN_max", xn_max},
                {"phiN_max", [&] {
                   double m = 0.0;
                   for (const auto& p : t.points) m = std::max(m, p.phiN);
                   return m;
                 }()},
                {"oracle_max_abs_error", worst}};
  return r;
}

// ---------------------------------------------------------------- bandwidth

Report run_bandwidth(const json& cfg, const fs::path& out, const Flags& flags) {
  bandwidth::Problem base;
  base.m = opt(cfg, "m", base.m);
  base.d = opt(cfg, "d", base.d);
  base.k = opt(cfg, "k", base.k);
  base.tau_c = opt(cfg, "tau_c", base.tau_c);
  base.qdot_max = opt(cfg, "qdot_max", base.qdot_max);
  const auto p_list = opt(cfg, "p_max_list", std::vector<double>{200.0, 400.0, 600.0});
  const double y_lo = opt(cfg, "Y_min_deg", 0.5), y_hi = opt(cfg, "Y_max_deg", 57.3);
  const int y_n = opt(cfg, "Y_points", 200);
  require(base.m > 0.0 && base.d >= 0.0 && base.k >= 0.0 && base.tau_c >= 0.0,
          "bandwidth: m > 0 and d, k, tau_c >= 0 required");
  require(base.qdot_max > 0.0, "bandwidth: qdot_max must be > 0");
  require(!p_list.empty(), "bandwidth: p_max_list is empty");
  for (double p : p_list) require(p > 0.0, "bandwidth: P_max must be > 0");
  require(y_lo > 0.0 && y_hi > y_lo && y_n >= 3, "bandwidth: bad amplitude grid");

  const auto Y = logspace(y_lo, y_hi, y_n);
  std::vector<std::vector<bandwidth::RatioRow>> curves(p_list.size());
  for_each_index(static_cast<int>(p_list.size()), flags.parallel, [&](int i) {
    curves[i] = bandwidth::ratio_sweep(base, Y, {p_list[i]});
  });

  Report r;
  std::vector<bandwidth::RatioRow> all;
  std::vector<std::vector<double>> kink_rows;
  double ratio_min = kInf;
  json per = json::array();
  for (size_t c = 0; c < curves.size(); ++c) {
    std::vector<double> ratio;
    for (const auto& row : curves[c]) ratio.push_back(row.ratio);
    all.insert(all.end(), curves[c].begin(), curves[c].end());
    ratio_min = std::min(ratio_min, *std::min_element(ratio.begin(), ratio.end()));
    const auto kinks = bandwidth::detect_kinks(Y, ratio);
    std::vector<double> kink_deg;
    for (auto k : kinks) {
      kink_deg.push_back(Y[k]);
      kink_rows.push_back({p_list[c], Y[k], ratio[k]});
    }
    const std::string tag = "P_max=" + std::to_string(static_cast<int>(p_list[c]));
    add(r, "top_amplitude_ratio " + tag, CheckKind::Acceptance, 3,
        ratio.back() >= tol::kRatioTopLo && ratio.back() <= tol::kRatioTopHi, ratio.back(),
        tol::kRatioTopHi);
    add(r, "kinks " + tag, CheckKind::Acceptance, 3,
        static_cast<int>(kinks.size()) == tol::kKinksPerCurve, static_cast<double>(kinks.size()),
        tol::kKinksPerCurve);
    if (p_list[c] == 600.0) {
      add(r, "smallest_amplitude_ratio " + tag, CheckKind::Acceptance, 3,
          ratio.front() >= tol::kRatioLowLo && ratio.front() <= tol::kRatioLowHi,
          ratio.front(), tol::kRatioLowLo);
    }
    per.push_back({{"P_max", p_list[c]},
                   {"ratio_smallest_Y", ratio.front()},
                   {"ratio_largest_Y", ratio.back()},
                   {"kinks_deg", kink_deg}});
  }
  add(r, "ratio_ge_1", CheckKind::Invariant, 3, ratio_min >= 1.0 - tol::kRatioFloor, ratio_min,
      1.0 - tol::kRatioFloor);
  {
    auto f = open_out(out / "bandwidth_ratio.csv");
    bandwidth::write_ratio_csv(f, all);
  }
  sim::write_table_csv((out / "bandwidth_kinks.csv").string(), {"P_max", "Y_deg", "ratio"},
                       kink_rows);
  r.measured = {{"curves", per}, {"ratio_min", ratio_min}};
  return r;
}

// ---------------------------------------------------------------- pbc-2link

model::TwoLinkParams robot_params(const json& cfg) {
  model::TwoLinkParams p;
  if (cfg.contains("robot")) cfg.at("robot").get_to(p);
  require(p.m1 > 0.0 && p.m2 > 0.0 && p.I1 > 0.0 && p.I2 > 0.0 && p.d1 >= 0.0 && p.d2 >= 0.0,
          "robot: masses and inertias > 0, damping >= 0 required");
  return p;
}

Report run_pbc(const json& cfg, const fs::path& out, const Flags&) {
  nlcontrol::Example3Config c;
  c.robot = robot_params(cfg);
  c.wn = opt(cfg, "wn", c.wn);
  c.zeta = opt(cfg, "zeta", c.zeta);
  c.p_bar = opt(cfg, "P_bar", c.p_bar);
  c.q0 = opt_vec(cfg, "q0", c.q0);
  c.T = opt(cfg, "T", c.T);
  c.dt = opt(cfg, "dt", c.dt);
  const int stride = opt(cfg, "log_stride", 10);
  require(c.p_bar >= 0.0, "pbc-2link: P_bar must be >= 0");
  require(c.wn > 0.0 && c.zeta > 0.0 && c.T > 0.0 && c.dt > 0.0 && stride >= 1,
          "pbc-2link: wn, zeta, T, dt > 0 and log_stride >= 1 required");
  require(c.q0.size() == 0 || c.q0.size() == 2, "pbc-2link: q0 must have 2 entries");

  const sim::TrajectoryLog log = nlcontrol::run_example3(c);
  log.check_integrity();
  decimate(log, stride).write_csv((out / "pbc_trajectory.csv").string());

  const auto& V = log.scalars.at("V");
  double rise = -kInf;
  for (size_t k = 1; k < V.size(); ++k) rise = std::max(rise, V[k] - V[k - 1]);
  const auto& xf = log.states.back();
  const double final_norm = std::hypot(xf.q.norm(), xf.qdot.norm());
  const double pk = max_joint_power(log);

  Report r;
  add(r, "joint_power_le_P_bar", CheckKind::Invariant, 4, pk <= c.p_bar + tol::kPowerSlack, pk,
      c.p_bar + tol::kPowerSlack);
  add(r, "V_nonincreasing", CheckKind::Acceptance, 4, rise <= tol::kLyapunovStep, rise,
      tol::kLyapunovStep);
  add(r, "final_state_norm", CheckKind::Acceptance, 4, final_norm < tol::kFinalNorm, final_norm,
      tol::kFinalNorm);
  r.measured = {{"max_joint_power", pk},
                {"max_V_increase", rise},
                {"final_norm", final_norm},
                {"samples", log.size()}};
  return r;
}

// ---------------------------------------------------------------- mpc-fin

Report run_mpc(const json& cfg, const fs::path& out, const Flags& flags) {
  mpc::FinConfig c = cfg.get<mpc::FinConfig>();
  const std::string mode = flags.mode.empty() ? "single" : flags.mode;
  require(mode == "single" || mode == "receding", "mpc-fin: mode must be single or receding");
  c.receding = c.receding || mode == "receding";

  const mpc::FinResult res = mpc::run_fin_example(c);
  const mpc::Horizon h = make_fin_horizon(c);
  const mpc::HorizonMatrices hm = mpc::assemble_cost(h);
  const model::PowerBudget budget = mpc::fin_budget(c);

  Report r;
  r.mode = mode;
  std::vector<std::vector<double>> summary;
  json runs = json::array();
  double worst_power = -kInf;
  for (const auto& run : res.runs) {
    const std::string tag = mpc::to_string(run.variant);
    run.log.write_csv((out / ("fin_" + tag + ".csv")).string());
    const double pk = max_of(run.log.power_total);
    worst_power = std::max(worst_power, pk);
    summary.push_back({static_cast<double>(static_cast<int>(run.variant)), run.cost,
                       static_cast<double>(run.outer_iterations), run.max_violation, pk});
    runs.push_back({{"variant", tag},
                    {"cost", run.cost},
                    {"status", optim::to_string(run.status)},
                    {"outer_iterations", run.outer_iterations},
                    {"max_violation", run.max_violation},
                    {"peak_power", pk}});
    add(r, "solver_output_feasible " + tag, CheckKind::Invariant, 5,
        run.max_violation <= tol::kKkt, run.max_violation, tol::kKkt);
  }
  sim::write_table_csv((out / "fin_summary.csv").string(),
                       {"variant", "cost", "outer_iterations", "max_violation", "peak_power"},
                       summary);
  add(r, "aggregate_power_le_P_max", CheckKind::Invariant, 5,
      worst_power <= c.P_max + tol::kPowerSlack, worst_power, c.P_max + tol::kPowerSlack);

  const auto& c1 = res.get(mpc::Variant::C1Dynamic);
  const auto& c2 = res.get(mpc::Variant::C2StaticExact);
  const auto& c3 = res.get(mpc::Variant::C3StaticApprox);
  if (!c.receding) {
    // (a) matrix cost against a direct rollout.
    double worst_rel = 0.0;
    for (const auto& run : res.runs) {
      const double direct = mpc::rollout_cost(h, run.U);
      worst_rel = std::max(worst_rel, std::abs(direct - run.cost) / std::max(1.0, std::abs(direct)));
    }
    add(r, "(a) rollout_vs_matrix_cost", CheckKind::Acceptance, 5, worst_rel <= tol::kRolloutRel,
        worst_rel, tol::kRolloutRel);

    // (b) quadratic power form against powers from the rollout, and
    // (c) indefiniteness of E_n.
    const Eigen::VectorXd rbar = budget.normalized_resistance;
    const Eigen::VectorXd X = mpc::rollout(h.F, h.H, h.g, h.x0, c1.U);
    const int nq = h.nq(), nu = h.nu();
    double form_err = 0.0, eig_max = -kInf;
    for (int n : {0, 1, 2, h.N / 2, h.N - 1}) {
      if (n >= h.N) continue;
      const auto [E, chi] = mpc::power_constraint_terms(h, hm, rbar, n);
      const double form = c1.U.dot(E * c1.U) + chi.dot(c1.U);
      const Eigen::VectorXd x = n == 0 ? h.x0 : Eigen::VectorXd(X.segment((n - 1) * h.nx(), h.nx()));
      const Eigen::VectorXd qa = h.S.transpose() * x.tail(nq);
      const Eigen::VectorXd u = c1.U.segment(n * nu, nu);
      const double direct = qa.dot(u) + u.dot(rbar.cwiseProduct(u));
      form_err = std::max(form_err, std::abs(form - direct) / (1.0 + std::abs(direct)));
      if (n >= 1) eig_max = std::max(eig_max, optim::min_eigenvalue(E));
    }
    add(r, "(b) power_form_vs_rollout", CheckKind::Acceptance, 5, form_err <= tol::kPowerForm,
        form_err, tol::kPowerForm);
    add(r, "(c) E_n_indefinite", CheckKind::Acceptance, 5, eig_max < 0.0, eig_max, 0.0,
        "largest min-eigenvalue over sampled n >= 1");
    r.measured["rollout_rel_error"] = worst_rel;
    r.measured["power_form_error"] = form_err;
    r.measured["E_n_min_eigenvalue_max"] = eig_max;
  }
  // (d) cost ordering, (e) C1 power peak early, (f) C3 power stays low.
  const double slack = tol::kCostOrder * std::max(1.0, std::abs(c3.cost));
  add(r, "(d) J_C1 <= J_C2 <= J_C3", CheckKind::Acceptance, 5,
      c1.cost <= c2.cost + slack && c2.cost <= c3.cost + slack, c1.cost - c3.cost, slack);
  double first_hit = kInf;
  for (size_t k = 0; k < c1.log.size(); ++k) {
    if (c1.log.power_total[k] >= tol::kC1PowerFrac * c.P_max) {
      first_hit = c1.log.times[k];
      break;
    }
  }
  add(r, "(e) C1_power_reaches_0.99_P_max", CheckKind::Acceptance, 5,
      first_hit <= tol::kC1PowerBy, json_num(first_hit), tol::kC1PowerBy);
  const double c3_peak = max_of(c3.log.power_total);
  add(r, "(f) C3_power_le_0.6_P_max", CheckKind::Acceptance, 5,
      c3_peak <= tol::kC3PowerFrac * c.P_max, c3_peak, tol::kC3PowerFrac * c.P_max);
  r.measured["runs"] = runs;
  r.measured["C1_first_0.99_time"] = json_num(first_hit);
  return r;
}

// ---------------------------------------------------------------- clfqp-2link

// Largest V(t) / (V(t0) e^{-eps (t - t0)}) - 1 over stretches where the
// relaxation is unused (p_s <= ps_tol).
double decay_excess(const sim::TrajectoryLog& log, double eps, double ps_tol) {
  const auto& V = log.scalars.at("V");
  const auto& ps = log.scalars.at("p_s");
  double worst = -kInf;
  size_t start = 0;
  bool in = false;
  // The sample at k holds p_s of the solve that drives [t_k, t_{k+1}].
  for (size_t k = 0; k + 1 < V.size(); ++k) {
    if (ps[k] <= ps_tol) {
      if (!in) {
        start = k;
        in = true;
      }
      if (V[start] <= 0.0) continue;
      const double bound = V[start] * std::exp(-eps * (log.times[k + 1] - log.times[start]));
      worst = std::max(worst, V[k + 1] / bound - 1.0);
    } else {
      in = false;
    }
  }
  return worst;
}

Report run_clfqp(const json& cfg, const fs::path& out, const Flags& flags) {
  clfqp::Example5Config c;
  c.robot = robot_params(cfg);
  c.wn = opt(cfg, "wn", c.wn);
  c.zeta = opt(cfg, "zeta", c.zeta);
  c.q0 = opt_vec(cfg, "q0", c.q0);
  c.q_star = opt_vec(cfg, "q_star", c.q_star);
  c.u_bar = opt_vec(cfg, "u_bar", c.u_bar);
  c.rbar = opt_vec(cfg, "R_bar", c.rbar);
  c.p_max = opt(cfg, "P_max", c.p_max);
  c.c_s = opt(cfg, "c_s", c.c_s);
  c.T = opt(cfg, "T", c.T);
  c.dt = opt(cfg, "dt", c.dt);
  const double ps_tol = opt(cfg, "p_s_zero", 1e-6);
  require(c.p_max >= 0.0, "clfqp-2link: P_max must be >= 0");
  require(c.c_s > 0.0 && c.T > 0.0 && c.dt > 0.0 && c.wn > 0.0 && c.zeta > 0.0 && c.zeta < 1.0,
          "clfqp-2link: c_s, T, dt, wn > 0 and 0 < zeta < 1 required");
  for (const Eigen::VectorXd* v : {&c.q0, &c.q_star, &c.u_bar, &c.rbar}) {
    require(v->size() == 0 || v->size() == 2, "clfqp-2link: vectors must have 2 entries");
  }
  if (!flags.mode.empty() && flags.mode != "all") {
    throw std::invalid_argument("clfqp-2link: only mode 'all' is supported");
  }

  const clfqp::Example5Result res = clfqp::run_example5(c);
  Report r;
  add(r, "lyapunov_equation_residual", CheckKind::Acceptance, 6,
      res.clf.residual <= tol::kLyapunovEq, res.clf.residual, tol::kLyapunovEq);
  json runs = json::array();
  std::vector<std::vector<double>> summary;
  double kkt = 0.0, excess = -kInf;
  for (const auto& run : res.runs) {
    const std::string tag = clfqp::to_string(run.variant);
    run.log.write_csv((out / ("clfqp_" + tag + ".csv")).string());
    const double ts = run.settling_joint1.value_or(kInf);
    summary.push_back({static_cast<double>(static_cast<int>(run.variant)), json_num(ts),
                       run.max_dev_joint2, run.max_kkt, max_of(run.log.power_total)});
    json jr = {{"variant", tag},
               {"settling_joint1", json_num(ts)},
               {"max_dev_joint2", run.max_dev_joint2},
               {"max_kkt", run.max_kkt},
               {"peak_power", max_of(run.log.power_total)},
               {"all_optimal", run.all_optimal}};
    if (run.variant != clfqp::Variant::C3FeedbackLin) {
      kkt = std::max(kkt, run.max_kkt);
      excess = std::max(excess, run.max_power_excess);
      const double dec = decay_excess(run.log, res.clf.epsilon, ps_tol);
      jr["decay_excess"] = json_num(dec);
      add(r, "decay_rate_when_p_s_zero " + tag, CheckKind::Acceptance, 6,
          dec <= tol::kDecayBand, json_num(dec), tol::kDecayBand);
    }
    runs.push_back(jr);
  }
  add(r, "qp_kkt_residual", CheckKind::Acceptance, 6, kkt <= tol::kKkt, kkt, tol::kKkt);
  add(r, "qp_power_exact", CheckKind::Invariant, 6, excess <= tol::kQpPower, excess,
      tol::kQpPower);
  const double ts1 = res.runs[0].settling_joint1.value_or(kInf);
  double others = kInf;
  for (size_t i = 1; i < res.runs.size(); ++i) {
    others = std::min(others, res.runs[i].settling_joint1.value_or(kInf));
  }
  add(r, "C1_fastest_joint1_settling", CheckKind::Acceptance, 6, ts1 <= others, json_num(ts1),
      json_num(others));
  sim::write_table_csv((out / "clfqp_summary.csv").string(),
                       {"variant", "settling_joint1", "max_dev_joint2", "max_kkt", "peak_power"},
                       summary);
  r.measured = {{"epsilon", res.clf.epsilon},
                {"lyapunov_residual", res.clf.residual},
                {"max_kkt", kkt},
                {"max_power_excess", excess},
                {"runs", runs}};
  return r;
}

// ---------------------------------------------------------------- servo-1dof

Report run_servo(const json& cfg, const fs::path& out, const Flags& flags) {
  servo::ServoConfig c;
  if (cfg.contains("actuator")) {
    const json& a = cfg.at("actuator");
    c.actuator.inertia = opt(a, "inertia", c.actuator.inertia);
    c.actuator.damping = opt(a, "damping", c.actuator.damping);
    c.actuator.p_max = opt(a, "P_max", c.actuator.p_max);
    c.actuator.qdot_max = opt(a, "qdot_max", c.actuator.qdot_max);
    c.actuator.u_peak = opt(a, "u_peak", c.actuator.u_peak);
  }
  c.wn = opt(cfg, "wn", c.wn);
  c.zeta = opt(cfg, "zeta", c.zeta);
  c.pole_ratio = opt(cfg, "pole_ratio", c.pole_ratio);
  c.control_rate = opt(cfg, "control_rate", c.control_rate);
  c.substeps = opt(cfg, "substeps", c.substeps);
  c.settle_pct = opt(cfg, "settle_pct", c.settle_pct);
  const auto amps = opt(cfg, "amplitudes_deg", std::vector<double>{1.0, 2.0, 3.0});
  const double step_T = opt(cfg, "step_T", 1.0);
  servo::ChirpConfig ch;
  if (cfg.contains("chirp")) {
    const json& j = cfg.at("chirp");
    ch.amplitude = opt(j, "amplitude_deg", ch.amplitude * 180.0 / kPi) * kPi / 180.0;
    ch.f0 = opt(j, "f0", ch.f0);
    ch.f1 = opt(j, "f1", ch.f1);
    ch.T = opt(j, "T", ch.T);
    ch.nperseg = opt(j, "nperseg", ch.nperseg);
  }
  const auto& a = c.actuator;
  require(a.p_max >= 0.0, "servo-1dof: P_max must be >= 0");
  require(a.inertia > 0.0 && a.damping >= 0.0 && a.qdot_max > 0.0 && a.u_peak > 0.0,
          "servo-1dof: inertia, qdot_max, u_peak > 0 and damping >= 0 required");
  require(c.wn > 0.0 && c.zeta > 0.0 && c.pole_ratio > 0.0 && c.control_rate > 0.0 &&
              c.substeps >= 1 && c.settle_pct > 0.0 && c.settle_pct < 100.0,
          "servo-1dof: bad controller settings");
  require(!amps.empty() && step_T > 0.0, "servo-1dof: amplitudes and step_T required");
  for (double x : amps) require(x > 0.0, "servo-1dof: step amplitudes must be > 0");
  require(ch.f0 > 0.0 && ch.f1 > ch.f0 && ch.T > 0.0 && ch.nperseg >= 4,
          "servo-1dof: bad chirp settings");
  const std::string mode = flags.mode.empty() ? "all" : flags.mode;
  require(mode == "all" || mode == "steps" || mode == "chirp",
          "servo-1dof: mode must be all, steps or chirp");

  Report r;
  r.mode = mode;
  double peak = -kInf;
  json measured;
  if (mode != "chirp") {
    std::vector<sim::TrajectoryLog> logs;
    const auto rows = servo::step_table(c, amps, step_T, &logs);
    std::vector<std::vector<double>> table;
    for (size_t i = 0; i < rows.size(); ++i) {
      const auto& row = rows[i];
      peak = std::max(peak, row.peak_power);
      table.push_back({static_cast<double>(static_cast<int>(row.model)), row.amplitude_deg,
                       row.settling_time, row.overshoot_pct, row.peak_power});
      std::ostringstream name;
      name << "servo_step_" << servo::to_string(row.model) << "_" << row.amplitude_deg
           << "deg.csv";
      logs[i].write_csv((out / name.str()).string());
    }
    sim::write_table_csv((out / "servo_steps.csv").string(),
                         {"model", "amplitude_deg", "settling_time", "overshoot_pct",
                          "peak_power"},
                         table);
    // Rows come as all exact amplitudes, then all approx amplitudes.
    const size_t na = amps.size();
    bool order = true, widening = true;
    double prev_gap = -kInf;
    json gaps = json::array();
    for (size_t i = 0; i < na; ++i) {
      const double te = rows[i].settling_time, ta = rows[na + i].settling_time;
      const double gap = std::isnan(ta) ? kInf : ta - te;
      order = order && !std::isnan(te) && (std::isnan(ta) || te <= ta);
      widening = widening && gap > prev_gap;
      prev_gap = gap;
      gaps.push_back(json_num(gap));
    }
    add(r, "exact_settles_no_later", CheckKind::Acceptance, 7, order, order ? 1.0 : 0.0, 1.0);
    add(r, "settling_gap_grows_with_amplitude", CheckKind::Acceptance, 7, widening,
        widening ? 1.0 : 0.0, 1.0);
    const double po_e = rows[na - 1].overshoot_pct, po_a = rows[2 * na - 1].overshoot_pct;
    measured["settling_gaps"] = gaps;
    measured["largest_step_overshoot"] = {{"exact", po_e}, {"approx", po_a}};
    json steps = json::array();
    for (const auto& row : rows) {
      steps.push_back({{"model", servo::to_string(row.model)},
                       {"amplitude_deg", row.amplitude_deg},
                       {"settling_time", json_num(row.settling_time)},
                       {"overshoot_pct", row.overshoot_pct},
                       {"peak_power", row.peak_power}});
    }
    measured["steps"] = steps;
  }
  if (mode != "steps") {
    const servo::LimitModel models[] = {servo::LimitModel::Exact, servo::LimitModel::Approx};
    servo::ChirpResult res[2];
    for_each_index(2, flags.parallel, [&](int i) { res[i] = servo::run_chirp(c, models[i], ch); });
    std::vector<std::vector<double>> frf;
    double worst = kInf, worst_f = 0.0;
    for (size_t k = 0; k < res[0].frf.freq.size(); ++k) {
      const double f = res[0].frf.freq[k];
      frf.push_back({f, res[0].frf.magnitude[k], res[0].frf.phase[k], res[1].frf.magnitude[k],
                     res[1].frf.phase[k]});
      if (f > tol::kServoFrfAbove) {
        const double d = res[0].frf.magnitude[k] - res[1].frf.magnitude[k];
        if (d < worst) {
          worst = d;
          worst_f = f;
        }
      }
    }
    sim::write_table_csv((out / "servo_frf.csv").string(),
                         {"freq_hz", "mag_exact", "phase_exact", "mag_approx", "phase_approx"},
                         frf);
    for (int i = 0; i < 2; ++i) {
      peak = std::max(peak, res[i].peak_power);
      res[i].log.write_csv(
          (out / ("servo_chirp_" + servo::to_string(models[i]) + ".csv")).string());
    }
    std::ostringstream note;
    note << "smallest exact-minus-approx magnitude at " << worst_f << " Hz";
    add(r, "chirp_magnitude_exact_ge_approx_above_10Hz", CheckKind::Acceptance, 7, worst >= 0.0,
        json_num(worst), 0.0, note.str());
    measured["frf_min_margin"] = json_num(worst);
    measured["frf_min_margin_freq"] = worst_f;
  }
  add(r, "power_le_P_max", CheckKind::Invariant, 7, peak <= a.p_max + tol::kServoPower, peak,
      a.p_max + tol::kServoPower);
  measured["peak_power"] = peak;
  r.measured = measured;
  return r;
}

using Runner = Report (*)(const json&, const fs::path&, const Flags&);

Runner runner_for(const std::string& name) {
  if (name == "descfun") return run_descfun;
  if (name == "bandwidth") return run_bandwidth;
  if (name == "pbc-2link") return run_pbc;
  if (name == "mpc-fin") return run_mpc;
  if (name == "clfqp-2link") return run_clfqp;
  if (name == "servo-1dof") return run_servo;
  throw std::invalid_argument("unknown scenario: " + name);
}

void write_report(const Report& r, const fs::path& p) {
  auto f = open_out(p);
  f << r.to_json().dump(2) << '\n';
}

}  // namespace

bool Report::invariants_ok() const {
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) {
    return c.kind != CheckKind::Invariant || c.pass;
  });
}

bool Report::all_ok() const {
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
}

bool Report::criterion_ok(int c) const {
  bool any = false;
  for (const auto& k : checks) {
    if (k.criterion != c) continue;
    any = true;
    if (!k.pass) return false;
  }
  return any;
}

json Report::to_json() const {
  json cs = json::array();
  for (const auto& c : checks) {
    cs.push_back({{"name", c.name},
                  {"kind", c.kind == CheckKind::Invariant ? "invariant" : "acceptance"},
                  {"criterion", c.criterion},
                  {"pass", c.pass},
                  {"value", json_num(c.value)},
                  {"limit", json_num(c.limit)},
                  {"note", c.note}});
  }
  return {{"scenario", scenario}, {"mode", mode},        {"pass", all_ok()},
          {"checks", cs},         {"measured", measured}};
}

const std::vector<std::string>& names() {
  static const std::vector<std::string> n = {"descfun",     "bandwidth",   "pbc-2link",
                                             "mpc-fin",     "clfqp-2link", "servo-1dof"};
  return n;
}

bool is_scenario(const std::string& name) {
  const auto& n = names();
  return std::find(n.begin(), n.end(), name) != n.end();
}

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream f(path);
  if (!f) throw ConfigError(path + ": cannot open");
  std::stringstream ss;
  ss << f.rdbuf();
  const std::string text = ss.str();
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) return json::object();
  try {
    json j = json::parse(text);
    if (!j.is_object()) throw ConfigError(path + ": top level must be a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    // Byte offset to line:column.
    const size_t at = std::min<size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    size_t line = 1, col = 1;
    for (size_t i = 0; i < at; ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ConfigError(path + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " +
                      e.what());
  }
}

Report run(const std::string& name, const json& config, const fs::path& out_dir,
           const Flags& flags) {
  const Runner f = runner_for(name);
  fs::create_directories(out_dir);
  Report r;
  try {
    r = f(config, out_dir, flags);
  } catch (const json::exception& e) {
    throw std::invalid_argument(name + ": " + e.what());
  }
  r.scenario = name;
  if (r.mode.empty()) r.mode = flags.mode.empty() ? "default" : flags.mode;
  write_report(r, out_dir / (name + "_report.json"));
  return r;
}

Report verify(const std::string& name, const json& config, const fs::path& out_dir,
              const Flags& flags) {
  Report r;
  try {
    r = run(name, config, out_dir, flags);
  } catch (const std::invalid_argument& e) {
    r = Report{};
    r.scenario = name;
    r.mode = flags.mode.empty() ? "default" : flags.mode;
    add(r, "config", CheckKind::Invariant, 0, false, 0.0, 0.0, e.what());
    fs::create_directories(out_dir);
  }
  write_report(r, out_dir / (name + "_verify.json"));
  return r;
}

}  // namespace powersat::scenarios
