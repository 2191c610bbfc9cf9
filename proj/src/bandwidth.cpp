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

#include "powersat/bandwidth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include "powersat/grid.hpp"

namespace powersat::bandwidth {
namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr int kGrid = 2048;

struct PhaseTable {
  std::array<double, kGrid> s, c;
  PhaseTable() {
    for (int i = 0; i < kGrid; ++i) {
      const double th = 2.0 * kPi * i / kGrid;
      s[i] = std::sin(th);
      c[i] = std::cos(th);
    }
  }
};

const PhaseTable& table() {
  static const PhaseTable t;
  return t;
}

double sgn(double x) { return (x > 0.0) - (x < 0.0); }

// Signals at phase th = wc t.
struct Signals {
  double ybar, wc, stiff, visc, tau;
  double qdot(double s) const { return -ybar * wc * s; }
  double u(double s, double c) const { return ybar * (stiff * c - visc * s) - tau * sgn(s); }
  double abs_qdot(double th) const { return std::abs(qdot(std::sin(th))); }
  double abs_u(double th) const { return std::abs(u(std::sin(th), std::cos(th))); }
  double power(double th) const {
    const double s = std::sin(th);
    return qdot(s) * u(s, std::cos(th));
  }
};

template <class F>
double golden_max(F f, double a, double b, double f_grid) {
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = b - g * (b - a), x2 = a + g * (b - a);
  double f1 = f(x1), f2 = f(x2);
  for (int i = 0; i < 60 && b - a > 1e-15; ++i) {
    if (f1 < f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + g * (b - a);
      f2 = f(x2);
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - g * (b - a);
      f1 = f(x1);
    }
  }
  return std::max({f_grid, f1, f2});
}

template <class F>
double refine(F f, int i_best, double f_best) {
  const double h = 2.0 * kPi / kGrid;
  return golden_max(f, (i_best - 1) * h, (i_best + 1) * h, f_best);
}

}  // namespace

void Problem::validate() const {
  if (!(m > 0.0) || !(Y > 0.0) || !(qdot_max > 0.0) || !(p_max > 0.0) || d < 0.0 ||
      k < 0.0 || tau_c < 0.0) {
    throw std::invalid_argument("bandwidth::Problem: m, Y, qdot_max, p_max > 0; d, k, tau_c >= 0");
  }
}

Maxima period_maxima(const Problem& p, double wc) {
  if (!(wc > 0.0)) throw std::invalid_argument("period_maxima: wc must be > 0");
  const Signals sig{p.Y / std::sqrt(2.0), wc, p.k - p.m * wc * wc, p.d * wc, p.tau_c};
  const auto& t = table();
  int iq = 0, iu = 0, ip = 0;
  double mq = -1.0, mu = -1.0, mp = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < kGrid; ++i) {
    const double q = std::abs(sig.qdot(t.s[i]));
    const double u = sig.u(t.s[i], t.c[i]);
    const double pw = sig.qdot(t.s[i]) * u;
    if (q > mq) { mq = q; iq = i; }
    if (std::abs(u) > mu) { mu = std::abs(u); iu = i; }
    if (pw > mp) { mp = pw; ip = i; }
  }
  Maxima out;
  out.qdot = refine([&](double th) { return sig.abs_qdot(th); }, iq, mq);
  out.u = refine([&](double th) { return sig.abs_u(th); }, iu, mu);
  out.power = refine([&](double th) { return sig.power(th); }, ip, mp);
  return out;
}

bool feasible(const Problem& p, double wc) {
  const Maxima mx = period_maxima(p, wc);
  if (mx.qdot > p.qdot_max) return false;
  if (p.mode == Mode::ExactPower) return mx.power <= p.p_max;
  return mx.u <= p.torque_limit();
}

double max_bandwidth(const Problem& p, const SearchOptions& opts) {
  p.validate();
  const std::vector<double> grid = logspace(opts.lo, opts.hi, opts.grid);
  if (!feasible(p, grid.front())) throw std::runtime_error("max_bandwidth: infeasible on the whole grid");
  std::size_t last = 0;
  while (last + 1 < grid.size() && feasible(p, grid[last + 1])) ++last;
  if (last + 1 == grid.size()) return grid.back();
  double a = grid[last], b = grid[last + 1];
  while (b - a > opts.rel_tol * b) {
    const double mid = 0.5 * (a + b);
    if (mid <= a || mid >= b) break;
    (feasible(p, mid) ? a : b) = mid;
  }
  return a;
}

bool feasibility_is_prefix(const Problem& p, const SearchOptions& opts) {
  bool seen_infeasible = false;
  for (double w : logspace(opts.lo, opts.hi, opts.grid)) {
    const bool f = feasible(p, w);
    if (f && seen_infeasible) return false;
    seen_infeasible = seen_infeasible || !f;
  }
  return true;
}

std::vector<RatioRow> ratio_sweep(const Problem& base,
                                  const std::vector<double>& Y_deg,
                                  const std::vector<double>& p_max_list,
                                  const SearchOptions& opts) {
  if (Y_deg.empty() || p_max_list.empty()) throw std::invalid_argument("ratio_sweep: empty grid");
  std::vector<RatioRow> rows;
  for (double pm : p_max_list) {
    for (double yd : Y_deg) {
      Problem p = base;
      p.p_max = pm;
      p.Y = yd * kPi / 180.0;
      p.u_max = -1.0;
      RatioRow r;
      r.Y_deg = yd;
      r.p_max = pm;
      p.mode = Mode::ExactPower;
      r.wc_exact = max_bandwidth(p, opts);
      p.mode = Mode::ApproxTorque;
      r.wc_approx = max_bandwidth(p, opts);
      r.ratio = r.wc_exact / r.wc_approx;
      rows.push_back(r);
    }
  }
  return rows;
}

std::vector<std::size_t> detect_kinks(const std::vector<double>& Y,
                                      const std::vector<double>& ratio,
                                      double tol) {
  const std::size_t n = Y.size();
  if (ratio.size() != n) throw std::invalid_argument("detect_kinks: size mismatch");
  std::vector<std::size_t> out;
  if (n < 3) return out;
  const double h = (std::log(Y.back()) - std::log(Y.front())) / static_cast<double>(n - 1);
  std::vector<double> d2(n, 0.0);
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double s1 = (std::log(ratio[i]) - std::log(ratio[i - 1])) /
                      (std::log(Y[i]) - std::log(Y[i - 1]));
    const double s2 = (std::log(ratio[i + 1]) - std::log(ratio[i])) /
                      (std::log(Y[i + 1]) - std::log(Y[i]));
    d2[i] = (s2 - s1) * h;
  }
  const double thresh = tol * std::abs(h);
  std::size_t prev_hit = 0;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (std::abs(d2[i]) <= thresh) continue;
    if (!out.empty() && prev_hit + 1 == i) {
      if (std::abs(d2[i]) > std::abs(d2[out.back()])) out.back() = i;
    } else {
      out.push_back(i);
    }
    prev_hit = i;
  }
  return out;
}

void write_ratio_csv(std::ostream& os, const std::vector<RatioRow>& rows) {
  os << "Y_deg,P_max,wc_exact,wc_approx,ratio\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g\n", r.Y_deg, r.p_max,
                  r.wc_exact, r.wc_approx, r.ratio);
    os << buf;
  }
}

}  // namespace powersat::bandwidth
