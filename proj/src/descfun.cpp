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

#include "powersat/descfun.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <Eigen/Dense>

namespace powersat::descfun {
namespace {

constexpr double kPi = 3.14159265358979323846;

double wrap_pi(double x) {
  double r = std::fmod(x, kPi);
  if (r < 0.0) r += kPi;
  return r;
}

double window_power(double A, double X, double phi, double psi) {
  return 0.5 * A * A * X * (std::cos(phi) - std::cos(2.0 * psi + phi));
}

using Vec2 = Eigen::Vector2d;

// One application of the describing-function map in Cartesian form.
Vec2 df_map(double A, double xg, double pg, double p_max, const Vec2& n) {
  const double xn = n.norm();
  if (xn <= 0.0) throw std::runtime_error("describing_function: zero gain iterate");
  const Coeffs c = fourier_coeffs(A, xg * xn, pg + std::atan2(n(1), n(0)), p_max);
  return {c.c, c.s};
}

}  // namespace

PlantFR first_order_plant(double m, double d) {
  if (m <= 0.0 || d < 0.0) throw std::invalid_argument("first_order_plant: m > 0, d >= 0");
  PlantFR p;
  p.magnitude = [m, d](double w) { return 1.0 / std::hypot(d, m * w); };
  p.phase = [m, d](double w) { return -std::atan2(m * w, d); };
  return p;
}

std::optional<Window> active_window(double A, double X, double phi,
                                    double p_max) {
  if (A <= 0.0 || X <= 0.0) throw std::invalid_argument("active_window: A, X must be > 0");
  double kappa = std::cos(phi) - 2.0 * p_max / (A * A * X);
  if (kappa <= -1.0) return std::nullopt;
  if (kappa > 1.0 + 1e-12) throw std::domain_error("active_window: arccos argument above 1");
  kappa = std::min(kappa, 1.0);
  const double a = std::acos(kappa);
  // Both branches of the arccos reduced mod pi; keep the ordering whose
  // interior exceeds p_max.
  double x1 = wrap_pi(0.5 * (a - phi));
  double x2 = wrap_pi(0.5 * (-a - phi));
  Window w{std::min(x1, x2), std::max(x1, x2)};
  if (!(w.hi > w.lo)) return std::nullopt;
  if (window_power(A, X, phi, 0.5 * (w.lo + w.hi)) <= p_max) {
    throw std::domain_error("active_window: window wraps around psi = 0");
  }
  return w;
}

Coeffs fourier_coeffs(double A, double X, double phi, double p_max) {
  const auto w = active_window(A, X, phi, p_max);
  if (!w) return {};
  const double sl = std::sin(w->lo + phi);
  const double su = std::sin(w->hi + phi);
  if (sl <= 0.0 || su <= 0.0) {
    throw std::domain_error("fourier_coeffs: velocity not positive on the window");
  }
  const double dpsi = w->hi - w->lo;
  const double lpsi = std::log(su / sl);
  const double yn = dpsi * std::cos(phi) - lpsi * std::sin(phi);
  const double zn = dpsi * std::sin(phi) + lpsi * std::cos(phi);
  const double k = 2.0 * p_max / (kPi * A * A * X);
  Coeffs c;
  c.c = k * yn + (2.0 * (kPi - dpsi) + std::sin(2.0 * w->hi) - std::sin(2.0 * w->lo)) /
                     (2.0 * kPi);
  c.s = k * zn + (std::cos(2.0 * w->hi) - std::cos(2.0 * w->lo)) / (2.0 * kPi);
  return c;
}

DFPoint describing_function(double A, double omega, const PlantFR& plant,
                            double p_max, const DFOptions& opts) {
  if (A <= 0.0 || omega <= 0.0) throw std::invalid_argument("describing_function: A, omega must be > 0");
  const double xg = plant.magnitude(omega);
  const double pg = plant.phase(omega);
  if (!(xg > 0.0)) throw std::invalid_argument("describing_function: plant magnitude must be > 0");
  DFPoint pt;
  pt.A = A;
  pt.omega = omega;
  Vec2 n(1.0, 0.0);
  double best = std::numeric_limits<double>::infinity();
  int since_best = 0;
  bool newton = false;
  double res = 0.0;
  for (int k = 0; k < opts.max_iter; ++k) {
    const Vec2 f = df_map(A, xg, pg, p_max, n) - n;
    res = f.norm();
    pt.residual_history.push_back(res);
    pt.iterations = k + 1;
    if (res < opts.tol) break;
    if (res < best * (1.0 - 1e-3)) {
      best = res;
      since_best = 0;
    } else if (++since_best >= opts.stall_window) {
      newton = true;
    }
    if (!newton) {
      n += opts.damping * f;
      continue;
    }
    pt.used_newton = true;
    Eigen::Matrix2d jac;
    for (int j = 0; j < 2; ++j) {
      const double h = 1e-7 * std::max(1.0, std::abs(n(j)));
      Vec2 np = n;
      np(j) += h;
      jac.col(j) = (df_map(A, xg, pg, p_max, np) - np - f) / h;
    }
    const Vec2 step = jac.fullPivLu().solve(-f);
    double t = 1.0;
    for (int ls = 0; ls < 30; ++ls, t *= 0.5) {
      const Vec2 trial = n + t * step;
      if (trial.norm() > 0.0 && (df_map(A, xg, pg, p_max, trial) - trial).norm() < res) break;
    }
    n += t * step;
  }
  pt.residual = res;
  if (!(res < opts.tol)) {
    std::ostringstream msg;
    msg << "describing_function: no convergence at A=" << A << " omega=" << omega
        << ", residual " << res;
    throw std::runtime_error(msg.str());
  }
  pt.XN = n.norm();
  pt.phiN = std::atan2(n(1), n(0));
  pt.window = active_window(A, xg * pt.XN, pg + pt.phiN, p_max);
  return pt;
}

double df_sat(double A, double u_max) {
  if (A <= 0.0 || u_max <= 0.0) throw std::invalid_argument("df_sat: A, u_max must be > 0");
  if (A <= u_max) return 1.0;
  const double r = u_max / A;
  return (2.0 / kPi) * (std::asin(r) + r * std::sqrt(1.0 - r * r));
}

std::complex<double> pd_open_loop(const PDGains& g, double m, double d,
                                  double omega) {
  const std::complex<double> s(0.0, omega);
  return (g.kp + g.kd * s) / (s * (m * s + d));
}

NyquistTables nyquist_sweep(const PDGains& gains, double m, double d,
                            double p_max, double u_max,
                            const std::vector<double>& A_list,
                            const std::vector<double>& omega_list,
                            const DFOptions& opts) {
  if (A_list.empty() || omega_list.empty()) throw std::invalid_argument("nyquist_sweep: empty grid");
  const PlantFR plant = first_order_plant(m, d);
  NyquistTables t;
  for (double w : omega_list) {
    const auto l = pd_open_loop(gains, m, d, w);
    t.open_loop.push_back({0.0, w, l.real(), l.imag()});
  }
  for (double a : A_list) {
    t.saturation.push_back({a, 0.0, df_sat(a, u_max), 0.0});
    for (double w : omega_list) {
      DFPoint p = describing_function(a, w, plant, p_max, opts);
      const auto n = std::polar(p.XN, p.phiN);
      const auto ln = pd_open_loop(gains, m, d, w) * n;
      t.nonlinearity.push_back({a, w, n.real(), n.imag()});
      t.open_loop_with_n.push_back({a, w, ln.real(), ln.imag()});
      p.residual_history.clear();
      t.points.push_back(std::move(p));
    }
  }
  return t;
}

void write_points_csv(std::ostream& os, const std::vector<DFPoint>& pts) {
  os << "A,omega,XN,phiN,psi_l,psi_u,residual,iterations\n";
  char buf[512];
  for (const auto& p : pts) {
    const double lo = p.window ? p.window->lo : std::nan("");
    const double hi = p.window ? p.window->hi : std::nan("");
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d\n",
                  p.A, p.omega, p.XN, p.phiN, lo, hi, p.residual, p.iterations);
    os << buf;
  }
}

void write_nyquist_csv(std::ostream& os, const std::vector<NyquistRow>& rows) {
  os << "A,omega,re,im\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g\n", r.A, r.omega, r.re, r.im);
    os << buf;
  }
}

}  // namespace powersat::descfun
