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

#include <cmath>
#include <random>
#include <sstream>

#include <boost/math/quadrature/gauss.hpp>
#include <gtest/gtest.h>

#include "powersat/grid.hpp"
#include "powersat/powerlim.hpp"

namespace powersat::descfun {
namespace {

double window_power(double A, double X, double phi, double psi) {
  return 0.5 * A * A * X * (std::cos(phi) - std::cos(2.0 * psi + phi));
}

// First harmonic of psat(A sin psi) driven by qdot = A X sin(psi + phi), by
// the midpoint rule over one period.
Coeffs time_domain_coeffs(double A, double X, double phi, double p_max, int n) {
  double c = 0.0, s = 0.0;
  const double h = 2.0 * M_PI / n;
  for (int k = 0; k < n; ++k) {
    const double psi = (k + 0.5) * h;
    const double u = A * std::sin(psi);
    const double qd = A * X * std::sin(psi + phi);
    const double y = powerlim::psat(u, qd, p_max, 0.0, powerlim::PsatMode::ExactLossless);
    c += y * std::sin(psi);
    s += y * std::cos(psi);
  }
  return {c * h / (M_PI * A), s * h / (M_PI * A)};
}

TEST(ActiveWindow, InactiveBelowThreshold) {
  // Peak power A^2 X (cos phi + 1) / 2 = 0.5 * 2 / 2 < 400.
  EXPECT_FALSE(active_window(1.0, 1.0, 0.0, 400.0).has_value());
  const Coeffs c = fourier_coeffs(1.0, 1.0, 0.0, 400.0);
  EXPECT_EQ(c.c, 1.0);
  EXPECT_EQ(c.s, 0.0);
}

TEST(ActiveWindow, EndpointsHitPowerLimitForExampleOne) {
  const Example1 ex;
  const PlantFR g = first_order_plant(ex.m, ex.d);
  const double X = g.magnitude(ex.omega_n), phi = g.phase(ex.omega_n);
  const auto w = active_window(500.0, X, phi, 400.0);
  ASSERT_TRUE(w.has_value());
  EXPECT_GE(w->lo, 0.0);
  EXPECT_LT(w->lo, w->hi);
  EXPECT_LE(w->hi, M_PI);
  EXPECT_NEAR(window_power(500.0, X, phi, w->lo), 400.0, 1e-8);
  EXPECT_NEAR(window_power(500.0, X, phi, w->hi), 400.0, 1e-8);
  EXPECT_GT(window_power(500.0, X, phi, 0.5 * (w->lo + w->hi)), 400.0);
}

TEST(ActiveWindow, TangencyIsInactive) {
  // A^2 X (cos 0 + 1) / 2 = p_max exactly.
  EXPECT_FALSE(active_window(20.0, 1.0, 0.0, 400.0).has_value());
}

TEST(FourierCoeffs, MatchesTimeDomainOnRandomActiveConfigs) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> ua(1, 500), ux(0.01, 10), up(-1.5, 1.5);
  int drawn = 0;
  while (drawn < 50) {
    const double a = ua(rng), x = ux(rng), phi = up(rng);
    if (!active_window(a, x, phi, 400.0)) continue;
    const Coeffs cf = fourier_coeffs(a, x, phi, 400.0);
    const Coeffs td = time_domain_coeffs(a, x, phi, 400.0, 200000);
    EXPECT_NEAR(cf.c, td.c, 1e-6);
    EXPECT_NEAR(cf.s, td.s, 1e-6);
    ++drawn;
  }
}

TEST(FourierCoeffs, VanishingWindowIsContinuous) {
  // Peak exceeds p_max by A^2 X delta^2, a window of width 2 delta = 1e-4.
  const double A = 30.0, X = 1.0, phi = 0.2, delta = 5e-5;
  const double peak = 0.5 * A * A * X * (std::cos(phi) + 1.0);
  const double p_max = peak - A * A * X * delta * delta;
  const auto w = active_window(A, X, phi, p_max);
  ASSERT_TRUE(w.has_value());
  EXPECT_NEAR(w->hi - w->lo, 2.0 * delta, 1e-8);
  const Coeffs c = fourier_coeffs(A, X, phi, p_max);
  EXPECT_NEAR(c.c, 1.0, 1e-8);
  EXPECT_NEAR(c.s, 0.0, 1e-8);
}

TEST(DescribingFunction, InactiveAmplitudeIsUnity) {
  const Example1 ex;
  const DFPoint p = describing_function(1.0, ex.omega_n, first_order_plant(ex.m, ex.d), 400.0);
  EXPECT_EQ(p.XN, 1.0);
  EXPECT_EQ(p.phiN, 0.0);
  EXPECT_FALSE(p.window.has_value());
}

TEST(DescribingFunction, ConvergedPointMatchesTimeDomainOracle) {
  const Example1 ex;
  const PlantFR g = first_order_plant(ex.m, ex.d);
  for (double w : {2.0, 20.0, ex.omega_n}) {
    const DFPoint p = describing_function(500.0, w, g, ex.p_max);
    ASSERT_TRUE(p.window.has_value());
    EXPECT_LT(p.residual, 1e-10);
    const Coeffs td = time_domain_coeffs(500.0, g.magnitude(w) * p.XN, g.phase(w) + p.phiN,
                                         ex.p_max, 200000);
    EXPECT_NEAR(td.c, p.XN * std::cos(p.phiN), 1e-4);
    EXPECT_NEAR(td.s, p.XN * std::sin(p.phiN), 1e-4);
  }
}

TEST(DescribingFunction, ExampleOneSweepInvariants) {
  const Example1 ex;
  const PlantFR g = first_order_plant(ex.m, ex.d);
  int active = 0;
  for (double a : logspace(1.0, 500.0, 50)) {
    for (double w : logspace(1.0, 1e3, 100)) {
      const DFPoint p = describing_function(a, w, g, ex.p_max);
      EXPECT_GT(p.XN, 0.0);
      EXPECT_LE(p.XN, 1.0);
      EXPECT_GE(p.phiN, 0.0);
      EXPECT_LT(p.phiN, M_PI / 2);
      if (!p.window) continue;
      ++active;
      // Damped iteration alone converges; the residual may spiral, so only
      // the end point is checked.
      EXPECT_FALSE(p.used_newton) << "A=" << a << " w=" << w;
      EXPECT_LT(p.residual, 1e-10);
    }
  }
  EXPECT_GT(active, 0);
}

TEST(DfSat, ClosedFormAndLimits) {
  EXPECT_EQ(df_sat(50, 100), 1.0);
  EXPECT_EQ(df_sat(100, 100), 1.0);
  EXPECT_LT(df_sat(1e9, 100), 1e-6);
  // Fourier of sat(A sin psi) with kinks at asin(1/2) and its mirror images.
  const double A = 200, u = 100;
  auto f = [&](double psi) {
    return std::clamp(A * std::sin(psi), -u, u) * std::sin(psi);
  };
  const double k = std::asin(0.5);
  const double edges[] = {0.0, k, M_PI - k, M_PI + k, 2 * M_PI - k, 2 * M_PI};
  double integral = 0.0;
  for (int i = 0; i < 5; ++i) {
    integral += boost::math::quadrature::gauss<double, 30>::integrate(f, edges[i], edges[i + 1]);
  }
  EXPECT_NEAR(df_sat(A, u), integral / (M_PI * A), 1e-8);
}

TEST(Nyquist, InactiveRowsMatchOpenLoop) {
  const Example1 ex;
  const NyquistTables t = nyquist_sweep(ex.gains(), ex.m, ex.d, ex.p_max, ex.u_max, {1.0, 500.0},
                                        {1.0, 10.0, 100.0});
  ASSERT_EQ(t.open_loop.size(), 3u);
  ASSERT_EQ(t.nonlinearity.size(), 6u);
  ASSERT_EQ(t.saturation.size(), 2u);
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(t.nonlinearity[i].re, 1.0);
    EXPECT_EQ(t.nonlinearity[i].im, 0.0);
    EXPECT_DOUBLE_EQ(t.open_loop_with_n[i].re, t.open_loop[i].re);
    EXPECT_DOUBLE_EQ(t.open_loop_with_n[i].im, t.open_loop[i].im);
  }
  EXPECT_EQ(t.saturation[1].im, 0.0);
}

TEST(Nyquist, CsvColumns) {
  std::ostringstream os;
  write_points_csv(os, {DFPoint{}});
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')),
            "A,omega,XN,phiN,psi_l,psi_u,residual,iterations");
}

}  // namespace
}  // namespace powersat::descfun
