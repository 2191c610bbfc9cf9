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

#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "powersat/grid.hpp"

namespace powersat::bandwidth {
namespace {

constexpr double kDeg = M_PI / 180.0;

// Same signals as the closed forms, on a dense uniform phase grid.
Maxima brute_force(const Problem& p, double wc, int n) {
  const double yb = p.Y / std::sqrt(2.0);
  Maxima m;
  m.power = -1e300;
  for (int i = 0; i < n; ++i) {
    const double th = 2.0 * M_PI * i / n;
    const double s = std::sin(th), c = std::cos(th);
    const double qd = -yb * wc * s;
    const double u = yb * ((p.k - p.m * wc * wc) * c - p.d * wc * s) -
                     p.tau_c * ((s > 0) - (s < 0));
    m.qdot = std::max(m.qdot, std::abs(qd));
    m.u = std::max(m.u, std::abs(u));
    m.power = std::max(m.power, qd * u);
  }
  return m;
}

TEST(PeriodMaxima, PureSinusoidClosedForms) {
  Problem p;
  p.Y = 0.7;
  const double yb = p.Y / std::sqrt(2.0);
  for (double wc : {0.3, 5.0, 80.0}) {
    const Maxima m = period_maxima(p, wc);
    EXPECT_NEAR(m.qdot, yb * wc, 1e-12 * yb * wc);
    const double u = yb * std::hypot(p.m * wc * wc, p.d * wc);
    EXPECT_NEAR(m.u, u, 1e-12 * u);
  }
}

TEST(PeriodMaxima, MatchesDenseGrid) {
  Problem p;
  p.k = 30.0;
  p.tau_c = 2.0;
  for (double Y : {0.05, 0.4, 1.0}) {
    p.Y = Y;
    for (double wc : {0.5, 3.0, 11.0, 40.0}) {
      const Maxima m = period_maxima(p, wc);
      const Maxima b = brute_force(p, wc, 1000000);
      EXPECT_NEAR(m.qdot, b.qdot, 1e-6 * b.qdot);
      EXPECT_NEAR(m.u, b.u, 1e-6 * b.u);
      EXPECT_NEAR(m.power, b.power, 1e-6 * std::abs(b.power));
    }
  }
}

TEST(Feasible, LowFrequencyLimit) {
  Problem p;
  EXPECT_TRUE(feasible(p, 1e-6));
  p.mode = Mode::ApproxTorque;
  EXPECT_TRUE(feasible(p, 1e-6));
}

TEST(Feasible, SpeedLimitBindsAtClosedForm) {
  Problem p;
  p.p_max = 1e12;
  p.u_max = 1e12;
  const double w_star = p.qdot_max / (p.Y / std::sqrt(2.0));
  EXPECT_TRUE(feasible(p, w_star * (1 - 1e-9)));
  EXPECT_FALSE(feasible(p, w_star * (1 + 1e-9)));
  for (Mode mode : {Mode::ExactPower, Mode::ApproxTorque}) {
    p.mode = mode;
    EXPECT_NEAR(max_bandwidth(p), w_star, 1e-6 * w_star);
  }
}

TEST(Feasible, PrefixOnExampleTwoGrid) {
  Problem p;
  p.Y = 1.0;
  p.p_max = 400.0;
  for (Mode mode : {Mode::ExactPower, Mode::ApproxTorque}) {
    p.mode = mode;
    EXPECT_TRUE(feasibility_is_prefix(p));
  }
  for (double Y : logspace(0.5, 57.3, 20)) {
    p.Y = Y * kDeg;
    for (double pm : {200.0, 400.0, 600.0}) {
      p.p_max = pm;
      for (Mode mode : {Mode::ExactPower, Mode::ApproxTorque}) {
        p.mode = mode;
        EXPECT_TRUE(feasibility_is_prefix(p)) << "Y=" << Y << " P=" << pm;
      }
    }
  }
}

TEST(MaxBandwidth, InfeasibleEverywhereThrows) {
  Problem p;
  p.tau_c = 500.0;  // static friction torque alone exceeds u_max
  p.mode = Mode::ApproxTorque;
  EXPECT_THROW(max_bandwidth(p), std::runtime_error);
}

TEST(RatioSweep, ApproxNeverExceedsExact) {
  Problem base;
  const auto rows = ratio_sweep(base, logspace(0.5, 57.3, 30), {200.0, 400.0, 600.0});
  ASSERT_EQ(rows.size(), 90u);
  for (const auto& r : rows) {
    EXPECT_GE(r.ratio, 1.0 - 1e-9) << "Y=" << r.Y_deg << " P=" << r.p_max;
    EXPECT_NEAR(r.ratio, r.wc_exact / r.wc_approx, 1e-15 * r.ratio);
  }
}

TEST(RatioSweep, UnityAtLargeAmplitudeAndNearlyDoubleAtSmall) {
  Problem base;
  const auto rows = ratio_sweep(base, {1.0, 57.3}, {600.0});
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_GT(rows[0].ratio, 1.7);
  EXPECT_LT(rows[0].ratio, 2.3);
  EXPECT_NEAR(rows[1].ratio, 1.0, 0.02);
}

TEST(DetectKinks, TwoBreaksInLogLog) {
  std::vector<double> Y = logspace(1.0, 100.0, 101), r(101);
  for (int i = 0; i < 101; ++i) {
    const double x = std::log(Y[i]);
    // Slopes 0, -0.5, 0 with breaks at x = 1.5 and x = 3.5.
    r[i] = std::exp(-0.5 * std::clamp(x, 1.5, 3.5));
  }
  const auto k = detect_kinks(Y, r);
  ASSERT_EQ(k.size(), 2u);
  EXPECT_NEAR(std::log(Y[k[0]]), 1.5, 0.05);
  EXPECT_NEAR(std::log(Y[k[1]]), 3.5, 0.05);
  std::vector<double> smooth(101);
  for (int i = 0; i < 101; ++i) smooth[i] = std::pow(Y[i], -0.3);
  EXPECT_TRUE(detect_kinks(Y, smooth).empty());
}

TEST(RatioCsv, Header) {
  std::ostringstream os;
  write_ratio_csv(os, {RatioRow{1, 2, 3, 4, 0.75}});
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "Y_deg,P_max,wc_exact,wc_approx,ratio");
}

TEST(ProblemValidate, RejectsBadInputs) {
  Problem p;
  p.m = 0.0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p = Problem{};
  p.tau_c = -1.0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
}

}  // namespace
}  // namespace powersat::bandwidth
