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

#include "powersat/sim.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include <unsupported/Eigen/MatrixFunctions>
#include <gtest/gtest.h>

#include "powersat/nlcontrol.hpp"

namespace powersat::sim {
namespace {

model::PowerBudget fin_budget() { return model::PowerBudget::uniform(4, 750.0, 0.0056, 4.0); }

TEST(Simulate, ZeroInputStaysAtRest) {
  const model::LinearPlant p = model::fin_system_model();
  ASSERT_EQ(p.gravity_offset().norm(), 0.0);
  const State x0{VectorXd::Zero(4), VectorXd::Zero(4)};
  const TrajectoryLog log = simulate(
      p, [](double, const State&) { return VectorXd::Zero(4); }, identity_limiter(),
      fin_budget(), x0, {0.2, 1e-3});
  EXPECT_EQ(log.size(), 201u);
  for (size_t k = 0; k < log.size(); ++k) {
    EXPECT_EQ(log.states[k].q.norm(), 0.0);
    EXPECT_EQ(log.states[k].qdot.norm(), 0.0);
    EXPECT_EQ(log.power_total[k], 0.0);
  }
  log.check_integrity();
  EXPECT_THROW(simulate(p, [](double, const State&) { return VectorXd::Zero(4); },
                        identity_limiter(), fin_budget(),
                        {VectorXd::Zero(8), VectorXd::Zero(8)}, {0.2, 1e-3}),
               std::invalid_argument);
}

TEST(Simulate, LinearPlantMatchesMatrixExponential) {
  const model::LinearPlant p = model::fin_system_model();
  const model::StateSpace ss = model::linear_to_statespace(p);
  std::mt19937_64 rng(81);
  const VectorXd u = 50.0 * VectorXd::Random(4);
  const State x0{0.3 * VectorXd::Random(4), VectorXd::Random(4)};
  const double T = 0.5, dt = 1e-4;
  const TrajectoryLog log = simulate(
      p, [&](double, const State&) { return u; }, identity_limiter(), fin_budget(), x0,
      {T, dt});
  // Exact constant-input solution through the augmented exponential.
  const int nx = 8;
  MatrixXd aug = MatrixXd::Zero(nx + 1, nx + 1);
  aug.topLeftCorner(nx, nx) = ss.F;
  aug.topRightCorner(nx, 1) = ss.H * u + ss.g;
  VectorXd z(nx + 1);
  z << x0.q, x0.qdot, 1.0;
  for (double t : {0.1, 0.25, 0.5}) {
    const VectorXd exact = (MatrixXd(aug * t).exp() * z).head(nx);
    const size_t k = static_cast<size_t>(std::lround(t / dt));
    VectorXd got(nx);
    got << log.states[k].q, log.states[k].qdot;
    EXPECT_LT((got - exact).cwiseAbs().maxCoeff(), 1e-8) << "t=" << t;
  }
}

TEST(Simulate, DampedLinearEnergyNonIncreasing) {
  const model::LinearPlant p = model::fin_system_model();
  const State x0{0.5 * VectorXd::Ones(4), VectorXd::Zero(4)};
  const TrajectoryLog log = simulate(
      p, [](double, const State&) { return VectorXd::Zero(4); }, identity_limiter(),
      fin_budget(), x0, {2.0, 1e-3});
  double prev = 1e300;
  for (const State& x : log.states) {
    const double e =
        0.5 * x.qdot.dot(p.mass() * x.qdot) + 0.5 * x.q.dot(p.stiffness() * x.q);
    EXPECT_LE(e, prev + 1e-12);
    prev = e;
  }
}

TEST(Simulate, PsatLimiterKeepsPowerWithinBudget) {
  const model::LinearPlant p = model::fin_system_model();
  const model::PowerBudget b = fin_budget();
  const State x0{VectorXd::Zero(4), VectorXd::Zero(4)};
  const TrajectoryLog log = simulate(
      p, [](double t, const State&) { return 400.0 * std::sin(20.0 * t) * VectorXd::Ones(4); },
      psat_limiter(b, powerlim::PsatMode::ExactWithLosses), b, x0, {0.5, 1e-3});
  for (size_t k = 0; k < log.size(); ++k) {
    for (int i = 0; i < 4; ++i) {
      EXPECT_LE(log.power_per_joint[k](i), b.per_joint_limit(i) + 1e-6);
    }
  }
  log.check_integrity();
}

TEST(Simulate, ExampleThreeBudgetAndStepConvergence) {
  nlcontrol::Example3Config cfg;
  const TrajectoryLog a = nlcontrol::run_example3(cfg);
  for (const auto& pj : a.power_per_joint) EXPECT_LE(pj.maxCoeff(), 1000.0 + 1e-6);
  cfg.dt *= 0.5;
  const TrajectoryLog b = nlcontrol::run_example3(cfg);
  const double diff = std::max((a.states.back().q - b.states.back().q).cwiseAbs().maxCoeff(),
                               (a.states.back().qdot - b.states.back().qdot).cwiseAbs().maxCoeff());
  EXPECT_LT(diff, 1e-6);
  const auto ts = settling_time(a.times, a.position(0), 0.0, 5.0);
  ASSERT_TRUE(ts.has_value());
  EXPECT_GT(*ts, 0.0);
}

TEST(SettlingTime, FirstOrderStep) {
  std::vector<double> t, s;
  for (int k = 0; k <= 10000; ++k) {
    t.push_back(1e-3 * k);
    s.push_back(1.0 - std::exp(-t.back()));
  }
  EXPECT_NEAR(*settling_time(t, s, 1.0, 5.0), std::log(20.0), 1e-6);
  EXPECT_NEAR(*settling_time(t, s, 1.0, 2.0), std::log(50.0), 1e-6);
}

TEST(SettlingTime, ConstantAndNeverSettles) {
  const std::vector<double> t{0.0, 1.0, 2.0};
  EXPECT_EQ(*settling_time(t, {2.0, 2.0, 2.0}, 2.0, 5.0), 0.0);
  EXPECT_FALSE(settling_time(t, {0.0, 0.5, 0.2}, 1.0, 5.0).has_value());
  EXPECT_THROW(settling_time(t, {0.0, 0.5, 0.2}, 1.0, 0.0), std::invalid_argument);
  EXPECT_THROW(settling_time(t, {0.0, 0.5}, 1.0, 5.0), std::invalid_argument);
}

TEST(PercentOvershoot, Cases) {
  EXPECT_EQ(percent_overshoot({0.0, 0.5, 0.9, 1.0}, 0.0, 1.0), 0.0);
  std::vector<double> sine;
  for (int k = 0; k < 1000; ++k) sine.push_back(2.0 + 0.3 * std::sin(0.01 * k));
  EXPECT_NEAR(percent_overshoot(sine, 0.0, 2.0), 15.0, 1e-3);
  EXPECT_NEAR(percent_overshoot({3.0, 0.0, -0.5, -0.1}, 3.0, 0.0), 100.0 * 0.5 / 3.0, 1e-12);
  EXPECT_THROW(percent_overshoot({1.0}, 1.0, 1.0), std::invalid_argument);
}

TEST(TrajectoryLog, IntegrityAndCsv) {
  TrajectoryLog log;
  const VectorXd rbar = Eigen::Vector2d(0.1, 0.2);
  for (int k = 0; k < 5; ++k) {
    const State x{VectorXd::Constant(2, 0.1 * k), VectorXd::Constant(2, 1.0 + k)};
    const VectorXd u = Eigen::Vector2d(3.0 * k, -1.0);
    log.push(0.01 * k, x, u, u, x.qdot, rbar);
    const double p0 = u(0) * x.qdot(0) + 0.1 * u(0) * u(0);
    const double p1 = u(1) * x.qdot(1) + 0.2 * u(1) * u(1);
    EXPECT_DOUBLE_EQ(log.power_per_joint.back()(0), p0);
    EXPECT_DOUBLE_EQ(log.power_per_joint.back()(1), p1);
  }
  log.scalars["V"] = {1, 2, 3, 4, 5};
  EXPECT_NO_THROW(log.check_integrity());
  std::ostringstream os;
  log.write_csv(os);
  const std::string csv = os.str();
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "t,q1,q2,qdot1,qdot2,ucmd1,ucmd2,u1,u2,P1,P2,P_total,V");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 6);

  TrajectoryLog bad = log;
  bad.power_total[2] += 1e-9;
  EXPECT_THROW(bad.check_integrity(), std::logic_error);
  bad = log;
  bad.scalars["V"].pop_back();
  EXPECT_THROW(bad.check_integrity(), std::logic_error);
}

}  // namespace
}  // namespace powersat::sim
