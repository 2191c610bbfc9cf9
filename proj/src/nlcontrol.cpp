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

#include "powersat/nlcontrol.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "powersat/powerlim.hpp"

namespace powersat::nlcontrol {
namespace {

constexpr double kPi = 3.14159265358979323846;

VectorXd offset(const VectorXd& q, const VectorXd& q_star) {
  if (q_star.size() == 0) return q;
  if (q_star.size() != q.size()) throw std::invalid_argument("nlcontrol: q_star size");
  return q - q_star;
}

}  // namespace

void PBCGains::validate() const {
  if (K_p.rows() != K_p.cols() || K_d.rows() != K_d.cols() || K_p.rows() != K_d.rows()) {
    throw std::invalid_argument("PBCGains: K_p and K_d must be square and equal size");
  }
  if (!K_p.isApprox(K_p.transpose()) || Eigen::LLT<MatrixXd>(K_p).info() != Eigen::Success) {
    throw std::invalid_argument("PBCGains: K_p must be symmetric positive definite");
  }
  if (!K_d.isApprox(K_d.transpose()) ||
      Eigen::SelfAdjointEigenSolver<MatrixXd>(K_d).eigenvalues().minCoeff() < -1e-12) {
    throw std::invalid_argument("PBCGains: K_d must be symmetric positive semidefinite");
  }
}

PBCGains mass_scaled_gains(const VectorXd& masses, double wn, double zeta) {
  PBCGains g;
  g.K_p = (masses * wn * wn).asDiagonal();
  g.K_d = (masses * 2.0 * zeta * wn).asDiagonal();
  g.validate();
  return g;
}

VectorXd pbc_control(const model::LagrangianModel& m, const PBCGains& g,
                     const VectorXd& q, const VectorXd& qd,
                     const VectorXd& q_star) {
  return m.gravity(q) - g.K_p * offset(q, q_star) - g.K_d * qd;
}

double pbc_lyapunov(const model::LagrangianModel& m, const PBCGains& g,
                    const VectorXd& q, const VectorXd& qd,
                    const VectorXd& q_star) {
  const VectorXd e = offset(q, q_star);
  return 0.5 * qd.dot(m.mass(q) * qd) + 0.5 * e.dot(g.K_p * e);
}

double pbc_lyapunov_rate(const model::LagrangianModel& m, const PBCGains& g,
                         const model::PowerBudget& budget, const VectorXd& q,
                         const VectorXd& qd, const VectorXd& q_star) {
  const VectorXd u = pbc_control(m, g, q, qd, q_star);
  double rate = -qd.dot((g.K_d + m.damping()) * qd);
  for (int i = 0; i < u.size(); ++i) {
    const double p = u(i) * qd(i);
    if (p > budget.per_joint_limit(i)) rate -= p - budget.per_joint_limit(i);
  }
  return rate;
}

double pbc_lyapunov_rate_generic(const model::LagrangianModel& m,
                                 const PBCGains& g,
                                 const model::PowerBudget& budget,
                                 const VectorXd& q, const VectorXd& qd,
                                 const VectorXd& q_star) {
  const VectorXd u = pbc_control(m, g, q, qd, q_star);
  const VectorXd ps =
      powerlim::psat_vector(u, qd, budget, powerlim::PsatMode::ExactLossless);
  return qd.dot(ps) - qd.dot(u) - qd.dot((g.K_d + m.damping()) * qd);
}

sim::TrajectoryLog run_example3(const Example3Config& cfg) {
  const model::LagrangianModel robot = model::two_link_model(cfg.robot);
  const PBCGains gains =
      mass_scaled_gains(Eigen::Vector2d(cfg.robot.m1, cfg.robot.m2), cfg.wn, cfg.zeta);
  model::PowerBudget budget;
  budget.per_joint_limit = VectorXd::Constant(2, cfg.p_bar);
  budget.normalized_resistance = VectorXd::Zero(2);
  budget.no_load_speed = VectorXd::Constant(2, std::numeric_limits<double>::infinity());
  budget.aggregate_limit = 2.0 * cfg.p_bar;
  const VectorXd q0 = cfg.q0.size() ? cfg.q0 : VectorXd(Eigen::Vector2d(-0.5 * kPi, kPi));
  auto ctrl = [&](double, const model::State& x) {
    return pbc_control(robot, gains, x.q, x.qdot);
  };
  auto probe = [&](double, const model::State& x) {
    return std::map<std::string, double>{
        {"V", pbc_lyapunov(robot, gains, x.q, x.qdot)},
        {"Vdot", pbc_lyapunov_rate(robot, gains, budget, x.q, x.qdot)}};
  };
  return sim::simulate(robot, ctrl,
                       sim::psat_limiter(budget, powerlim::PsatMode::ExactLossless),
                       budget, {q0, VectorXd::Zero(2)}, {cfg.T, cfg.dt}, probe);
}

}  // namespace powersat::nlcontrol
