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

#ifndef POWERSAT_NLCONTROL_HPP_
#define POWERSAT_NLCONTROL_HPP_

#include <Eigen/Dense>

#include "powersat/model.hpp"
#include "powersat/sim.hpp"

namespace powersat::nlcontrol {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct PBCGains {
  MatrixXd K_p;  // symmetric positive definite
  MatrixXd K_d;  // symmetric positive semidefinite
  void validate() const;
};

// K_p = diag(m_i wn^2), K_d = diag(2 m_i zeta wn).
PBCGains mass_scaled_gains(const VectorXd& masses, double wn, double zeta);

// G(q) - K_p (q - q_star) - K_d qd. An empty q_star means the origin.
VectorXd pbc_control(const model::LagrangianModel& m, const PBCGains& g,
                     const VectorXd& q, const VectorXd& qd,
                     const VectorXd& q_star = VectorXd());

// qd' M(q) qd / 2 + (q - q_star)' K_p (q - q_star) / 2.
double pbc_lyapunov(const model::LagrangianModel& m, const PBCGains& g,
                    const VectorXd& q, const VectorXd& qd,
                    const VectorXd& q_star = VectorXd());

// -qd'(K_d + D) qd minus the excess power P_i - Pbar_i of every saturating
// joint, for the lossless limit.
double pbc_lyapunov_rate(const model::LagrangianModel& m, const PBCGains& g,
                         const model::PowerBudget& budget, const VectorXd& q,
                         const VectorXd& qd, const VectorXd& q_star = VectorXd());

// qd' psat(u, qd) - qd' u - qd'(K_d + D) qd.
double pbc_lyapunov_rate_generic(const model::LagrangianModel& m,
                                 const PBCGains& g,
                                 const model::PowerBudget& budget,
                                 const VectorXd& q, const VectorXd& qd,
                                 const VectorXd& q_star = VectorXd());

struct Example3Config {
  model::TwoLinkParams robot;
  double wn = 2.0 * 3.14159265358979323846 * 1.4142135623730951;
  double zeta = 0.9;
  double p_bar = 1000.0;  // per joint
  VectorXd q0;            // empty: (-pi/2, pi)
  double T = 10.0;
  double dt = 1e-4;
};

// PD plus gravity compensation through the lossless psat, logging "V" and
// "Vdot" at each sample.
sim::TrajectoryLog run_example3(const Example3Config& cfg = {});

}  // namespace powersat::nlcontrol

#endif  // POWERSAT_NLCONTROL_HPP_
