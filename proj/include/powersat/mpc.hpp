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

#ifndef POWERSAT_MPC_HPP_
#define POWERSAT_MPC_HPP_

#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "powersat/model.hpp"
#include "powersat/optim.hpp"
#include "powersat/sim.hpp"

namespace powersat::mpc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct Discrete {
  MatrixXd F;
  MatrixXd H;
  VectorXd g;
};

// Zero-order hold through the exponential of [[Fc Hc gc]; [0 0 0]] * dt.
Discrete discretize_zoh(const MatrixXd& fc, const MatrixXd& hc,
                        const VectorXd& gc, double dt);

struct Horizon {
  int N = 1;
  double dt = 1e-3;
  MatrixXd F, H;
  VectorXd g;
  MatrixXd S;  // actuator selection, n_q by n_a
  MatrixXd Lambda, Phi, Lambda_f;
  VectorXd x0;
  VectorXd X_ref;  // [x*_1; ...; x*_N], empty for zero
  VectorXd U_ref;  // [u*_0; ...; u*_{N-1}], empty for zero

  int nx() const { return static_cast<int>(F.rows()); }
  int nu() const { return static_cast<int>(H.cols()); }
  int nq() const { return nx() / 2; }
  int na() const { return static_cast<int>(S.cols()); }
  void validate() const;
};

// [x_1; ...; x_N] by direct iteration of x+ = F x + H u + g.
VectorXd rollout(const MatrixXd& F, const MatrixXd& H, const VectorXd& g,
                 const VectorXd& x0, const VectorXd& U);

// Summed stage costs for n = 1..N-1, terminal cost at N and input costs for
// n = 0..N-1. The n = 0 state term is a constant and is left out.
double rollout_cost(const Horizon& h, const VectorXd& U);

struct HorizonMatrices {
  MatrixXd H_hat;   // (N nx) by (N nu)
  VectorXd x0_bar;  // [F x0; ...; F^N x0]
  VectorXd g_bar;
  double c_z = 0.0;
  VectorXd z;  // J = c_z + z' U + U' Z U
  MatrixXd Z;
};

// Lower block-triangular [I 0 ..; F I ..; ..; F^{N-1} .. I].
MatrixXd f_hat(const Horizon& h);

HorizonMatrices assemble_cost(const Horizon& h);

// a_neq x_k <= b_neq for k = 1..N as A U <= B.
std::pair<MatrixXd, VectorXd> lift_linear_constraints(
    const MatrixXd& a_neq, const VectorXd& b_neq, const Horizon& h,
    const HorizonMatrices& m);

// Dense (E_n, chi_n) with U' E_n U + chi_n' U equal to the actuated power
// (q_a)_n' u_n + u_n' diag(rbar) u_n. joint < 0 sums over all joints.
std::pair<MatrixXd, VectorXd> power_constraint_terms(const Horizon& h,
                                                     const HorizonMatrices& m,
                                                     const VectorXd& rbar,
                                                     int n, int joint = -1);

enum class Variant { C1Dynamic, C2StaticExact, C3StaticApprox };
std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);

struct ActuatorLimits {
  double u_bar = 180.0;
  double u_stall = 500.0;
  double qdot_max = 4.0;
  bool c3_symmetric = true;
};

optim::QPProblem build_controller(Variant v, const Horizon& h,
                                  const HorizonMatrices& m,
                                  const ActuatorLimits& lim,
                                  const model::PowerBudget& budget);

struct FinConfig {
  model::FinParams plant;
  ActuatorLimits limits;
  double R_bar = 0.0056;
  double P_max = 750.0;
  double dt = 1e-3;
  int N = 300;
  VectorXd x0;
  VectorXd lambda_diag;
  VectorXd lambda_f_diag;
  VectorXd phi_diag;
  bool receding = false;
  int receding_steps = 0;  // 0 means N
  int receding_horizon = 0;  // 0 means N
};

FinConfig default_fin_config();
void from_json(const nlohmann::json& j, FinConfig& c);

Horizon make_fin_horizon(const FinConfig& c);
model::PowerBudget fin_budget(const FinConfig& c);

struct ControllerRun {
  Variant variant;
  VectorXd U;
  double cost = 0.0;  // c_z + z'U + U'ZU
  optim::Status status = optim::Status::MaxIter;
  int outer_iterations = 0;
  double max_violation = 0.0;
  double seconds = 0.0;
  sim::TrajectoryLog log;  // includes scalar "J" (cost-to-go)
};

struct FinResult {
  std::vector<ControllerRun> runs;  // C1, C2, C3
  const ControllerRun& get(Variant v) const;
};

// Single-shot solves (C3, then C2 warm-started from C3, then C1 from C2)
// with open-loop playback, or a receding-horizon loop when c.receding.
FinResult run_fin_example(const FinConfig& c);

}  // namespace powersat::mpc

#endif  // POWERSAT_MPC_HPP_
