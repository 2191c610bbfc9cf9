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

#ifndef POWERSAT_CLFQP_HPP_
#define POWERSAT_CLFQP_HPP_

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "powersat/model.hpp"
#include "powersat/optim.hpp"
#include "powersat/sim.hpp"

namespace powersat::clfqp {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Joint-space task y = q tracking y*(t).
struct Reference {
  std::function<VectorXd(double)> y, yd, ydd;
  static Reference constant(const VectorXd& q_star);
};

// u = M(q) (u_aux + ydd*) + C(q, qd) qd + D qd + G(q), which makes the error
// a double integrator driven by u_aux.
VectorXd feedback_linearize(const model::LagrangianModel& m,
                            const model::State& x, const VectorXd& ydd_ref,
                            const VectorXd& u_aux);

// e = [q - y*; qd - yd*].
VectorXd task_error(const model::State& x, double t, const Reference& ref);

struct CLF {
  MatrixXd A_cl;  // [0 I; -K_p -K_d]
  MatrixXd P;
  MatrixXd W;
  double epsilon = 0.0;   // lambda_min(W) / lambda_max(P)
  double residual = 0.0;  // max |A' P + P A + W|
  bool w_from_p = false;  // W back-computed from a given P
};

MatrixXd closed_loop_error_matrix(const MatrixXd& K_p, const MatrixXd& K_d);

// Solves A_cl' P + P A_cl + W = 0. Throws if A_cl is not Hurwitz.
CLF build_clf(const MatrixXd& K_p, const MatrixXd& K_d, const MatrixXd& W);

// Per-joint 2x2 P = [2 zeta wn^2, 2 wn sqrt(1 - zeta^2); ., 2 zeta] on each
// (e_i, ed_i) pair with W = -(A' P + P A). Falls back to W = I and a solved
// P when that W is not positive definite.
CLF clf_from_parametrized_p(int n, double wn, double zeta);

struct ClfRow {
  VectorXd a;       // L_g V
  double b = 0.0;   // -e' W e - L_f V
  double lf = 0.0;  // L_f V
  double V = 0.0;
};

// a u <= b is the decrease condition Vdot <= -e' W e at (x, t).
ClfRow clf_row(const model::LagrangianModel& m, const model::State& x, double t,
               const CLF& clf, const Reference& ref);

enum class Variant { C1RelaxedDynamic, C2RelaxedStatic, C3FeedbackLin };
std::string to_string(Variant v);

struct Params {
  VectorXd u_bar;  // torque bounds
  VectorXd rbar;   // normalized resistance
  double p_max = 1000.0;
  double c_s = 5e4;
  MatrixXd Phi;
  VectorXd u0;
  MatrixXd K_p, K_d;  // auxiliary PD for C3
  void validate(int n) const;
};

struct SolveResult {
  VectorXd u;
  double p_s = 0.0;
  optim::Status status = optim::Status::Optimal;
  double kkt = 0.0;  // KktReport::max(), 0 for C3
  optim::KktReport kkt_parts;
  double power_excess = 0.0;  // max over the variant's power rows, W
};

SolveResult clfqp_solve(Variant v, const model::LagrangianModel& m,
                        const model::State& x, double t, const CLF& clf,
                        const Reference& ref, const Params& params);

struct Example5Config {
  model::TwoLinkParams robot;
  double wn = 2.0 * 3.14159265358979323846 * 2.2;
  double zeta = 0.8660254037844386;
  VectorXd q0;      // empty: (-pi/2, 0)
  VectorXd q_star;  // empty: (pi/2, 0)
  VectorXd u_bar;   // empty: (2000, 1000)
  VectorXd rbar;    // empty: (0.0833e-3, 0.222e-3)
  double p_max = 1000.0;
  double c_s = 5e4;
  double T = 3.0;
  double dt = 1e-3;
};

struct Example5Run {
  Variant variant;
  sim::TrajectoryLog log;  // scalars V, p_s, kkt
  double max_kkt = 0.0;
  double max_power_excess = 0.0;
  bool all_optimal = true;
  std::optional<double> settling_joint1;
  double max_dev_joint2 = 0.0;
};

struct Example5Result {
  CLF clf;
  std::vector<Example5Run> runs;  // C1, C2, C3
};

// C1 and C2 reach the plant unchanged; C3 passes through psat with Pbar_i =
// P_max / 2 and losses.
Example5Result run_example5(const Example5Config& cfg = {});

}  // namespace powersat::clfqp

#endif  // POWERSAT_CLFQP_HPP_
