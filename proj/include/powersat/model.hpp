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

#ifndef POWERSAT_MODEL_HPP_
#define POWERSAT_MODEL_HPP_

#include <functional>
#include <string>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

namespace powersat::model {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct State {
  VectorXd q;
  VectorXd qdot;
};

// M q'' + D q' + K q + G = S u, with q = [q_u; q_a].
class LinearPlant {
 public:
  LinearPlant(MatrixXd mass, MatrixXd damping, MatrixXd stiffness,
              MatrixXd actuator_selection, VectorXd gravity_offset);

  const MatrixXd& mass() const { return mass_; }
  const MatrixXd& damping() const { return damping_; }
  const MatrixXd& stiffness() const { return stiffness_; }
  const MatrixXd& actuator_selection() const { return selection_; }
  const VectorXd& gravity_offset() const { return gravity_; }

  int dof() const { return static_cast<int>(mass_.rows()); }
  int n_actuated() const { return static_cast<int>(selection_.cols()); }
  int n_unactuated() const { return dof() - n_actuated(); }

  // Accelerations for the given applied torque.
  VectorXd acceleration(const State& x, const VectorXd& u) const;

 private:
  MatrixXd mass_, damping_, stiffness_, selection_;
  VectorXd gravity_;
};

struct StateSpace {
  MatrixXd F;  // n_x by n_x
  MatrixXd H;  // n_x by n_a
  VectorXd g;
};

StateSpace linear_to_statespace(const LinearPlant& plant);

// M(q) q'' + C(q, q') q' + D q' + G(q) = u.
class LagrangianModel {
 public:
  using MassFn = std::function<MatrixXd(const VectorXd&)>;
  using CoriolisFn = std::function<MatrixXd(const VectorXd&, const VectorXd&)>;
  using GravityFn = std::function<VectorXd(const VectorXd&)>;
  using PotentialFn = std::function<double(const VectorXd&)>;

  LagrangianModel(int dof, MassFn mass, CoriolisFn coriolis, GravityFn gravity,
                  MatrixXd damping, PotentialFn potential = nullptr);

  int dof() const { return dof_; }
  MatrixXd mass(const VectorXd& q) const { return mass_(q); }
  MatrixXd coriolis(const VectorXd& q, const VectorXd& qdot) const {
    return coriolis_(q, qdot);
  }
  VectorXd gravity(const VectorXd& q) const { return gravity_(q); }
  const MatrixXd& damping() const { return damping_; }

  bool has_potential() const { return static_cast<bool>(potential_); }
  double potential_energy(const VectorXd& q) const;
  double kinetic_energy(const State& x) const;

  VectorXd acceleration(const State& x, const VectorXd& u) const;

  // Same model with a different damping matrix.
  LagrangianModel with_damping(MatrixXd damping) const;

 private:
  int dof_;
  MassFn mass_;
  CoriolisFn coriolis_;
  GravityFn gravity_;
  MatrixXd damping_;
  PotentialFn potential_;
};

struct TwoLinkParams {
  double m1 = 16.0;
  double m2 = 12.0;
  double I1 = 18.0;  // about the joint axis
  double I2 = 7.5;
  double h1 = 1.0;
  double h2 = 1.0;
  double d1 = 10.0;
  double d2 = 10.0;
  double g = 9.8;
};

// Planar 2R arm, uniform links with the center of mass at mid-length.
// q = 0 puts both links horizontal; gravity acts along -y.
LagrangianModel two_link_model(const TwoLinkParams& p = {});

struct FinParams {
  double m = 1.0;
  double d = 0.05;
  int n = 4;
};

LinearPlant fin_system_model(const FinParams& p = {});

struct PowerBudget {
  VectorXd per_joint_limit;
  VectorXd normalized_resistance;
  VectorXd no_load_speed;
  double aggregate_limit = 0.0;

  int size() const { return static_cast<int>(per_joint_limit.size()); }
  // Throws std::invalid_argument on negative entries or size mismatch.
  void validate() const;

  // P_max split evenly over n joints.
  static PowerBudget uniform(int n, double aggregate, double rbar,
                             double vbar);
};

// |qdot' (Mdot/2 - C) qdot| with Mdot from a central difference along qdot.
double skew_symmetry_residual(const LagrangianModel& model, const VectorXd& q,
                              const VectorXd& qdot, double fd_step = 1e-6);

void from_json(const nlohmann::json& j, TwoLinkParams& p);
void from_json(const nlohmann::json& j, FinParams& p);
void from_json(const nlohmann::json& j, PowerBudget& b);

}  // namespace powersat::model

#endif  // POWERSAT_MODEL_HPP_
