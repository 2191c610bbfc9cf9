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

#ifndef POWERSAT_SIM_HPP_
#define POWERSAT_SIM_HPP_

#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "powersat/model.hpp"
#include "powersat/powerlim.hpp"

namespace powersat::sim {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using model::State;

struct TrajectoryLog {
  std::vector<double> times;
  std::vector<State> states;
  std::vector<VectorXd> u_cmd;
  std::vector<VectorXd> u_applied;
  std::vector<VectorXd> power_per_joint;
  std::vector<double> power_total;
  std::map<std::string, std::vector<double>> scalars;

  size_t size() const { return times.size(); }

  // Appends one sample. Power is u_applied .* qdot_a + rbar .* u_applied^2.
  void push(double t, const State& x, const VectorXd& u_cmd_k,
            const VectorXd& u_applied_k, const VectorXd& qdot_a,
            const VectorXd& rbar);

  // Column i of q, qdot, or applied torque as a series.
  std::vector<double> position(int i) const;
  std::vector<double> velocity(int i) const;
  std::vector<double> torque(int i) const;
  std::vector<double> joint_power(int i) const;

  // Throws if the columns have different lengths or the power total does not
  // match the per-joint sum.
  void check_integrity() const;

  // t, q_i, qdot_i, ucmd_i, u_i, P_i, P_total, then scalars by name.
  void write_csv(std::ostream& os) const;
  void write_csv(const std::string& path) const;
};

using Controller = std::function<VectorXd(double t, const State& x)>;
// Maps the commanded torque to the torque reaching the plant.
using Limiter = std::function<VectorXd(const VectorXd& u, const State& x)>;
// Extra scalars logged at each sample, evaluated after the controller.
using Probe = std::function<std::map<std::string, double>(double t, const State& x)>;

Limiter identity_limiter();
// psat_vector on the actuated velocities S' qdot.
Limiter psat_limiter(const model::PowerBudget& budget, powerlim::PsatMode mode,
                     const MatrixXd& selection = MatrixXd());

struct SimOptions {
  double T = 1.0;
  double dt = 1e-4;
};

// Classical RK4 with the applied torque held over each step. Controller and
// limiter run once per step at its start. Samples are logged at k*dt for
// k = 0..round(T/dt); the last sample's torque is not integrated.
TrajectoryLog simulate(const model::LagrangianModel& m, const Controller& ctrl,
                       const Limiter& lim, const model::PowerBudget& budget,
                       const State& x0, const SimOptions& opts,
                       const Probe& probe = nullptr);

TrajectoryLog simulate(const model::LinearPlant& p, const Controller& ctrl,
                       const Limiter& lim, const model::PowerBudget& budget,
                       const State& x0, const SimOptions& opts,
                       const Probe& probe = nullptr);

// First time after which |s - final| stays within pct% of |s(0) - final|,
// interpolated between samples. std::nullopt if the signal never settles.
std::optional<double> settling_time(const std::vector<double>& times,
                                    const std::vector<double>& signal,
                                    double final_value, double pct);

double percent_overshoot(const std::vector<double>& signal, double initial,
                         double final_value);

// Plain numeric CSV with 17 significant digits.
void write_table_csv(const std::string& path,
                     const std::vector<std::string>& header,
                     const std::vector<std::vector<double>>& rows);

}  // namespace powersat::sim

#endif  // POWERSAT_SIM_HPP_
