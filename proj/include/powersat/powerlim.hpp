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

#ifndef POWERSAT_POWERLIM_HPP_
#define POWERSAT_POWERLIM_HPP_

#include <Eigen/Dense>

#include "powersat/model.hpp"

namespace powersat::powerlim {

enum class PsatMode { ExactLossless, ExactWithLosses, ApproxSat };

// sign(u) min(|u|, u_max).
double sat(double u, double u_max);

// Electrical power u*qdot + rbar*u^2.
double motor_power(double u, double qdot, double rbar);

// Largest same-sign torque whose power stays within pbar. ApproxSat needs the
// no-load speed vbar and ignores qdot.
double psat(double u, double qdot, double pbar, double rbar, PsatMode mode,
            double vbar = 0.0);

Eigen::VectorXd psat_vector(const Eigen::VectorXd& u,
                            const Eigen::VectorXd& qdot,
                            const model::PowerBudget& budget, PsatMode mode);

// Torque bound pbar/vbar of the approximate model.
double psat_approx_limit(double pbar, double vbar);

}  // namespace powersat::powerlim

#endif  // POWERSAT_POWERLIM_HPP_
