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

#include "powersat/powerlim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace powersat::powerlim {

double sat(double u, double u_max) {
  if (u_max < 0.0) throw std::invalid_argument("sat: negative u_max");
  return std::clamp(u, -u_max, u_max);
}

double motor_power(double u, double qdot, double rbar) {
  return u * qdot + rbar * u * u;
}

double psat(double u, double qdot, double pbar, double rbar, PsatMode mode,
            double vbar) {
  if (pbar < 0.0) throw std::invalid_argument("psat: negative pbar");
  switch (mode) {
    case PsatMode::ApproxSat:
      return sat(u, psat_approx_limit(pbar, vbar));
    case PsatMode::ExactLossless: {
      if (u * qdot <= pbar) return u;
      if (qdot == 0.0) {
        throw std::domain_error("psat: lossless limit binds at zero speed");
      }
      return pbar / qdot;
    }
    case PsatMode::ExactWithLosses: {
      if (rbar <= 0.0) {
        throw std::invalid_argument("psat: ExactWithLosses needs rbar > 0");
      }
      if (motor_power(u, qdot, rbar) <= pbar) return u;
      // Roots of rbar x^2 + qdot x - pbar, written to avoid cancellation.
      const double s = std::sqrt(qdot * qdot + 4.0 * pbar * rbar);
      if (u > 0.0) {
        return qdot >= 0.0 ? 2.0 * pbar / (qdot + s) : (s - qdot) / (2.0 * rbar);
      }
      if (qdot <= 0.0) {
        const double den = s - qdot;
        return den > 0.0 ? -2.0 * pbar / den : 0.0;
      }
      return -(qdot + s) / (2.0 * rbar);
    }
  }
  throw std::invalid_argument("psat: unknown mode");
}

Eigen::VectorXd psat_vector(const Eigen::VectorXd& u,
                            const Eigen::VectorXd& qdot,
                            const model::PowerBudget& budget, PsatMode mode) {
  const Eigen::Index n = u.size();
  if (qdot.size() != n || budget.size() != n) {
    throw std::invalid_argument("psat_vector: dimension mismatch");
  }
  Eigen::VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out(i) = psat(u(i), qdot(i), budget.per_joint_limit(i),
                  budget.normalized_resistance(i), mode,
                  budget.no_load_speed(i));
  }
  return out;
}

double psat_approx_limit(double pbar, double vbar) {
  if (vbar <= 0.0) throw std::invalid_argument("psat: vbar must be positive");
  return pbar / vbar;
}

}  // namespace powersat::powerlim
