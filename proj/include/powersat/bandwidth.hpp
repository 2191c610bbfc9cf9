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

#ifndef POWERSAT_BANDWIDTH_HPP_
#define POWERSAT_BANDWIDTH_HPP_

#include <cstddef>
#include <ostream>
#include <vector>

namespace powersat::bandwidth {

enum class Mode { ExactPower, ApproxTorque };

// m qdd = u - k q - d qd - tau_c sign(qd), tracking q = (Y / sqrt 2) cos(wc t).
struct Problem {
  double m = 1.0;
  double d = 0.05;
  double k = 0.0;
  double tau_c = 0.0;
  double Y = 1.0;  // rad
  double qdot_max = 4.0;
  double p_max = 400.0;
  double u_max = -1.0;  // negative: p_max / qdot_max
  Mode mode = Mode::ExactPower;

  double torque_limit() const { return u_max < 0.0 ? p_max / qdot_max : u_max; }
  void validate() const;
};

struct Maxima {
  double qdot = 0.0;   // max |qdot|
  double u = 0.0;      // max |u|
  double power = 0.0;  // max P
};

// Grid of 2048 phases per period refined by golden-section search.
Maxima period_maxima(const Problem& p, double wc);

// Speed limit plus the power limit (ExactPower) or the torque limit
// (ApproxTorque).
bool feasible(const Problem& p, double wc);

struct SearchOptions {
  double lo = 1e-2;
  double hi = 1e4;
  int grid = 200;
  double rel_tol = 1e-12;
};

// Largest feasible wc: log grid, then bisection on the first
// feasible/infeasible bracket. Throws if no grid point is feasible.
double max_bandwidth(const Problem& p, const SearchOptions& opts = {});

// True when the feasible grid points form a prefix of the grid.
bool feasibility_is_prefix(const Problem& p, const SearchOptions& opts = {});

struct RatioRow {
  double Y_deg = 0.0;
  double p_max = 0.0;
  double wc_exact = 0.0;
  double wc_approx = 0.0;
  double ratio = 0.0;
};

std::vector<RatioRow> ratio_sweep(const Problem& base,
                                  const std::vector<double>& Y_deg,
                                  const std::vector<double>& p_max_list,
                                  const SearchOptions& opts = {});

// Indices i (interior of the grid) where log ratio against log Y bends: the
// second difference exceeds tol times the mean log step. Adjacent hits are
// merged into one kink, reported at the larger magnitude.
std::vector<std::size_t> detect_kinks(const std::vector<double>& Y,
                                      const std::vector<double>& ratio,
                                      double tol = 0.02);

// Y_deg, P_max, wc_exact, wc_approx, ratio.
void write_ratio_csv(std::ostream& os, const std::vector<RatioRow>& rows);

}  // namespace powersat::bandwidth

#endif  // POWERSAT_BANDWIDTH_HPP_
