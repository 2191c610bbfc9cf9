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

#ifndef POWERSAT_GRID_HPP_
#define POWERSAT_GRID_HPP_

#include <cmath>
#include <stdexcept>
#include <vector>

namespace powersat {

inline std::vector<double> linspace(double a, double b, int n) {
  if (n < 1) throw std::invalid_argument("linspace: n must be >= 1");
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) out[i] = n == 1 ? a : a + (b - a) * i / (n - 1);
  return out;
}

inline std::vector<double> logspace(double a, double b, int n) {
  if (a <= 0.0 || b <= 0.0) throw std::invalid_argument("logspace: bounds must be > 0");
  std::vector<double> out = linspace(std::log(a), std::log(b), n);
  for (double& v : out) v = std::exp(v);
  return out;
}

}  // namespace powersat

#endif  // POWERSAT_GRID_HPP_
