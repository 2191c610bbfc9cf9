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

#ifndef POWERSAT_DESCFUN_HPP_
#define POWERSAT_DESCFUN_HPP_

#include <complex>
#include <functional>
#include <optional>
#include <ostream>
#include <vector>

namespace powersat::descfun {

// Frequency response of the torque-to-velocity plant.
struct PlantFR {
  std::function<double(double)> magnitude;
  std::function<double(double)> phase;  // rad
};

// G(s) = 1/(m s + d).
PlantFR first_order_plant(double m, double d);

struct Window {
  double lo = 0.0;
  double hi = 0.0;
};

// Interval of psi in [0, pi] where A^2 X sin(psi) sin(psi + phi) > p_max.
// Empty when the peak power does not exceed p_max.
std::optional<Window> active_window(double A, double X, double phi,
                                    double p_max);

struct Coeffs {
  double c = 1.0;  // X_N cos(phi_N)
  double s = 0.0;  // X_N sin(phi_N)
};

// Closed-form first-harmonic coefficients of psat(A sin psi, A X sin(psi + phi)).
Coeffs fourier_coeffs(double A, double X, double phi, double p_max);

struct DFOptions {
  int max_iter = 200;
  double damping = 0.5;
  double tol = 1e-10;
  // Newton takes over when the best residual has not improved for this many
  // damped steps.
  int stall_window = 20;
};

struct DFPoint {
  double A = 0.0;
  double omega = 0.0;
  double XN = 1.0;
  double phiN = 0.0;
  std::optional<Window> window;
  int iterations = 0;
  double residual = 0.0;
  bool used_newton = false;
  std::vector<double> residual_history;
};

// Fixed point of N = F(A, X_G |N|, phi_G + arg N) starting from N = 1.
// Throws std::runtime_error (with the last residual) on non-convergence.
DFPoint describing_function(double A, double omega, const PlantFR& plant,
                            double p_max, const DFOptions& opts = {});

// Classical saturation describing function (real).
double df_sat(double A, double u_max);

struct PDGains {
  double kp = 0.0;
  double kd = 0.0;
};

struct NyquistRow {
  double A = 0.0;
  double omega = 0.0;
  double re = 0.0;
  double im = 0.0;
};

struct NyquistTables {
  std::vector<NyquistRow> open_loop;        // C(jw) P(jw)
  std::vector<NyquistRow> nonlinearity;     // N(A, w)
  std::vector<NyquistRow> open_loop_with_n;  // C P N
  std::vector<NyquistRow> saturation;       // df_sat(A, u_max), w-independent
  std::vector<DFPoint> points;
};

// Position loop u = kp (q_d - q) - kd qdot around 1/(s (m s + d)).
std::complex<double> pd_open_loop(const PDGains& g, double m, double d,
                                  double omega);

NyquistTables nyquist_sweep(const PDGains& gains, double m, double d,
                            double p_max, double u_max,
                            const std::vector<double>& A_list,
                            const std::vector<double>& omega_list,
                            const DFOptions& opts = {});

struct Example1 {
  double m = 1.0;
  double d = 0.05;
  double omega_n = 50.0 * 3.14159265358979323846;
  double zeta = 0.8;
  double p_max = 400.0;
  double qdot_max = 4.0;
  double u_max = 100.0;
  PDGains gains() const { return {omega_n * omega_n, 2.0 * zeta * omega_n - d}; }
};

// A, omega, XN, phiN, psi_l, psi_u, residual, iterations.
void write_points_csv(std::ostream& os, const std::vector<DFPoint>& pts);
void write_nyquist_csv(std::ostream& os, const std::vector<NyquistRow>& rows);

}  // namespace powersat::descfun

#endif  // POWERSAT_DESCFUN_HPP_
