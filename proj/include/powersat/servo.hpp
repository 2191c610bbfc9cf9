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

#ifndef POWERSAT_SERVO_HPP_
#define POWERSAT_SERVO_HPP_

#include <functional>
#include <string>
#include <vector>

#include "powersat/sim.hpp"

namespace powersat::servo {

// How the controller bounds its own torque command.
enum class LimitModel {
  Exact,   // min(u_peak, p_max / |qdot|), qdot from the latest sample
  Approx,  // min(u_peak, p_max / qdot_max), constant
};

std::string to_string(LimitModel m);

struct Actuator {
  double inertia = 1.0;
  double damping = 0.05;
  double p_max = 400.0;
  double qdot_max = 4.0;
  double u_peak = 192.0;  // peak current times torque constant
};

// u = kp (b r - q) + ki xi + kd (rd - qd), xi' = r - q, with the integrator
// frozen while the command is clipped.
struct PidGains {
  double kp = 0.0, ki = 0.0, kd = 0.0;
  double b = 1.0;  // setpoint weight
};

// Places the closed-loop poles of m s^3 + (d + kd) s^2 + kp s + ki at
// (s^2 + 2 zeta wn s + wn^2)(s + p). b puts the reference zero on -p, which
// leaves the second-order pair as the small-signal response.
PidGains place_pid(const Actuator& a, double wn, double zeta, double p);

struct ServoConfig {
  Actuator actuator;
  double wn = 50.0 * 3.14159265358979323846;
  double zeta = 0.8;
  double pole_ratio = 0.05;      // p = pole_ratio * wn
  double control_rate = 2000.0;  // Hz
  int substeps = 5;              // RK4 steps per control period
  double settle_pct = 2.0;
};

// Reference r(t) and its derivative. Steps report zero derivative.
struct Command {
  std::function<double(double)> r;
  std::function<double(double)> rd;
};

Command step_command(double amplitude);
// Linear sweep from f0 to f1 Hz over duration T, r = A sin(phase).
Command chirp_command(double amplitude, double f0, double f1, double T);

double controller_limit(LimitModel m, const Actuator& a, double qdot);

// Digital loop: the controller samples (q, qdot) at control_rate, the
// supply applies lossless psat at p_max and the driver clamp u_peak, and the
// plant integrates with the torque held over the period. Logs one sample per
// control period; scalars "r" and "xi" (integrator state).
sim::TrajectoryLog run_servo(const ServoConfig& cfg, LimitModel m,
                             const Command& cmd, double T);

struct StepRow {
  LimitModel model;
  double amplitude_deg = 0.0;
  double settling_time = 0.0;  // NaN if it never settles
  double overshoot_pct = 0.0;
  double peak_power = 0.0;
};

std::vector<StepRow> step_table(const ServoConfig& cfg,
                                const std::vector<double>& amplitudes_deg,
                                double T, std::vector<sim::TrajectoryLog>* logs = nullptr);

struct Frf {
  std::vector<double> freq;
  std::vector<double> magnitude;
  std::vector<double> phase;  // rad
};

// H = Pxy / Pxx from Hann-windowed segments with 50% overlap and mean
// removal. Keeps bins in [f_lo, f_hi].
Frf welch_frf(const std::vector<double>& x, const std::vector<double>& y,
              double fs, int nperseg, double f_lo, double f_hi);

struct ChirpResult {
  Frf frf;
  double peak_power = 0.0;
  sim::TrajectoryLog log;
};

struct ChirpConfig {
  double amplitude = 3.14159265358979323846 / 180.0;  // rad
  double f0 = 1.0, f1 = 24.0;
  double T = 20.0;
  int nperseg = 2048;
};

ChirpResult run_chirp(const ServoConfig& cfg, LimitModel m, const ChirpConfig& c);

}  // namespace powersat::servo

#endif  // POWERSAT_SERVO_HPP_
