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

#include "powersat/servo.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <stdexcept>

#include <unsupported/Eigen/FFT>

#include "powersat/powerlim.hpp"

namespace powersat::servo {
namespace {

constexpr double kPi = 3.14159265358979323846;

Eigen::VectorXd scalar(double v) { return Eigen::VectorXd::Constant(1, v); }

}  // namespace

std::string to_string(LimitModel m) {
  return m == LimitModel::Exact ? "exact" : "approx";
}

PidGains place_pid(const Actuator& a, double wn, double zeta, double p) {
  // m (s^2 + 2 zeta wn s + wn^2)(s + p) expanded.
  PidGains g;
  g.kd = a.inertia * (2.0 * zeta * wn + p) - a.damping;
  g.kp = a.inertia * (wn * wn + 2.0 * zeta * wn * p);
  g.ki = a.inertia * wn * wn * p;
  g.b = g.ki / (p * g.kp);
  return g;
}

Command step_command(double amplitude) {
  return {[amplitude](double) { return amplitude; }, [](double) { return 0.0; }};
}

Command chirp_command(double amplitude, double f0, double f1, double T) {
  if (!(T > 0.0)) throw std::invalid_argument("chirp_command: T must be positive");
  const double k = (f1 - f0) / T;
  return {[=](double t) { return amplitude * std::sin(2.0 * kPi * (f0 * t + 0.5 * k * t * t)); },
          [=](double t) {
            return amplitude * 2.0 * kPi * (f0 + k * t) *
                   std::cos(2.0 * kPi * (f0 * t + 0.5 * k * t * t));
          }};
}

double controller_limit(LimitModel m, const Actuator& a, double qdot) {
  const double v = m == LimitModel::Exact ? std::abs(qdot) : a.qdot_max;
  if (v == 0.0) return a.u_peak;
  return std::min(a.u_peak, a.p_max / v);
}

sim::TrajectoryLog run_servo(const ServoConfig& cfg, LimitModel m,
                             const Command& cmd, double T) {
  const Actuator& a = cfg.actuator;
  if (!(cfg.control_rate > 0.0) || cfg.substeps < 1 || !(a.inertia > 0.0)) {
    throw std::invalid_argument("run_servo: bad configuration");
  }
  const PidGains g = place_pid(a, cfg.wn, cfg.zeta, cfg.pole_ratio * cfg.wn);
  const double dt = 1.0 / cfg.control_rate;
  const double h = dt / cfg.substeps;
  const long steps = std::lround(T * cfg.control_rate);
  const Eigen::VectorXd rbar = Eigen::VectorXd::Zero(1);

  sim::TrajectoryLog log;
  double q = 0.0, qd = 0.0, xi = 0.0;
  auto accel = [&](double v, double u) { return (u - a.damping * v) / a.inertia; };
  for (long k = 0; k <= steps; ++k) {
    const double t = k * dt;
    const double r = cmd.r(t);
    const double e = r - q;
    const double u_pid = g.kp * (g.b * r - q) + g.ki * xi + g.kd * (cmd.rd(t) - qd);
    const double lim = controller_limit(m, a, qd);
    const double u_cmd = powerlim::sat(u_pid, lim);
    const double u = powerlim::sat(
        powerlim::psat(u_cmd, qd, a.p_max, 0.0, powerlim::PsatMode::ExactLossless), a.u_peak);

    model::State x{scalar(q), scalar(qd)};
    log.push(t, x, scalar(u_cmd), scalar(u), scalar(qd), rbar);
    log.scalars["r"].push_back(r);
    log.scalars["xi"].push_back(xi);
    if (k == steps) break;

    // Integrator frozen while the command is clipped.
    if (std::abs(u_pid) <= lim) xi += dt * e;
    for (int s = 0; s < cfg.substeps; ++s) {
      const double k1q = qd, k1v = accel(qd, u);
      const double k2q = qd + 0.5 * h * k1v, k2v = accel(k2q, u);
      const double k3q = qd + 0.5 * h * k2v, k3v = accel(k3q, u);
      const double k4q = qd + h * k3v, k4v = accel(k4q, u);
      q += h / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q);
      qd += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
    }
  }
  return log;
}

std::vector<StepRow> step_table(const ServoConfig& cfg,
                                const std::vector<double>& amplitudes_deg,
                                double T, std::vector<sim::TrajectoryLog>* logs) {
  std::vector<StepRow> rows;
  for (LimitModel m : {LimitModel::Exact, LimitModel::Approx}) {
    for (double deg : amplitudes_deg) {
      const double amp = deg * kPi / 180.0;
      sim::TrajectoryLog log = run_servo(cfg, m, step_command(amp), T);
      const std::vector<double> q = log.position(0);
      StepRow row;
      row.model = m;
      row.amplitude_deg = deg;
      row.settling_time = sim::settling_time(log.times, q, amp, cfg.settle_pct)
                              .value_or(std::numeric_limits<double>::quiet_NaN());
      row.overshoot_pct = sim::percent_overshoot(q, 0.0, amp);
      row.peak_power = *std::max_element(log.power_total.begin(), log.power_total.end());
      rows.push_back(row);
      if (logs) logs->push_back(std::move(log));
    }
  }
  return rows;
}

Frf welch_frf(const std::vector<double>& x, const std::vector<double>& y,
              double fs, int nperseg, double f_lo, double f_hi) {
  if (x.size() != y.size()) throw std::invalid_argument("welch_frf: size mismatch");
  if (nperseg < 4 || static_cast<size_t>(nperseg) > x.size()) {
    throw std::invalid_argument("welch_frf: nperseg out of range");
  }
  const int nb = nperseg / 2 + 1;
  std::vector<double> win(nperseg);
  for (int i = 0; i < nperseg; ++i) win[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / nperseg);
  std::vector<std::complex<double>> pxy(nb), pxx(nb);
  Eigen::FFT<double> fft;
  std::vector<double> sx(nperseg), sy(nperseg);
  std::vector<std::complex<double>> fx, fy;
  const size_t hop = nperseg / 2;
  for (size_t start = 0; start + nperseg <= x.size(); start += hop) {
    double mx = 0.0, my = 0.0;
    for (int i = 0; i < nperseg; ++i) {
      mx += x[start + i];
      my += y[start + i];
    }
    mx /= nperseg;
    my /= nperseg;
    for (int i = 0; i < nperseg; ++i) {
      sx[i] = win[i] * (x[start + i] - mx);
      sy[i] = win[i] * (y[start + i] - my);
    }
    fft.fwd(fx, sx);
    fft.fwd(fy, sy);
    for (int k = 0; k < nb; ++k) {
      pxy[k] += std::conj(fx[k]) * fy[k];
      pxx[k] += std::conj(fx[k]) * fx[k];
    }
  }
  Frf out;
  for (int k = 0; k < nb; ++k) {
    const double f = k * fs / nperseg;
    if (f < f_lo || f > f_hi) continue;
    const std::complex<double> hk = pxy[k] / pxx[k];
    out.freq.push_back(f);
    out.magnitude.push_back(std::abs(hk));
    out.phase.push_back(std::arg(hk));
  }
  return out;
}

ChirpResult run_chirp(const ServoConfig& cfg, LimitModel m, const ChirpConfig& c) {
  ChirpResult res;
  res.log = run_servo(cfg, m, chirp_command(c.amplitude, c.f0, c.f1, c.T), c.T);
  res.frf = welch_frf(res.log.scalars.at("r"), res.log.position(0), cfg.control_rate,
                      c.nperseg, c.f0, c.f1);
  res.peak_power = *std::max_element(res.log.power_total.begin(), res.log.power_total.end());
  return res;
}

}  // namespace powersat::servo
