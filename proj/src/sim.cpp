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

#include "powersat/sim.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace powersat::sim {
namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

using Deriv = std::function<VectorXd(const State&, const VectorXd&)>;

State rk4_step(const Deriv& acc, const State& x, const VectorXd& u, double dt) {
  auto add = [](const State& s, const VectorXd& dq, const VectorXd& dv,
                double h) {
    return State{s.q + h * dq, s.qdot + h * dv};
  };
  const VectorXd k1q = x.qdot;
  const VectorXd k1v = acc(x, u);
  const State x2 = add(x, k1q, k1v, 0.5 * dt);
  const VectorXd k2q = x2.qdot;
  const VectorXd k2v = acc(x2, u);
  const State x3 = add(x, k2q, k2v, 0.5 * dt);
  const VectorXd k3q = x3.qdot;
  const VectorXd k3v = acc(x3, u);
  const State x4 = add(x, k3q, k3v, dt);
  const VectorXd k4q = x4.qdot;
  const VectorXd k4v = acc(x4, u);
  return State{x.q + dt / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q),
               x.qdot + dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)};
}

TrajectoryLog run(const Deriv& acc, int dof, const MatrixXd& selection,
                  const Controller& ctrl, const Limiter& lim,
                  const model::PowerBudget& budget, const State& x0,
                  const SimOptions& opts, const Probe& probe) {
  if (opts.dt <= 0.0 || opts.T < 0.0) throw std::invalid_argument("simulate: bad dt/T");
  if (x0.q.size() != dof || x0.qdot.size() != dof) {
    throw std::invalid_argument("simulate: initial state dimension");
  }
  const long steps = std::lround(opts.T / opts.dt);
  TrajectoryLog log;
  log.times.reserve(steps + 1);
  State x = x0;
  VectorXd rbar = budget.normalized_resistance;
  for (long k = 0; k <= steps; ++k) {
    const double t = k * opts.dt;
    if (!x.q.allFinite() || !x.qdot.allFinite()) {
      std::ostringstream msg;
      msg << "simulate: non-finite state at t=" << t;
      throw std::runtime_error(msg.str());
    }
    const VectorXd u = ctrl(t, x);
    const VectorXd ua = lim ? lim(u, x) : u;
    const VectorXd qa = selection.size() ? VectorXd(selection.transpose() * x.qdot)
                                         : x.qdot;
    if (rbar.size() != ua.size()) rbar = VectorXd::Zero(ua.size());
    log.push(t, x, u, ua, qa, rbar);
    if (probe) {
      for (const auto& [name, v] : probe(t, x)) log.scalars[name].push_back(v);
    }
    if (k == steps) break;
    x = rk4_step(acc, x, ua, opts.dt);
  }
  return log;
}

}  // namespace

void TrajectoryLog::push(double t, const State& x, const VectorXd& u_cmd_k,
                         const VectorXd& u_applied_k, const VectorXd& qdot_a,
                         const VectorXd& rbar) {
  times.push_back(t);
  states.push_back(x);
  u_cmd.push_back(u_cmd_k);
  u_applied.push_back(u_applied_k);
  VectorXd p = u_applied_k.cwiseProduct(qdot_a) +
               rbar.cwiseProduct(u_applied_k.cwiseAbs2());
  power_total.push_back(p.sum());
  power_per_joint.push_back(std::move(p));
}

std::vector<double> TrajectoryLog::position(int i) const {
  std::vector<double> out;
  out.reserve(size());
  for (const auto& s : states) out.push_back(s.q(i));
  return out;
}

std::vector<double> TrajectoryLog::velocity(int i) const {
  std::vector<double> out;
  out.reserve(size());
  for (const auto& s : states) out.push_back(s.qdot(i));
  return out;
}

std::vector<double> TrajectoryLog::torque(int i) const {
  std::vector<double> out;
  out.reserve(size());
  for (const auto& u : u_applied) out.push_back(u(i));
  return out;
}

std::vector<double> TrajectoryLog::joint_power(int i) const {
  std::vector<double> out;
  out.reserve(size());
  for (const auto& p : power_per_joint) out.push_back(p(i));
  return out;
}

void TrajectoryLog::check_integrity() const {
  const size_t n = size();
  if (states.size() != n || u_cmd.size() != n || u_applied.size() != n ||
      power_per_joint.size() != n || power_total.size() != n) {
    throw std::logic_error("TrajectoryLog: column lengths differ");
  }
  for (const auto& [name, v] : scalars) {
    if (v.size() != n) throw std::logic_error("TrajectoryLog: scalar " + name);
  }
  for (size_t k = 0; k < n; ++k) {
    if (power_per_joint[k].sum() != power_total[k]) {
      throw std::logic_error("TrajectoryLog: power total mismatch");
    }
  }
}

void TrajectoryLog::write_csv(std::ostream& os) const {
  if (times.empty()) return;
  const Eigen::Index nq = states.front().q.size();
  const Eigen::Index nu = u_applied.front().size();
  os << "t";
  for (Eigen::Index i = 0; i < nq; ++i) os << ",q" << i + 1;
  for (Eigen::Index i = 0; i < nq; ++i) os << ",qdot" << i + 1;
  for (Eigen::Index i = 0; i < nu; ++i) os << ",ucmd" << i + 1;
  for (Eigen::Index i = 0; i < nu; ++i) os << ",u" << i + 1;
  for (Eigen::Index i = 0; i < nu; ++i) os << ",P" << i + 1;
  os << ",P_total";
  for (const auto& kv : scalars) os << ',' << kv.first;
  os << '\n';
  for (size_t k = 0; k < size(); ++k) {
    os << fmt(times[k]);
    for (Eigen::Index i = 0; i < nq; ++i) os << ',' << fmt(states[k].q(i));
    for (Eigen::Index i = 0; i < nq; ++i) os << ',' << fmt(states[k].qdot(i));
    for (Eigen::Index i = 0; i < nu; ++i) os << ',' << fmt(u_cmd[k](i));
    for (Eigen::Index i = 0; i < nu; ++i) os << ',' << fmt(u_applied[k](i));
    for (Eigen::Index i = 0; i < nu; ++i) os << ',' << fmt(power_per_joint[k](i));
    os << ',' << fmt(power_total[k]);
    for (const auto& kv : scalars) os << ',' << fmt(kv.second[k]);
    os << '\n';
  }
}

void TrajectoryLog::write_csv(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  write_csv(f);
}

Limiter identity_limiter() {
  return [](const VectorXd& u, const State&) { return u; };
}

Limiter psat_limiter(const model::PowerBudget& budget, powerlim::PsatMode mode,
                     const MatrixXd& selection) {
  return [budget, mode, selection](const VectorXd& u, const State& x) {
    const VectorXd qa = selection.size() ? VectorXd(selection.transpose() * x.qdot)
                                         : x.qdot;
    return powerlim::psat_vector(u, qa, budget, mode);
  };
}

TrajectoryLog simulate(const model::LagrangianModel& m, const Controller& ctrl,
                       const Limiter& lim, const model::PowerBudget& budget,
                       const State& x0, const SimOptions& opts,
                       const Probe& probe) {
  Deriv acc = [&m](const State& x, const VectorXd& u) {
    return m.acceleration(x, u);
  };
  return run(acc, m.dof(), MatrixXd(), ctrl, lim, budget, x0, opts, probe);
}

TrajectoryLog simulate(const model::LinearPlant& p, const Controller& ctrl,
                       const Limiter& lim, const model::PowerBudget& budget,
                       const State& x0, const SimOptions& opts,
                       const Probe& probe) {
  Deriv acc = [&p](const State& x, const VectorXd& u) {
    return p.acceleration(x, u);
  };
  return run(acc, p.dof(), p.actuator_selection(), ctrl, lim, budget, x0, opts, probe);
}

std::optional<double> settling_time(const std::vector<double>& times,
                                    const std::vector<double>& signal,
                                    double final_value, double pct) {
  if (pct <= 0.0 || pct >= 100.0) throw std::invalid_argument("settling_time: pct");
  if (signal.empty() || times.size() != signal.size()) {
    throw std::invalid_argument("settling_time: size mismatch");
  }
  const double band = pct / 100.0 * std::abs(signal.front() - final_value);
  size_t last_out = signal.size();
  for (size_t k = signal.size(); k-- > 0;) {
    if (std::abs(signal[k] - final_value) > band) {
      last_out = k;
      break;
    }
  }
  if (last_out == signal.size()) return times.front();
  if (last_out + 1 >= signal.size()) return std::nullopt;
  // Linear interpolation of the band crossing between the two samples.
  const double e0 = std::abs(signal[last_out] - final_value);
  const double e1 = std::abs(signal[last_out + 1] - final_value);
  const double frac = e0 > e1 ? (e0 - band) / (e0 - e1) : 1.0;
  return times[last_out] + frac * (times[last_out + 1] - times[last_out]);
}

double percent_overshoot(const std::vector<double>& signal, double initial,
                         double final_value) {
  if (initial == final_value) {
    throw std::invalid_argument("percent_overshoot: initial equals final");
  }
  double best = 0.0;
  for (double s : signal) {
    best = std::max(best, (s - final_value) / (final_value - initial));
  }
  return 100.0 * best;
}

void write_table_csv(const std::string& path,
                     const std::vector<std::string>& header,
                     const std::vector<std::vector<double>>& rows) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  for (size_t i = 0; i < header.size(); ++i) f << (i ? "," : "") << header[i];
  f << '\n';
  for (const auto& r : rows) {
    for (size_t i = 0; i < r.size(); ++i) f << (i ? "," : "") << fmt(r[i]);
    f << '\n';
  }
}

}  // namespace powersat::sim
