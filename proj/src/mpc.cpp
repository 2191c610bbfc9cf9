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

#include "powersat/mpc.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

#include <nlohmann/json.hpp>
#include <unsupported/Eigen/MatrixFunctions>

#include "powersat/powerlim.hpp"

namespace powersat::mpc {
namespace {

using optim::QuadForm;
using optim::SparseVec;

MatrixXd block_weight(const Horizon& h, int n) {
  return n == h.N ? h.Lambda_f : h.Lambda;
}

VectorXd ref_state(const Horizon& h, int n) {
  if (h.X_ref.size() == 0) return VectorXd::Zero(h.nx());
  return h.X_ref.segment((n - 1) * h.nx(), h.nx());
}

VectorXd ref_input(const Horizon& h, int n) {
  if (h.U_ref.size() == 0) return VectorXd::Zero(h.nu());
  return h.U_ref.segment(n * h.nu(), h.nu());
}

// Actuated velocities at step n as G U + beta.
struct VelocityMap {
  MatrixXd G;  // na by N nu
  VectorXd beta;
};

VelocityMap velocity_map(const Horizon& h, const HorizonMatrices& m, int n) {
  const int nx = h.nx(), nq = h.nq();
  MatrixXd sel = h.S.transpose();  // na by nq
  VelocityMap v;
  if (n == 0) {
    v.G = MatrixXd::Zero(h.na(), h.N * h.nu());
    v.beta = sel * h.x0.tail(nq);
    return v;
  }
  v.G = sel * m.H_hat.block((n - 1) * nx + nq, 0, nq, h.N * h.nu());
  v.beta = sel * (m.x0_bar + m.g_bar).segment((n - 1) * nx + nq, nq);
  return v;
}

SparseVec sparse_row(const MatrixXd& g, int r) {
  VectorXd row = g.row(r).transpose();
  return row.sparseView(0.0, 0.0);
}

SparseVec unit(int n, int i) {
  SparseVec e(n);
  e.insert(i) = 1.0;
  return e;
}

// u_k (l' U) + rbar u_k^2 split into two rank-one terms through the
// eigenvectors of [[rbar, |l|/2]; [|l|/2, 0]] on span{e_k, l}.
void add_power_terms(QuadForm& q, int dim, int k, const SparseVec& l,
                     double rbar) {
  const double lam = l.norm();
  const SparseVec e = unit(dim, k);
  if (lam == 0.0) {
    if (rbar > 0.0) q.add_term(rbar, e);
    return;
  }
  const double root = std::sqrt(rbar * rbar + lam * lam);
  for (double mu : {0.5 * (rbar + root), 0.5 * (rbar - root)}) {
    const double a = 0.5 * lam;
    const double b = mu - rbar;
    const double nrm = std::hypot(a, b);
    SparseVec v = (a / nrm) * e + (b / (nrm * lam)) * l;
    q.add_term(mu, v);
  }
}

void append_range(std::vector<Eigen::Triplet<double>>& trip,
                  std::vector<double>& lo, std::vector<double>& hi,
                  const SparseVec& row, double l, double u) {
  const int r = static_cast<int>(lo.size());
  for (SparseVec::InnerIterator it(row); it; ++it) {
    trip.emplace_back(r, static_cast<int>(it.index()), it.value());
  }
  lo.push_back(l);
  hi.push_back(u);
}

VectorXd read_vec(const nlohmann::json& j) {
  auto v = j.get<std::vector<double>>();
  return Eigen::Map<VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

}  // namespace

Discrete discretize_zoh(const MatrixXd& fc, const MatrixXd& hc,
                        const VectorXd& gc, double dt) {
  if (dt <= 0.0) throw std::invalid_argument("discretize_zoh: dt must be > 0");
  const Eigen::Index nx = fc.rows(), nu = hc.cols();
  if (fc.cols() != nx || hc.rows() != nx || gc.size() != nx) {
    throw std::invalid_argument("discretize_zoh: dimension mismatch");
  }
  MatrixXd aug = MatrixXd::Zero(nx + nu + 1, nx + nu + 1);
  aug.topLeftCorner(nx, nx) = fc * dt;
  aug.block(0, nx, nx, nu) = hc * dt;
  aug.block(0, nx + nu, nx, 1) = gc * dt;
  MatrixXd e = aug.exp();
  return {e.topLeftCorner(nx, nx), e.block(0, nx, nx, nu),
          e.block(0, nx + nu, nx, 1)};
}

void Horizon::validate() const {
  if (N < 1) throw std::invalid_argument("Horizon: N must be >= 1");
  if (F.rows() != F.cols() || H.rows() != F.rows() || g.size() != F.rows() ||
      x0.size() != F.rows() || F.rows() % 2 != 0) {
    throw std::invalid_argument("Horizon: dynamics dimensions");
  }
  if (S.rows() != nq() || S.cols() != nu()) {
    throw std::invalid_argument("Horizon: selection must be nq by nu");
  }
  if (Lambda.rows() != nx() || Lambda_f.rows() != nx() || Phi.rows() != nu()) {
    throw std::invalid_argument("Horizon: weight dimensions");
  }
  if ((X_ref.size() != 0 && X_ref.size() != N * nx()) ||
      (U_ref.size() != 0 && U_ref.size() != N * nu())) {
    throw std::invalid_argument("Horizon: reference stack size");
  }
  Eigen::LLT<MatrixXd> llt(Phi);
  if (llt.info() != Eigen::Success) throw std::invalid_argument("Horizon: Phi must be PD");
}

VectorXd rollout(const MatrixXd& F, const MatrixXd& H, const VectorXd& g,
                 const VectorXd& x0, const VectorXd& U) {
  const Eigen::Index nx = F.rows(), nu = H.cols();
  if (nu == 0 || U.size() % nu != 0) throw std::invalid_argument("rollout: U size");
  const Eigen::Index N = U.size() / nu;
  VectorXd X(N * nx);
  VectorXd x = x0;
  for (Eigen::Index n = 0; n < N; ++n) {
    x = F * x + H * U.segment(n * nu, nu) + g;
    X.segment(n * nx, nx) = x;
  }
  return X;
}

double rollout_cost(const Horizon& h, const VectorXd& U) {
  const VectorXd X = rollout(h.F, h.H, h.g, h.x0, U);
  double j = 0.0;
  for (int n = 1; n <= h.N; ++n) {
    const VectorXd dx = X.segment((n - 1) * h.nx(), h.nx()) - ref_state(h, n);
    j += dx.dot(block_weight(h, n) * dx);
  }
  for (int n = 0; n < h.N; ++n) {
    const VectorXd du = U.segment(n * h.nu(), h.nu()) - ref_input(h, n);
    j += du.dot(h.Phi * du);
  }
  return j;
}

MatrixXd f_hat(const Horizon& h) {
  const int nx = h.nx();
  MatrixXd out = MatrixXd::Zero(h.N * nx, h.N * nx);
  MatrixXd pw = MatrixXd::Identity(nx, nx);
  for (int d = 0; d < h.N; ++d) {
    for (int r = d; r < h.N; ++r) out.block(r * nx, (r - d) * nx, nx, nx) = pw;
    pw = h.F * pw;
  }
  return out;
}

HorizonMatrices assemble_cost(const Horizon& h) {
  h.validate();
  const int N = h.N, nx = h.nx(), nu = h.nu();
  HorizonMatrices m;
  std::vector<MatrixXd> fkh(N);
  fkh[0] = h.H;
  for (int k = 1; k < N; ++k) fkh[k] = h.F * fkh[k - 1];
  m.H_hat = MatrixXd::Zero(N * nx, N * nu);
  for (int n = 1; n <= N; ++n) {
    for (int i = 0; i < n; ++i) {
      m.H_hat.block((n - 1) * nx, i * nu, nx, nu) = fkh[n - 1 - i];
    }
  }
  m.x0_bar.resize(N * nx);
  m.g_bar.resize(N * nx);
  VectorXd xk = h.x0;
  VectorXd gk = VectorXd::Zero(nx);
  for (int n = 1; n <= N; ++n) {
    xk = h.F * xk;
    gk = h.F * gk + h.g;
    m.x0_bar.segment((n - 1) * nx, nx) = xk;
    m.g_bar.segment((n - 1) * nx, nx) = gk;
  }
  VectorXd d = m.x0_bar + m.g_bar;
  if (h.X_ref.size()) d -= h.X_ref;
  MatrixXd lh(N * nx, N * nu);
  VectorXd ld(N * nx);
  for (int n = 1; n <= N; ++n) {
    const MatrixXd w = block_weight(h, n);
    lh.middleRows((n - 1) * nx, nx).noalias() =
        w * m.H_hat.middleRows((n - 1) * nx, nx);
    ld.segment((n - 1) * nx, nx) = w * d.segment((n - 1) * nx, nx);
  }
  m.Z.noalias() = m.H_hat.transpose() * lh;
  for (int n = 0; n < N; ++n) m.Z.block(n * nu, n * nu, nu, nu) += h.Phi;
  m.Z = 0.5 * (m.Z + m.Z.transpose()).eval();
  m.z = 2.0 * lh.transpose() * d;
  m.c_z = d.dot(ld);
  if (h.U_ref.size()) {
    for (int n = 0; n < N; ++n) {
      const VectorXd ur = ref_input(h, n);
      m.z.segment(n * nu, nu) -= 2.0 * h.Phi * ur;
      m.c_z += ur.dot(h.Phi * ur);
    }
  }
  return m;
}

std::pair<MatrixXd, VectorXd> lift_linear_constraints(
    const MatrixXd& a_neq, const VectorXd& b_neq, const Horizon& h,
    const HorizonMatrices& m) {
  const int nc = static_cast<int>(a_neq.rows());
  if (nc == 0) return {MatrixXd(0, h.N * h.nu()), VectorXd(0)};
  if (a_neq.cols() != h.nx() || b_neq.size() != nc) {
    throw std::invalid_argument("lift_linear_constraints: dimension mismatch");
  }
  MatrixXd a(h.N * nc, h.N * h.nu());
  VectorXd b(h.N * nc);
  const VectorXd off = m.x0_bar + m.g_bar;
  for (int k = 1; k <= h.N; ++k) {
    a.middleRows((k - 1) * nc, nc) =
        a_neq * m.H_hat.middleRows((k - 1) * h.nx(), h.nx());
    b.segment((k - 1) * nc, nc) =
        b_neq - a_neq * off.segment((k - 1) * h.nx(), h.nx());
  }
  return {a, b};
}

std::pair<MatrixXd, VectorXd> power_constraint_terms(const Horizon& h,
                                                     const HorizonMatrices& m,
                                                     const VectorXd& rbar,
                                                     int n, int joint) {
  if (n < 0 || n >= h.N) throw std::invalid_argument("power terms: n out of range");
  if (rbar.size() != h.na()) throw std::invalid_argument("power terms: rbar size");
  const int dim = h.N * h.nu();
  const VelocityMap v = velocity_map(h, m, n);
  MatrixXd e = MatrixXd::Zero(dim, dim);
  VectorXd chi = VectorXd::Zero(dim);
  for (int j = 0; j < h.na(); ++j) {
    if (joint >= 0 && j != joint) continue;
    const int k = n * h.nu() + j;
    e.row(k) += 0.5 * v.G.row(j);
    e.col(k) += 0.5 * v.G.row(j).transpose();
    e(k, k) += rbar(j);
    chi(k) += v.beta(j);
  }
  return {e, chi};
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::C1Dynamic:
      return "C1";
    case Variant::C2StaticExact:
      return "C2";
    case Variant::C3StaticApprox:
      return "C3";
  }
  return "?";
}

Variant variant_from_string(const std::string& s) {
  if (s == "C1" || s == "C1_dynamic") return Variant::C1Dynamic;
  if (s == "C2" || s == "C2_static_exact") return Variant::C2StaticExact;
  if (s == "C3" || s == "C3_static_approx") return Variant::C3StaticApprox;
  throw std::invalid_argument("unknown controller variant: " + s);
}

optim::QPProblem build_controller(Variant v, const Horizon& h,
                                  const HorizonMatrices& m,
                                  const ActuatorLimits& lim,
                                  const model::PowerBudget& budget) {
  const int N = h.N, nu = h.nu(), na = h.na();
  const int dim = N * nu;
  budget.validate();
  if (budget.size() != na) throw std::invalid_argument("build_controller: budget size");
  optim::QPProblem p(dim);
  p.hessian = 2.0 * m.Z;
  p.linear = m.z;
  p.constant = m.c_z;

  std::vector<VelocityMap> vel;
  vel.reserve(N + 1);
  for (int n = 0; n < N; ++n) vel.push_back(velocity_map(h, m, n));
  {
    const int nx = h.nx(), nq = h.nq();
    VelocityMap last;
    last.G = h.S.transpose() * m.H_hat.block((N - 1) * nx + nq, 0, nq, dim);
    last.beta = h.S.transpose() * (m.x0_bar + m.g_bar).segment((N - 1) * nx + nq, nq);
    vel.push_back(std::move(last));
  }

  std::vector<Eigen::Triplet<double>> trip;
  std::vector<double> lo, hi;
  // Speed limit at k = 1..N.
  for (int k = 1; k <= N; ++k) {
    for (int j = 0; j < na; ++j) {
      append_range(trip, lo, hi, sparse_row(vel[k].G, j),
                   -lim.qdot_max - vel[k].beta(j), lim.qdot_max - vel[k].beta(j));
    }
  }
  // Torque-speed curve |u + (u_stall/qdot_max) qdot| <= u_stall at n = 0..N-1.
  const double slope = lim.u_stall / lim.qdot_max;
  for (int n = 0; n < N; ++n) {
    for (int j = 0; j < na; ++j) {
      SparseVec row = slope * sparse_row(vel[n].G, j);
      row.coeffRef(n * nu + j) += 1.0;
      const double off = slope * vel[n].beta(j);
      append_range(trip, lo, hi, row, -lim.u_stall - off, lim.u_stall - off);
    }
  }
  p.range_rows = optim::SparseRows(static_cast<Eigen::Index>(lo.size()), dim);
  p.range_rows.setFromTriplets(trip.begin(), trip.end());
  p.range_lo = Eigen::Map<VectorXd>(lo.data(), static_cast<Eigen::Index>(lo.size()));
  p.range_hi = Eigen::Map<VectorXd>(hi.data(), static_cast<Eigen::Index>(hi.size()));

  p.lower = VectorXd::Constant(dim, -lim.u_bar);
  p.upper = VectorXd::Constant(dim, lim.u_bar);
  const VectorXd& rbar = budget.normalized_resistance;
  switch (v) {
    case Variant::C3StaticApprox: {
      for (int n = 0; n < N; ++n) {
        for (int j = 0; j < na; ++j) {
          const double ub = std::min(
              lim.u_bar, powersat::powerlim::psat_approx_limit(budget.per_joint_limit(j),
                                                     budget.no_load_speed(j)));
          p.upper(n * nu + j) = ub;
          if (lim.c3_symmetric) p.lower(n * nu + j) = -ub;
        }
      }
      break;
    }
    case Variant::C2StaticExact: {
      for (int n = 0; n < N; ++n) {
        for (int j = 0; j < na; ++j) {
          optim::QuadConstraint qc;
          qc.e = QuadForm(dim);
          add_power_terms(qc.e, dim, n * nu + j, sparse_row(vel[n].G, j), rbar(j));
          qc.chi = unit(dim, n * nu + j) * vel[n].beta(j);
          qc.c = budget.per_joint_limit(j);
          p.quad.push_back(std::move(qc));
        }
      }
      break;
    }
    case Variant::C1Dynamic: {
      for (int n = 0; n < N; ++n) {
        optim::QuadConstraint qc;
        qc.e = QuadForm(dim);
        VectorXd chi = VectorXd::Zero(dim);
        for (int j = 0; j < na; ++j) {
          add_power_terms(qc.e, dim, n * nu + j, sparse_row(vel[n].G, j), rbar(j));
          chi(n * nu + j) = vel[n].beta(j);
        }
        qc.chi = chi.sparseView(0.0, 0.0);
        qc.c = budget.aggregate_limit;
        p.quad.push_back(std::move(qc));
      }
      break;
    }
  }
  return p;
}

FinConfig default_fin_config() {
  FinConfig c;
  c.x0 = VectorXd::Zero(8);
  c.x0.head(4) << 0.5, -0.16, 0.08, 0.28;
  const double dt = c.dt;
  c.lambda_diag = VectorXd(8);
  c.lambda_diag << 2, 2, 2, 2, dt, dt, dt, dt;
  c.lambda_diag *= 0.5 / (dt * dt);
  c.lambda_f_diag = VectorXd(8);
  c.lambda_f_diag << 0.1, 0.1, 0.1, 0.1, dt, dt, dt, dt;
  c.lambda_f_diag *= 10.0 / (dt * dt);
  c.phi_diag = VectorXd::Ones(4);
  return c;
}

void from_json(const nlohmann::json& j, FinConfig& c) {
  c = default_fin_config();
  if (j.contains("plant")) j.at("plant").get_to(c.plant);
  if (j.contains("m")) c.plant.m = j.at("m").get<double>();
  if (j.contains("d")) c.plant.d = j.at("d").get<double>();
  if (j.contains("u_bar")) c.limits.u_bar = j.at("u_bar").get<double>();
  if (j.contains("u_stall")) c.limits.u_stall = j.at("u_stall").get<double>();
  if (j.contains("qdot_max")) c.limits.qdot_max = j.at("qdot_max").get<double>();
  if (j.contains("c3_symmetric")) c.limits.c3_symmetric = j.at("c3_symmetric").get<bool>();
  if (j.contains("R_bar")) c.R_bar = j.at("R_bar").get<double>();
  if (j.contains("P_max")) c.P_max = j.at("P_max").get<double>();
  if (j.contains("dt")) c.dt = j.at("dt").get<double>();
  if (j.contains("N")) c.N = j.at("N").get<int>();
  if (j.contains("x0")) c.x0 = read_vec(j.at("x0"));
  if (j.contains("Lambda")) c.lambda_diag = read_vec(j.at("Lambda"));
  if (j.contains("Lambda_f")) c.lambda_f_diag = read_vec(j.at("Lambda_f"));
  if (j.contains("Phi")) c.phi_diag = read_vec(j.at("Phi"));
  if (j.contains("receding")) c.receding = j.at("receding").get<bool>();
  if (j.contains("receding_steps")) c.receding_steps = j.at("receding_steps").get<int>();
  if (j.contains("receding_horizon")) c.receding_horizon = j.at("receding_horizon").get<int>();
  if (c.P_max < 0.0 || c.R_bar < 0.0 || c.dt <= 0.0 || c.N < 1) {
    throw std::invalid_argument("fin config: P_max, R_bar must be >= 0, dt > 0, N >= 1");
  }
}

Horizon make_fin_horizon(const FinConfig& c) {
  const model::LinearPlant plant = model::fin_system_model(c.plant);
  const model::StateSpace ss = model::linear_to_statespace(plant);
  const Discrete d = discretize_zoh(ss.F, ss.H, ss.g, c.dt);
  Horizon h;
  h.N = c.N;
  h.dt = c.dt;
  h.F = d.F;
  h.H = d.H;
  h.g = d.g;
  h.S = plant.actuator_selection();
  h.Lambda = c.lambda_diag.asDiagonal();
  h.Lambda_f = c.lambda_f_diag.asDiagonal();
  h.Phi = c.phi_diag.asDiagonal();
  h.x0 = c.x0;
  h.validate();
  return h;
}

model::PowerBudget fin_budget(const FinConfig& c) {
  return model::PowerBudget::uniform(c.plant.n, c.P_max, c.R_bar,
                                     c.limits.qdot_max);
}

const ControllerRun& FinResult::get(Variant v) const {
  for (const auto& r : runs) {
    if (r.variant == v) return r;
  }
  throw std::out_of_range("FinResult: variant not run");
}

namespace {

optim::NonconvexOptions fin_solver_options() {
  optim::NonconvexOptions o;
  o.max_outer = 100;
  o.step_tol = 1e-8;
  o.obj_tol = 1e-10;
  return o;
}

// Open-loop playback of U through the continuous plant, with the cost-to-go
// from the discrete model logged as "J".
sim::TrajectoryLog playback(const FinConfig& c, const Horizon& h,
                            const VectorXd& U) {
  const model::LinearPlant plant = model::fin_system_model(c.plant);
  const model::PowerBudget budget = fin_budget(c);
  const int nu = h.nu();
  auto ctrl = [&](double t, const model::State&) -> VectorXd {
    const long k = std::lround(t / h.dt);
    if (k >= h.N) return VectorXd::Zero(nu);
    return U.segment(k * nu, nu);
  };
  model::State x0{h.x0.head(h.nq()), h.x0.tail(h.nq())};
  sim::SimOptions opts{h.N * h.dt, h.dt};
  sim::TrajectoryLog log =
      sim::simulate(plant, ctrl, powersat::sim::identity_limiter(), budget, x0, opts);

  // Cost-to-go J_n over the discrete rollout.
  const VectorXd X = rollout(h.F, h.H, h.g, h.x0, U);
  std::vector<double> ctg(h.N + 1, 0.0);
  for (int n = h.N; n >= 0; --n) {
    double stage = 0.0;
    if (n >= 1) {
      const VectorXd dx = X.segment((n - 1) * h.nx(), h.nx()) - ref_state(h, n);
      stage += dx.dot(block_weight(h, n) * dx);
    }
    if (n < h.N) {
      const VectorXd du = U.segment(n * nu, nu) - ref_input(h, n);
      stage += du.dot(h.Phi * du);
    }
    ctg[n] = stage + (n < h.N ? ctg[n + 1] : 0.0);
  }
  log.scalars["J"] = ctg;
  return log;
}

ControllerRun solve_variant(Variant v, const FinConfig& c, const Horizon& h,
                            const HorizonMatrices& m, const VectorXd* warm) {
  const auto t0 = std::chrono::steady_clock::now();
  const model::PowerBudget budget = fin_budget(c);
  optim::QPProblem p = build_controller(v, h, m, c.limits, budget);
  ControllerRun run;
  run.variant = v;
  if (v == Variant::C3StaticApprox) {
    optim::QPResult r = optim::solve_qp(p, {}, warm);
    run.U = r.y;
    run.status = r.status;
    run.outer_iterations = 1;
  } else {
    VectorXd y0 = warm ? *warm : VectorXd::Zero(p.dim());
    optim::NonconvexResult r =
        optim::solve_qcqp_nonconvex(p, y0, optim::kInf, fin_solver_options());
    run.U = r.y;
    run.status = r.status;
    run.outer_iterations = r.outer_iterations;
  }
  run.cost = p.objective(run.U);
  run.max_violation = p.max_violation(run.U);
  run.seconds = seconds_since(t0);
  return run;
}

FinResult run_receding(const FinConfig& c) {
  FinResult res;
  const int steps = c.receding_steps > 0 ? c.receding_steps : c.N;
  FinConfig sub = c;
  sub.N = c.receding_horizon > 0 ? c.receding_horizon : c.N;
  const model::PowerBudget budget = fin_budget(c);
  for (Variant v : {Variant::C3StaticApprox, Variant::C2StaticExact,
                    Variant::C1Dynamic}) {
    const auto t0 = std::chrono::steady_clock::now();
    Horizon h = make_fin_horizon(sub);
    VectorXd x = c.x0;
    VectorXd warm;
    VectorXd applied(steps * h.nu());
    bool all_ok = true;
    for (int s = 0; s < steps; ++s) {
      h.x0 = x;
      HorizonMatrices m = assemble_cost(h);
      ControllerRun r = solve_variant(v, sub, h, m, warm.size() ? &warm : nullptr);
      all_ok = all_ok && r.status == optim::Status::Optimal;
      const VectorXd u = r.U.head(h.nu());
      applied.segment(s * h.nu(), h.nu()) = u;
      x = h.F * x + h.H * u + h.g;
      warm = VectorXd::Zero(r.U.size());
      warm.head(r.U.size() - h.nu()) = r.U.tail(r.U.size() - h.nu());
    }
    FinConfig full = c;
    full.N = steps;
    Horizon hf = make_fin_horizon(full);
    ControllerRun run;
    run.variant = v;
    run.U = applied;
    run.status = all_ok ? optim::Status::Optimal : optim::Status::MaxIter;
    run.cost = rollout_cost(hf, applied);
    run.log = playback(full, hf, applied);
    run.seconds = seconds_since(t0);
    run.max_violation =
        build_controller(v, hf, assemble_cost(hf), c.limits, budget)
            .max_violation(applied);
    res.runs.push_back(std::move(run));
  }
  return res;
}

}  // namespace

FinResult run_fin_example(const FinConfig& c) {
  if (c.receding) return run_receding(c);
  const Horizon h = make_fin_horizon(c);
  const HorizonMatrices m = assemble_cost(h);
  FinResult res;
  ControllerRun c3 = solve_variant(Variant::C3StaticApprox, c, h, m, nullptr);
  ControllerRun c2 = solve_variant(Variant::C2StaticExact, c, h, m, &c3.U);
  ControllerRun c1 = solve_variant(Variant::C1Dynamic, c, h, m, &c2.U);
  for (ControllerRun* r : {&c1, &c2, &c3}) {
    r->log = playback(c, h, r->U);
    res.runs.push_back(std::move(*r));
  }
  return res;
}

}  // namespace powersat::mpc
