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

#include "powersat/lincontrol.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace powersat::lincontrol {
namespace {

MatrixXd inverse_mass(const model::LinearPlant& plant) {
  Eigen::FullPivLU<MatrixXd> lu(plant.mass());
  if (!lu.isInvertible()) throw std::invalid_argument("closed_loop_matrices: singular mass matrix");
  return lu.inverse();
}

void check_shape(const MatrixXd& m, Eigen::Index r, Eigen::Index c,
                 const char* name) {
  if (m.rows() != r || m.cols() != c) {
    throw std::invalid_argument(std::string("DynController: bad shape for ") + name);
  }
}

}  // namespace

MatrixXd DynController::kappa() const {
  MatrixXd k(na(), 2 * n() + nc());
  k << K_p, K_d, C;
  return k;
}

void DynController::validate(const model::LinearPlant& plant) const {
  const int nn = plant.dof(), nna = plant.n_actuated(), ncc = nc();
  check_shape(K_p, nna, nn, "K_p");
  check_shape(K_d, nna, nn, "K_d");
  check_shape(A_c, ncc, ncc, "A_c");
  check_shape(B_p, ncc, nn, "B_p");
  check_shape(B_d, ncc, nn, "B_d");
  check_shape(C, nna, ncc, "C");
  if (antiwindup == AntiWindup::MAW) {
    check_shape(E_c, ncc, nna, "E_c");
    check_shape(E, nna, nna, "E");
  }
}

DynController static_pd(const MatrixXd& K_p, const MatrixXd& K_d) {
  DynController c;
  c.K_p = K_p;
  c.K_d = K_d;
  c.A_c = MatrixXd::Zero(0, 0);
  c.B_p = MatrixXd::Zero(0, K_p.cols());
  c.B_d = MatrixXd::Zero(0, K_p.cols());
  c.C = MatrixXd::Zero(K_p.rows(), 0);
  return c;
}

IndexSet saturating_set(const VectorXd& u, const VectorXd& qdot_a,
                        const model::PowerBudget& budget) {
  if (u.size() != qdot_a.size() || u.size() != budget.size()) {
    throw std::invalid_argument("saturating_set: dimension mismatch");
  }
  IndexSet h;
  for (int i = 0; i < u.size(); ++i) {
    if (powerlim::motor_power(u(i), qdot_a(i), budget.normalized_resistance(i)) >
        budget.per_joint_limit(i)) {
      h.push_back(i);
    }
  }
  return h;
}

MatrixXd nullspace_projector(const MatrixXd& C, const IndexSet& H) {
  const Eigen::Index nc = C.cols();
  if (H.empty()) return MatrixXd::Identity(nc, nc);
  MatrixXd rho(static_cast<Eigen::Index>(H.size()), nc);
  for (std::size_t k = 0; k < H.size(); ++k) {
    if (H[k] < 0 || H[k] >= C.rows()) throw std::out_of_range("nullspace_projector: index");
    rho.row(static_cast<Eigen::Index>(k)) = C.row(H[k]);
  }
  if (nc == 0) return MatrixXd::Zero(0, 0);
  Eigen::JacobiSVD<MatrixXd> svd(rho, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  const double tol = std::max(rho.rows(), nc) * std::numeric_limits<double>::epsilon() *
                     (sv.size() ? sv(0) : 0.0);
  Eigen::Index rank = 0;
  while (rank < sv.size() && sv(rank) > tol) ++rank;
  const MatrixXd vr = svd.matrixV().leftCols(rank);
  MatrixXd p = MatrixXd::Identity(nc, nc) - vr * vr.transpose();
  return 0.5 * (p + p.transpose());
}

VectorXd nominal_rate(const DynController& c, const VectorXd& xc,
                      const VectorXd& q, const VectorXd& qdot) {
  return c.A_c * xc + c.B_p * q + c.B_d * qdot;
}

VectorXd ci_controller_rate(const DynController& c, const VectorXd& xc,
                            const VectorXd& q, const VectorXd& qdot,
                            const IndexSet& H) {
  return nullspace_projector(c.C, H) * nominal_rate(c, xc, q, qdot);
}

MawOutput maw_controller_rate(const DynController& c, const VectorXd& xc,
                              const VectorXd& q, const VectorXd& qdot,
                              const VectorXd& sig) {
  MawOutput out;
  out.rate = nominal_rate(c, xc, q, qdot);
  out.u = c.C * xc + c.K_p * q + c.K_d * qdot;
  if (c.E_c.size()) out.rate += c.E_c * sig;
  if (c.E.size()) out.u += c.E * sig;
  return out;
}

ClosedLoop closed_loop_matrices(const model::LinearPlant& plant,
                                const DynController& c, const IndexSet& H) {
  c.validate(plant);
  const int n = plant.dof(), nc = c.nc(), na = c.na();
  const int nx = 2 * n + nc;
  const MatrixXd minv = inverse_mass(plant);
  const MatrixXd& S = plant.actuator_selection();
  ClosedLoop cl;
  cl.A = MatrixXd::Zero(nx, nx);
  cl.A.block(0, n, n, n).setIdentity();
  cl.A.block(n, 0, n, n) = minv * (S * c.K_p - plant.stiffness());
  cl.A.block(n, n, n, n) = minv * (S * c.K_d - plant.damping());
  cl.A.block(n, 2 * n, n, nc) = minv * S * c.C;
  const MatrixXd pi = c.antiwindup == AntiWindup::CI ? nullspace_projector(c.C, H)
                                                     : MatrixXd::Identity(nc, nc);
  cl.A.block(2 * n, 0, nc, n) = pi * c.B_p;
  cl.A.block(2 * n, n, nc, n) = pi * c.B_d;
  cl.A.block(2 * n, 2 * n, nc, nc) = pi * c.A_c;
  cl.B = MatrixXd::Zero(nx, na);
  if (c.antiwindup == AntiWindup::MAW) {
    cl.B.block(n, 0, n, na) = minv * S * (MatrixXd::Identity(na, na) + c.E);
    cl.B.block(2 * n, 0, nc, na) = c.E_c;
  } else {
    cl.B.block(n, 0, n, na) = minv * S;
  }
  cl.kappa = c.kappa();
  return cl;
}

VectorXd sigma(const VectorXd& x, const model::LinearPlant& plant,
               const DynController& c, const model::PowerBudget& budget,
               powerlim::PsatMode mode) {
  const int n = plant.dof();
  const VectorXd u = c.kappa() * x;
  const VectorXd qdot_a = plant.actuator_selection().transpose() * x.segment(n, n);
  return powerlim::psat_vector(u, qdot_a, budget, mode) - u;
}

MatrixXd CertificateProblem::W() const {
  Eigen::LLT<MatrixXd> llt(Q / alpha);
  if (llt.info() != Eigen::Success) throw std::invalid_argument("CertificateProblem: Q must be PD");
  return llt.solve(MatrixXd::Identity(Q.rows(), Q.cols()));
}

void CertificateProblem::validate() const {
  if (!(alpha > 0.0)) throw std::invalid_argument("CertificateProblem: alpha must be > 0");
  if (!Q.isApprox(Q.transpose(), 1e-12)) throw std::invalid_argument("CertificateProblem: Q not symmetric");
  if (Eigen::LLT<MatrixXd>(Q).info() != Eigen::Success) {
    throw std::invalid_argument("CertificateProblem: Q must be PD");
  }
  for (int i = 0; i < gamma.size(); ++i) {
    if (!(gamma(i) > 0.0 && gamma(i) < 1.0)) {
      throw std::invalid_argument("CertificateProblem: gamma_i must lie in (0, 1)");
    }
  }
}

MatrixXd polytope_rows(const DynController& c, const model::PowerBudget& budget) {
  if (budget.size() != c.na()) throw std::invalid_argument("polytope_rows: budget size");
  MatrixXd h = c.kappa();
  for (int i = 0; i < c.na(); ++i) {
    h.row(i) *= budget.no_load_speed(i) / budget.per_joint_limit(i);
  }
  return h;
}

MatrixXd vertex_gain(const DynController& c, const VectorXd& gamma,
                     const IndexSet& H) {
  const MatrixXd k = c.kappa();
  MatrixXd pi = MatrixXd::Zero(k.rows(), k.cols());
  for (int i : H) pi.row(i) = -(1.0 - gamma(i)) * k.row(i);
  return pi;
}

CertificateReport certificate_check(const model::LinearPlant& plant,
                                    const DynController& c,
                                    const model::PowerBudget& budget,
                                    const CertificateProblem& prob) {
  prob.validate();
  const int na = c.na();
  if (na > 12) throw std::invalid_argument("certificate_check: n_a above 12");
  if (prob.gamma.size() != na || budget.size() != na) {
    throw std::invalid_argument("certificate_check: gamma/budget size");
  }
  CertificateReport rep;
  rep.worst_eigenvalue = -std::numeric_limits<double>::infinity();
  for (unsigned mask = 0; mask < (1u << na); ++mask) {
    IndexSet h;
    for (int i = 0; i < na; ++i) {
      if (mask & (1u << i)) h.push_back(i);
    }
    const ClosedLoop cl = closed_loop_matrices(plant, c, h);
    if (prob.Q.rows() != cl.A.rows()) throw std::invalid_argument("certificate_check: Q size");
    const MatrixXd acl = cl.A + cl.B * vertex_gain(c, prob.gamma, h);
    const MatrixXd l = acl.transpose() * prob.Q + prob.Q * acl;
    const double lmax =
        Eigen::SelfAdjointEigenSolver<MatrixXd>(0.5 * (l + l.transpose()),
                                                Eigen::EigenvaluesOnly)
            .eigenvalues()
            .maxCoeff();
    rep.subsets.push_back(h);
    rep.max_eigenvalues.push_back(lmax);
    if (lmax > rep.worst_eigenvalue) {
      rep.worst_eigenvalue = lmax;
      rep.worst_H = h;
    }
  }
  rep.holds = rep.worst_eigenvalue < -1e-9;
  return rep;
}

EllipsoidReport ellipsoid_in_polytope(const DynController& c,
                                      const model::PowerBudget& budget,
                                      const CertificateProblem& prob) {
  prob.validate();
  const MatrixXd w = prob.W();
  const MatrixXd h = polytope_rows(c, budget);
  EllipsoidReport rep;
  rep.inside = true;
  double worst = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < h.rows(); ++i) {
    const double v = prob.gamma(i) * prob.gamma(i) * h.row(i).dot(w * h.row(i).transpose());
    rep.margins.push_back(1.0 - v);
    if (v > 1.0) rep.inside = false;
    if (v > worst) {
      worst = v;
      rep.binding = i;
    }
  }
  return rep;
}

double roa_volume(const MatrixXd& W) {
  Eigen::LLT<MatrixXd> llt(W);
  if (llt.info() != Eigen::Success) throw std::invalid_argument("roa_volume: W must be PD");
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

sim::TrajectoryLog simulate_closed_loop(const model::LinearPlant& plant,
                                        const DynController& c,
                                        const model::PowerBudget& budget,
                                        const VectorXd& x0,
                                        const ClosedLoopOptions& opts) {
  c.validate(plant);
  const int n = plant.dof(), nc = c.nc();
  if (x0.size() != 2 * n + nc) throw std::invalid_argument("simulate_closed_loop: x0 size");
  if (!(opts.dt > 0.0)) throw std::invalid_argument("simulate_closed_loop: dt must be > 0");
  const MatrixXd& S = plant.actuator_selection();
  const MatrixXd kappa = c.kappa();
  const long steps = std::lround(opts.T / opts.dt);
  sim::TrajectoryLog log;
  for (int i = 0; i < nc; ++i) log.scalars["xc" + std::to_string(i)];
  VectorXd x = x0;
  for (long k = 0; k <= steps; ++k) {
    const double t = k * opts.dt;
    const VectorXd q = x.head(n), qd = x.segment(n, n);
    const VectorXd qd_a = S.transpose() * qd;
    const VectorXd u_lin = kappa * x;
    const VectorXd sig = powerlim::psat_vector(u_lin, qd_a, budget, opts.mode) - u_lin;
    VectorXd u_cmd = u_lin;
    if (c.antiwindup == AntiWindup::MAW && c.E.size()) u_cmd += c.E * sig;
    const VectorXd u_app = powerlim::psat_vector(u_cmd, qd_a, budget, opts.mode);
    const IndexSet h = saturating_set(u_cmd, qd_a, budget);
    log.push(t, {q, qd}, u_cmd, u_app, qd_a, budget.normalized_resistance);
    for (int i = 0; i < nc; ++i) log.scalars["xc" + std::to_string(i)].push_back(x(2 * n + i));
    if (k == steps) break;

    const MatrixXd pi = c.antiwindup == AntiWindup::CI ? nullspace_projector(c.C, h)
                                                       : MatrixXd::Identity(nc, nc);
    const VectorXd ec = c.antiwindup == AntiWindup::MAW && c.E_c.size()
                            ? VectorXd(c.E_c * sig)
                            : VectorXd::Zero(nc);
    auto f = [&](const VectorXd& z) {
      VectorXd dz(z.size());
      const VectorXd zq = z.head(n), zqd = z.segment(n, n), zc = z.tail(nc);
      dz.head(n) = zqd;
      dz.segment(n, n) = plant.acceleration({zq, zqd}, u_app);
      dz.tail(nc) = pi * nominal_rate(c, zc, zq, zqd) + ec;
      return dz;
    };
    const VectorXd k1 = f(x);
    const VectorXd k2 = f(x + 0.5 * opts.dt * k1);
    const VectorXd k3 = f(x + 0.5 * opts.dt * k2);
    const VectorXd k4 = f(x + opts.dt * k3);
    x += (opts.dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!x.allFinite()) throw std::runtime_error("simulate_closed_loop: non-finite state at t = " + std::to_string(t));
  }
  return log;
}

}  // namespace powersat::lincontrol
