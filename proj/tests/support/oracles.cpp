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

#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "powersat/lincontrol.hpp"
#include "powersat/model.hpp"
#include "powersat/mpc.hpp"
#include "powersat/powerlim.hpp"

namespace powersat::testing {

namespace {

MatrixXd gaussian(int r, int c, std::mt19937_64& rng) {
  std::normal_distribution<double> n01;
  MatrixXd m(r, c);
  for (int j = 0; j < c; ++j)
    for (int i = 0; i < r; ++i) m(i, j) = n01(rng);
  return m;
}

double uniform(double lo, double hi, std::mt19937_64& rng) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

int uniform_int(int lo, int hi, std::mt19937_64& rng) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

MatrixXd orthogonal(int n, std::mt19937_64& rng) {
  Eigen::HouseholderQR<MatrixXd> qr(gaussian(n, n, rng));
  return qr.householderQ() * MatrixXd::Identity(n, n);
}

MatrixXd with_eigenvalues(const VectorXd& lam, std::mt19937_64& rng) {
  const MatrixXd q = orthogonal(static_cast<int>(lam.size()), rng);
  MatrixXd m = q * lam.asDiagonal() * q.transpose();
  return 0.5 * (m + m.transpose());
}

}  // namespace

MatrixXd random_spd(int n, double lo, double hi, std::mt19937_64& rng) {
  VectorXd lam(n);
  for (int i = 0; i < n; ++i) lam(i) = uniform(lo, hi, rng);
  return with_eigenvalues(lam, rng);
}

VectorXd box_qp_oracle(const optim::QPProblem& p, int max_iter) {
  const int n = p.dim();
  const double L = Eigen::SelfAdjointEigenSolver<MatrixXd>(p.hessian).eigenvalues().maxCoeff();
  auto project = [&](VectorXd y) {
    if (p.lower.size()) y = y.cwiseMax(p.lower);
    if (p.upper.size()) y = y.cwiseMin(p.upper);
    return y;
  };
  VectorXd y = project(VectorXd::Zero(n));
  for (int k = 0; k < max_iter; ++k) {
    VectorXd next = project(y - (p.hessian * y + p.linear) / L);
    const double step = (next - y).lpNorm<Eigen::Infinity>();
    y = next;
    if (step <= 1e-15 * (1.0 + y.lpNorm<Eigen::Infinity>())) break;
  }
  return y;
}

VectorXd dual_qp_oracle(const optim::QPProblem& p, int max_iter) {
  const MatrixXd A = MatrixXd(p.a);
  const int m = static_cast<int>(A.rows());
  const int k = static_cast<int>(p.quad.size());
  std::vector<MatrixXd> E;
  std::vector<VectorXd> chi;
  for (const auto& q : p.quad) {
    E.push_back(q.e.dense());
    chi.push_back(VectorXd(q.chi));
  }

  auto primal = [&](const VectorXd& z) {
    MatrixXd K = p.hessian;
    VectorXd rhs = -(p.linear + A.transpose() * z.head(m));
    for (int j = 0; j < k; ++j) {
      K += 2.0 * z(m + j) * E[j];
      rhs -= z(m + j) * chi[j];
    }
    return VectorXd(K.llt().solve(rhs));
  };
  auto residuals = [&](const VectorXd& y) {
    VectorXd g(m + k);
    g.head(m) = A * y - p.b;
    for (int j = 0; j < k; ++j) g(m + j) = p.quad[j].eval(y);
    return g;
  };
  auto dual = [&](const VectorXd& z, const VectorXd& y) {
    return 0.5 * y.dot(p.hessian * y) + p.linear.dot(y) + z.dot(residuals(y));
  };

  // Accelerated, with a restart whenever the dual value drops. Stops once y
  // is feasible to 1e-11 and the duality gap z'g(y) is below 1e-11.
  VectorXd z = VectorXd::Zero(m + k), z_prev = z;
  VectorXd y = primal(z);
  double d = dual(z, y);
  double t = 1.0, theta = 1.0;
  for (int it = 0; it < max_iter; ++it) {
    const double theta_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * theta * theta));
    const VectorXd w = (z + ((theta - 1.0) / theta_next) * (z - z_prev)).cwiseMax(0.0);
    const VectorXd yw = primal(w);
    const double dw = dual(w, yw);
    const VectorXd g = residuals(yw);
    VectorXd zn, yn;
    double dn = 0.0;
    for (int bt = 0; bt < 100; ++bt) {
      zn = (w + t * g).cwiseMax(0.0);
      yn = primal(zn);
      dn = dual(zn, yn);
      const VectorXd dz = zn - w;
      if (dn >= dw + g.dot(dz) - dz.squaredNorm() / (2.0 * t) - 1e-15 * (1.0 + std::abs(dw))) break;
      t *= 0.5;
    }
    z_prev = z;
    theta = dn < d ? 1.0 : theta_next;
    z = zn;
    y = yn;
    d = dn;
    t *= 1.1;
    const VectorXd r = residuals(y);
    const double scale = 1.0 + std::abs(d);
    if (r.maxCoeff() <= 1e-11 * scale && std::abs(z.dot(r)) <= 1e-11 * scale) break;
  }
  return y;
}

ConvexSuite run_convex_suite(int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01;
  ConvexSuite s;
  for (int i = 0; i < count; ++i) {
    const bool box = i % 2 == 0;
    const int n = uniform_int(3, 20, rng);
    optim::QPProblem p(n);
    p.hessian = random_spd(n, 0.5, 10.0, rng);
    for (int j = 0; j < n; ++j) p.linear(j) = 3.0 * n01(rng);
    VectorXd y_opt;
    if (box) {
      p.lower.resize(n);
      p.upper.resize(n);
      for (int j = 0; j < n; ++j) {
        p.lower(j) = -uniform(0.1, 1.0, rng);
        p.upper(j) = uniform(0.1, 1.0, rng);
      }
      y_opt = box_qp_oracle(p);
    } else {
      const int m = uniform_int(1, n - 2, rng);
      VectorXd y0(n);
      for (int j = 0; j < n; ++j) y0(j) = uniform(-1.0, 1.0, rng);
      const MatrixXd A = gaussian(m, n, rng);
      p.a = A.sparseView();
      p.b = A * y0;
      for (int j = 0; j < m; ++j) p.b(j) += uniform(0.05, 0.5, rng);
      if (uniform_int(0, 1, rng)) {
        const MatrixXd E = random_spd(n, 0.1, 2.0, rng);
        VectorXd chi(n);
        for (int j = 0; j < n; ++j) chi(j) = n01(rng);
        optim::QuadConstraint q{optim::QuadForm::from_dense(E), chi.sparseView(), 0.0};
        q.c = y0.dot(E * y0) + chi.dot(y0) + uniform(0.05, 0.5, rng);
        p.quad.push_back(std::move(q));
      }
      y_opt = dual_qp_oracle(p);
    }
    const optim::QPResult r = optim::solve_qp(p);
    ++s.instances;
    if (r.status == optim::Status::Optimal) ++s.optimal;
    s.max_kkt = std::max(s.max_kkt, r.kkt.max());
    const double jo = p.objective(y_opt);
    s.max_gap = std::max(s.max_gap, std::abs(p.objective(r.y) - jo) / (1.0 + std::abs(jo)));
  }
  return s;
}

NonconvexSuite run_nonconvex_suite(int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01;
  NonconvexSuite s;
  for (int i = 0; i < count; ++i) {
    const int n = uniform_int(2, 10, rng);
    optim::QPProblem p(n);
    p.hessian = random_spd(n, 0.5, 5.0, rng);
    for (int j = 0; j < n; ++j) p.linear(j) = 3.0 * n01(rng);
    p.lower = VectorXd::Constant(n, -3.0);
    p.upper = VectorXd::Constant(n, 3.0);
    const int m = uniform_int(0, 3, rng);
    if (m > 0) {
      p.a = gaussian(m, n, rng).sparseView();
      p.b.resize(m);
      for (int j = 0; j < m; ++j) p.b(j) = uniform(0.2, 1.0, rng);
    }
    const int k = uniform_int(1, 2, rng);
    for (int c = 0; c < k; ++c) {
      VectorXd lam(n);
      for (int j = 0; j < n; ++j) lam(j) = uniform(-2.0, 2.0, rng);
      lam(0) = -std::abs(lam(0)) - 0.1;
      lam(n - 1) = std::abs(lam(n - 1)) + 0.1;
      VectorXd chi(n);
      for (int j = 0; j < n; ++j) chi(j) = 0.5 * n01(rng);
      p.quad.push_back({optim::QuadForm::from_dense(with_eigenvalues(lam, rng)),
                        chi.sparseView(), uniform(0.5, 2.0, rng)});
    }
    const optim::NonconvexResult r = optim::solve_qcqp_nonconvex(p, VectorXd::Zero(n), 1.0);
    ++s.instances;
    const double v = p.max_violation(r.y);
    s.max_violation = std::max(s.max_violation, v);
    if (v <= 1e-7) ++s.feasible;
    bool mono = true;
    const auto& h = r.objective_history;
    for (std::size_t j = 1; j < h.size(); ++j) {
      if (h[j] > h[j - 1] + 1e-12 * (1.0 + std::abs(h[j - 1]))) mono = false;
    }
    if (mono) ++s.monotone;
  }
  return s;
}

StructuralSuite run_structural_suite(std::uint64_t seed, int psat_samples) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01;
  StructuralSuite s;

  for (int trial = 0; trial < 1000; ++trial) {
    const int nc = uniform_int(1, 8, rng), na = uniform_int(1, 6, rng);
    const MatrixXd C = gaussian(na, nc, rng);
    lincontrol::IndexSet H;
    for (int i = 0; i < na; ++i)
      if (uniform_int(0, 1, rng)) H.push_back(i);
    const MatrixXd P = lincontrol::nullspace_projector(C, H);
    double e = std::max((P * P - P).cwiseAbs().maxCoeff(),
                        (P - P.transpose()).cwiseAbs().maxCoeff());
    for (int i : H) e = std::max(e, (C.row(i) * P).cwiseAbs().maxCoeff());
    s.projector = std::max(s.projector, e);
  }

  const model::LagrangianModel robot = model::two_link_model();
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::Vector2d q(uniform(-M_PI, M_PI, rng), uniform(-M_PI, M_PI, rng));
    Eigen::Vector2d qd(uniform(-5.0, 5.0, rng), uniform(-5.0, 5.0, rng));
    s.skew = std::max(s.skew, std::abs(model::skew_symmetry_residual(robot, q, qd)));
  }

  const double dt = 1e-3;
  const int fine = 10000;
  auto euler_gap = [&](const MatrixXd& fc, const MatrixXd& hc, const VectorXd& gc) {
    const mpc::Discrete d = mpc::discretize_zoh(fc, hc, gc, dt);
    VectorXd x0(fc.rows()), u(hc.cols());
    for (Eigen::Index i = 0; i < x0.size(); ++i) x0(i) = n01(rng);
    for (Eigen::Index i = 0; i < u.size(); ++i) u(i) = 10.0 * n01(rng);
    VectorXd x = x0;
    const VectorXd drive = hc * u + gc;
    for (int k = 0; k < fine; ++k) x += (dt / fine) * (fc * x + drive);
    return (d.F * x0 + d.H * u + d.g - x).lpNorm<Eigen::Infinity>();
  };
  const model::StateSpace fin = model::linear_to_statespace(model::fin_system_model());
  s.zoh = euler_gap(fin.F, fin.H, VectorXd::Ones(fin.F.rows()));
  for (int trial = 0; trial < 10; ++trial) {
    const int nx = 2 * uniform_int(1, 4, rng), nu = uniform_int(1, nx / 2, rng);
    MatrixXd fc = gaussian(nx, nx, rng);
    const double shift = Eigen::EigenSolver<MatrixXd>(fc).eigenvalues().real().maxCoeff();
    fc -= (shift + 0.5) * MatrixXd::Identity(nx, nx);
    VectorXd gc(nx);
    for (int i = 0; i < nx; ++i) gc(i) = n01(rng);
    s.zoh = std::max(s.zoh, euler_gap(fc, gaussian(nx, nu, rng), gc));
  }

  s.psat_excess = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < psat_samples; ++k) {
    const bool lossy = k % 2 == 1;
    const double u = uniform(-500.0, 500.0, rng);
    double qd = uniform(-10.0, 10.0, rng);
    if (!lossy && std::abs(qd) < 1e-6) qd = 1e-6;
    const double pbar = uniform(0.0, 1000.0, rng);
    const double rbar = lossy ? uniform(1e-4, 0.05, rng) : 0.0;
    const auto mode = lossy ? powerlim::PsatMode::ExactWithLosses : powerlim::PsatMode::ExactLossless;
    const double out = powerlim::psat(u, qd, pbar, rbar, mode);
    s.psat_excess = std::max(s.psat_excess, powerlim::motor_power(out, qd, rbar) - pbar);
    ++s.psat_samples;
  }
  return s;
}

}  // namespace powersat::testing
