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

#include "powersat/clfqp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "powersat/powerlim.hpp"

namespace powersat::clfqp {
namespace {

constexpr double kPi = 3.14159265358979323846;

double max_abs(const MatrixXd& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

void finish_clf(CLF& c) {
  const MatrixXd r = c.A_cl.transpose() * c.P + c.P * c.A_cl + c.W;
  c.residual = max_abs(r);
  Eigen::SelfAdjointEigenSolver<MatrixXd> ew(c.W, Eigen::EigenvaluesOnly);
  Eigen::SelfAdjointEigenSolver<MatrixXd> ep(c.P, Eigen::EigenvaluesOnly);
  c.epsilon = ew.eigenvalues().minCoeff() / ep.eigenvalues().maxCoeff();
}

optim::SparseVec unit(int n, int i) {
  optim::SparseVec e(n);
  e.insert(i) = 1.0;
  return e;
}

}  // namespace

Reference Reference::constant(const VectorXd& q_star) {
  Reference r;
  const VectorXd zero = VectorXd::Zero(q_star.size());
  r.y = [q_star](double) { return q_star; };
  r.yd = [zero](double) { return zero; };
  r.ydd = [zero](double) { return zero; };
  return r;
}

VectorXd feedback_linearize(const model::LagrangianModel& m,
                            const model::State& x, const VectorXd& ydd_ref,
                            const VectorXd& u_aux) {
  const MatrixXd mass = m.mass(x.q);
  Eigen::FullPivLU<MatrixXd> lu(mass);
  if (!lu.isInvertible()) throw std::runtime_error("feedback_linearize: singular decoupling matrix");
  return mass * (u_aux + ydd_ref) + m.coriolis(x.q, x.qdot) * x.qdot +
         m.damping() * x.qdot + m.gravity(x.q);
}

VectorXd task_error(const model::State& x, double t, const Reference& ref) {
  const int n = static_cast<int>(x.q.size());
  VectorXd e(2 * n);
  e << x.q - ref.y(t), x.qdot - ref.yd(t);
  return e;
}

MatrixXd closed_loop_error_matrix(const MatrixXd& K_p, const MatrixXd& K_d) {
  const Eigen::Index n = K_p.rows();
  MatrixXd a = MatrixXd::Zero(2 * n, 2 * n);
  a.topRightCorner(n, n).setIdentity();
  a.bottomLeftCorner(n, n) = -K_p;
  a.bottomRightCorner(n, n) = -K_d;
  return a;
}

CLF build_clf(const MatrixXd& K_p, const MatrixXd& K_d, const MatrixXd& W) {
  CLF c;
  c.A_cl = closed_loop_error_matrix(K_p, K_d);
  Eigen::EigenSolver<MatrixXd> es(c.A_cl, false);
  if (es.eigenvalues().real().maxCoeff() >= 0.0) {
    throw std::invalid_argument("build_clf: closed-loop error matrix is not Hurwitz");
  }
  c.W = W;
  c.P = optim::solve_lyapunov(c.A_cl, W);
  finish_clf(c);
  return c;
}

CLF clf_from_parametrized_p(int n, double wn, double zeta) {
  const MatrixXd I = MatrixXd::Identity(n, n);
  const MatrixXd kp = wn * wn * I;
  const MatrixXd kd = 2.0 * zeta * wn * I;
  const double off = 2.0 * wn * std::sqrt(1.0 - zeta * zeta);
  CLF c;
  c.A_cl = closed_loop_error_matrix(kp, kd);
  c.P.resize(2 * n, 2 * n);
  c.P << 2.0 * zeta * wn * wn * I, off * I, off * I, 2.0 * zeta * I;
  c.W = -(c.A_cl.transpose() * c.P + c.P * c.A_cl);
  c.W = 0.5 * (c.W + c.W.transpose()).eval();
  const bool p_pd = Eigen::LLT<MatrixXd>(c.P).info() == Eigen::Success;
  const bool w_pd = Eigen::LLT<MatrixXd>(c.W).info() == Eigen::Success;
  if (!p_pd || !w_pd) return build_clf(kp, kd, MatrixXd::Identity(2 * n, 2 * n));
  c.w_from_p = true;
  finish_clf(c);
  return c;
}

ClfRow clf_row(const model::LagrangianModel& m, const model::State& x, double t,
               const CLF& clf, const Reference& ref) {
  const int n = m.dof();
  const VectorXd e = task_error(x, t, ref);
  const MatrixXd minv = m.mass(x.q).fullPivLu().inverse();
  VectorXd f(2 * n);
  f << e.tail(n),
      -minv * (m.coriolis(x.q, x.qdot) * x.qdot + m.damping() * x.qdot + m.gravity(x.q)) -
          ref.ydd(t);
  const VectorXd pe = clf.P * e;
  ClfRow r;
  r.a = 2.0 * minv.transpose() * pe.tail(n);
  r.lf = 2.0 * pe.dot(f);
  r.b = -e.dot(clf.W * e) - r.lf;
  r.V = e.dot(pe);
  return r;
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::C1RelaxedDynamic:
      return "C1";
    case Variant::C2RelaxedStatic:
      return "C2";
    case Variant::C3FeedbackLin:
      return "C3";
  }
  return "?";
}

void Params::validate(int n) const {
  if (u_bar.size() != n || rbar.size() != n || Phi.rows() != n || Phi.cols() != n ||
      u0.size() != n) {
    throw std::invalid_argument("clfqp::Params: dimension mismatch");
  }
  if (u_bar.minCoeff() < 0.0) throw std::invalid_argument("clfqp::Params: torque bounds must be >= 0");
  if (rbar.minCoeff() < 0.0 || p_max < 0.0 || !(c_s > 0.0)) {
    throw std::invalid_argument("clfqp::Params: rbar, p_max >= 0 and c_s > 0");
  }
}

SolveResult clfqp_solve(Variant v, const model::LagrangianModel& m,
                        const model::State& x, double t, const CLF& clf,
                        const Reference& ref, const Params& params) {
  const int n = m.dof();
  SolveResult out;
  if (v == Variant::C3FeedbackLin) {
    const VectorXd e = task_error(x, t, ref);
    const VectorXd aux = -params.K_p * e.head(n) - params.K_d * e.tail(n);
    out.u = feedback_linearize(m, x, ref.ydd(t), aux);
    return out;
  }
  params.validate(n);
  const ClfRow row = clf_row(m, x, t, clf, ref);
  const int dim = n + 1;
  optim::QPProblem p(dim);
  p.hessian = MatrixXd::Zero(dim, dim);
  p.hessian.topLeftCorner(n, n) = 2.0 * params.Phi;
  p.hessian(n, n) = 2.0 * params.c_s;
  p.linear = VectorXd::Zero(dim);
  p.linear.head(n) = -2.0 * params.Phi * params.u0;
  p.constant = params.u0.dot(params.Phi * params.u0);
  // CLF row with slack, then +-u_i <= u_bar_i.
  MatrixXd a = MatrixXd::Zero(1 + 2 * n, dim);
  VectorXd b(1 + 2 * n);
  a.block(0, 0, 1, n) = row.a.transpose();
  a(0, n) = -1.0;
  b(0) = row.b;
  for (int i = 0; i < n; ++i) {
    a(1 + 2 * i, i) = 1.0;
    a(2 + 2 * i, i) = -1.0;
    b(1 + 2 * i) = params.u_bar(i);
    b(2 + 2 * i) = params.u_bar(i);
  }
  p.a = a.sparseView();
  p.b = b;
  if (v == Variant::C1RelaxedDynamic) {
    optim::QuadConstraint qc;
    qc.e = optim::QuadForm(dim);
    optim::SparseVec chi(dim);
    for (int i = 0; i < n; ++i) {
      if (params.rbar(i) > 0.0) qc.e.add_term(params.rbar(i), unit(dim, i));
      if (x.qdot(i) != 0.0) chi.insert(i) = x.qdot(i);
    }
    qc.chi = chi;
    qc.c = params.p_max;
    p.quad.push_back(std::move(qc));
  } else {
    for (int i = 0; i < n; ++i) {
      optim::QuadConstraint qc;
      qc.e = optim::QuadForm(dim);
      if (params.rbar(i) > 0.0) qc.e.add_term(params.rbar(i), unit(dim, i));
      qc.chi = unit(dim, i) * x.qdot(i);
      qc.c = params.p_max / n;
      p.quad.push_back(std::move(qc));
    }
  }
  const optim::QPResult r = optim::solve_qp(p);
  if (r.status == optim::Status::Infeasible) {
    throw std::runtime_error("clfqp_solve: infeasible (inconsistent torque bounds)");
  }
  out.u = r.y.head(n);
  out.p_s = r.y(n);
  out.status = r.status;
  out.kkt = r.kkt.max();
  out.kkt_parts = r.kkt;
  auto excess_of = [&](const VectorXd& u) {
    double excess = -std::numeric_limits<double>::infinity();
    if (v == Variant::C1RelaxedDynamic) {
      double pw = 0.0;
      for (int i = 0; i < n; ++i) pw += powerlim::motor_power(u(i), x.qdot(i), params.rbar(i));
      return pw - params.p_max;
    }
    for (int i = 0; i < n; ++i) {
      excess = std::max(excess, powerlim::motor_power(u(i), x.qdot(i), params.rbar(i)) -
                                    params.p_max / n);
    }
    return excess;
  };
  double excess = excess_of(out.u);
  if (excess > 0.0) {
    // Interior-point residual left the iterate slightly outside the power
    // set. theta*u is feasible at theta = 0, so bisect toward it and lift the
    // slack to keep the CLF row.
    double lo = 0.0, hi = 1.0;
    for (int k = 0; k < 60; ++k) {
      const double mid = 0.5 * (lo + hi);
      (excess_of(mid * out.u) <= 0.0 ? lo : hi) = mid;
    }
    out.u *= lo;
    out.p_s = std::max(out.p_s, row.a.dot(out.u) - row.b);
    excess = excess_of(out.u);
  }
  out.power_excess = excess;
  return out;
}

Example5Result run_example5(const Example5Config& cfg) {
  const model::LagrangianModel robot = model::two_link_model(cfg.robot);
  const int n = 2;
  Example5Result res;
  res.clf = clf_from_parametrized_p(n, cfg.wn, cfg.zeta);
  const VectorXd q0 = cfg.q0.size() ? cfg.q0 : VectorXd(Eigen::Vector2d(-0.5 * kPi, 0.0));
  const VectorXd q_star =
      cfg.q_star.size() ? cfg.q_star : VectorXd(Eigen::Vector2d(0.5 * kPi, 0.0));
  const Reference ref = Reference::constant(q_star);
  Params prm;
  prm.u_bar = cfg.u_bar.size() ? cfg.u_bar : VectorXd(Eigen::Vector2d(2000.0, 1000.0));
  prm.rbar = cfg.rbar.size() ? cfg.rbar : VectorXd(Eigen::Vector2d(0.0833e-3, 0.222e-3));
  prm.p_max = cfg.p_max;
  prm.c_s = cfg.c_s;
  prm.Phi = MatrixXd::Identity(n, n);
  prm.u0 = VectorXd::Zero(n);
  prm.K_p = cfg.wn * cfg.wn * MatrixXd::Identity(n, n);
  prm.K_d = 2.0 * cfg.zeta * cfg.wn * MatrixXd::Identity(n, n);

  model::PowerBudget budget;
  budget.per_joint_limit = VectorXd::Constant(n, cfg.p_max / n);
  budget.normalized_resistance = prm.rbar;
  budget.no_load_speed = VectorXd::Constant(n, std::numeric_limits<double>::infinity());
  budget.aggregate_limit = cfg.p_max;

  for (Variant v : {Variant::C1RelaxedDynamic, Variant::C2RelaxedStatic,
                    Variant::C3FeedbackLin}) {
    Example5Run run;
    run.variant = v;
    SolveResult last;
    auto ctrl = [&](double t, const model::State& x) {
      last = clfqp_solve(v, robot, x, t, res.clf, ref, prm);
      run.max_kkt = std::max(run.max_kkt, last.kkt);
      if (v != Variant::C3FeedbackLin) {
        run.max_power_excess = std::max(run.max_power_excess, last.power_excess);
        run.all_optimal = run.all_optimal && last.status == optim::Status::Optimal;
      }
      return last.u;
    };
    auto probe = [&](double t, const model::State& x) {
      const VectorXd e = task_error(x, t, ref);
      return std::map<std::string, double>{
          {"V", e.dot(res.clf.P * e)}, {"p_s", last.p_s}, {"kkt", last.kkt}};
    };
    const sim::Limiter lim =
        v == Variant::C3FeedbackLin
            ? sim::psat_limiter(budget, powerlim::PsatMode::ExactWithLosses)
            : sim::identity_limiter();
    run.log = sim::simulate(robot, ctrl, lim, budget, {q0, VectorXd::Zero(n)},
                            {cfg.T, cfg.dt}, probe);
    run.settling_joint1 = sim::settling_time(run.log.times, run.log.position(0), q_star(0), 5.0);
    for (double q2 : run.log.position(1)) {
      run.max_dev_joint2 = std::max(run.max_dev_joint2, std::abs(q2 - q_star(1)));
    }
    res.runs.push_back(std::move(run));
  }
  return res;
}

}  // namespace powersat::clfqp
