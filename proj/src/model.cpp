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

#include "powersat/model.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

#include <nlohmann/json.hpp>

namespace powersat::model {
namespace {

constexpr double kSymTol = 1e-10;

void require_symmetric(const MatrixXd& m, const char* name) {
  if (m.rows() != m.cols()) {
    throw std::invalid_argument(std::string(name) + " must be square");
  }
  double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > kSymTol * scale) {
    throw std::invalid_argument(std::string(name) + " must be symmetric");
  }
}

double min_eig(const MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

}  // namespace

LinearPlant::LinearPlant(MatrixXd mass, MatrixXd damping, MatrixXd stiffness,
                         MatrixXd actuator_selection, VectorXd gravity_offset)
    : mass_(std::move(mass)),
      damping_(std::move(damping)),
      stiffness_(std::move(stiffness)),
      selection_(std::move(actuator_selection)),
      gravity_(std::move(gravity_offset)) {
  const Eigen::Index n = mass_.rows();
  require_symmetric(mass_, "mass");
  require_symmetric(damping_, "damping");
  require_symmetric(stiffness_, "stiffness");
  if (damping_.rows() != n || stiffness_.rows() != n || gravity_.size() != n ||
      selection_.rows() != n) {
    throw std::invalid_argument("LinearPlant: dimension mismatch");
  }
  if (min_eig(mass_) <= 0.0) {
    throw std::invalid_argument("LinearPlant: mass must be positive definite");
  }
  double scale = std::max(1.0, damping_.cwiseAbs().maxCoeff());
  if (min_eig(damping_) < -kSymTol * scale) {
    throw std::invalid_argument("LinearPlant: damping must be PSD");
  }
  scale = std::max(1.0, stiffness_.cwiseAbs().maxCoeff());
  if (min_eig(stiffness_) < -kSymTol * scale) {
    throw std::invalid_argument("LinearPlant: stiffness must be PSD");
  }
  const Eigen::Index na = selection_.cols();
  if (na > n) throw std::invalid_argument("LinearPlant: too many actuators");
  MatrixXd expected = MatrixXd::Zero(n, na);
  expected.bottomRows(na).setIdentity();
  if (selection_ != expected) {
    throw std::invalid_argument("LinearPlant: S must be [0; I]");
  }
}

VectorXd LinearPlant::acceleration(const State& x, const VectorXd& u) const {
  VectorXd rhs = selection_ * u - damping_ * x.qdot - stiffness_ * x.q - gravity_;
  return mass_.llt().solve(rhs);
}

StateSpace linear_to_statespace(const LinearPlant& plant) {
  const int n = plant.dof();
  Eigen::FullPivLU<MatrixXd> lu(plant.mass());
  if (!lu.isInvertible()) throw std::runtime_error("singular mass matrix");
  StateSpace ss;
  ss.F = MatrixXd::Zero(2 * n, 2 * n);
  ss.F.topRightCorner(n, n).setIdentity();
  ss.F.bottomLeftCorner(n, n) = -lu.solve(plant.stiffness());
  ss.F.bottomRightCorner(n, n) = -lu.solve(plant.damping());
  ss.H = MatrixXd::Zero(2 * n, plant.n_actuated());
  ss.H.bottomRows(n) = lu.solve(plant.actuator_selection());
  ss.g = VectorXd::Zero(2 * n);
  ss.g.tail(n) = -lu.solve(plant.gravity_offset());
  return ss;
}

LagrangianModel::LagrangianModel(int dof, MassFn mass, CoriolisFn coriolis,
                                 GravityFn gravity, MatrixXd damping,
                                 PotentialFn potential)
    : dof_(dof),
      mass_(std::move(mass)),
      coriolis_(std::move(coriolis)),
      gravity_(std::move(gravity)),
      damping_(std::move(damping)),
      potential_(std::move(potential)) {
  if (dof_ <= 0 || damping_.rows() != dof_ || damping_.cols() != dof_) {
    throw std::invalid_argument("LagrangianModel: dimension mismatch");
  }
  if (!mass_ || !coriolis_ || !gravity_) {
    throw std::invalid_argument("LagrangianModel: missing dynamics function");
  }
}

double LagrangianModel::potential_energy(const VectorXd& q) const {
  if (!potential_) throw std::logic_error("model has no potential function");
  return potential_(q);
}

double LagrangianModel::kinetic_energy(const State& x) const {
  return 0.5 * x.qdot.dot(mass_(x.q) * x.qdot);
}

VectorXd LagrangianModel::acceleration(const State& x, const VectorXd& u) const {
  VectorXd rhs = u - coriolis_(x.q, x.qdot) * x.qdot - damping_ * x.qdot -
                 gravity_(x.q);
  return mass_(x.q).llt().solve(rhs);
}

LagrangianModel LagrangianModel::with_damping(MatrixXd damping) const {
  return LagrangianModel(dof_, mass_, coriolis_, gravity_, std::move(damping),
                         potential_);
}

LagrangianModel two_link_model(const TwoLinkParams& p) {
  const double lc1 = 0.5 * p.h1;
  const double lc2 = 0.5 * p.h2;
  const double a = p.m2 * p.h1 * lc2;
  const double b = p.I1 + p.I2 + p.m2 * p.h1 * p.h1;

  auto mass = [=](const VectorXd& q) {
    const double c2 = std::cos(q(1));
    MatrixXd m(2, 2);
    m << b + 2.0 * a * c2, p.I2 + a * c2, p.I2 + a * c2, p.I2;
    return m;
  };
  auto coriolis = [=](const VectorXd& q, const VectorXd& qd) {
    const double h = -a * std::sin(q(1));
    MatrixXd c(2, 2);
    c << h * qd(1), h * (qd(0) + qd(1)), -h * qd(0), 0.0;
    return c;
  };
  auto gravity = [=](const VectorXd& q) {
    const double c1 = std::cos(q(0));
    const double c12 = std::cos(q(0) + q(1));
    VectorXd g(2);
    g << (p.m1 * lc1 + p.m2 * p.h1) * p.g * c1 + p.m2 * lc2 * p.g * c12,
        p.m2 * lc2 * p.g * c12;
    return g;
  };
  auto potential = [=](const VectorXd& q) {
    return (p.m1 * lc1 + p.m2 * p.h1) * p.g * std::sin(q(0)) +
           p.m2 * lc2 * p.g * std::sin(q(0) + q(1));
  };
  MatrixXd damping = Eigen::Vector2d(p.d1, p.d2).asDiagonal();
  return LagrangianModel(2, mass, coriolis, gravity, damping, potential);
}

LinearPlant fin_system_model(const FinParams& p) {
  if (p.m <= 0.0 || p.d < 0.0 || p.n <= 0) {
    throw std::invalid_argument("fin_system_model: invalid parameters");
  }
  const int n = p.n;
  return LinearPlant(p.m * MatrixXd::Identity(n, n),
                     p.d * MatrixXd::Identity(n, n), MatrixXd::Zero(n, n),
                     MatrixXd::Identity(n, n), VectorXd::Zero(n));
}

void PowerBudget::validate() const {
  const Eigen::Index n = per_joint_limit.size();
  if (normalized_resistance.size() != n || no_load_speed.size() != n) {
    throw std::invalid_argument("PowerBudget: size mismatch");
  }
  if ((n > 0 && (per_joint_limit.minCoeff() < 0.0 ||
                 normalized_resistance.minCoeff() < 0.0 ||
                 no_load_speed.minCoeff() < 0.0)) ||
      aggregate_limit < 0.0) {
    throw std::invalid_argument("PowerBudget: entries must be nonnegative");
  }
}

PowerBudget PowerBudget::uniform(int n, double aggregate, double rbar,
                                 double vbar) {
  PowerBudget b;
  b.per_joint_limit = VectorXd::Constant(n, aggregate / n);
  b.normalized_resistance = VectorXd::Constant(n, rbar);
  b.no_load_speed = VectorXd::Constant(n, vbar);
  b.aggregate_limit = aggregate;
  b.validate();
  return b;
}

double skew_symmetry_residual(const LagrangianModel& model, const VectorXd& q,
                              const VectorXd& qdot, double fd_step) {
  MatrixXd mdot = (model.mass(q + fd_step * qdot) -
                   model.mass(q - fd_step * qdot)) / (2.0 * fd_step);
  MatrixXd n = 0.5 * mdot - model.coriolis(q, qdot);
  return std::abs(qdot.dot(n * qdot));
}

namespace {

template <typename T>
void read_opt(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

VectorXd read_vec(const nlohmann::json& j) {
  std::vector<double> v = j.get<std::vector<double>>();
  return Eigen::Map<VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

void from_json(const nlohmann::json& j, TwoLinkParams& p) {
  read_opt(j, "m1", p.m1);
  read_opt(j, "m2", p.m2);
  read_opt(j, "I1", p.I1);
  read_opt(j, "I2", p.I2);
  read_opt(j, "h1", p.h1);
  read_opt(j, "h2", p.h2);
  read_opt(j, "g", p.g);
  if (j.contains("D")) {
    auto d = j.at("D").get<std::vector<double>>();
    if (d.size() != 2) throw std::invalid_argument("D must have 2 entries");
    p.d1 = d[0];
    p.d2 = d[1];
  }
}

void from_json(const nlohmann::json& j, FinParams& p) {
  read_opt(j, "m", p.m);
  read_opt(j, "d", p.d);
  read_opt(j, "n", p.n);
}

void from_json(const nlohmann::json& j, PowerBudget& b) {
  b.per_joint_limit = read_vec(j.at("P_bar"));
  const Eigen::Index n = b.per_joint_limit.size();
  b.normalized_resistance =
      j.contains("R_bar") ? read_vec(j.at("R_bar")) : VectorXd::Zero(n);
  b.no_load_speed =
      j.contains("v_bar") ? read_vec(j.at("v_bar")) : VectorXd::Zero(n);
  b.aggregate_limit = j.contains("P_max") ? j.at("P_max").get<double>()
                                          : b.per_joint_limit.sum();
  b.validate();
}

}  // namespace powersat::model
