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
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "powersat/optim.hpp"

namespace powersat::lincontrol {
namespace {

using model::LinearPlant;
using model::PowerBudget;

LinearPlant one_dof(double k = 0.0) {
  return LinearPlant(MatrixXd::Constant(1, 1, 1.0), MatrixXd::Constant(1, 1, 0.05),
                     MatrixXd::Constant(1, 1, k), MatrixXd::Identity(1, 1), VectorXd::Zero(1));
}

// PID on one joint: xc' = -q, u = ki xc - kp q - kd qd.
DynController pid(double kp, double ki, double kd, AntiWindup aw) {
  DynController c;
  c.A_c = MatrixXd::Zero(1, 1);
  c.B_p = MatrixXd::Constant(1, 1, -1.0);
  c.B_d = MatrixXd::Zero(1, 1);
  c.C = MatrixXd::Constant(1, 1, ki);
  c.K_p = MatrixXd::Constant(1, 1, -kp);
  c.K_d = MatrixXd::Constant(1, 1, -kd);
  c.antiwindup = aw;
  if (aw == AntiWindup::MAW) {
    c.E_c = MatrixXd::Zero(1, 1);
    c.E = MatrixXd::Zero(1, 1);
  }
  return c;
}

// Two-joint plant with a three-state controller, for assembly checks.
struct Rig {
  LinearPlant plant;
  DynController c;
};

Rig random_rig(std::mt19937_64& rng, AntiWindup aw) {
  std::normal_distribution<double> n01;
  auto g = [&](int r, int cc) {
    MatrixXd m(r, cc);
    for (int j = 0; j < cc; ++j)
      for (int i = 0; i < r; ++i) m(i, j) = n01(rng);
    return m;
  };
  MatrixXd S = MatrixXd::Zero(3, 2);
  S.bottomRows(2).setIdentity();
  Rig r{LinearPlant(testing::random_spd(3, 0.5, 2.0, rng), testing::random_spd(3, 0.0, 1.0, rng),
                    testing::random_spd(3, 0.0, 3.0, rng), S, VectorXd::Zero(3)),
        {}};
  r.c.A_c = g(3, 3);
  r.c.B_p = g(3, 3);
  r.c.B_d = g(3, 3);
  r.c.C = g(2, 3);
  r.c.K_p = g(2, 3);
  r.c.K_d = g(2, 3);
  r.c.antiwindup = aw;
  if (aw == AntiWindup::MAW) {
    r.c.E_c = g(3, 2);
    r.c.E = g(2, 2);
  }
  return r;
}

TEST(SaturatingSet, Examples) {
  const PowerBudget b = PowerBudget::uniform(4, 750, 0.0, 4.0);
  EXPECT_TRUE(saturating_set(VectorXd::Constant(4, 10), VectorXd::Ones(4), b).empty());
  EXPECT_EQ(saturating_set(Eigen::Vector4d(200, 0, 0, 0), Eigen::Vector4d(4, 0, 0, 0), b),
            IndexSet{0});
  EXPECT_EQ(saturating_set(VectorXd::Constant(4, 100), VectorXd::Constant(4, 4), b),
            (IndexSet{0, 1, 2, 3}));
}

TEST(NullspaceProjector, EmptySetIsIdentity) {
  const MatrixXd C = MatrixXd::Random(2, 3);
  EXPECT_EQ(nullspace_projector(C, {}), MatrixXd::Identity(3, 3));
}

TEST(NullspaceProjector, RankOneFormula) {
  const MatrixXd c = (MatrixXd(1, 3) << 1.0, -2.0, 0.5).finished();
  const MatrixXd expected =
      MatrixXd::Identity(3, 3) - c.transpose() * c / (c * c.transpose())(0, 0);
  EXPECT_LT((nullspace_projector(c, {0}) - expected).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(NullspaceProjector, RandomAlgebraicProperties) {
  const auto s = testing::run_structural_suite(31, 0);
  EXPECT_LE(s.projector, 1e-10);
}

TEST(NullspaceProjector, FixesVectorsOrthogonalToFrozenRows) {
  std::mt19937_64 rng(32);
  const MatrixXd C = MatrixXd::Random(3, 5);
  const MatrixXd P = nullspace_projector(C, {0, 2});
  // v orthogonal to rows 0 and 2 of C.
  const Eigen::FullPivLU<MatrixXd> lu(C({0, 2}, Eigen::all));
  const MatrixXd ker = lu.kernel();
  EXPECT_LT((P * ker - ker).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(CiRate, EmptySetAndFrozenScalarIntegrator) {
  const DynController c = pid(10, 5, 1, AntiWindup::CI);
  const VectorXd xc = VectorXd::Constant(1, 0.3), q = VectorXd::Constant(1, 0.7),
                 qd = VectorXd::Constant(1, -0.2);
  EXPECT_EQ(ci_controller_rate(c, xc, q, qd, {}), nominal_rate(c, xc, q, qd));
  EXPECT_EQ(ci_controller_rate(c, xc, q, qd, {0})(0), 0.0);
}

TEST(CiRate, IntegratorFrozenWhileBinding) {
  const LinearPlant plant = one_dof();
  const DynController c = pid(2500, 6000, 120, AntiWindup::CI);
  const PowerBudget b = PowerBudget::uniform(1, 400, 0.0, 4.0);
  VectorXd x0(3);
  x0 << 1.0, 0.0, 0.0;
  const auto log = simulate_closed_loop(plant, c, b, x0, {0.5, 1e-4});
  const auto& xc = log.scalars.at("xc0");
  int binding = 0;
  for (std::size_t k = 0; k + 1 < log.size(); ++k) {
    if (log.u_cmd[k](0) == log.u_applied[k](0)) continue;
    ++binding;
    EXPECT_EQ(xc[k + 1], xc[k]) << "k=" << k;
  }
  EXPECT_GT(binding, 10);
}

TEST(MawRate, ReducesToNominal) {
  std::mt19937_64 rng(33);
  const Rig r = random_rig(rng, AntiWindup::MAW);
  const VectorXd xc = VectorXd::Random(3), q = VectorXd::Random(3), qd = VectorXd::Random(3);
  const MawOutput o = maw_controller_rate(r.c, xc, q, qd, VectorXd::Zero(2));
  EXPECT_TRUE(o.rate.isApprox(nominal_rate(r.c, xc, q, qd)));
  EXPECT_TRUE(o.u.isApprox(r.c.C * xc + r.c.K_p * q + r.c.K_d * qd));
  const VectorXd sig = VectorXd::Random(2);
  const MawOutput os = maw_controller_rate(r.c, xc, q, qd, sig);
  VectorXd x(9);
  x << q, qd, xc;
  EXPECT_LT((os.u - (r.c.kappa() * x + r.c.E * sig)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((os.rate - (r.c.A_c * xc + r.c.B_p * q + r.c.B_d * qd + r.c.E_c * sig))
                .cwiseAbs()
                .maxCoeff(),
            1e-12);
}

TEST(ClosedLoop, NominalTrajectoriesAgreeWhenLimitIsSlack) {
  const LinearPlant plant = one_dof();
  const PowerBudget b = PowerBudget::uniform(1, 1e9, 0.0, 4.0);
  VectorXd x0(3);
  x0 << 0.2, -0.1, 0.05;
  const auto none = simulate_closed_loop(plant, pid(100, 50, 15, AntiWindup::None), b, x0, {});
  for (AntiWindup aw : {AntiWindup::CI, AntiWindup::MAW}) {
    const auto other = simulate_closed_loop(plant, pid(100, 50, 15, aw), b, x0, {});
    ASSERT_EQ(other.size(), none.size());
    for (std::size_t k = 0; k < none.size(); ++k) {
      EXPECT_EQ(other.states[k].q, none.states[k].q);
      EXPECT_EQ(other.states[k].qdot, none.states[k].qdot);
      EXPECT_EQ(other.scalars.at("xc0")[k], none.scalars.at("xc0")[k]);
    }
  }
}

TEST(ClosedLoop, StaticPdIndependentOfH) {
  const LinearPlant plant = one_dof(2.0);
  const DynController c = static_pd(MatrixXd::Constant(1, 1, -9), MatrixXd::Constant(1, 1, -3));
  const ClosedLoop a = closed_loop_matrices(plant, c, {});
  const ClosedLoop b = closed_loop_matrices(plant, c, {0});
  EXPECT_EQ(a.A, b.A);
  EXPECT_EQ(a.B(1, 0), 1.0);
}

// Vector field of the unsaturated loop with the set H frozen, written from
// the plant and controller definitions.
VectorXd field(const Rig& r, const VectorXd& x, const IndexSet& H) {
  const int n = r.plant.dof();
  const VectorXd q = x.head(n), qd = x.segment(n, n), xc = x.tail(r.c.nc());
  const VectorXd u = r.c.C * xc + r.c.K_p * q + r.c.K_d * qd;
  VectorXd dx(x.size());
  dx.head(n) = qd;
  dx.segment(n, n) = r.plant.acceleration({q, qd}, u);
  dx.tail(r.c.nc()) = r.c.antiwindup == AntiWindup::CI ? ci_controller_rate(r.c, xc, q, qd, H)
                                                       : nominal_rate(r.c, xc, q, qd);
  return dx;
}

TEST(ClosedLoop, MatchesFiniteDifferenceJacobian) {
  std::mt19937_64 rng(34);
  for (AntiWindup aw : {AntiWindup::None, AntiWindup::CI}) {
    for (const IndexSet& H : {IndexSet{}, IndexSet{1}, IndexSet{0, 1}}) {
      const Rig r = random_rig(rng, aw);
      const ClosedLoop cl = closed_loop_matrices(r.plant, r.c, H);
      const VectorXd x = VectorXd::Random(9);
      MatrixXd jac(9, 9);
      const double h = 1e-6;
      for (int j = 0; j < 9; ++j) {
        VectorXd e = VectorXd::Zero(9);
        e(j) = h;
        jac.col(j) = (field(r, x + e, H) - field(r, x - e, H)) / (2 * h);
      }
      EXPECT_LT((jac - cl.A).cwiseAbs().maxCoeff(), 1e-6);
      EXPECT_TRUE(cl.B.middleRows(3, 3).isApprox(
          r.plant.mass().inverse() * r.plant.actuator_selection()));
    }
  }
}

TEST(ClosedLoop, MawInputMatrix) {
  std::mt19937_64 rng(35);
  const Rig r = random_rig(rng, AntiWindup::MAW);
  const ClosedLoop cl = closed_loop_matrices(r.plant, r.c, {});
  const MatrixXd ms = r.plant.mass().inverse() * r.plant.actuator_selection();
  EXPECT_TRUE(cl.B.middleRows(3, 3).isApprox(ms * (MatrixXd::Identity(2, 2) + r.c.E)));
  EXPECT_TRUE(cl.B.bottomRows(3).isApprox(r.c.E_c));
  EXPECT_TRUE(cl.B.topRows(3).isZero());
}

TEST(Sigma, InactiveAndBindingSigns) {
  const LinearPlant plant = one_dof();
  const DynController c = static_pd(MatrixXd::Constant(1, 1, -100), MatrixXd::Constant(1, 1, -10));
  const PowerBudget b = PowerBudget::uniform(1, 400, 0.0, 4.0);
  EXPECT_EQ(sigma(Eigen::Vector2d(0.01, -0.01), plant, c, b)(0), 0.0);
  // u = -100 * 3 - 10 * (-2) = -280 at qd = -2: P = 560 > 400.
  const double s = sigma(Eigen::Vector2d(3.0, -2.0), plant, c, b)(0);
  EXPECT_GT(s, 0.0);
  EXPECT_NEAR(s, 400.0 / -2.0 + 280.0, 1e-12);
}

TEST(Sigma, SectorBoundsInsidePolytope) {
  std::mt19937_64 rng(36);
  std::uniform_real_distribution<double> U(-1, 1);
  const LinearPlant plant = one_dof();
  const DynController c = static_pd(MatrixXd::Constant(1, 1, -400), MatrixXd::Constant(1, 1, -40));
  const PowerBudget b = PowerBudget::uniform(1, 400, 0.0, 4.0);
  const double gamma = 0.4;
  const MatrixXd h = polytope_rows(c, b);
  int tested = 0;
  while (tested < 10000) {
    const Eigen::Vector2d x(2.0 * U(rng), 4.0 * U(rng));
    if (std::abs((h * x)(0)) > 1.0 / gamma) continue;
    const double u = (c.kappa() * x)(0);
    const double s = sigma(x, plant, c, b)(0);
    if (u != 0.0) {
      EXPECT_LE(s / u, 0.0);
      EXPECT_GE(s / u, -(1.0 - gamma) - 1e-12);
    }
    ++tested;
  }
}

TEST(Certificate, StableOpenLoopHolds) {
  const LinearPlant plant = one_dof(1.0);
  const DynController c = static_pd(MatrixXd::Zero(1, 1), MatrixXd::Zero(1, 1));
  const PowerBudget b = PowerBudget::uniform(1, 400, 0.0, 4.0);
  const ClosedLoop cl = closed_loop_matrices(plant, c, {});
  CertificateProblem prob{optim::solve_lyapunov(cl.A, MatrixXd::Identity(2, 2)),
                          VectorXd::Constant(1, 0.5), 1.0};
  const CertificateReport rep = certificate_check(plant, c, b, prob);
  EXPECT_TRUE(rep.holds);
  EXPECT_EQ(rep.subsets.size(), 2u);
  EXPECT_NEAR(rep.max_eigenvalues[0], rep.max_eigenvalues[1], 1e-12);
}

TEST(Certificate, UnstableGainsFail) {
  const LinearPlant plant = one_dof();
  const DynController c = static_pd(MatrixXd::Constant(1, 1, 50), MatrixXd::Constant(1, 1, -5));
  const PowerBudget b = PowerBudget::uniform(1, 400, 0.0, 4.0);
  CertificateProblem prob{MatrixXd::Identity(2, 2), VectorXd::Constant(1, 0.5), 1.0};
  const CertificateReport rep = certificate_check(plant, c, b, prob);
  EXPECT_FALSE(rep.holds);
  EXPECT_GT(rep.worst_eigenvalue, 0.0);
  EXPECT_EQ(rep.worst_H, IndexSet{});
}

TEST(Certificate, PidWithCiProducesReport) {
  const double wn = 50 * M_PI, zeta = 0.8, p = 0.05 * wn;
  const DynController c = pid(wn * wn + 2 * zeta * wn * p, wn * wn * p, 2 * zeta * wn + p - 0.05,
                              AntiWindup::CI);
  const LinearPlant plant = one_dof();
  const PowerBudget b = PowerBudget::uniform(1, 400, 0.0, 4.0);
  const ClosedLoop cl = closed_loop_matrices(plant, c, {});
  CertificateProblem prob{optim::solve_lyapunov(cl.A, MatrixXd::Identity(3, 3)),
                          VectorXd::Constant(1, 0.5), 1.0};
  const CertificateReport rep = certificate_check(plant, c, b, prob);
  ASSERT_EQ(rep.subsets.size(), 2u);
  EXPECT_LT(rep.max_eigenvalues[0], 0.0);
  EXPECT_EQ(rep.holds, rep.worst_eigenvalue < -1e-9);
}

TEST(Certificate, TrajectoriesFromEllipsoidDecreaseQuadraticForm) {
  const LinearPlant plant = one_dof();
  const DynController c = static_pd(MatrixXd::Constant(1, 1, -100), MatrixXd::Constant(1, 1, -20));
  const PowerBudget b = PowerBudget::uniform(1, 400, 0.0, 4.0);
  // V = 90 q^2 + 2 q qd + qd^2 decreases for gains scaled by 1 and by 0.5,
  // checked by hand on the 2x2 forms.
  const double g = 0.5;
  const MatrixXd Q = (MatrixXd(2, 2) << 90.0, 1.0, 1.0, 1.0).finished();
  CertificateProblem prob{Q, VectorXd::Constant(1, g), 1.0};
  ASSERT_TRUE(certificate_check(plant, c, b, prob).holds);
  // Largest alpha keeping E(Q, alpha) inside the polytope.
  const MatrixXd h = polytope_rows(c, b);
  prob.alpha = 1.0 / (g * g * (h * Q.inverse() * h.transpose())(0, 0));
  ASSERT_TRUE(ellipsoid_in_polytope(c, b, prob).inside);
  for (double angle : {0.3, 1.2, 2.5, 4.0, 5.5}) {
    Eigen::Vector2d x0(std::cos(angle), std::sin(angle));
    x0 *= std::sqrt(0.99 * prob.alpha / x0.dot(Q * x0));
    const auto log = simulate_closed_loop(plant, c, b, x0, {1.0, 1e-4});
    const double v0 = x0.dot(Q * x0);
    double prev = v0;
    for (std::size_t k = 1; k < log.size(); ++k) {
      const Eigen::Vector2d x(log.states[k].q(0), log.states[k].qdot(0));
      const double v = x.dot(Q * x);
      EXPECT_LE(v, prev + 1e-6 * v0) << "angle " << angle << " k " << k;
      prev = v;
    }
  }
}

TEST(Ellipsoid, SmallWInsideAndScalingFindsBindingRow) {
  std::mt19937_64 rng(37);
  Rig r = random_rig(rng, AntiWindup::None);
  const PowerBudget b = PowerBudget::uniform(2, 400, 0.0, 4.0);
  CertificateProblem prob{1e12 * MatrixXd::Identity(9, 9), Eigen::Vector2d(0.5, 0.7), 1.0};
  EXPECT_TRUE(ellipsoid_in_polytope(r.c, b, prob).inside);
  const MatrixXd h = polytope_rows(r.c, b);
  const double v0 = 0.25 * h.row(0).squaredNorm(), v1 = 0.49 * h.row(1).squaredNorm();
  const int binding = v0 > v1 ? 0 : 1;
  // W = s I flips at s = 1 / max(gamma_i^2 |h_i|^2).
  const double s_flip = 1.0 / std::max(v0, v1);
  prob.Q = MatrixXd::Identity(9, 9) / (0.99 * s_flip);
  EXPECT_TRUE(ellipsoid_in_polytope(r.c, b, prob).inside);
  prob.Q = MatrixXd::Identity(9, 9) / (1.01 * s_flip);
  const EllipsoidReport rep = ellipsoid_in_polytope(r.c, b, prob);
  EXPECT_FALSE(rep.inside);
  EXPECT_EQ(rep.binding, binding);
}

TEST(Ellipsoid, AgreesWithSchurComplementForm) {
  std::mt19937_64 rng(38);
  std::uniform_real_distribution<double> U(0.1, 0.9);
  const PowerBudget b = PowerBudget::uniform(2, 400, 0.0, 4.0);
  int checked = 0;
  for (int trial = 0; trial < 200; ++trial) {
    Rig r = random_rig(rng, AntiWindup::None);
    CertificateProblem prob{testing::random_spd(9, 0.5, 5.0, rng) * 1e-3, Eigen::Vector2d(U(rng), U(rng)),
                            U(rng)};
    const MatrixXd W = prob.W();
    const MatrixXd h = polytope_rows(r.c, b);
    bool schur = true;
    bool borderline = false;
    for (int i = 0; i < 2; ++i) {
      MatrixXd blk(10, 10);
      const Eigen::RowVectorXd hw = prob.gamma(i) * h.row(i) * W;
      blk(0, 0) = 1.0;
      blk.block(0, 1, 1, 9) = hw;
      blk.block(1, 0, 9, 1) = hw.transpose();
      blk.bottomRightCorner(9, 9) = W;
      const double lmin = optim::min_eigenvalue(blk);
      const double margin = 1.0 - prob.gamma(i) * prob.gamma(i) * h.row(i).dot(W * h.row(i).transpose());
      if (std::abs(margin) < 1e-6) borderline = true;
      if (lmin < 0.0) schur = false;
    }
    if (borderline) continue;
    EXPECT_EQ(ellipsoid_in_polytope(r.c, b, prob).inside, schur);
    ++checked;
  }
  EXPECT_GT(checked, 100);
}

TEST(RoaVolume, Examples) {
  EXPECT_EQ(roa_volume(MatrixXd::Identity(3, 3)), 0.0);
  EXPECT_NEAR(roa_volume(Eigen::Vector2d(2, 2).asDiagonal().toDenseMatrix()), 2 * std::log(2.0),
              1e-15);
  std::mt19937_64 rng(39);
  const MatrixXd W = testing::random_spd(6, 0.1, 10.0, rng);
  const double eig =
      Eigen::SelfAdjointEigenSolver<MatrixXd>(W).eigenvalues().array().log().sum();
  EXPECT_NEAR(roa_volume(W), eig, 1e-10);
  EXPECT_THROW(roa_volume(-MatrixXd::Identity(2, 2)), std::invalid_argument);
}

TEST(CertificateProblem, Validation) {
  CertificateProblem p{MatrixXd::Identity(2, 2), VectorXd::Constant(1, 1.0), 1.0};
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p.gamma(0) = 0.5;
  p.alpha = 0.0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
}

}  // namespace
}  // namespace powersat::lincontrol
