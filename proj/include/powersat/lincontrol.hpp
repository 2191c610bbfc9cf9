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

#ifndef POWERSAT_LINCONTROL_HPP_
#define POWERSAT_LINCONTROL_HPP_

#include <vector>

#include <Eigen/Dense>

#include "powersat/model.hpp"
#include "powersat/powerlim.hpp"
#include "powersat/sim.hpp"

namespace powersat::lincontrol {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class AntiWindup { None, CI, MAW };

// xc' = A_c xc + B_p q + B_d qd,  u = C xc + K_p q + K_d qd.
// Gains follow the plant's sign convention: M q'' + D q' + K q = S u, so a
// stabilizing proportional term has negative K_p.
struct DynController {
  MatrixXd A_c, B_p, B_d;  // nc by nc, nc by n, nc by n
  MatrixXd C;              // na by nc
  MatrixXd K_p, K_d;       // na by n
  AntiWindup antiwindup = AntiWindup::None;
  MatrixXd E_c;  // nc by na, MAW only
  MatrixXd E;    // na by na, MAW only

  int nc() const { return static_cast<int>(A_c.rows()); }
  int na() const { return static_cast<int>(K_p.rows()); }
  int n() const { return static_cast<int>(K_p.cols()); }
  // [K_p K_d C]
  MatrixXd kappa() const;
  void validate(const model::LinearPlant& plant) const;
};

// Static PD (no controller state).
DynController static_pd(const MatrixXd& K_p, const MatrixXd& K_d);

using IndexSet = std::vector<int>;  // sorted, 0-based

// Channels whose electrical power exceeds the per-joint limit.
IndexSet saturating_set(const VectorXd& u, const VectorXd& qdot_a,
                        const model::PowerBudget& budget);

// Orthogonal projector onto the null space of the rows of C indexed by H.
// H empty gives the identity (nothing frozen).
MatrixXd nullspace_projector(const MatrixXd& C, const IndexSet& H);

VectorXd nominal_rate(const DynController& c, const VectorXd& xc,
                      const VectorXd& q, const VectorXd& qdot);

VectorXd ci_controller_rate(const DynController& c, const VectorXd& xc,
                            const VectorXd& q, const VectorXd& qdot,
                            const IndexSet& H);

struct MawOutput {
  VectorXd rate;
  VectorXd u;
};

MawOutput maw_controller_rate(const DynController& c, const VectorXd& xc,
                              const VectorXd& q, const VectorXd& qdot,
                              const VectorXd& sigma);

struct ClosedLoop {
  MatrixXd A;      // x = [q; qd; xc]
  MatrixXd B;      // multiplies sigma(x)
  MatrixXd kappa;  // u = kappa x
};

// x' = A(H) x + B sigma(x) with the second block row
// [M^-1 (S K_p - K), M^-1 (S K_d - D), M^-1 S C]. Gravity offsets are ignored.
ClosedLoop closed_loop_matrices(const model::LinearPlant& plant,
                                const DynController& c, const IndexSet& H);

// psat(kappa x, qd_a) - kappa x.
VectorXd sigma(const VectorXd& x, const model::LinearPlant& plant,
               const DynController& c, const model::PowerBudget& budget,
               powerlim::PsatMode mode = powerlim::PsatMode::ExactLossless);

struct CertificateProblem {
  MatrixXd Q;
  VectorXd gamma;
  double alpha = 1.0;

  MatrixXd W() const;  // (Q / alpha)^-1
  void validate() const;
};

// Rows (vbar_i / Pbar_i) kappa_i.
MatrixXd polytope_rows(const DynController& c, const model::PowerBudget& budget);

// [-delta(i, H) (1 - gamma_i) kappa_i]_i.
MatrixXd vertex_gain(const DynController& c, const VectorXd& gamma,
                     const IndexSet& H);

struct CertificateReport {
  bool holds = false;
  IndexSet worst_H;
  double worst_eigenvalue = 0.0;
  std::vector<IndexSet> subsets;
  std::vector<double> max_eigenvalues;
};

// lambda_max((A + B Pi)' Q + Q (A + B Pi)) < -1e-9 for every subset H.
// n_a above 12 throws.
CertificateReport certificate_check(const model::LinearPlant& plant,
                                    const DynController& c,
                                    const model::PowerBudget& budget,
                                    const CertificateProblem& prob);

struct EllipsoidReport {
  bool inside = false;
  int binding = -1;             // index of the largest gamma_i^2 h_i W h_i'
  std::vector<double> margins;  // 1 - gamma_i^2 h_i W h_i'
};

EllipsoidReport ellipsoid_in_polytope(const DynController& c,
                                      const model::PowerBudget& budget,
                                      const CertificateProblem& prob);

// log det W from a Cholesky factor. Throws if W is not positive definite.
double roa_volume(const MatrixXd& W);

struct ClosedLoopOptions {
  double T = 1.0;
  double dt = 1e-4;
  powerlim::PsatMode mode = powerlim::PsatMode::ExactLossless;
};

// RK4 on x = [q; qd; xc] with u, sigma and H held over each step. Controller
// states are logged as scalars "xc0", "xc1", ...
sim::TrajectoryLog simulate_closed_loop(const model::LinearPlant& plant,
                                        const DynController& c,
                                        const model::PowerBudget& budget,
                                        const VectorXd& x0,
                                        const ClosedLoopOptions& opts);

}  // namespace powersat::lincontrol

#endif  // POWERSAT_LINCONTROL_HPP_
