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

#ifndef POWERSAT_OPTIM_HPP_
#define POWERSAT_OPTIM_HPP_

#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

namespace powersat::optim {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using SparseVec = Eigen::SparseVector<double>;
using SparseRows = Eigen::SparseMatrix<double, Eigen::RowMajor>;

constexpr double kInf = std::numeric_limits<double>::infinity();

// y' E y with E = sum_k w_k v_k v_k'. Indefinite forms carry negative weights.
class QuadForm {
 public:
  struct Term {
    double weight;
    SparseVec v;
  };

  QuadForm() = default;
  explicit QuadForm(int n) : n_(n) {}

  // Eigendecomposition of a symmetric matrix; eigenvalues below
  // drop_tol * max|lambda| are discarded.
  static QuadForm from_dense(const MatrixXd& e, double drop_tol = 1e-14);

  void add_term(double weight, SparseVec v);

  int dim() const { return n_; }
  const std::vector<Term>& terms() const { return terms_; }
  bool is_convex() const;
  bool empty() const { return terms_.empty(); }

  double eval(const VectorXd& y) const;
  // Adds 2 E y into out.
  void add_gradient(const VectorXd& y, VectorXd& out) const;
  MatrixXd dense() const;

 private:
  int n_ = 0;
  std::vector<Term> terms_;
};

// y' E y + chi' y <= c.
struct QuadConstraint {
  QuadForm e;
  SparseVec chi;
  double c = 0.0;

  double eval(const VectorXd& y) const;  // lhs - c
};

// minimize 0.5 y' H y + f' y + constant
// subject to A y <= b, range_lo <= R y <= range_hi, lower <= y <= upper,
// and the quadratic constraints.
struct QPProblem {
  MatrixXd hessian;
  VectorXd linear;
  double constant = 0.0;

  SparseRows a;
  VectorXd b;

  SparseRows range_rows;
  VectorXd range_lo;
  VectorXd range_hi;

  VectorXd lower;  // empty means unbounded
  VectorXd upper;

  std::vector<QuadConstraint> quad;

  explicit QPProblem(int n = 0);

  int dim() const { return static_cast<int>(linear.size()); }
  double objective(const VectorXd& y) const;
  // Largest constraint violation, each term divided by 1 + |rhs|.
  double max_violation(const VectorXd& y) const;
  double max_linear_violation(const VectorXd& y) const;
  bool convex() const;
  void validate() const;
};

enum class Status { Optimal, Infeasible, MaxIter };
std::string to_string(Status s);

struct Duals {
  VectorXd ineq;      // for A y <= b
  VectorXd range_lo;  // for range_lo <= R y
  VectorXd range_hi;  // for R y <= range_hi
  VectorXd lower;
  VectorXd upper;
  VectorXd quad;
};

// Scaled first-order optimality measures.
struct KktReport {
  double stationarity = 0.0;
  double primal = 0.0;
  double dual = 0.0;
  double complementarity = 0.0;
  double max() const;
};

KktReport kkt_report(const QPProblem& p, const VectorXd& y, const Duals& d);

struct QPOptions {
  int max_iter = 500;
  double tol = 1e-9;
  // Called after each iteration with (iteration, mu, scaled residual).
  std::function<void(int, double, double)> trace;
};

struct QPResult {
  VectorXd y;
  Duals duals;
  Status status = Status::MaxIter;
  int iterations = 0;
  double objective = 0.0;
  KktReport kkt;
};

// Primal-dual interior point (Mehrotra predictor-corrector) for convex
// problems. Throws std::invalid_argument if a quadratic constraint is not
// convex.
QPResult solve_qp(const QPProblem& p, const QPOptions& opts = {},
                  const VectorXd* y_start = nullptr);

struct NonconvexOptions {
  int max_outer = 100;
  double step_tol = 1e-8;   // on |dy|_inf / (1 + |y|_inf)
  double obj_tol = 0.0;     // relative objective decrease; 0 disables
  double feas_tol = 1e-9;   // scaled exact violation accepted
  QPOptions inner;
};

struct NonconvexResult {
  VectorXd y;
  Status status = Status::MaxIter;
  int outer_iterations = 0;
  std::vector<double> objective_history;  // accepted iterates
  QPResult last_inner;
};

// Sequential convexification: each quadratic form is split into its convex
// and concave terms and the concave part is linearized about the incumbent,
// which gives a convex inner restriction. A box trust region of the given
// infinity-norm radius (kInf to disable) bounds each step.
NonconvexResult solve_qcqp_nonconvex(const QPProblem& p, const VectorXd& y0,
                                     double trust_radius,
                                     const NonconvexOptions& opts = {});

double min_eigenvalue(const MatrixXd& symmetric);

struct RootResult {
  double x;
  int iterations;
};

// Bracketing root finder (TOMS 748 from Boost.Math).
RootResult brent_root(const std::function<double(double)>& f, double lo,
                      double hi);

// Solves A' P + P A + W = 0 for symmetric P via the n(n+1)/2 symmetric
// unknowns.
MatrixXd solve_lyapunov(const MatrixXd& a, const MatrixXd& w);

}  // namespace powersat::optim

#endif  // POWERSAT_OPTIM_HPP_
