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

#include "powersat/optim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>

#include <boost/math/tools/toms748_solve.hpp>

namespace powersat::optim {
namespace {

double inf_norm(const VectorXd& v) {
  return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff();
}

// K(lower) += w * v v' restricted to the support of v (sorted indices).
void add_outer_lower(MatrixXd& k, double w, const int* idx, const double* val,
                     int nnz) {
  double* data = k.data();
  const Eigen::Index ld = k.rows();
  for (int a = 0; a < nnz; ++a) {
    const double s = w * val[a];
    double* col = data + static_cast<Eigen::Index>(idx[a]) * ld;
    for (int b = a; b < nnz; ++b) col[idx[b]] += s * val[b];
  }
}

}  // namespace

// ---------------------------------------------------------------- QuadForm

QuadForm QuadForm::from_dense(const MatrixXd& e, double drop_tol) {
  if (e.rows() != e.cols()) throw std::invalid_argument("QuadForm: not square");
  QuadForm q(static_cast<int>(e.rows()));
  if (e.size() == 0) return q;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (e + e.transpose()));
  const VectorXd& lam = es.eigenvalues();
  const double cut = drop_tol * inf_norm(lam);
  for (Eigen::Index i = 0; i < lam.size(); ++i) {
    if (std::abs(lam(i)) <= cut || lam(i) == 0.0) continue;
    VectorXd col = es.eigenvectors().col(i);
    q.add_term(lam(i), col.sparseView());
  }
  return q;
}

void QuadForm::add_term(double weight, SparseVec v) {
  if (v.size() != n_) throw std::invalid_argument("QuadForm: term size");
  if (weight == 0.0) return;
  terms_.push_back({weight, std::move(v)});
}

bool QuadForm::is_convex() const {
  return std::all_of(terms_.begin(), terms_.end(),
                     [](const Term& t) { return t.weight >= 0.0; });
}

double QuadForm::eval(const VectorXd& y) const {
  double acc = 0.0;
  for (const auto& t : terms_) {
    const double p = t.v.dot(y);
    acc += t.weight * p * p;
  }
  return acc;
}

void QuadForm::add_gradient(const VectorXd& y, VectorXd& out) const {
  for (const auto& t : terms_) {
    const double p = 2.0 * t.weight * t.v.dot(y);
    for (SparseVec::InnerIterator it(t.v); it; ++it) {
      out(it.index()) += p * it.value();
    }
  }
}

MatrixXd QuadForm::dense() const {
  MatrixXd e = MatrixXd::Zero(n_, n_);
  for (const auto& t : terms_) {
    VectorXd v = t.v;
    e.noalias() += t.weight * v * v.transpose();
  }
  return e;
}

double QuadConstraint::eval(const VectorXd& y) const {
  return e.eval(y) + chi.dot(y) - c;
}

// --------------------------------------------------------------- QPProblem

QPProblem::QPProblem(int n)
    : hessian(MatrixXd::Zero(n, n)),
      linear(VectorXd::Zero(n)),
      a(0, n),
      range_rows(0, n) {}

double QPProblem::objective(const VectorXd& y) const {
  return 0.5 * y.dot(hessian * y) + linear.dot(y) + constant;
}

double QPProblem::max_linear_violation(const VectorXd& y) const {
  double v = 0.0;
  if (a.rows() > 0) {
    VectorXd ay = a * y;
    for (Eigen::Index i = 0; i < ay.size(); ++i) {
      v = std::max(v, (ay(i) - b(i)) / (1.0 + std::abs(b(i))));
    }
  }
  if (range_rows.rows() > 0) {
    VectorXd ry = range_rows * y;
    for (Eigen::Index i = 0; i < ry.size(); ++i) {
      if (std::isfinite(range_hi(i))) {
        v = std::max(v, (ry(i) - range_hi(i)) / (1.0 + std::abs(range_hi(i))));
      }
      if (std::isfinite(range_lo(i))) {
        v = std::max(v, (range_lo(i) - ry(i)) / (1.0 + std::abs(range_lo(i))));
      }
    }
  }
  for (Eigen::Index j = 0; j < lower.size(); ++j) {
    if (std::isfinite(lower(j))) {
      v = std::max(v, (lower(j) - y(j)) / (1.0 + std::abs(lower(j))));
    }
  }
  for (Eigen::Index j = 0; j < upper.size(); ++j) {
    if (std::isfinite(upper(j))) {
      v = std::max(v, (y(j) - upper(j)) / (1.0 + std::abs(upper(j))));
    }
  }
  return v;
}

double QPProblem::max_violation(const VectorXd& y) const {
  double v = max_linear_violation(y);
  for (const auto& q : quad) {
    v = std::max(v, q.eval(y) / (1.0 + std::abs(q.c)));
  }
  return v;
}

bool QPProblem::convex() const {
  return std::all_of(quad.begin(), quad.end(),
                     [](const QuadConstraint& q) { return q.e.is_convex(); });
}

void QPProblem::validate() const {
  const Eigen::Index n = linear.size();
  if (hessian.rows() != n || hessian.cols() != n) {
    throw std::invalid_argument("QPProblem: hessian size");
  }
  const double hs = std::max(1.0, hessian.cwiseAbs().maxCoeff());
  if ((hessian - hessian.transpose()).cwiseAbs().maxCoeff() > 1e-10 * hs) {
    throw std::invalid_argument("QPProblem: hessian not symmetric");
  }
  if (a.cols() != n || a.rows() != b.size()) {
    throw std::invalid_argument("QPProblem: (A, b) size");
  }
  if (range_rows.cols() != n || range_rows.rows() != range_lo.size() ||
      range_rows.rows() != range_hi.size()) {
    throw std::invalid_argument("QPProblem: range size");
  }
  if ((lower.size() != 0 && lower.size() != n) ||
      (upper.size() != 0 && upper.size() != n)) {
    throw std::invalid_argument("QPProblem: bound size");
  }
  for (const auto& q : quad) {
    if (q.e.dim() != n || q.chi.size() != n) {
      throw std::invalid_argument("QPProblem: quadratic constraint size");
    }
  }
}

std::string to_string(Status s) {
  switch (s) {
    case Status::Optimal:
      return "optimal";
    case Status::Infeasible:
      return "infeasible";
    case Status::MaxIter:
      return "max_iter";
  }
  return "unknown";
}

double KktReport::max() const {
  return std::max({stationarity, primal, dual, complementarity});
}

KktReport kkt_report(const QPProblem& p, const VectorXd& y, const Duals& d) {
  KktReport r;
  VectorXd hy = p.hessian * y;
  VectorXd grad = hy + p.linear;
  VectorXd jl = VectorXd::Zero(p.dim());
  double comp = 0.0;
  double dual = 0.0;
  auto note_dual = [&](double lam, double g) {
    dual = std::max(dual, -lam);
    comp = std::max(comp, std::abs(lam * g));
  };
  if (p.a.rows() > 0) {
    jl += p.a.transpose() * d.ineq;
    VectorXd ay = p.a * y;
    for (Eigen::Index i = 0; i < ay.size(); ++i) note_dual(d.ineq(i), ay(i) - p.b(i));
  }
  if (p.range_rows.rows() > 0) {
    jl += p.range_rows.transpose() * (d.range_hi - d.range_lo);
    VectorXd ry = p.range_rows * y;
    for (Eigen::Index i = 0; i < ry.size(); ++i) {
      if (std::isfinite(p.range_hi(i))) note_dual(d.range_hi(i), ry(i) - p.range_hi(i));
      if (std::isfinite(p.range_lo(i))) note_dual(d.range_lo(i), p.range_lo(i) - ry(i));
    }
  }
  for (Eigen::Index j = 0; j < p.lower.size(); ++j) {
    if (!std::isfinite(p.lower(j))) continue;
    jl(j) -= d.lower(j);
    note_dual(d.lower(j), p.lower(j) - y(j));
  }
  for (Eigen::Index j = 0; j < p.upper.size(); ++j) {
    if (!std::isfinite(p.upper(j))) continue;
    jl(j) += d.upper(j);
    note_dual(d.upper(j), y(j) - p.upper(j));
  }
  for (size_t q = 0; q < p.quad.size(); ++q) {
    VectorXd gq = p.quad[q].chi;
    p.quad[q].e.add_gradient(y, gq);
    jl += d.quad(q) * gq;
    note_dual(d.quad(q), p.quad[q].eval(y));
  }
  const double scale =
      1.0 + std::max({inf_norm(hy), inf_norm(p.linear), inf_norm(jl)});
  r.stationarity = inf_norm(grad + jl) / scale;
  r.primal = p.max_violation(y);
  r.dual = dual;
  r.complementarity = comp / (1.0 + std::abs(p.objective(y)));
  return r;
}

// ------------------------------------------------------ interior point core

namespace {

struct LinEntry {
  int row;      // index into rows_
  double sign;  // +1: a'y <= rhs, -1: -a'y <= rhs
  double rhs;   // already scaled
};

struct BoundEntry {
  int var;
  double sign;
  double rhs;
};

struct RowView {
  const int* idx;
  const double* val;
  int nnz;
  double scale;  // 1 / ||row||
};

struct QuadScaled {
  const QuadConstraint* src;
  double scale;
  std::vector<int> support;
  std::vector<double> grad;  // on support
  double chi_dot = 0.0;
};

class InteriorPoint {
 public:
  InteriorPoint(const QPProblem& p, const QPOptions& opts)
      : p_(p), opts_(opts), n_(p.dim()) {
    const double hmax = p.hessian.size() ? p.hessian.cwiseAbs().maxCoeff() : 0.0;
    obj_scale_ = 1.0 / std::max({1.0, hmax, inf_norm(p.linear)});
    add_rows(p.a, nullptr, &p.b, true);
    add_rows(p.range_rows, &p.range_lo, &p.range_hi, false);
    for (Eigen::Index j = 0; j < p.lower.size(); ++j) {
      if (std::isfinite(p.lower(j))) {
        bounds_.push_back({static_cast<int>(j), -1.0, -p.lower(j)});
        lower_map_.push_back(static_cast<int>(j));
      }
    }
    for (Eigen::Index j = 0; j < p.upper.size(); ++j) {
      if (std::isfinite(p.upper(j))) {
        bounds_.push_back({static_cast<int>(j), 1.0, p.upper(j)});
        upper_map_.push_back(static_cast<int>(j));
      }
    }
    for (const auto& q : p.quad) {
      QuadScaled qs;
      qs.src = &q;
      qs.scale = 1.0 / std::max(1.0, std::abs(q.c));
      std::vector<char> mark(n_, 0);
      for (const auto& t : q.e.terms()) {
        for (SparseVec::InnerIterator it(t.v); it; ++it) mark[it.index()] = 1;
      }
      for (SparseVec::InnerIterator it(q.chi); it; ++it) mark[it.index()] = 1;
      for (int j = 0; j < n_; ++j) {
        if (mark[j]) qs.support.push_back(j);
      }
      qs.grad.assign(qs.support.size(), 0.0);
      quads_.push_back(std::move(qs));
    }
    m_lin_ = static_cast<int>(lin_.size());
    m_bnd_ = static_cast<int>(bounds_.size());
    m_ = m_lin_ + m_bnd_ + static_cast<int>(quads_.size());
    scratch_ = VectorXd::Zero(n_);
  }

  QPResult run(const VectorXd* y_start) {
    QPResult res;
    VectorXd y = y_start ? *y_start : VectorXd::Zero(n_);
    if (y.size() != n_) throw std::invalid_argument("solve_qp: start size");
    for (Eigen::Index j = 0; j < p_.lower.size() && p_.upper.size(); ++j) {
      if (p_.lower(j) > p_.upper(j)) {
        res.y = y;
        res.status = Status::Infeasible;
        return res;
      }
    }
    VectorXd g(m_), s(m_), lam(m_);
    eval_constraints(y, g);
    for (int i = 0; i < m_; ++i) {
      s(i) = std::max(-g(i), 1.0);
      lam(i) = 1.0;
    }
    const MatrixXd hs = obj_scale_ * p_.hessian;
    const VectorXd fs = obj_scale_ * p_.linear;
    MatrixXd k(n_, n_);
    VectorXd rd(n_), rp(m_), rc(m_), w(m_), rhs(n_), dy(n_), jdy(m_), ds(m_),
        dl(m_), ds_aff(m_), dl_aff(m_);
    Eigen::LLT<MatrixXd> llt;
    double reg = 0.0;
    bool breakdown = false;
    int it = 0;
    for (; it < opts_.max_iter; ++it) {
      eval_constraints(y, g);
      VectorXd hy = hs * y;
      rd = hy + fs;
      VectorXd jl = VectorXd::Zero(n_);
      add_jt(lam, jl);
      rd += jl;
      rp = g + s;
      const double mu = m_ > 0 ? s.dot(lam) / m_ : 0.0;
      const double res_d =
          inf_norm(rd) / (1.0 + std::max({inf_norm(hy), inf_norm(fs), inf_norm(jl)}));
      double res_p = 0.0;
      for (int i = 0; i < m_; ++i) res_p = std::max(res_p, std::abs(rp(i)) / (1.0 + std::abs(rhs_of(i))));
      double res_c = 0.0;
      for (int i = 0; i < m_; ++i) res_c = std::max(res_c, s(i) * lam(i));
      // Measured in the original objective units, as in kkt_report.
      res_c /= obj_scale_ + std::abs(0.5 * y.dot(hy) + fs.dot(y));
      const double res = std::max({res_d, res_p, res_c});
      if (opts_.trace) opts_.trace(it, mu, res);
      if (!std::isfinite(res)) {
        breakdown = true;
        break;
      }
      if (res <= opts_.tol) break;
      if (m_ > 0 && lam.maxCoeff() > 1e13 && res_p > opts_.tol) {
        breakdown = true;
        break;
      }

      // Newton matrix.
      k.triangularView<Eigen::Lower>() = hs.triangularView<Eigen::Lower>();
      for (int i = 0; i < m_; ++i) w(i) = lam(i) / s(i);
      assemble(w, lam, k);
      if (!factor(k, llt, reg)) {
        breakdown = true;
        break;
      }

      auto solve_dir = [&](const VectorXd& rcv, VectorXd& dyv, VectorXd& dsv,
                           VectorXd& dlv) {
        VectorXd tmp = (rcv - lam.cwiseProduct(rp)).cwiseQuotient(s);
        rhs = -rd;
        add_jt(tmp, rhs);
        dyv = llt.solve(rhs);
        jmul(dyv, jdy);
        dsv = -rp - jdy;
        dlv = (-rcv - lam.cwiseProduct(dsv)).cwiseQuotient(s);
      };

      rc = lam.cwiseProduct(s);
      solve_dir(rc, dy, ds_aff, dl_aff);
      const double ap = max_step(s, ds_aff, 1.0);
      const double ad = max_step(lam, dl_aff, 1.0);
      double sigma = 0.0;
      if (m_ > 0) {
        const double mu_aff =
            (s + ap * ds_aff).dot(lam + ad * dl_aff) / m_;
        sigma = std::pow(std::clamp(mu_aff / mu, 0.0, 1.0), 3);
      }
      rc = lam.cwiseProduct(s) + ds_aff.cwiseProduct(dl_aff) -
           VectorXd::Constant(m_, sigma * mu);
      solve_dir(rc, dy, ds, dl);
      // Capped so no slack shrinks by more than 1e4 in one step; a slack near
      // 1e-20 makes the Newton matrix indefinite in floating point.
      const double tau = std::clamp(1.0 - mu, 0.99, 0.9999);
      double alpha = std::min(max_step(s, ds, tau), max_step(lam, dl, tau));
      y += alpha * dy;
      s += alpha * ds;
      lam += alpha * dl;
      if (!y.allFinite()) {
        breakdown = true;
        break;
      }
    }
    res.iterations = it;
    res.y = y;
    res.duals = unscale_duals(lam);
    res.objective = p_.objective(y);
    res.kkt = kkt_report(p_, y, res.duals);
    if (!breakdown && it < opts_.max_iter) {
      res.status = Status::Optimal;
    } else {
      res.status = Status::MaxIter;
    }
    return res;
  }

 private:
  void add_rows(const SparseRows& mat, const VectorXd* lo, const VectorXd* hi,
                bool one_sided) {
    for (Eigen::Index r = 0; r < mat.rows(); ++r) {
      const auto start = mat.outerIndexPtr()[r];
      const auto end = mat.outerIndexPtr()[r + 1];
      RowView rv{mat.innerIndexPtr() + start, mat.valuePtr() + start,
                 static_cast<int>(end - start), 1.0};
      double nrm = 0.0;
      for (int k = 0; k < rv.nnz; ++k) nrm += rv.val[k] * rv.val[k];
      nrm = std::sqrt(nrm);
      rv.scale = nrm > 0.0 ? 1.0 / nrm : 1.0;
      const int id = static_cast<int>(rows_.size());
      rows_.push_back(rv);
      if (one_sided) {
        lin_.push_back({id, 1.0, (*hi)(r)});
        lin_src_.push_back({0, static_cast<int>(r)});
        continue;
      }
      if (std::isfinite((*lo)(r))) {
        lin_.push_back({id, -1.0, -(*lo)(r)});
        lin_src_.push_back({1, static_cast<int>(r)});
      }
      if (std::isfinite((*hi)(r))) {
        lin_.push_back({id, 1.0, (*hi)(r)});
        lin_src_.push_back({2, static_cast<int>(r)});
      }
    }
  }

  double rhs_of(int i) const {
    if (i < m_lin_) return lin_[i].rhs * rows_[lin_[i].row].scale;
    if (i < m_lin_ + m_bnd_) return bounds_[i - m_lin_].rhs;
    const auto& q = quads_[i - m_lin_ - m_bnd_];
    return q.src->c * q.scale;
  }

  void eval_constraints(const VectorXd& y, VectorXd& g) {
    row_dot_.resize(rows_.size());
    for (size_t r = 0; r < rows_.size(); ++r) {
      const RowView& rv = rows_[r];
      double acc = 0.0;
      for (int k = 0; k < rv.nnz; ++k) acc += rv.val[k] * y(rv.idx[k]);
      row_dot_[r] = acc;
    }
    for (int i = 0; i < m_lin_; ++i) {
      const auto& e = lin_[i];
      g(i) = rows_[e.row].scale * (e.sign * row_dot_[e.row] - e.rhs);
    }
    for (int i = 0; i < m_bnd_; ++i) {
      const auto& e = bounds_[i];
      g(m_lin_ + i) = e.sign * y(e.var) - e.rhs;
    }
    for (size_t q = 0; q < quads_.size(); ++q) {
      QuadScaled& qs = quads_[q];
      const QuadConstraint& src = *qs.src;
      double val = -src.c;
      for (const auto& t : src.e.terms()) {
        const double pv = t.v.dot(y);
        val += t.weight * pv * pv;
        const double c2 = 2.0 * t.weight * pv;
        for (SparseVec::InnerIterator it(t.v); it; ++it) {
          scratch_(it.index()) += c2 * it.value();
        }
      }
      for (SparseVec::InnerIterator it(src.chi); it; ++it) {
        val += it.value() * y(it.index());
        scratch_(it.index()) += it.value();
      }
      for (size_t k = 0; k < qs.support.size(); ++k) {
        qs.grad[k] = qs.scale * scratch_(qs.support[k]);
        scratch_(qs.support[k]) = 0.0;
      }
      g(m_lin_ + m_bnd_ + static_cast<int>(q)) = qs.scale * val;
    }
  }

  // out += J' v
  void add_jt(const VectorXd& v, VectorXd& out) const {
    for (int i = 0; i < m_lin_; ++i) {
      const auto& e = lin_[i];
      const RowView& rv = rows_[e.row];
      const double c = v(i) * e.sign * rv.scale;
      if (c == 0.0) continue;
      for (int k = 0; k < rv.nnz; ++k) out(rv.idx[k]) += c * rv.val[k];
    }
    for (int i = 0; i < m_bnd_; ++i) {
      out(bounds_[i].var) += bounds_[i].sign * v(m_lin_ + i);
    }
    for (size_t q = 0; q < quads_.size(); ++q) {
      const double c = v(m_lin_ + m_bnd_ + static_cast<int>(q));
      const auto& qs = quads_[q];
      for (size_t k = 0; k < qs.support.size(); ++k) {
        out(qs.support[k]) += c * qs.grad[k];
      }
    }
  }

  // out = J dy
  void jmul(const VectorXd& dy, VectorXd& out) {
    for (size_t r = 0; r < rows_.size(); ++r) {
      const RowView& rv = rows_[r];
      double acc = 0.0;
      for (int k = 0; k < rv.nnz; ++k) acc += rv.val[k] * dy(rv.idx[k]);
      row_dot_[r] = acc;
    }
    for (int i = 0; i < m_lin_; ++i) {
      const auto& e = lin_[i];
      out(i) = e.sign * rows_[e.row].scale * row_dot_[e.row];
    }
    for (int i = 0; i < m_bnd_; ++i) {
      out(m_lin_ + i) = bounds_[i].sign * dy(bounds_[i].var);
    }
    for (size_t q = 0; q < quads_.size(); ++q) {
      const auto& qs = quads_[q];
      double acc = 0.0;
      for (size_t k = 0; k < qs.support.size(); ++k) {
        acc += qs.grad[k] * dy(qs.support[k]);
      }
      out(m_lin_ + m_bnd_ + static_cast<int>(q)) = acc;
    }
  }

  void assemble(const VectorXd& w, const VectorXd& lam, MatrixXd& k) {
    row_weight_.assign(rows_.size(), 0.0);
    for (int i = 0; i < m_lin_; ++i) row_weight_[lin_[i].row] += w(i);
    for (size_t r = 0; r < rows_.size(); ++r) {
      const RowView& rv = rows_[r];
      const double c = row_weight_[r] * rv.scale * rv.scale;
      if (c == 0.0) continue;
      add_outer_lower(k, c, rv.idx, rv.val, rv.nnz);
    }
    for (int i = 0; i < m_bnd_; ++i) {
      k(bounds_[i].var, bounds_[i].var) += w(m_lin_ + i);
    }
    for (size_t q = 0; q < quads_.size(); ++q) {
      const int i = m_lin_ + m_bnd_ + static_cast<int>(q);
      const auto& qs = quads_[q];
      add_outer_lower(k, w(i), qs.support.data(), qs.grad.data(),
                      static_cast<int>(qs.support.size()));
      const double c = 2.0 * lam(i) * qs.scale;
      for (const auto& t : qs.src->e.terms()) {
        add_outer_lower(k, c * t.weight, t.v.innerIndexPtr(), t.v.valuePtr(),
                        static_cast<int>(t.v.nonZeros()));
      }
    }
  }

  // Cholesky of k, adding a diagonal shift when it is not numerically PD.
  // The shift that worked is remembered (decayed) for the next iteration.
  static bool factor(MatrixXd& k, Eigen::LLT<MatrixXd>& llt, double& reg) {
    const double dmax = std::max(1.0, k.diagonal().cwiseAbs().maxCoeff());
    double added = 0.0;
    if (reg > 0.0) {
      k.diagonal().array() += reg;
      added = reg;
    }
    for (int attempt = 0; attempt < 12; ++attempt) {
      llt.compute(k);
      if (llt.info() == Eigen::Success) {
        reg = added > 1e-14 * dmax ? 0.1 * added : 0.0;
        return true;
      }
      const double next = added > 0.0 ? 100.0 * added : 1e-12 * dmax;
      k.diagonal().array() += next - added;
      added = next;
    }
    return false;
  }

  static double max_step(const VectorXd& v, const VectorXd& dv, double tau) {
    double a = 1.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      if (dv(i) < 0.0) a = std::min(a, -tau * v(i) / dv(i));
    }
    return a;
  }

  Duals unscale_duals(const VectorXd& lam) const {
    Duals d;
    d.ineq = VectorXd::Zero(p_.a.rows());
    d.range_lo = VectorXd::Zero(p_.range_rows.rows());
    d.range_hi = VectorXd::Zero(p_.range_rows.rows());
    d.lower = VectorXd::Zero(p_.lower.size());
    d.upper = VectorXd::Zero(p_.upper.size());
    d.quad = VectorXd::Zero(static_cast<Eigen::Index>(p_.quad.size()));
    for (int i = 0; i < m_lin_; ++i) {
      const double v = lam(i) * rows_[lin_[i].row].scale / obj_scale_;
      const auto [kind, r] = lin_src_[i];
      if (kind == 0) d.ineq(r) = v;
      if (kind == 1) d.range_lo(r) = v;
      if (kind == 2) d.range_hi(r) = v;
    }
    int bi = 0;
    for (int j : lower_map_) d.lower(j) = lam(m_lin_ + bi++) / obj_scale_;
    for (int j : upper_map_) d.upper(j) = lam(m_lin_ + bi++) / obj_scale_;
    for (size_t q = 0; q < quads_.size(); ++q) {
      d.quad(q) = lam(m_lin_ + m_bnd_ + static_cast<int>(q)) * quads_[q].scale /
                  obj_scale_;
    }
    return d;
  }

  const QPProblem& p_;
  const QPOptions& opts_;
  int n_;
  double obj_scale_ = 1.0;
  std::vector<RowView> rows_;
  std::vector<LinEntry> lin_;
  std::vector<std::pair<int, int>> lin_src_;
  std::vector<BoundEntry> bounds_;
  std::vector<int> lower_map_, upper_map_;
  std::vector<QuadScaled> quads_;
  int m_lin_ = 0, m_bnd_ = 0, m_ = 0;
  std::vector<double> row_dot_, row_weight_;
  VectorXd scratch_;
};

SparseVec extend(const SparseVec& v, int n, double last) {
  SparseVec out(n);
  out.reserve(v.nonZeros() + 1);
  for (SparseVec::InnerIterator it(v); it; ++it) {
    out.insertBack(it.index()) = it.value();
  }
  if (last != 0.0) out.insertBack(n - 1) = last;
  return out;
}

SparseRows extend_rows(const SparseRows& m, const VectorXd& last_col) {
  std::vector<Eigen::Triplet<double>> trip;
  for (Eigen::Index r = 0; r < m.outerSize(); ++r) {
    for (SparseRows::InnerIterator it(m, r); it; ++it) {
      trip.emplace_back(static_cast<int>(r), static_cast<int>(it.col()), it.value());
    }
    if (last_col(r) != 0.0) {
      trip.emplace_back(static_cast<int>(r), static_cast<int>(m.cols()), last_col(r));
    }
  }
  SparseRows out(m.rows(), m.cols() + 1);
  out.setFromTriplets(trip.begin(), trip.end());
  return out;
}

// min t over (y, t) with every constraint relaxed by t (1 + |rhs|), t >= -1.
// Returns the optimal t.
double phase_one(const QPProblem& p, const QPOptions& opts) {
  const int n = p.dim();
  QPProblem aux(n + 1);
  aux.hessian.diagonal().setConstant(1e-8);
  aux.linear(n) = 1.0;

  const Eigen::Index mr = p.range_rows.rows();
  SparseRows stacked(p.a.rows() + 2 * mr, n);
  {
    std::vector<Eigen::Triplet<double>> trip;
    for (Eigen::Index r = 0; r < p.a.rows(); ++r) {
      for (SparseRows::InnerIterator it(p.a, r); it; ++it) {
        trip.emplace_back(static_cast<int>(r), static_cast<int>(it.col()), it.value());
      }
    }
    for (Eigen::Index r = 0; r < mr; ++r) {
      for (SparseRows::InnerIterator it(p.range_rows, r); it; ++it) {
        const int base = static_cast<int>(p.a.rows() + 2 * r);
        trip.emplace_back(base, static_cast<int>(it.col()), it.value());
        trip.emplace_back(base + 1, static_cast<int>(it.col()), -it.value());
      }
    }
    stacked.setFromTriplets(trip.begin(), trip.end());
  }
  VectorXd rhs(stacked.rows());
  rhs.head(p.a.rows()) = p.b;
  for (Eigen::Index r = 0; r < mr; ++r) {
    rhs(p.a.rows() + 2 * r) = p.range_hi(r);
    rhs(p.a.rows() + 2 * r + 1) = -p.range_lo(r);
  }
  // Drop one-sided rows with infinite rhs.
  std::vector<Eigen::Triplet<double>> kept;
  std::vector<double> kept_rhs;
  for (Eigen::Index r = 0; r < stacked.rows(); ++r) {
    if (!std::isfinite(rhs(r))) continue;
    const int row = static_cast<int>(kept_rhs.size());
    for (SparseRows::InnerIterator it(stacked, r); it; ++it) {
      kept.emplace_back(row, static_cast<int>(it.col()), it.value());
    }
    kept.emplace_back(row, n, -(1.0 + std::abs(rhs(r))));
    kept_rhs.push_back(rhs(r));
  }
  aux.a = SparseRows(static_cast<Eigen::Index>(kept_rhs.size()), n + 1);
  aux.a.setFromTriplets(kept.begin(), kept.end());
  aux.b = Eigen::Map<VectorXd>(kept_rhs.data(), static_cast<Eigen::Index>(kept_rhs.size()));
  aux.range_rows = SparseRows(0, n + 1);
  aux.lower = VectorXd::Constant(n + 1, -kInf);
  aux.upper = VectorXd::Constant(n + 1, kInf);
  if (p.lower.size()) aux.lower.head(n) = p.lower;
  if (p.upper.size()) aux.upper.head(n) = p.upper;
  aux.lower(n) = -1.0;
  for (const auto& q : p.quad) {
    QuadConstraint qc;
    qc.e = QuadForm(n + 1);
    for (const auto& t : q.e.terms()) qc.e.add_term(t.weight, extend(t.v, n + 1, 0.0));
    qc.chi = extend(q.chi, n + 1, -(1.0 + std::abs(q.c)));
    qc.c = q.c;
    aux.quad.push_back(std::move(qc));
  }
  VectorXd start = VectorXd::Zero(n + 1);
  if (p.lower.size() || p.upper.size()) {
    for (int j = 0; j < n; ++j) {
      double lo = p.lower.size() ? p.lower(j) : -kInf;
      double hi = p.upper.size() ? p.upper(j) : kInf;
      start(j) = std::isfinite(lo) && std::isfinite(hi) ? 0.5 * (lo + hi)
                 : std::isfinite(lo)                     ? lo + 1.0
                 : std::isfinite(hi)                     ? hi - 1.0
                                                         : 0.0;
    }
  }
  start(n) = std::max(1.0, aux.max_violation(start));
  InteriorPoint ip(aux, opts);
  QPResult r = ip.run(&start);
  return r.y(n);
}

}  // namespace

QPResult solve_qp(const QPProblem& p, const QPOptions& opts,
                  const VectorXd* y_start) {
  p.validate();
  if (!p.convex()) {
    throw std::invalid_argument("solve_qp: quadratic constraint not convex");
  }
  InteriorPoint ip(p, opts);
  QPResult r = ip.run(y_start);
  if (r.status == Status::Optimal) return r;
  if (r.status == Status::Infeasible) return r;
  if (phase_one(p, opts) > 1e-7) r.status = Status::Infeasible;
  return r;
}

// ---------------------------------------------------- sequential convexify

namespace {

// Convex restriction of p about yk: concave terms replaced by their tangent.
QPProblem restrict_at(const QPProblem& p, const VectorXd& yk) {
  QPProblem r = p;
  r.quad.clear();
  for (const auto& q : p.quad) {
    QuadConstraint qc;
    qc.e = QuadForm(q.e.dim());
    VectorXd chi = q.chi;
    double c = q.c;
    for (const auto& t : q.e.terms()) {
      if (t.weight > 0.0) {
        qc.e.add_term(t.weight, t.v);
        continue;
      }
      const double pv = t.v.dot(yk);
      c += t.weight * pv * pv;
      chi += (2.0 * t.weight * pv) * VectorXd(t.v);
    }
    qc.chi = chi.sparseView();
    qc.c = c;
    r.quad.push_back(std::move(qc));
  }
  return r;
}

void apply_trust_region(QPProblem& p, const VectorXd& yk, double radius) {
  if (!std::isfinite(radius)) return;
  const int n = p.dim();
  if (p.lower.size() == 0) p.lower = VectorXd::Constant(n, -kInf);
  if (p.upper.size() == 0) p.upper = VectorXd::Constant(n, kInf);
  p.lower = p.lower.cwiseMax((yk.array() - radius).matrix());
  p.upper = p.upper.cwiseMin((yk.array() + radius).matrix());
}

// Drives the quadratic violation to zero by sequential convexification of
// min t s.t. g_q(y) <= t (1 + |c_q|), t >= 0.
bool restore(const QPProblem& p, VectorXd& y, const NonconvexOptions& opts) {
  const int n = p.dim();
  double last = kInf;
  for (int k = 0; k < 50; ++k) {
    if (p.max_violation(y) <= opts.feas_tol) return true;
    QPProblem r = restrict_at(p, y);
    QPProblem aux(n + 1);
    aux.hessian.diagonal().setConstant(1e-8);
    aux.linear(n) = 1.0;
    aux.a = extend_rows(r.a, VectorXd::Zero(r.a.rows()));
    aux.b = r.b;
    aux.range_rows = extend_rows(r.range_rows, VectorXd::Zero(r.range_rows.rows()));
    aux.range_lo = r.range_lo;
    aux.range_hi = r.range_hi;
    aux.lower = VectorXd::Constant(n + 1, -kInf);
    aux.upper = VectorXd::Constant(n + 1, kInf);
    if (r.lower.size()) aux.lower.head(n) = r.lower;
    if (r.upper.size()) aux.upper.head(n) = r.upper;
    aux.lower(n) = 0.0;
    for (const auto& q : r.quad) {
      QuadConstraint qc;
      qc.e = QuadForm(n + 1);
      for (const auto& t : q.e.terms()) qc.e.add_term(t.weight, extend(t.v, n + 1, 0.0));
      qc.chi = extend(q.chi, n + 1, -(1.0 + std::abs(q.c)));
      qc.c = q.c;
      aux.quad.push_back(std::move(qc));
    }
    VectorXd start(n + 1);
    start.head(n) = y;
    start(n) = std::max(p.max_violation(y), 0.0) + 1.0;
    QPResult s = solve_qp(aux, opts.inner, &start);
    if (s.status == Status::Infeasible) return false;
    y = s.y.head(n);
    const double t = s.y(n);
    if (t >= last - 1e-12) return p.max_violation(y) <= opts.feas_tol;
    last = t;
  }
  return p.max_violation(y) <= opts.feas_tol;
}

}  // namespace

NonconvexResult solve_qcqp_nonconvex(const QPProblem& p, const VectorXd& y0,
                                     double trust_radius,
                                     const NonconvexOptions& opts) {
  p.validate();
  NonconvexResult res;
  VectorXd y = y0;
  if (y.size() != p.dim()) throw std::invalid_argument("nonconvex: y0 size");
  if (!restore(p, y, opts)) {
    res.y = y;
    res.status = Status::Infeasible;
    return res;
  }
  double fk = p.objective(y);
  res.objective_history.push_back(fk);
  double radius = trust_radius;
  for (int k = 0; k < opts.max_outer; ++k) {
    res.outer_iterations = k + 1;
    QPProblem r = restrict_at(p, y);
    apply_trust_region(r, y, radius);
    QPResult s = solve_qp(r, opts.inner, &y);
    res.last_inner = s;
    const VectorXd& yc = s.y;
    const double step = inf_norm(yc - y) / (1.0 + inf_norm(y));
    const double fc = p.objective(yc);
    const bool feasible = p.max_violation(yc) <= opts.feas_tol;
    if (s.status == Status::Optimal && feasible && fc <= fk) {
      const double decrease = fk - fc;
      y = yc;
      fk = fc;
      res.objective_history.push_back(fk);
      if (std::isfinite(radius)) radius *= 1.5;
      if (step < opts.step_tol ||
          (opts.obj_tol > 0.0 && decrease <= opts.obj_tol * (1.0 + std::abs(fk)))) {
        res.status = Status::Optimal;
        break;
      }
      continue;
    }
    // Rejected. A vanishing step or objective change means y is stationary.
    if (step < opts.step_tol ||
        (feasible && fc - fk <= 1e-12 * (1.0 + std::abs(fk)))) {
      res.status = Status::Optimal;
      break;
    }
    radius = std::isfinite(radius) ? 0.5 * radius
                                   : 0.5 * inf_norm(yc - y);
  }
  res.y = y;
  return res;
}

double min_eigenvalue(const MatrixXd& symmetric) {
  if (symmetric.rows() != symmetric.cols() || symmetric.size() == 0) {
    throw std::invalid_argument("min_eigenvalue: need a nonempty square matrix");
  }
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetric, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

RootResult brent_root(const std::function<double(double)>& f, double lo,
                      double hi) {
  const double flo = f(lo);
  const double fhi = f(hi);
  if (flo == 0.0) return {lo, 0};
  if (fhi == 0.0) return {hi, 0};
  if (std::signbit(flo) == std::signbit(fhi)) {
    throw std::invalid_argument("brent_root: no sign change on bracket");
  }
  std::uintmax_t iters = 200;
  auto tol = [](double a, double b) {
    return std::abs(b - a) <= std::max(1e-14, 4.0 * 2.2e-16 * std::abs(a));
  };
  auto br = boost::math::tools::toms748_solve(f, lo, hi, flo, fhi, tol, iters);
  const double fa = f(br.first);
  const double fb = f(br.second);
  return {std::abs(fa) <= std::abs(fb) ? br.first : br.second,
          static_cast<int>(iters)};
}

MatrixXd solve_lyapunov(const MatrixXd& a, const MatrixXd& w) {
  const Eigen::Index n = a.rows();
  if (a.cols() != n || w.rows() != n || w.cols() != n) {
    throw std::invalid_argument("solve_lyapunov: dimension mismatch");
  }
  auto index = [n](Eigen::Index i, Eigen::Index j) {
    if (i > j) std::swap(i, j);
    return i * n - i * (i - 1) / 2 + (j - i);
  };
  const Eigen::Index m = n * (n + 1) / 2;
  MatrixXd sys = MatrixXd::Zero(m, m);
  VectorXd rhs(m);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      const Eigen::Index row = index(i, j);
      // (A' P)_ij + (P A)_ij = sum_k A_ki P_kj + P_ik A_kj
      for (Eigen::Index k = 0; k < n; ++k) {
        sys(row, index(k, j)) += a(k, i);
        sys(row, index(i, k)) += a(k, j);
      }
      rhs(row) = -0.5 * (w(i, j) + w(j, i));
    }
  }
  Eigen::FullPivLU<MatrixXd> lu(sys);
  if (!lu.isInvertible()) {
    throw std::runtime_error("solve_lyapunov: singular Lyapunov operator");
  }
  VectorXd x = lu.solve(rhs);
  MatrixXd p(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) p(i, j) = x(index(i, j));
  }
  return p;
}

}  // namespace powersat::optim
