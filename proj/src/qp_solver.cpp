#include "dcmwalk/qp_solver.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace dcmwalk {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

QpProblem::QpProblem(Index n)
  : H(MatrixXd::Zero(n, n)), f(VectorXd::Zero(n)), C(0, n), D(0), E(0, n), F(0)
{
}

void QpProblem::validate() const
{
  const Index n = H.rows();
  if (H.cols() != n || f.size() != n) throw std::invalid_argument("QpProblem: H must be n x n and f of length n");
  if (C.cols() != n || C.rows() != D.size()) throw std::invalid_argument("QpProblem: C/D dimensions mismatch");
  if (E.cols() != n || E.rows() != F.size()) throw std::invalid_argument("QpProblem: E/F dimensions mismatch");
}

double QpProblem::objective(const VectorXd& x) const
{
  return 0.5 * x.dot(H * x) + f.dot(x);
}

const char* to_string(QpStatus s)
{
  switch (s) {
    case QpStatus::kOptimal:
      return "optimal";
    case QpStatus::kInfeasible:
      return "infeasible";
    case QpStatus::kMaxIterations:
      return "max-iterations";
  }
  return "?";
}

KktResiduals kkt_residual(const QpProblem& p, const QpSolution& s)
{
  KktResiduals r;
  const Index n = p.num_variables();
  if (s.x.size() != n) throw std::invalid_argument("kkt_residual: primal vector has wrong length");

  VectorXd grad = p.H * s.x + p.f;
  if (p.num_equalities() > 0 && s.lambda_eq.size() == p.num_equalities()) grad += p.C.transpose() * s.lambda_eq;
  if (p.num_inequalities() > 0 && s.lambda_ineq.size() == p.num_inequalities()) {
    grad += p.E.transpose() * s.lambda_ineq;
  }
  r.stationarity = n > 0 ? grad.lpNorm<Eigen::Infinity>() : 0.0;

  if (p.num_equalities() > 0) r.primal = (p.C * s.x + p.D).lpNorm<Eigen::Infinity>();
  if (p.num_inequalities() > 0) {
    const VectorXd ineq = p.E * s.x + p.F;
    r.primal = std::max(r.primal, std::max(0.0, ineq.maxCoeff()));
    if (s.lambda_ineq.size() == ineq.size()) {
      r.complementarity = s.lambda_ineq.cwiseProduct(ineq).lpNorm<Eigen::Infinity>();
    }
  }
  return r;
}

namespace {

/// Problem in the form used by the iteration: rows of Ae and Ai have unit
/// 2-norm, Ae has full row rank.
struct CoreProblem
{
  MatrixXd H;
  VectorXd f;
  MatrixXd Ae;
  VectorXd be;
  MatrixXd Ai;
  VectorXd bi;
};

struct CoreResult
{
  VectorXd x;
  VectorXd lam_e;
  VectorXd lam_i;
  std::vector<int> working;
  int iterations = 0;
  bool converged = false;
};

MatrixXd working_matrix(const CoreProblem& P, const std::vector<int>& W)
{
  const Index n = P.H.rows();
  const Index me = P.Ae.rows();
  MatrixXd A(me + static_cast<Index>(W.size()), n);
  if (me > 0) A.topRows(me) = P.Ae;
  for (std::size_t k = 0; k < W.size(); ++k) A.row(me + static_cast<Index>(k)) = P.Ai.row(W[k]);
  return A;
}

/// Solves the reduced Newton system, regularizing if the reduced Hessian is
/// numerically singular.
VectorXd reduced_newton(const MatrixXd& Hz, const VectorXd& gz)
{
  Eigen::LLT<MatrixXd> llt(Hz);
  if (llt.info() == Eigen::Success) return -llt.solve(gz);
  const double shift = 1e-10 * std::max(1.0, Hz.diagonal().cwiseAbs().maxCoeff());
  MatrixXd reg = Hz;
  reg.diagonal().array() += shift;
  return -reg.ldlt().solve(gz);
}

/// Primal active-set iteration from a feasible point x. W holds inequality
/// indices that are active at x with linearly independent rows.
CoreResult active_set(const CoreProblem& P, VectorXd x, std::vector<int> W, int max_iter, double dual_tol)
{
  const Index n = P.H.rows();
  const Index me = P.Ae.rows();
  const Index mi = P.Ai.rows();
  std::vector<char> in_w(static_cast<std::size_t>(mi), 0);
  for (int i : W) in_w[i] = 1;

  CoreResult res;
  Eigen::HouseholderQR<MatrixXd> qr;
  for (int iter = 0; iter < max_iter; ++iter) {
    res.iterations = iter + 1;
    const MatrixXd A = working_matrix(P, W);
    const Index w = A.rows();
    MatrixXd Q;
    if (w > 0) {
      qr.compute(A.transpose());
      Q = qr.householderQ();
    }
    VectorXd g = P.H * x + P.f;

    VectorXd p = VectorXd::Zero(n);
    if (n - w > 0) {
      const MatrixXd Z = w > 0 ? MatrixXd(Q.rightCols(n - w)) : MatrixXd::Identity(n, n);
      const MatrixXd HZ = P.H * Z;
      const MatrixXd Hz = Z.transpose() * HZ;
      p = Z * reduced_newton(Hz, Z.transpose() * g);
    }

    double alpha = 1.0;
    int blocking = -1;
    const double pnorm = p.norm();
    if (pnorm > 0.0) {
      for (Index i = 0; i < mi; ++i) {
        if (in_w[i]) continue;
        const double ap = P.Ai.row(i).dot(p);
        if (ap <= 1e-12 * pnorm) continue;
        const double slack = -(P.Ai.row(i).dot(x) + P.bi(i));
        const double step = std::max(0.0, slack) / ap;
        if (step < alpha) {
          alpha = step;
          blocking = static_cast<int>(i);
        }
      }
      x += alpha * p;
    }

    if (blocking >= 0) {
      W.push_back(blocking);
      in_w[blocking] = 1;
      continue;
    }

    // Subspace minimizer reached; check multipliers of the working set.
    g = P.H * x + P.f;
    VectorXd lam = VectorXd::Zero(w);
    if (w > 0) {
      const VectorXd rhs = -(Q.leftCols(w).transpose() * g);
      lam = qr.matrixQR().topLeftCorner(w, w).triangularView<Eigen::Upper>().solve(rhs);
    }
    int drop = -1;
    double most_negative = -dual_tol;
    for (std::size_t k = 0; k < W.size(); ++k) {
      const double l = lam(me + static_cast<Index>(k));
      if (l < most_negative) {
        most_negative = l;
        drop = static_cast<int>(k);
      }
    }
    if (drop < 0) {
      res.converged = true;
      res.lam_e = lam.head(me);
      res.lam_i = VectorXd::Zero(mi);
      for (std::size_t k = 0; k < W.size(); ++k) {
        res.lam_i(W[k]) = std::max(0.0, lam(me + static_cast<Index>(k)));
      }
      break;
    }
    in_w[W[drop]] = 0;
    W.erase(W.begin() + drop);
  }
  res.x = std::move(x);
  res.working = std::move(W);
  if (!res.converged) {
    res.lam_e = VectorXd::Zero(me);
    res.lam_i = VectorXd::Zero(mi);
  }
  return res;
}

/// Inequalities active at x whose rows are independent of the equalities and
/// of each other.
std::vector<int> initial_working_set(const CoreProblem& P, const VectorXd& x, double active_tol)
{
  const Index n = P.H.rows();
  const Index me = P.Ae.rows();
  std::vector<VectorXd> basis;
  if (me > 0) {
    Eigen::HouseholderQR<MatrixXd> qr(P.Ae.transpose());
    const MatrixXd Y = MatrixXd(qr.householderQ()).leftCols(me);
    for (Index k = 0; k < me; ++k) basis.push_back(Y.col(k));
  }
  std::vector<int> W;
  for (Index i = 0; i < P.Ai.rows() && static_cast<Index>(basis.size()) < n; ++i) {
    const double r = P.Ai.row(i).dot(x) + P.bi(i);
    if (std::abs(r) > active_tol) continue;
    VectorXd v = P.Ai.row(i).transpose();
    for (const auto& b : basis) v -= b.dot(v) * b;
    const double nv = v.norm();
    if (nv < 1e-6) continue;
    basis.push_back(v / nv);
    W.push_back(static_cast<int>(i));
  }
  return W;
}

struct Presolved
{
  bool inconsistent = false;
  std::vector<int> bad_eq;
  std::vector<int> bad_ineq;

  std::vector<Index> free_vars;
  VectorXd x_fixed;            // full length, values of fixed variables
  std::vector<int> fixed_by;   // per original variable: fixing row or -1
  std::vector<int> eq_rows;    // core equality row -> original row
  std::vector<int> ineq_rows;  // core inequality row -> original row
  VectorXd eq_scale;
  VectorXd ineq_scale;
  CoreProblem core;
};

Presolved presolve(const QpProblem& p, double tol)
{
  const Index n = p.num_variables();
  const Index me = p.num_equalities();
  const Index mi = p.num_inequalities();
  Presolved ps;
  ps.x_fixed = VectorXd::Zero(n);
  ps.fixed_by.assign(static_cast<std::size_t>(n), -1);

  std::vector<char> singleton(static_cast<std::size_t>(me), 0);
  for (Index r = 0; r < me; ++r) {
    Index nnz = 0, col = -1;
    for (Index j = 0; j < n; ++j) {
      if (p.C(r, j) != 0.0) {
        ++nnz;
        col = j;
      }
    }
    if (nnz != 1) continue;
    singleton[r] = 1;
    const double v = -p.D(r) / p.C(r, col);
    if (ps.fixed_by[col] >= 0) {
      if (std::abs(ps.x_fixed(col) - v) > tol * (1.0 + std::abs(v))) {
        ps.inconsistent = true;
        ps.bad_eq.push_back(static_cast<int>(r));
      }
      continue;
    }
    ps.fixed_by[col] = static_cast<int>(r);
    ps.x_fixed(col) = v;
  }
  for (Index j = 0; j < n; ++j) {
    if (ps.fixed_by[j] < 0) ps.free_vars.push_back(j);
  }
  const Index nf = static_cast<Index>(ps.free_vars.size());

  auto restrict_row = [&](const MatrixXd& M, Index r, VectorXd& row) {
    row.resize(nf);
    for (Index k = 0; k < nf; ++k) row(k) = M(r, ps.free_vars[k]);
    double offset = 0.0;
    for (Index j = 0; j < n; ++j) {
      if (ps.fixed_by[j] >= 0) offset += M(r, j) * ps.x_fixed(j);
    }
    return offset;
  };

  CoreProblem& c = ps.core;
  c.H.resize(nf, nf);
  c.f.resize(nf);
  for (Index a = 0; a < nf; ++a) {
    double fa = p.f(ps.free_vars[a]);
    for (Index j = 0; j < n; ++j) {
      if (ps.fixed_by[j] >= 0) fa += p.H(ps.free_vars[a], j) * ps.x_fixed(j);
    }
    c.f(a) = fa;
    for (Index b = 0; b < nf; ++b) c.H(a, b) = p.H(ps.free_vars[a], ps.free_vars[b]);
  }

  std::vector<VectorXd> eq_rows;
  std::vector<double> eq_off, eq_scale;
  VectorXd row;
  for (Index r = 0; r < me; ++r) {
    if (singleton[r]) continue;
    const double off = restrict_row(p.C, r, row) + p.D(r);
    const double nr = row.norm();
    if (nr <= 1e-14 * std::max(1.0, p.C.row(r).norm())) {
      if (std::abs(off) > tol) {
        ps.inconsistent = true;
        ps.bad_eq.push_back(static_cast<int>(r));
      }
      continue;
    }
    eq_rows.push_back(row / nr);
    eq_off.push_back(off / nr);
    eq_scale.push_back(nr);
    ps.eq_rows.push_back(static_cast<int>(r));
  }

  std::vector<VectorXd> in_rows;
  std::vector<double> in_off, in_scale;
  for (Index r = 0; r < mi; ++r) {
    const double off = restrict_row(p.E, r, row) + p.F(r);
    const double nr = row.norm();
    if (nr <= 1e-14 * std::max(1.0, p.E.row(r).norm())) {
      if (off > tol) {
        ps.inconsistent = true;
        ps.bad_ineq.push_back(static_cast<int>(r));
      }
      continue;
    }
    in_rows.push_back(row / nr);
    in_off.push_back(off / nr);
    in_scale.push_back(nr);
    ps.ineq_rows.push_back(static_cast<int>(r));
  }

  // Keep a maximal independent subset of the equality rows.
  if (!eq_rows.empty()) {
    MatrixXd At(nf, static_cast<Index>(eq_rows.size()));
    for (std::size_t k = 0; k < eq_rows.size(); ++k) At.col(static_cast<Index>(k)) = eq_rows[k];
    Eigen::ColPivHouseholderQR<MatrixXd> cqr(At);
    cqr.setThreshold(1e-10);
    const Index rank = cqr.rank();
    if (rank < static_cast<Index>(eq_rows.size())) {
      std::vector<int> keep;
      for (Index k = 0; k < rank; ++k) keep.push_back(cqr.colsPermutation().indices()(k));
      std::sort(keep.begin(), keep.end());
      MatrixXd Ak(static_cast<Index>(keep.size()), nf);
      VectorXd bk(static_cast<Index>(keep.size()));
      for (std::size_t k = 0; k < keep.size(); ++k) {
        Ak.row(static_cast<Index>(k)) = eq_rows[keep[k]];
        bk(static_cast<Index>(k)) = eq_off[keep[k]];
      }
      const VectorXd xm = Ak.completeOrthogonalDecomposition().solve(-bk);
      for (std::size_t k = 0; k < eq_rows.size(); ++k) {
        if (std::abs(eq_rows[k].dot(xm) + eq_off[k]) > 10 * tol) {
          ps.inconsistent = true;
          ps.bad_eq.push_back(ps.eq_rows[k]);
        }
      }
      std::vector<VectorXd> r2;
      std::vector<double> o2, s2;
      std::vector<int> m2;
      for (int k : keep) {
        r2.push_back(eq_rows[k]);
        o2.push_back(eq_off[k]);
        s2.push_back(eq_scale[k]);
        m2.push_back(ps.eq_rows[k]);
      }
      eq_rows = std::move(r2);
      eq_off = std::move(o2);
      eq_scale = std::move(s2);
      ps.eq_rows = std::move(m2);
    }
  }

  c.Ae.resize(static_cast<Index>(eq_rows.size()), nf);
  c.be.resize(static_cast<Index>(eq_rows.size()));
  ps.eq_scale.resize(c.be.size());
  for (std::size_t k = 0; k < eq_rows.size(); ++k) {
    c.Ae.row(static_cast<Index>(k)) = eq_rows[k];
    c.be(static_cast<Index>(k)) = eq_off[k];
    ps.eq_scale(static_cast<Index>(k)) = eq_scale[k];
  }
  c.Ai.resize(static_cast<Index>(in_rows.size()), nf);
  c.bi.resize(static_cast<Index>(in_rows.size()));
  ps.ineq_scale.resize(c.bi.size());
  for (std::size_t k = 0; k < in_rows.size(); ++k) {
    c.Ai.row(static_cast<Index>(k)) = in_rows[k];
    c.bi(static_cast<Index>(k)) = in_off[k];
    ps.ineq_scale(static_cast<Index>(k)) = in_scale[k];
  }
  return ps;
}

/// Closest point to x0 on the equality manifold.
VectorXd project_to_equalities(const CoreProblem& P, const VectorXd& x0)
{
  if (P.Ae.rows() == 0) return x0;
  const VectorXd r = P.Ae * x0 + P.be;
  Eigen::HouseholderQR<MatrixXd> qr(P.Ae.transpose());
  const Index me = P.Ae.rows();
  const MatrixXd Y = MatrixXd(qr.householderQ()).leftCols(me);
  const VectorXd z =
    qr.matrixQR().topLeftCorner(me, me).triangularView<Eigen::Upper>().transpose().solve(r);
  return x0 - Y * z;
}

double max_violation(const CoreProblem& P, const VectorXd& x)
{
  if (P.Ai.rows() == 0) return 0.0;
  return (P.Ai * x + P.bi).maxCoeff();
}

}  // namespace

QpSolution QpSolver::solve(const QpProblem& p, const std::optional<VectorXd>& warm_start)
{
  p.validate();
  const double tol = settings_.tolerance;
  const Index n = p.num_variables();
  const Index mi_orig = p.num_inequalities();
  const int cap = settings_.max_iterations > 0 ? settings_.max_iterations
                                               : 50 * std::max<int>(1, static_cast<int>(mi_orig));

  QpSolution sol;
  sol.lambda_eq = VectorXd::Zero(p.num_equalities());
  sol.lambda_ineq = VectorXd::Zero(mi_orig);

  Presolved ps = presolve(p, tol);
  const CoreProblem& P = ps.core;
  const Index nf = P.H.rows();

  auto expand = [&](const VectorXd& xf) {
    VectorXd x = ps.x_fixed;
    for (Index k = 0; k < nf; ++k) x(ps.free_vars[k]) = xf(k);
    return x;
  };
  auto finish = [&](QpSolution& s) {
    s.objective = p.objective(s.x);
    s.residuals = kkt_residual(p, s);
    return s;
  };

  VectorXd x0 = VectorXd::Zero(nf);
  if (warm_start && warm_start->size() == n) {
    for (Index k = 0; k < nf; ++k) x0(k) = (*warm_start)(ps.free_vars[k]);
  }

  if (ps.inconsistent) {
    sol.status = QpStatus::kInfeasible;
    sol.inconsistent_equalities = ps.bad_eq;
    sol.violated = ps.bad_ineq;
    sol.x = expand(x0);
    if (mi_orig > 0) sol.min_violation = std::max(0.0, (p.E * sol.x + p.F).maxCoeff());
    return finish(sol);
  }

  x0 = project_to_equalities(P, x0);
  const Index mi = P.Ai.rows();
  const Index me = P.Ae.rows();

  // Phase 1: minimize the max violation t >= 0 with a small proximal term.
  // The term can hold t above zero when feasibility needs a long step, so it
  // is relaxed before declaring the problem infeasible.
  if (max_violation(P, x0) > tol) {
    CoreProblem aux;
    aux.f.resize(nf + 1);
    aux.f(nf) = 1.0;
    aux.Ae = MatrixXd::Zero(me, nf + 1);
    aux.Ae.leftCols(nf) = P.Ae;
    aux.be = P.be;
    aux.Ai = MatrixXd::Zero(mi + 1, nf + 1);
    aux.Ai.topLeftCorner(mi, nf) = P.Ai;
    aux.Ai.block(0, nf, mi, 1).setConstant(-1.0);
    aux.Ai(mi, nf) = -1.0;
    aux.bi = VectorXd::Zero(mi + 1);
    aux.bi.head(mi) = P.bi;

    VectorXd z0(nf + 1);
    z0.head(nf) = x0;
    const VectorXd r0 = P.Ai * x0 + P.bi;
    Index worst = 0;
    z0(nf) = r0.maxCoeff(&worst);
    std::vector<int> W0{static_cast<int>(worst)};

    CoreResult ph1;
    for (double prox : {1e-6, 1e-9, 1e-12}) {
      aux.H = prox * MatrixXd::Identity(nf + 1, nf + 1);
      aux.f.head(nf) = -prox * x0;
      ph1 = active_set(aux, z0, W0, cap, 1e-12);
      sol.iterations += ph1.iterations;
      if (!ph1.converged || ph1.x(nf) <= tol) break;
      z0 = ph1.x;
      W0 = ph1.working;
    }
    const double t = ph1.x(nf);
    if (!ph1.converged) {
      sol.status = QpStatus::kMaxIterations;
      sol.x = expand(ph1.x.head(nf));
      return finish(sol);
    }
    if (t > tol) {
      sol.status = QpStatus::kInfeasible;
      sol.x = expand(ph1.x.head(nf));
      for (int i : ph1.working) {
        if (i < mi && ph1.lam_i(i) > 0.0) sol.violated.push_back(ps.ineq_rows[i]);
      }
      std::sort(sol.violated.begin(), sol.violated.end());
      sol.min_violation = mi_orig > 0 ? std::max(0.0, (p.E * sol.x + p.F).maxCoeff()) : 0.0;
      return finish(sol);
    }
    x0 = ph1.x.head(nf);
  }

  // Phase 2.
  const std::vector<int> W0 = initial_working_set(P, x0, 1e-9);
  const double dual_tol = 1e-10 * (1.0 + (P.f.size() > 0 ? P.f.lpNorm<Eigen::Infinity>() : 0.0));
  CoreResult ph2 = active_set(P, x0, W0, cap, dual_tol);
  sol.iterations += ph2.iterations;
  sol.x = expand(ph2.x);
  sol.status = ph2.converged ? QpStatus::kOptimal : QpStatus::kMaxIterations;

  for (Index k = 0; k < mi; ++k) sol.lambda_ineq(ps.ineq_rows[k]) = ph2.lam_i(k) / ps.ineq_scale(k);
  for (Index k = 0; k < me; ++k) sol.lambda_eq(ps.eq_rows[k]) = ph2.lam_e(k) / ps.eq_scale(k);

  // Multipliers of the rows that fixed variables follow from stationarity in
  // those coordinates.
  if (ph2.converged) {
    VectorXd grad = p.H * sol.x + p.f;
    if (p.num_equalities() > 0) grad += p.C.transpose() * sol.lambda_eq;
    if (mi_orig > 0) grad += p.E.transpose() * sol.lambda_ineq;
    for (Index j = 0; j < n; ++j) {
      const int r = ps.fixed_by[j];
      if (r >= 0) sol.lambda_eq(r) = -grad(j) / p.C(r, j);
    }
  }
  return finish(sol);
}

}  // namespace dcmwalk
