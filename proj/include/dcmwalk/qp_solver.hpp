#pragma once

// Dense convex QP solver.
//
//   minimize    1/2 x' H x + f' x
//   subject to  C x + D  = 0
//               E x + F <= 0
//
// Primal active-set method. Equality constraints and the working set are
// eliminated through a nullspace basis from a QR factorization; a feasible
// starting point is found with an auxiliary max-violation problem solved by
// the same iteration, which also yields the infeasibility certificate.

#include <Eigen/Core>

#include <optional>
#include <string>
#include <vector>

namespace dcmwalk {

struct QpProblem
{
  Eigen::MatrixXd H;
  Eigen::VectorXd f;
  Eigen::MatrixXd C;
  Eigen::VectorXd D;
  Eigen::MatrixXd E;
  Eigen::VectorXd F;

  QpProblem() = default;
  /// Unconstrained problem with n variables, all zero.
  explicit QpProblem(Eigen::Index n);

  [[nodiscard]] Eigen::Index num_variables() const { return H.rows(); }
  [[nodiscard]] Eigen::Index num_equalities() const { return C.rows(); }
  [[nodiscard]] Eigen::Index num_inequalities() const { return E.rows(); }

  /// Throws std::invalid_argument on inconsistent dimensions.
  void validate() const;
  [[nodiscard]] double objective(const Eigen::VectorXd& x) const;
};

enum class QpStatus { kOptimal, kInfeasible, kMaxIterations };

[[nodiscard]] const char* to_string(QpStatus s);

struct KktResiduals
{
  double stationarity = 0.0;
  double primal = 0.0;
  double complementarity = 0.0;
};

struct QpSolution
{
  Eigen::VectorXd x;
  Eigen::VectorXd lambda_eq;
  Eigen::VectorXd lambda_ineq;
  QpStatus status = QpStatus::kOptimal;
  int iterations = 0;
  KktResiduals residuals;
  double objective = 0.0;
  /// For kInfeasible: inequality rows (indices into E) that cannot be
  /// satisfied together with the equalities. Empty when the equalities alone
  /// are inconsistent; see inconsistent_equalities.
  std::vector<int> violated;
  std::vector<int> inconsistent_equalities;
  /// Smallest achievable max inequality violation, for kInfeasible.
  double min_violation = 0.0;
};

struct QpSettings
{
  double tolerance = 1e-8;
  /// Iteration cap per phase; <= 0 means 50 * max(1, number of inequalities).
  int max_iterations = 0;
};

/// Residual norms of a candidate solution:
///   stationarity     |H x + f + C' l_eq + E' l_ineq|_inf
///   primal           max(|C x + D|_inf, max(0, E x + F))
///   complementarity  max_i |l_ineq_i * (E x + F)_i|
[[nodiscard]] KktResiduals kkt_residual(const QpProblem& p, const QpSolution& s);

class QpSolver
{
public:
  explicit QpSolver(QpSettings settings = {}) : settings_(settings) {}

  [[nodiscard]] QpSolution solve(const QpProblem& p, const std::optional<Eigen::VectorXd>& warm_start = std::nullopt);

  [[nodiscard]] const QpSettings& settings() const { return settings_; }

private:
  QpSettings settings_;
};

[[nodiscard]] inline QpSolution solve_qp(const QpProblem& p,
                                         const std::optional<Eigen::VectorXd>& warm_start = std::nullopt)
{
  return QpSolver{}.solve(p, warm_start);
}

}  // namespace dcmwalk
