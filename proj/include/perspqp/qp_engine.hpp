#pragma once

// Warm-startable active-set solver for convex QPs (and LPs) of the form
//
//   min  linear'x + (sigma/2) x'Qx + offset
//   s.t. Ax = b,  lower <= x <= upper.
//
// Every equality row carries a logical variable s_i (Ax + s = b) that is
// fixed at zero outside of phase 1, so redundant or dependent rows need no
// special treatment. Variables are partitioned into basic (m of them, a
// nonsingular basis B), superbasic (free, on which the reduced Hessian
// Z'HZ is kept positive definite) and nonbasic (at a bound). With
// sigma = 0 the superbasic set stays empty and the method is the bounded
// primal simplex method.

#include "perspqp/core_model.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

namespace perspqp {

enum class VarStatus : std::uint8_t { Basic, AtLower, AtUpper };
enum class StartMode { PrimalStart, DualStart };
enum class QpStatus { Optimal, Infeasible, IterLimit };

const char* to_string(QpStatus s);
const char* to_string(StartMode m);

/// Warm-start token. `status` tags each structural variable; `head` lists the
/// basis columns (indices >= n denote logicals) and `values` the structural
/// point the basis was optimal at. Plain data; safe to copy across threads.
struct WorkingBasis {
  std::vector<VarStatus> status;
  std::vector<Index> head;
  Eigen::VectorXd values;

  bool empty() const { return status.empty(); }
  Index num_basic() const;
};

struct QpOptions {
  double feas_tol = 1e-9;
  double opt_tol = 1e-9;
  double comp_tol = 1e-9;
  double pivot_tol = 1e-11;
  int degenerate_limit = 50;   // consecutive degenerate pivots before Bland's rule
  int refactor_interval = 100;
  double growth_limit = 1e8;
  Index pivot_cap = 0;         // 0 selects 50 * (n + m)
  bool record_objective = false;
};

struct QpSolution {
  Eigen::VectorXd x;
  Eigen::VectorXd lambda;
  Eigen::VectorXd mu_lower;
  Eigen::VectorXd mu_upper;
  double objective = 0.0;  // includes the offset
  WorkingBasis basis;
  Index iterations = 0;    // all pivots: phase 1, dual and primal
  QpStatus status = QpStatus::Optimal;

  Index phase1_iterations = 0;
  Index dual_iterations = 0;
  StartMode mode = StartMode::PrimalStart;
  bool warm = false;        // a warm basis was supplied
  bool repaired = false;    // the warm basis needed phase 1 (or a dual start fell back)
  std::vector<double> objective_trace;  // objective after each primal pivot, if recorded
};

/// Reusable solver object. Holds the factorization state of the last solve;
/// one solve at a time per object.
class QpSolver {
 public:
  explicit QpSolver(QpOptions options = {});
  ~QpSolver();
  QpSolver(QpSolver&&) noexcept;
  QpSolver& operator=(QpSolver&&) noexcept;

  QpSolution solve(const QpProblemd& problem, const WorkingBasis* warm = nullptr,
                   StartMode mode = StartMode::PrimalStart);

  const QpOptions& options() const { return options_; }

 private:
  class Impl;
  QpOptions options_;
  std::unique_ptr<Impl> impl_;
};

QpSolution solve_qp(const QpProblemd& problem, const WorkingBasis* warm = nullptr,
                    StartMode mode = StartMode::PrimalStart, const QpOptions& options = {});

/// Re-solves after a bound change starting from the previous optimal basis
/// with dual active-set pivots.
QpSolution reoptimize_after_bound_change(const QpSolution& previous, const QpProblemd& problem,
                                         const QpOptions& options = {});

/// ||linear + sigma Q x - A'lambda - mu_lower + mu_upper||_inf.
double qp_stationarity(const QpProblemd& problem, const QpSolution& sol);

}  // namespace perspqp
