#pragma once

// Outer drivers over the one-dimensional value function
//
//   g(t) = min_x { c'x + (omega/2t) x'Qx + (omega/2) t : x in X },
//
// whose minimizer t* equals sqrt(x*'Qx*) for the conic optimum x*.
// solve_cd alternates exact minimization in x (a QP) and in t (closed form);
// solve_bisection brackets t* and contracts the bracket with the same
// closed-form step. Both warm-start every QP from the previous basis.

#include "perspqp/core_model.hpp"
#include "perspqp/qp_engine.hpp"

#include <limits>
#include <optional>
#include <vector>

namespace perspqp {

/// t0 value that requests the LP relaxation as the first subproblem.
inline constexpr double kLpSentinel = std::numeric_limits<double>::infinity();

struct CdOptions {
  double t0 = kLpSentinel;
  double delta = 1e-5;
  double qp_eps = 1e-9;
  int max_outer = 1000;
  double t_floor = 1e-10;
  /// k in the step-ratio test |dt|/t <= (delta - qp_eps)/k; must bound
  /// ||grad f||_inf on X. NaN selects omega * max_i sqrt(Q_ii), which bounds it
  /// everywhere by Cauchy-Schwarz.
  double grad_bound = std::numeric_limits<double>::quiet_NaN();
  bool warm_qp = true;  // false: every QP is solved from scratch (same t sequence)
  QpOptions qp;
};

struct BisectOptions {
  double t_min0 = 0.0;
  double t_max0 = std::numeric_limits<double>::quiet_NaN();  // NaN: from the LP relaxation
  double gap_tol = 1e-6;
  double delta = 1e-5;
  double qp_eps = 1e-9;
  int max_outer = 200;
  double t_floor = 1e-10;
  /// Coordinate-descent steps allowed after a gap stop to certify the
  /// returned point (dual bound <= delta).
  int max_certify = 50;
  QpOptions qp;
};

enum class ConicStatus { Optimal, ToleranceReached, IterLimit, TZero, Infeasible };
enum class StopReason { None, DualBound, StepRatio, Gap, Interval, TZero, IterLimit, Infeasible };

const char* to_string(ConicStatus s);
const char* to_string(StopReason s);

/// One QP of an outer run: the t it was solved at, g(t), the conic objective
/// of its minimizer and the pivots it took.
struct TracePoint {
  double t = 0.0;
  double g = 0.0;
  double f = 0.0;
  Index pivots = 0;
};

struct Bracket {
  double t_min = 0.0;
  double t_max = 0.0;
};

struct ConicSolveResult {
  ConicStatus status = ConicStatus::IterLimit;
  StopReason stop = StopReason::None;
  Eigen::VectorXd x;
  double t = 0.0;              // sqrt(x'Qx) of the returned point
  double objective = 0.0;      // c'x + omega sqrt(x'Qx)
  double lower_bound = -std::numeric_limits<double>::infinity();  // bisection only
  double kkt_residual = std::numeric_limits<double>::quiet_NaN();
  double dual_bound = std::numeric_limits<double>::quiet_NaN();   // last estimate computed
  KktCertificated certificate;
  WorkingBasis basis;          // basis of the QP that produced x
  std::vector<TracePoint> trace;
  std::vector<Bracket> brackets;  // bracket after each bisection step (initial one first)
  Index qp_count = 0;
  Index pivot_count = 0;
  Index certify_qps = 0;       // bisection: QPs spent certifying after a gap stop
  bool first_qp_warm = false;
  bool first_qp_dual = false;
  bool first_qp_repaired = false;

  bool converged() const { return status == ConicStatus::Optimal || status == ConicStatus::ToleranceReached; }
};

/// Warm start for solve_cd: a basis and the t at which it was optimal.
struct CdWarmStart {
  WorkingBasis basis;
  double t = 1.0;
};

ConicSolveResult solve_cd(const ConicInstanced& inst, const CdOptions& opt = {},
                          const std::optional<CdWarmStart>& warm = std::nullopt);

ConicSolveResult solve_bisection(const ConicInstanced& inst, const BisectOptions& opt = {});

struct LpInit {
  QpStatus status = QpStatus::Optimal;
  double t_max = 0.0;
  Eigen::VectorXd x;
  WorkingBasis basis;
  Index pivots = 0;
};

/// Solves the LP relaxation min c'x over X; t_max = sqrt(x_LP'Q x_LP) >= t*.
LpInit init_tmax_from_lp(const ConicInstanced& inst, const QpOptions& qp = {});

/// omega * max_i sqrt(Q_ii) >= ||grad f(x)||_inf for every x with x'Qx > 0.
double gradient_bound(const ConicInstanced& inst);

}  // namespace perspqp
