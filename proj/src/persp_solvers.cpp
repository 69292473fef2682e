#include "perspqp/persp_solvers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace perspqp {

const char* to_string(ConicStatus s) {
  switch (s) {
    case ConicStatus::Optimal: return "optimal";
    case ConicStatus::ToleranceReached: return "tolerance-reached";
    case ConicStatus::IterLimit: return "iteration-limit";
    case ConicStatus::TZero: return "t-zero";
    case ConicStatus::Infeasible: return "infeasible";
  }
  return "?";
}

const char* to_string(StopReason s) {
  switch (s) {
    case StopReason::None: return "none";
    case StopReason::DualBound: return "dual-bound";
    case StopReason::StepRatio: return "step-ratio";
    case StopReason::Gap: return "gap";
    case StopReason::Interval: return "interval";
    case StopReason::TZero: return "t-zero";
    case StopReason::IterLimit: return "iteration-limit";
    case StopReason::Infeasible: return "infeasible";
  }
  return "?";
}

namespace {

double risk(const ConicInstanced& inst, const Eigen::VectorXd& x) {
  return std::sqrt(std::max(inst.q.quad(x), 0.0));
}

// Fills the point-dependent fields of `res` from the QP solution that produced x.
void adopt(ConicSolveResult& res, const ConicInstanced& inst, const QpSolution& sol) {
  res.x = sol.x;
  res.t = risk(inst, sol.x);
  res.objective = eval_objective(inst, sol.x);
  res.basis = sol.basis;
  if (inst.q.quad(sol.x) > kQZeroTol) {
    res.certificate = certify(inst, sol.x, sol.lambda, sol.mu_lower, sol.mu_upper);
    res.kkt_residual = res.certificate.residual_inf;
  }
}

void count(ConicSolveResult& res, const QpSolution& sol) {
  if (res.qp_count == 0) {
    res.first_qp_warm = sol.warm;
    res.first_qp_dual = sol.warm && sol.mode == StartMode::DualStart;
    res.first_qp_repaired = sol.repaired;
  }
  ++res.qp_count;
  res.pivot_count += sol.iterations;
}

// The dual-bound estimate needs the QP's own stationarity residual; use the
// measured one when it exceeds the nominal engine tolerance.
// Engine options whose absolute stationarity threshold opt_tol (1 + ||c||_inf)
// does not exceed qp_eps.
QpOptions engine_options(const ConicInstanced& inst, QpOptions qp, double qp_eps) {
  const double scale = inst.size() > 0 ? inst.c.cwiseAbs().maxCoeff() : 0.0;
  qp.opt_tol = std::min(qp.opt_tol, qp_eps / (1.0 + scale));
  return qp;
}

double qp_eps_of(const QpProblemd& p, const QpSolution& sol, double nominal) {
  return std::max(nominal, qp_stationarity(p, sol));
}

bool failed(ConicSolveResult& res, const QpSolution& sol) {
  if (sol.status == QpStatus::Infeasible) {
    res.status = ConicStatus::Infeasible;
    res.stop = StopReason::Infeasible;
    return true;
  }
  if (sol.status == QpStatus::IterLimit) {
    res.status = ConicStatus::IterLimit;
    res.stop = StopReason::IterLimit;
    return true;
  }
  return false;
}

}  // namespace

double gradient_bound(const ConicInstanced& inst) {
  return inst.omega * std::sqrt(std::max(inst.q.diagonal_entries().maxCoeff(), 0.0));
}

LpInit init_tmax_from_lp(const ConicInstanced& inst, const QpOptions& qp) {
  const QpSolution sol = solve_qp(subproblem_objective(inst, kLpSentinel), nullptr, StartMode::PrimalStart, qp);
  LpInit out;
  out.status = sol.status;
  out.pivots = sol.iterations;
  if (sol.status != QpStatus::Optimal) return out;
  out.x = sol.x;
  out.t_max = risk(inst, sol.x);
  out.basis = sol.basis;
  return out;
}

ConicSolveResult solve_cd(const ConicInstanced& inst, const CdOptions& opt, const std::optional<CdWarmStart>& warm) {
  if (!(opt.delta > opt.qp_eps)) throw std::invalid_argument("solve_cd: delta must exceed qp_eps");
  if (!(opt.t0 > 0)) throw std::invalid_argument("solve_cd: t0 must be positive");
  ConicSolveResult res;
  QpSolver solver(engine_options(inst, opt.qp, opt.qp_eps));
  const double k = std::isnan(opt.grad_bound) ? gradient_bound(inst) : opt.grad_bound;
  const double ratio_tol = k > 0 ? (opt.delta - opt.qp_eps) / k : kLpSentinel;
  double t = warm ? warm->t : opt.t0;
  if (!(t > 0)) throw std::invalid_argument("solve_cd: warm-start t must be positive");
  WorkingBasis basis;
  bool have_basis = false;
  StartMode mode = StartMode::PrimalStart;
  if (warm && !warm->basis.empty()) {
    basis = warm->basis;
    have_basis = true;
    mode = StartMode::DualStart;
  }

  for (int it = 0; it < opt.max_outer; ++it) {
    const QpProblemd p = subproblem_objective(inst, t);
    const WorkingBasis* w = have_basis && opt.warm_qp ? &basis : nullptr;
    const QpSolution sol = solver.solve(p, w, mode);
    count(res, sol);
    if (failed(res, sol)) return res;
    basis = sol.basis;
    have_basis = true;
    mode = StartMode::PrimalStart;

    const double t_next = risk(inst, sol.x);
    res.trace.push_back({t, sol.objective, eval_objective(inst, sol.x), sol.iterations});
    adopt(res, inst, sol);
    if (t_next < opt.t_floor) {
      res.status = ConicStatus::TZero;
      res.stop = StopReason::TZero;
      return res;
    }
    if (std::isinf(t)) {
      t = t_next;
      continue;
    }
    res.dual_bound = dual_bound_estimate(inst, sol.x, t, t_next, qp_eps_of(p, sol, opt.qp_eps));
    const double ratio = std::abs(t_next - t) / t;
    t = t_next;
    if (res.dual_bound <= opt.delta) {
      res.status = ConicStatus::Optimal;
      res.stop = StopReason::DualBound;
      return res;
    }
    if (ratio <= ratio_tol) {
      res.status = ConicStatus::ToleranceReached;
      res.stop = StopReason::StepRatio;
      return res;
    }
  }
  res.status = ConicStatus::IterLimit;
  res.stop = StopReason::IterLimit;
  return res;
}

ConicSolveResult solve_bisection(const ConicInstanced& inst, const BisectOptions& opt) {
  if (!(opt.delta > opt.qp_eps)) throw std::invalid_argument("solve_bisection: delta must exceed qp_eps");
  ConicSolveResult res;
  QpSolver solver(engine_options(inst, opt.qp, opt.qp_eps));

  // The LP relaxation supplies t_max, the first basis, and the first high point.
  const QpSolution lp = solver.solve(subproblem_objective(inst, kLpSentinel));
  count(res, lp);
  if (failed(res, lp)) return res;
  res.trace.push_back({kLpSentinel, lp.objective, eval_objective(inst, lp.x), lp.iterations});
  WorkingBasis basis = lp.basis;

  double t_min = std::max(opt.t_min0, 0.0);
  double t_max = std::isnan(opt.t_max0) ? risk(inst, lp.x) : opt.t_max0;
  if (t_min > t_max) throw std::invalid_argument("solve_bisection: t_min0 exceeds t_max0");
  res.brackets.push_back({t_min, t_max});

  QpSolution incumbent = lp;
  double z_hat = eval_objective(inst, lp.x);
  double hi_linear = inst.c.dot(lp.x);  // c'x(t) at the largest t known to be >= t*
  double lo_risk = 0.0;                  // sqrt(x'Qx) at the smallest t known to be <= t*
  adopt(res, inst, lp);
  if (t_max < opt.t_floor) {
    res.status = ConicStatus::TZero;
    res.stop = StopReason::TZero;
    return res;
  }

  for (int it = 0; it < opt.max_outer; ++it) {
    const double t0 = 0.5 * (t_min + t_max);
    const QpProblemd p = subproblem_objective(inst, t0);
    const QpSolution sol = solver.solve(p, &basis, StartMode::PrimalStart);
    count(res, sol);
    if (failed(res, sol)) return res;
    basis = sol.basis;
    const double t1 = risk(inst, sol.x);
    const double z = eval_objective(inst, sol.x);
    res.trace.push_back({t0, sol.objective, z, sol.iterations});
    if (z < z_hat) {
      z_hat = z;
      incumbent = sol;
    }
    if (t0 <= t1) {
      t_min = std::min(t1, t_max);
      lo_risk = std::max(lo_risk, t1);
    } else {
      t_max = std::max(t1, t_min);
      hi_linear = std::max(hi_linear, inst.c.dot(sol.x));
    }
    res.brackets.push_back({t_min, t_max});
    const double z_l = hi_linear + inst.omega * lo_risk;
    res.lower_bound = z_l;

    if (t1 < opt.t_floor) {
      adopt(res, inst, sol);
      res.status = ConicStatus::TZero;
      res.stop = StopReason::TZero;
      return res;
    }
    res.dual_bound = dual_bound_estimate(inst, sol.x, t0, t1, qp_eps_of(p, sol, opt.qp_eps));
    if (res.dual_bound <= opt.delta) {
      adopt(res, inst, sol);
      res.status = ConicStatus::Optimal;
      res.stop = StopReason::DualBound;
      return res;
    }
    if ((z_hat - z_l) / std::max(std::abs(z_l), 1.0) <= opt.gap_tol) {
      adopt(res, inst, incumbent);
      res.status = ConicStatus::Optimal;
      res.stop = StopReason::Gap;
      // A small objective gap does not bound stationarity; continue with
      // coordinate-descent steps from the incumbent until the dual bound holds.
      double t = res.t;
      WorkingBasis cb = incumbent.basis;
      for (int k = 0; k < opt.max_certify && !(res.kkt_residual <= opt.delta); ++k) {
        const QpProblemd cp = subproblem_objective(inst, t);
        const QpSolution cs = solver.solve(cp, &cb, StartMode::PrimalStart);
        count(res, cs);
        ++res.certify_qps;
        if (failed(res, cs)) return res;
        cb = cs.basis;
        const double tn = risk(inst, cs.x);
        res.trace.push_back({t, cs.objective, eval_objective(inst, cs.x), cs.iterations});
        adopt(res, inst, cs);
        if (tn < opt.t_floor) {
          res.status = ConicStatus::TZero;
          res.stop = StopReason::TZero;
          return res;
        }
        res.dual_bound = dual_bound_estimate(inst, cs.x, t, tn, qp_eps_of(cp, cs, opt.qp_eps));
        t = tn;
        if (res.dual_bound <= opt.delta) break;
      }
      if (!(res.kkt_residual <= opt.delta)) res.status = ConicStatus::ToleranceReached;
      return res;
    }
    if (t_max - t_min <= 1e-15 * t_max) {
      adopt(res, inst, incumbent);
      res.status = ConicStatus::ToleranceReached;
      res.stop = StopReason::Interval;
      return res;
    }
  }
  adopt(res, inst, incumbent);
  res.status = ConicStatus::IterLimit;
  res.stop = StopReason::IterLimit;
  return res;
}

}  // namespace perspqp
