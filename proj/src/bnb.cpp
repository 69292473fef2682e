#include "perspqp/bnb.hpp"

#include "perspqp/instance_gen.hpp"

#include <chrono>
#include <cmath>
#include <map>
#include <ostream>
#include <stdexcept>

namespace perspqp {

const char* to_string(BnbStatus s) {
  switch (s) {
    case BnbStatus::Optimal: return "optimal";
    case BnbStatus::GapReached: return "gap-reached";
    case BnbStatus::TimeLimit: return "time-limit";
    case BnbStatus::NodeLimit: return "node-limit";
    case BnbStatus::Infeasible: return "infeasible";
  }
  return "?";
}

double relative_egap(double ub, double lb) {
  if (!std::isfinite(ub) || !std::isfinite(lb)) return std::numeric_limits<double>::infinity();
  return (ub - lb) / std::abs(lb + 1e-10);
}

std::optional<BranchChoice> find_branch(const Eigen::VectorXd& x, const std::vector<Index>& integer_vars,
                                        double int_tol) {
  std::optional<BranchChoice> best;
  double best_dist = int_tol;
  for (Index j : integer_vars) {
    const double v = x[j];
    const double dist = std::min(v - std::floor(v), std::ceil(v) - v);
    if (dist <= int_tol) continue;
    const bool tie = best && std::abs(dist - best_dist) <= 1e-12;
    if (!best || (dist > best_dist && !tie) || (tie && j < best->index)) {
      best = BranchChoice{j, std::floor(v), std::ceil(v)};
      best_dist = std::max(dist, best_dist);
    }
  }
  return best;
}

BranchChoice branch_select(const Eigen::VectorXd& x, const std::vector<Index>& integer_vars, double int_tol) {
  auto b = find_branch(x, integer_vars, int_tol);
  if (!b) throw std::invalid_argument("branch_select: x is integral on all integer variables");
  return *b;
}

namespace {

void log_line(const BnbOptions& o, Index k, double ub, double lb, int depth) {
  if (!o.log || o.log_stride <= 0 || k % o.log_stride != 0) return;
  *o.log << "node=" << k << " ub=" << ub << " lb=" << lb << " gap=" << relative_egap(ub, lb)
         << " depth=" << depth << '\n';
}

}  // namespace

BnbResult solve_bnb(const ConicInstanced& inst, const BnbOptions& opts) {
  if (!inst.is_discrete()) throw std::invalid_argument("solve_bnb: instance has no integer variables");
  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(); };

  BnbResult res;
  CdOptions cd = opts.cd;
  cd.warm_qp = opts.warm_start;
  const Eigen::VectorXd root_lo = inst.poly.lower();
  const Eigen::VectorXd root_up = inst.poly.upper();

  // Best-bound list; equal keys keep insertion order.
  std::multimap<double, BnbNode> open;
  std::optional<BnbNode> next = BnbNode{};
  double ub = std::numeric_limits<double>::infinity();
  bool stopped = false;

  auto open_bound = [&] {
    double lb = next ? next->lb : std::numeric_limits<double>::infinity();
    if (!open.empty()) lb = std::min(lb, open.begin()->first);
    return lb;
  };

  while (next || !open.empty()) {
    const double lb_now = open_bound();
    // Open nodes with lb >= ub cannot beat the incumbent.
    res.best_bound = std::max(res.best_bound, std::min(lb_now, ub));
    res.lb_history.push_back(lb_now);
    res.ub_history.push_back(ub);
    if (relative_egap(ub, lb_now) <= opts.gap_tol) {
      res.status = BnbStatus::GapReached;
      stopped = true;
      break;
    }
    if (res.nodes_processed > 0 && elapsed() > opts.time_limit) {
      res.status = BnbStatus::TimeLimit;
      stopped = true;
      break;
    }
    if (res.nodes_processed >= opts.node_limit) {
      res.status = BnbStatus::NodeLimit;
      stopped = true;
      break;
    }
    BnbNode node;
    if (next) {
      node = std::move(*next);
      next.reset();
    } else {
      node = std::move(open.begin()->second);
      open.erase(open.begin());
    }
    if (node.lb >= ub) {
      ++res.pruned_by_bound;
      continue;
    }

    Eigen::VectorXd lo = root_lo, up = root_up;
    for (const BoundChange& bc : node.bound_changes) {
      lo[bc.var] = bc.lower;
      up[bc.var] = bc.upper;
    }
    ConicInstanced sub = inst;
    sub.poly = inst.poly.with_bounds(lo, up);

    std::optional<CdWarmStart> warm;
    if (!node.basis.empty()) warm = CdWarmStart{node.basis, node.t_parent};
    const ConicSolveResult rel = solve_cd(sub, cd, warm);
    ++res.nodes_processed;
    res.max_depth = std::max<Index>(res.max_depth, node.depth);
    res.qp_count += rel.qp_count;
    res.pivot_count += rel.pivot_count;
    if (!node.basis.empty()) {
      ++res.child_nodes;
      if (rel.first_qp_dual && !rel.first_qp_repaired) ++res.dual_starts_accepted;
      if (rel.first_qp_repaired) ++res.dual_starts_repaired;
    }
    log_line(opts, res.nodes_processed, ub, lb_now, node.depth);

    if (rel.status == ConicStatus::Infeasible) {
      ++res.pruned_infeasible;
      continue;
    }
    if (rel.status == ConicStatus::IterLimit)
      throw std::runtime_error("solve_bnb: node relaxation hit its iteration limit at depth " +
                               std::to_string(node.depth));
    const double z = rel.objective;
    if (!node.basis.empty()) res.parent_child_values.emplace_back(node.lb, z);
    if (z >= ub) {
      ++res.pruned_by_bound;
      continue;
    }
    const auto br = find_branch(rel.x, inst.integer_vars, opts.int_tol);
    if (!br) {
      const double val = eval_objective(inst, rel.x);
      if (val < ub) {
        ub = val;
        res.incumbent_x = rel.x;
      }
      continue;
    }
    const double v = rel.x[br->index];
    BnbNode down, upn;
    for (BnbNode* child : {&down, &upn}) {
      child->bound_changes = node.bound_changes;
      child->basis = rel.basis;
      child->t_parent = rel.t;
      child->lb = z;
      child->depth = node.depth + 1;
    }
    down.bound_changes.push_back({br->index, lo[br->index], br->floor_val});
    upn.bound_changes.push_back({br->index, br->ceil_val, up[br->index]});
    const bool down_first = (v - br->floor_val) <= (br->ceil_val - v);
    if (down_first) {
      open.emplace(z, std::move(upn));
      next = std::move(down);
    } else {
      open.emplace(z, std::move(down));
      next = std::move(upn);
    }
  }

  res.incumbent_obj = ub;
  if (!stopped) {
    // Every node was resolved: the incumbent is optimal (or none exists).
    res.status = std::isfinite(ub) ? BnbStatus::Optimal : BnbStatus::Infeasible;
    if (std::isfinite(ub)) res.best_bound = ub;
  }
  res.egap = std::isfinite(ub) ? std::max(0.0, relative_egap(ub, res.best_bound)) : relative_egap(ub, res.best_bound);
  res.time_s = elapsed();
  return res;
}

// ---------------------------------------------------------------------------

namespace {

void consider(const ConicInstanced& inst, const Eigen::VectorXd& x, EnumerationResult& best) {
  ++best.evaluated;
  if (inst.poly.infeasibility(x) > 1e-9) return;
  const double v = eval_objective(inst, x);
  if (v < best.objective) {
    best.objective = v;
    best.x = x;
  }
}

void combinations(const ConicInstanced& inst, Index n, Index k, Index from, Eigen::VectorXd& x,
                  EnumerationResult& best) {
  if (k == 0) {
    consider(inst, x, best);
    return;
  }
  for (Index j = from; j + k <= n; ++j) {
    x[j] = 1.0;
    combinations(inst, n, k - 1, j + 1, x, best);
    x[j] = 0.0;
  }
}

void paths(const ConicInstanced& inst, Index p, Index q, Index i, Index j, Eigen::VectorXd& x,
           EnumerationResult& best) {
  if (i == p - 1 && j == q - 1) {
    consider(inst, x, best);
    return;
  }
  if (j + 1 < q) {
    const Index a = grid_right_arc(p, q, i, j);
    x[a] = 1.0;
    paths(inst, p, q, i, j + 1, x, best);
    x[a] = 0.0;
  }
  if (i + 1 < p) {
    const Index a = grid_down_arc(p, q, i, j);
    x[a] = 1.0;
    paths(inst, p, q, i + 1, j, x, best);
    x[a] = 0.0;
  }
}

double binomial(Index n, Index k) {
  double c = 1.0;
  for (Index i = 1; i <= k; ++i) c = c * static_cast<double>(n - k + i) / static_cast<double>(i);
  return c;
}

}  // namespace

EnumerationResult enumeration_oracle(const ConicInstanced& inst) {
  const Index n = inst.size();
  const auto& lo = inst.poly.lower();
  const auto& up = inst.poly.upper();
  if (static_cast<Index>(inst.integer_vars.size()) != n)
    throw std::invalid_argument("enumeration_oracle: every variable must be integer");
  for (Index j = 0; j < n; ++j)
    if (lo[j] != 0.0 || up[j] != 1.0) throw std::invalid_argument("enumeration_oracle: variables must be binary");

  EnumerationResult best;
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  const auto& A = inst.poly.A();
  const bool card_row = inst.poly.num_rows() == 1 && A.nonZeros() == n &&
                        (Eigen::MatrixXd(A).array() == 1.0).all() &&
                        inst.poly.b()[0] == std::round(inst.poly.b()[0]);
  if (card_row) {
    const Index k = static_cast<Index>(inst.poly.b()[0]);
    if (k < 0 || k > n) return best;
    if (binomial(n, k) > static_cast<double>(1 << 20))
      throw std::invalid_argument("enumeration_oracle: too many supports");
    combinations(inst, n, k, 0, x, best);
    return best;
  }
  const InstanceMeta& mt = inst.meta;
  if (mt.family == "gridpath" && mt.grid_p >= 2 && mt.grid_q >= 2 && 2 * mt.grid_p * mt.grid_q - mt.grid_p - mt.grid_q == n) {
    if (mt.grid_p > 6 || mt.grid_q > 6) throw std::invalid_argument("enumeration_oracle: grid larger than 6x6");
    paths(inst, mt.grid_p, mt.grid_q, 0, 0, x, best);
    return best;
  }
  if (n > 20) throw std::invalid_argument("enumeration_oracle: instance too large");
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
    for (Index j = 0; j < n; ++j) x[j] = (mask >> j) & 1 ? 1.0 : 0.0;
    consider(inst, x, best);
  }
  return best;
}

}  // namespace perspqp
