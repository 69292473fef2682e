#pragma once

// Best-bound branch-and-bound for the discrete problem. Node relaxations are
// solved to optimality by coordinate descent; the first QP of every child
// starts from the parent's optimal basis with dual pivots.

#include "perspqp/core_model.hpp"
#include "perspqp/persp_solvers.hpp"

#include <iosfwd>
#include <limits>
#include <optional>
#include <vector>

namespace perspqp {

struct BoundChange {
  Index var = 0;
  double lower = 0.0;
  double upper = 0.0;
};

struct BnbNode {
  std::vector<BoundChange> bound_changes;  // relative to the root bounds
  WorkingBasis basis;                      // parent's optimal basis (empty at the root)
  double t_parent = 0.0;
  double lb = -std::numeric_limits<double>::infinity();
  int depth = 0;
};

struct BnbOptions {
  double gap_tol = 1e-4;
  double int_tol = 1e-5;
  double time_limit = std::numeric_limits<double>::infinity();  // seconds
  Index node_limit = std::numeric_limits<Index>::max();
  bool warm_start = true;  // false: every QP is solved from scratch, same tree
  CdOptions cd;
  std::ostream* log = nullptr;
  Index log_stride = 0;    // log every k-th node (0: never)
};

enum class BnbStatus { Optimal, GapReached, TimeLimit, NodeLimit, Infeasible };
const char* to_string(BnbStatus s);

struct BnbResult {
  BnbStatus status = BnbStatus::Infeasible;
  Eigen::VectorXd incumbent_x;
  double incumbent_obj = std::numeric_limits<double>::infinity();  // ub
  double best_bound = -std::numeric_limits<double>::infinity();    // lb_best
  double egap = std::numeric_limits<double>::infinity();           // (ub - lb) / |lb + 1e-10|
  Index nodes_processed = 0;
  Index max_depth = 0;
  Index qp_count = 0;
  Index pivot_count = 0;
  Index child_nodes = 0;          // processed non-root nodes
  Index dual_starts_accepted = 0; // children whose first QP ran dual pivots without repair
  Index dual_starts_repaired = 0;
  Index pruned_by_bound = 0;
  Index pruned_infeasible = 0;
  std::vector<double> lb_history;  // lb_best when each node is pulled
  std::vector<double> ub_history;
  /// Relaxation value of every processed node next to its parent's.
  std::vector<std::pair<double, double>> parent_child_values;
  double time_s = 0.0;

  bool solved() const { return status == BnbStatus::Optimal || status == BnbStatus::GapReached; }
};

/// (ub - lb) / |lb + 1e-10|; infinite when either side is.
double relative_egap(double ub, double lb);

BnbResult solve_bnb(const ConicInstanced& inst, const BnbOptions& opts = {});

struct BranchChoice {
  Index index = -1;
  double floor_val = 0.0;
  double ceil_val = 0.0;
};

/// Integer variable farthest from an integer (ties to the lowest index), or
/// nothing if all are within int_tol of an integer.
std::optional<BranchChoice> find_branch(const Eigen::VectorXd& x, const std::vector<Index>& integer_vars,
                                        double int_tol = 1e-5);
/// As find_branch; throws std::invalid_argument when x is integral.
BranchChoice branch_select(const Eigen::VectorXd& x, const std::vector<Index>& integer_vars,
                           double int_tol = 1e-5);

struct EnumerationResult {
  Eigen::VectorXd x;
  double objective = std::numeric_limits<double>::infinity();
  Index evaluated = 0;
};

/// Brute-force optimum of a pure binary instance. Handles cardinality rows
/// (one all-ones row with integral right-hand side), grid path instances up
/// to 6x6, and any other binary instance with at most 20 variables.
EnumerationResult enumeration_oracle(const ConicInstanced& inst);

}  // namespace perspqp
