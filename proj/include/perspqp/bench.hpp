#pragma once

// Benchmark records, their CSV form and per-cell aggregation.

#include "perspqp/bnb.hpp"
#include "perspqp/core_model.hpp"
#include "perspqp/persp_solvers.hpp"

#include <algorithm>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

namespace perspqp {

enum class Method { Cd, Bisect, BnbCd };

const char* to_string(Method m);
Method parse_method(const std::string& s);  // "cd", "bisect", "bnb-cd"
std::vector<Method> parse_method_list(const std::string& csv);

/// One solve. egap is a percentage and is NaN for the convex drivers, which
/// report no enumeration gap; nodes is 0 for them.
struct BenchRecord {
  std::string id;
  std::string family;
  Index n = 0;
  Index r = 0;
  double alpha = 0.0;
  double omega = 0.0;
  std::string method;
  double time_s = 0.0;
  Index qp_count = 0;
  Index pivot_count = 0;
  Index nodes = 0;
  double objective = std::numeric_limits<double>::quiet_NaN();
  double kkt_residual = std::numeric_limits<double>::quiet_NaN();
  double egap = std::numeric_limits<double>::quiet_NaN();
  bool solved = false;
};

struct RunOptions {
  double delta = 1e-5;        // convex drivers
  double t0 = std::numeric_limits<double>::infinity();  // cd start; infinity: LP relaxation
  double gap_tol = 1e-4;      // bnb-cd, as a ratio
  double time_limit = std::numeric_limits<double>::infinity();
  Index node_limit = std::numeric_limits<Index>::max();
};

/// Engine tolerance used with a driver tolerance delta: 1e-9, or delta/100
/// when delta is that small, so that delta > qp_eps always holds.
inline double qp_eps_for(double delta) { return std::min(1e-9, delta / 100.0); }

/// Full solver output behind a record; only the member matching the method is set.
struct RunDetail {
  ConicSolveResult conic;
  BnbResult bnb;
};

/// Runs one method; time_s covers the solver call only. Throws
/// std::invalid_argument for bnb-cd on an instance without integer variables.
BenchRecord run_method(const ConicInstanced& inst, Method m, const RunOptions& opt = {},
                       RunDetail* detail = nullptr);

/// Metadata columns (id, family, n, r, alpha, omega) from an instance.
BenchRecord record_header(const ConicInstanced& inst);

const std::vector<std::string>& bench_columns();
std::string csv_header();
std::string to_csv_row(const BenchRecord& rec);
BenchRecord parse_csv_row(const std::string& line);
void write_csv(std::ostream& os, const std::vector<BenchRecord>& recs);
/// Reads a file written by write_csv; the header must match bench_columns().
std::vector<BenchRecord> read_csv(std::istream& is);

/// Means over one (family, n, r, alpha, omega, method) cell. Means of
/// time, counters, objective, kkt_residual and egap skip NaN entries; solved
/// counts solved rows.
struct BenchAggregate {
  std::string family;
  Index n = 0;
  Index r = 0;
  double alpha = 0.0;
  double omega = 0.0;
  std::string method;
  Index count = 0;
  double time_s = 0.0;
  double qp_count = 0.0;
  double pivot_count = 0.0;
  double nodes = 0.0;
  double objective = std::numeric_limits<double>::quiet_NaN();
  double kkt_residual = std::numeric_limits<double>::quiet_NaN();
  double egap = std::numeric_limits<double>::quiet_NaN();
  Index solved = 0;
};

/// One entry per cell, ordered by (family, n, r, alpha, omega, method).
std::vector<BenchAggregate> aggregate(const std::vector<BenchRecord>& recs);

const std::vector<std::string>& aggregate_columns();
void write_aggregate_csv(std::ostream& os, const std::vector<BenchAggregate>& rows);
std::vector<BenchAggregate> read_aggregate_csv(std::istream& is);

}  // namespace perspqp
