#include "perspqp/cli.hpp"

#include "perspqp/bench.hpp"
#include "perspqp/bnb.hpp"
#include "perspqp/instance_gen.hpp"
#include "perspqp/persp_solvers.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <regex>
#include <string>
#include <vector>

namespace perspqp {

namespace {

namespace fs = std::filesystem;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GenArgs {
  std::string family;
  std::optional<Index> n;
  std::optional<std::string> grid;
  Index r = 10;
  double alpha = 0.1;
  double omega = 1.0;
  std::uint64_t seed = 0;
  Index reps = 1;
  std::string out;
  bool discrete = false;
};

struct SolveArgs {
  std::string alg = "cd";
  double tol = 1e-5;
  std::string instance;
  std::string t0 = "lp";
  std::string csv;
  std::optional<double> reference;
};

struct BnbArgs {
  std::string instance;
  double gap = 1e-4;
  double time_limit = std::numeric_limits<double>::infinity();
  Index node_limit = std::numeric_limits<Index>::max();
  double tol = 1e-5;
  Index log_stride = 0;
  std::string csv;
};

struct BenchArgs {
  std::string dir;
  std::string methods = "cd,bisect";
  std::string csv;
  std::string raw;
  double tol = 1e-5;
  double gap = 1e-4;
  double time_limit = std::numeric_limits<double>::infinity();
};

std::pair<Index, Index> parse_grid(const std::string& s) {
  static const std::regex re(R"((\d+)[xX](\d+))");
  std::smatch m;
  if (!std::regex_match(s, m, re)) throw UsageError("--grid expects PxQ, got '" + s + "'");
  return {std::stoll(m[1]), std::stoll(m[2])};
}

// Appends records, writing the header when the file is new or empty and
// refusing files whose header differs.
void append_csv(const std::string& path, const std::vector<BenchRecord>& recs) {
  bool need_header = true;
  if (fs::exists(path) && fs::file_size(path) > 0) {
    std::ifstream in(path);
    std::string first;
    std::getline(in, first);
    if (first != csv_header()) throw std::runtime_error("CSV file " + path + " has a different header");
    need_header = false;
  }
  std::ofstream os(path, std::ios::app);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  if (need_header) os << csv_header() << '\n';
  for (const auto& r : recs) os << to_csv_row(r) << '\n';
}

ConicInstanced load_or_throw(const std::string& path) {
  if (!fs::exists(path)) throw std::runtime_error("instance file not found: " + path);
  return load_instance(path);
}

std::string stem_of(const std::string& path) { return fs::path(path).stem().string(); }

int exit_for(ConicStatus s) {
  switch (s) {
    case ConicStatus::Optimal:
    case ConicStatus::ToleranceReached: return kExitOk;
    case ConicStatus::Infeasible: return kExitInfeasible;
    case ConicStatus::IterLimit:
    case ConicStatus::TZero: return kExitLimit;
  }
  return kExitError;
}

int exit_for(BnbStatus s) {
  switch (s) {
    case BnbStatus::Optimal:
    case BnbStatus::GapReached: return kExitOk;
    case BnbStatus::Infeasible: return kExitInfeasible;
    case BnbStatus::TimeLimit:
    case BnbStatus::NodeLimit: return kExitLimit;
  }
  return kExitError;
}

// ---------------------------------------------------------------------------

int cmd_gen(const GenArgs& a, std::ostream& out) {
  GenSpec spec;
  try {
    spec.family = parse_family(a.family);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (spec.family == Family::Cardinality) {
    if (!a.n) throw UsageError("--family cardinality requires --n");
    if (a.grid) throw UsageError("--grid applies to --family gridpath only");
    spec.n = *a.n;
  } else {
    if (!a.grid) throw UsageError("--family gridpath requires --grid PxQ");
    if (a.n) throw UsageError("--n applies to --family cardinality only");
    std::tie(spec.grid_p, spec.grid_q) = parse_grid(*a.grid);
  }
  if (a.reps < 1) throw UsageError("--reps must be at least 1");
  spec.r = a.r;
  spec.alpha = a.alpha;
  spec.omega = a.omega;
  spec.discrete = a.discrete;

  std::vector<ConicInstanced> made;
  for (Index k = 0; k < a.reps; ++k) {
    spec.seed = a.seed + static_cast<std::uint64_t>(k);
    try {
      made.push_back(generate(spec));
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
  fs::create_directories(a.out);
  for (const auto& inst : made) {
    const std::string path = (fs::path(a.out) / (instance_id(inst.meta) + ".json")).string();
    save_instance(inst, path);
    out << path << '\n';
  }
  return kExitOk;
}

int cmd_solve(const SolveArgs& a, std::ostream& out) {
  const Method m = a.alg == "bisect" ? Method::Bisect : Method::Cd;
  if (!(a.tol > 0)) throw UsageError("--tol must be positive");
  RunOptions ro;
  ro.delta = a.tol;
  if (a.t0 != "lp") {
    if (m == Method::Bisect) throw UsageError("--t0 applies to --alg cd only");
    try {
      std::size_t used = 0;
      ro.t0 = std::stod(a.t0, &used);
      if (used != a.t0.size() || !(ro.t0 > 0)) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw UsageError("--t0 expects a positive number or 'lp', got '" + a.t0 + "'");
    }
  }
  const ConicInstanced inst = load_or_throw(a.instance);
  RunDetail detail;
  BenchRecord rec = run_method(inst, m, ro, &detail);
  rec.id = stem_of(a.instance);
  const ConicSolveResult& res = detail.conic;

  out << std::setprecision(12);
  out << "instance     " << rec.id << '\n'
      << "algorithm    " << rec.method << '\n'
      << "status       " << to_string(res.status) << " (" << to_string(res.stop) << ")\n";
  if (res.status != ConicStatus::Infeasible) {
    out << "objective    " << res.objective << '\n'
        << "t            " << res.t << '\n'
        << "kkt_residual " << res.kkt_residual << '\n';
    if (a.reference) {
      const double z = *a.reference;
      out << "optgap       " << std::abs((z - res.objective) / z) << '\n';
    }
  }
  out << "qp_count     " << res.qp_count << '\n'
      << "pivot_count  " << res.pivot_count << '\n'
      << "time_s       " << rec.time_s << '\n';
  if (!a.csv.empty()) append_csv(a.csv, {rec});
  return exit_for(res.status);
}

int cmd_bnb(const BnbArgs& a, std::ostream& out, std::ostream& err) {
  if (!(a.gap >= 0)) throw UsageError("--gap must be nonnegative");
  if (!(a.time_limit >= 0)) throw UsageError("--time-limit must be nonnegative");
  const ConicInstanced inst = load_or_throw(a.instance);
  if (!inst.is_discrete()) throw UsageError("instance " + a.instance + " has no integer variables");

  BnbOptions bo;
  bo.gap_tol = a.gap;
  bo.time_limit = a.time_limit;
  bo.node_limit = a.node_limit;
  bo.cd.delta = a.tol;
  bo.cd.qp_eps = qp_eps_for(a.tol);
  bo.log = &err;
  bo.log_stride = a.log_stride;

  BenchRecord rec = record_header(inst);
  rec.id = stem_of(a.instance);
  rec.method = to_string(Method::BnbCd);
  const auto t0 = std::chrono::steady_clock::now();
  const BnbResult res = solve_bnb(inst, bo);
  rec.time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  rec.qp_count = res.qp_count;
  rec.pivot_count = res.pivot_count;
  rec.nodes = res.nodes_processed;
  rec.objective = res.incumbent_obj;
  rec.egap = 100.0 * res.egap;
  rec.solved = res.solved();

  out << std::setprecision(12);
  out << "instance     " << rec.id << '\n'
      << "status       " << to_string(res.status) << '\n'
      << "objective    " << res.incumbent_obj << '\n'
      << "best_bound   " << res.best_bound << '\n'
      << "egap_pct     " << rec.egap << '\n'
      << "nodes        " << res.nodes_processed << '\n'
      << "max_depth    " << res.max_depth << '\n'
      << "qp_count     " << res.qp_count << '\n'
      << "pivot_count  " << res.pivot_count << '\n'
      << "dual_starts  " << res.dual_starts_accepted << '/' << res.child_nodes << '\n'
      << "solved       " << (rec.solved ? "yes" : "no") << '\n'
      << "time_s       " << rec.time_s << '\n';
  if (!a.csv.empty()) append_csv(a.csv, {rec});
  return exit_for(res.status);
}

int cmd_bench(const BenchArgs& a, std::ostream& out, std::ostream& err) {
  std::vector<Method> methods;
  try {
    methods = parse_method_list(a.methods);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (!fs::is_directory(a.dir)) throw UsageError("--dir " + a.dir + " is not a directory");
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(a.dir))
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path().string());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw UsageError("no instance files (*.json) in " + a.dir);

  RunOptions ro;
  ro.delta = a.tol;
  ro.gap_tol = a.gap;
  ro.time_limit = a.time_limit;

  std::vector<BenchRecord> recs;
  out << std::setprecision(8);
  for (const auto& f : files) {
    const ConicInstanced inst = load_or_throw(f);
    for (Method m : methods) {
      if (m == Method::BnbCd && !inst.is_discrete()) {
        err << "skip " << stem_of(f) << " bnb-cd: no integer variables\n";
        continue;
      }
      BenchRecord rec = run_method(inst, m, ro);
      rec.id = stem_of(f);
      out << rec.id << ' ' << rec.method << " objective=" << rec.objective << " qp=" << rec.qp_count
          << " pivots=" << rec.pivot_count << " time=" << rec.time_s << (rec.solved ? "" : " UNSOLVED") << '\n';
      recs.push_back(std::move(rec));
    }
  }
  if (recs.empty()) throw UsageError("no method applies to the instances in " + a.dir);

  if (!a.raw.empty()) {
    std::ofstream os(a.raw);
    if (!os) throw std::runtime_error("cannot open " + a.raw + " for writing");
    write_csv(os, recs);
  }
  const auto agg = aggregate(recs);
  std::ofstream os(a.csv);
  if (!os) throw std::runtime_error("cannot open " + a.csv + " for writing");
  write_aggregate_csv(os, agg);
  out << agg.size() << " cells written to " << a.csv << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Conic quadratic optimization over polyhedra by perspective QPs"};
  app.name("perspqp");
  app.require_subcommand(1, 1);

  GenArgs ga;
  auto* gen = app.add_subcommand("gen", "Generate seeded instance files");
  gen->add_option("--family", ga.family, "cardinality or gridpath")->required()->check(
      CLI::IsMember({"cardinality", "gridpath"}));
  auto* n_opt = gen->add_option("--n", ga.n, "Number of variables (cardinality)");
  auto* g_opt = gen->add_option("--grid", ga.grid, "Grid dimensions PxQ (gridpath)");
  n_opt->excludes(g_opt);
  gen->add_option("--r", ga.r, "Factor rank")->capture_default_str()->check(CLI::PositiveNumber);
  gen->add_option("--alpha", ga.alpha, "Factor density")->capture_default_str()->check(CLI::Range(0.0, 1.0));
  gen->add_option("--omega", ga.omega, "Risk weight")->capture_default_str()->check(CLI::PositiveNumber);
  gen->add_option("--seed", ga.seed, "First seed")->capture_default_str();
  gen->add_option("--reps", ga.reps, "Instances, seeds seed..seed+reps-1")->capture_default_str();
  gen->add_option("--out", ga.out, "Output directory")->required();
  gen->add_flag("--discrete", ga.discrete, "Mark all variables integer");

  SolveArgs sa;
  auto* solve = app.add_subcommand("solve", "Solve the continuous problem");
  solve->add_option("--alg", sa.alg, "cd or bisect")->capture_default_str()->check(CLI::IsMember({"cd", "bisect"}));
  solve->add_option("--tol", sa.tol, "Optimality tolerance delta")->capture_default_str();
  solve->add_option("--instance", sa.instance, "Instance file")->required();
  solve->add_option("--t0", sa.t0, "Initial t for cd, or 'lp'")->capture_default_str();
  solve->add_option("--csv", sa.csv, "Append a result row to this CSV file");
  solve->add_option("--reference", sa.reference, "Reference objective for optgap");

  BnbArgs ba;
  auto* bnb = app.add_subcommand("bnb", "Branch and bound on a discrete instance");
  bnb->add_option("--instance", ba.instance, "Instance file")->required();
  bnb->add_option("--gap", ba.gap, "Relative gap tolerance (ratio)")->capture_default_str();
  bnb->add_option("--time-limit", ba.time_limit, "Seconds");
  bnb->add_option("--node-limit", ba.node_limit, "Nodes");
  bnb->add_option("--tol", ba.tol, "Node relaxation tolerance delta")->capture_default_str();
  bnb->add_option("--log-stride", ba.log_stride, "Log every k-th node to stderr (0: off)")->capture_default_str();
  bnb->add_option("--csv", ba.csv, "Append a result row to this CSV file");

  BenchArgs be;
  auto* bench = app.add_subcommand("bench", "Run methods over a directory and aggregate");
  bench->add_option("--dir", be.dir, "Directory of instance files")->required();
  bench->add_option("--methods", be.methods, "Comma list of cd, bisect, bnb-cd")->capture_default_str();
  bench->add_option("--csv", be.csv, "Aggregate CSV output")->required();
  bench->add_option("--raw", be.raw, "Per-run CSV output");
  bench->add_option("--tol", be.tol, "Convex tolerance delta")->capture_default_str();
  bench->add_option("--gap", be.gap, "B&B relative gap (ratio)")->capture_default_str();
  bench->add_option("--time-limit", be.time_limit, "B&B seconds per instance");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen(ga, out);
    if (solve->parsed()) return cmd_solve(sa, out);
    if (bnb->parsed()) return cmd_bnb(ba, out, err);
    if (bench->parsed()) return cmd_bench(be, out, err);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitError;
  }
  return kExitUsage;
}

}  // namespace perspqp
