#include "perspqp/bench.hpp"

#include "perspqp/instance_gen.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <tuple>

namespace perspqp {

const char* to_string(Method m) {
  switch (m) {
    case Method::Cd: return "cd";
    case Method::Bisect: return "bisect";
    case Method::BnbCd: return "bnb-cd";
  }
  return "?";
}

Method parse_method(const std::string& s) {
  if (s == "cd") return Method::Cd;
  if (s == "bisect") return Method::Bisect;
  if (s == "bnb-cd") return Method::BnbCd;
  throw std::invalid_argument("unknown method '" + s + "' (expected cd, bisect or bnb-cd)");
}

std::vector<Method> parse_method_list(const std::string& csv) {
  std::vector<Method> out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    const Method m = parse_method(tok);
    bool dup = false;
    for (Method e : out) dup = dup || e == m;
    if (!dup) out.push_back(m);
  }
  if (out.empty()) throw std::invalid_argument("empty method list");
  return out;
}

BenchRecord record_header(const ConicInstanced& inst) {
  BenchRecord rec;
  rec.id = instance_id(inst.meta);
  rec.family = inst.meta.family.empty() ? "custom" : inst.meta.family;
  rec.n = inst.size();
  rec.r = inst.q.rank();
  rec.alpha = inst.meta.alpha;
  rec.omega = inst.omega;
  return rec;
}

BenchRecord run_method(const ConicInstanced& inst, Method m, const RunOptions& opt, RunDetail* detail) {
  BenchRecord rec = record_header(inst);
  rec.method = to_string(m);
  using clock = std::chrono::steady_clock;

  if (m == Method::BnbCd) {
    if (!inst.is_discrete()) throw std::invalid_argument("bnb-cd needs an instance with integer variables");
    BnbOptions bo;
    bo.gap_tol = opt.gap_tol;
    bo.time_limit = opt.time_limit;
    bo.node_limit = opt.node_limit;
    bo.cd.delta = opt.delta;
    bo.cd.qp_eps = qp_eps_for(opt.delta);
    const auto t0 = clock::now();
    const BnbResult res = solve_bnb(inst, bo);
    rec.time_s = std::chrono::duration<double>(clock::now() - t0).count();
    rec.qp_count = res.qp_count;
    rec.pivot_count = res.pivot_count;
    rec.nodes = res.nodes_processed;
    rec.objective = res.incumbent_obj;
    rec.egap = 100.0 * res.egap;
    rec.solved = res.solved();
    if (detail) detail->bnb = res;
    return rec;
  }

  ConicSolveResult res;
  const auto t0 = clock::now();
  if (m == Method::Cd) {
    CdOptions co;
    co.delta = opt.delta;
    co.qp_eps = qp_eps_for(opt.delta);
    co.t0 = opt.t0;
    res = solve_cd(inst, co);
  } else {
    BisectOptions bo;
    bo.delta = opt.delta;
    bo.qp_eps = qp_eps_for(opt.delta);
    res = solve_bisection(inst, bo);
  }
  rec.time_s = std::chrono::duration<double>(clock::now() - t0).count();
  rec.qp_count = res.qp_count;
  rec.pivot_count = res.pivot_count;
  if (res.status != ConicStatus::Infeasible) {
    rec.objective = res.objective;
    rec.kkt_residual = res.kkt_residual;
  }
  rec.solved = res.converged();
  if (detail) detail->conic = std::move(res);
  return rec;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::string fmt(double v) {
  if (std::isnan(v)) return "";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string fmt(Index v) { return std::to_string(v); }

std::string text(const std::string& s, const char* column) {
  if (s.find_first_of(",\n\r\"") != std::string::npos)
    throw std::invalid_argument(std::string("CSV: column '") + column + "' contains a separator: " + s);
  return s;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

double to_double(const std::string& s, const char* column) {
  if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc{} || r.ptr != s.data() + s.size())
    throw std::invalid_argument(std::string("CSV: bad number in column '") + column + "': " + s);
  return v;
}

Index to_index(const std::string& s, const char* column) {
  Index v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || r.ec != std::errc{} || r.ptr != s.data() + s.size())
    throw std::invalid_argument(std::string("CSV: bad integer in column '") + column + "': " + s);
  return v;
}

std::string join(const std::vector<std::string>& cols) {
  std::string out;
  for (std::size_t i = 0; i < cols.size(); ++i) {
    if (i) out += ',';
    out += cols[i];
  }
  return out;
}

void check_header(std::istream& is, const std::vector<std::string>& expected) {
  std::string line;
  if (!std::getline(is, line)) throw std::invalid_argument("CSV: missing header");
  if (split(line) != expected) throw std::invalid_argument("CSV: unexpected header: " + line);
}

}  // namespace

const std::vector<std::string>& bench_columns() {
  static const std::vector<std::string> cols = {
      "id",        "family",      "n",           "r",     "alpha",     "omega",
      "method",    "time_s",      "qp_count",    "pivot_count",        "nodes",
      "objective", "kkt_residual", "egap",       "solved"};
  return cols;
}

std::string csv_header() { return join(bench_columns()); }

std::string to_csv_row(const BenchRecord& r) {
  return join({text(r.id, "id"), text(r.family, "family"), fmt(r.n), fmt(r.r), fmt(r.alpha), fmt(r.omega),
               text(r.method, "method"), fmt(r.time_s), fmt(r.qp_count), fmt(r.pivot_count), fmt(r.nodes),
               fmt(r.objective), fmt(r.kkt_residual), fmt(r.egap), r.solved ? "1" : "0"});
}

BenchRecord parse_csv_row(const std::string& line) {
  const auto f = split(line);
  if (f.size() != bench_columns().size())
    throw std::invalid_argument("CSV: expected " + std::to_string(bench_columns().size()) + " fields, got " +
                                std::to_string(f.size()));
  BenchRecord r;
  r.id = f[0];
  r.family = f[1];
  r.n = to_index(f[2], "n");
  r.r = to_index(f[3], "r");
  r.alpha = to_double(f[4], "alpha");
  r.omega = to_double(f[5], "omega");
  r.method = f[6];
  r.time_s = to_double(f[7], "time_s");
  r.qp_count = to_index(f[8], "qp_count");
  r.pivot_count = to_index(f[9], "pivot_count");
  r.nodes = to_index(f[10], "nodes");
  r.objective = to_double(f[11], "objective");
  r.kkt_residual = to_double(f[12], "kkt_residual");
  r.egap = to_double(f[13], "egap");
  if (f[14] != "0" && f[14] != "1") throw std::invalid_argument("CSV: solved must be 0 or 1: " + f[14]);
  r.solved = f[14] == "1";
  return r;
}

void write_csv(std::ostream& os, const std::vector<BenchRecord>& recs) {
  os << csv_header() << '\n';
  for (const auto& r : recs) os << to_csv_row(r) << '\n';
}

std::vector<BenchRecord> read_csv(std::istream& is) {
  check_header(is, bench_columns());
  std::vector<BenchRecord> out;
  std::string line;
  while (std::getline(is, line))
    if (!line.empty() && line != "\r") out.push_back(parse_csv_row(line));
  return out;
}

// ---------------------------------------------------------------------------
// Aggregation

namespace {

struct Mean {
  double sum = 0.0;
  Index k = 0;
  void add(double v) {
    if (std::isnan(v)) return;
    sum += v;
    ++k;
  }
  double value() const { return k ? sum / static_cast<double>(k) : std::numeric_limits<double>::quiet_NaN(); }
};

struct Cell {
  Index count = 0;
  Index solved = 0;
  Mean time_s, qp, piv, nodes, obj, kkt, egap;
};

}  // namespace

std::vector<BenchAggregate> aggregate(const std::vector<BenchRecord>& recs) {
  using Key = std::tuple<std::string, Index, Index, double, double, std::string>;
  std::map<Key, Cell> cells;
  for (const auto& r : recs) {
    Cell& c = cells[Key{r.family, r.n, r.r, r.alpha, r.omega, r.method}];
    ++c.count;
    c.solved += r.solved ? 1 : 0;
    c.time_s.add(r.time_s);
    c.qp.add(static_cast<double>(r.qp_count));
    c.piv.add(static_cast<double>(r.pivot_count));
    c.nodes.add(static_cast<double>(r.nodes));
    c.obj.add(r.objective);
    c.kkt.add(r.kkt_residual);
    c.egap.add(r.egap);
  }
  std::vector<BenchAggregate> out;
  out.reserve(cells.size());
  for (const auto& [key, c] : cells) {
    BenchAggregate a;
    std::tie(a.family, a.n, a.r, a.alpha, a.omega, a.method) = key;
    a.count = c.count;
    a.solved = c.solved;
    a.time_s = c.time_s.value();
    a.qp_count = c.qp.value();
    a.pivot_count = c.piv.value();
    a.nodes = c.nodes.value();
    a.objective = c.obj.value();
    a.kkt_residual = c.kkt.value();
    a.egap = c.egap.value();
    out.push_back(std::move(a));
  }
  return out;
}

const std::vector<std::string>& aggregate_columns() {
  static const std::vector<std::string> cols = {
      "family", "n",     "r",           "alpha",     "omega",        "method", "count", "time_s",
      "qp_count", "pivot_count", "nodes", "objective", "kkt_residual", "egap",   "solved"};
  return cols;
}

void write_aggregate_csv(std::ostream& os, const std::vector<BenchAggregate>& rows) {
  os << join(aggregate_columns()) << '\n';
  for (const auto& a : rows)
    os << join({text(a.family, "family"), fmt(a.n), fmt(a.r), fmt(a.alpha), fmt(a.omega), text(a.method, "method"),
                fmt(a.count), fmt(a.time_s), fmt(a.qp_count), fmt(a.pivot_count), fmt(a.nodes), fmt(a.objective),
                fmt(a.kkt_residual), fmt(a.egap), fmt(a.solved)})
       << '\n';
}

std::vector<BenchAggregate> read_aggregate_csv(std::istream& is) {
  check_header(is, aggregate_columns());
  std::vector<BenchAggregate> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line == "\r") continue;
    const auto f = split(line);
    if (f.size() != aggregate_columns().size())
      throw std::invalid_argument("CSV: expected " + std::to_string(aggregate_columns().size()) + " fields, got " +
                                  std::to_string(f.size()));
    BenchAggregate a;
    a.family = f[0];
    a.n = to_index(f[1], "n");
    a.r = to_index(f[2], "r");
    a.alpha = to_double(f[3], "alpha");
    a.omega = to_double(f[4], "omega");
    a.method = f[5];
    a.count = to_index(f[6], "count");
    a.time_s = to_double(f[7], "time_s");
    a.qp_count = to_double(f[8], "qp_count");
    a.pivot_count = to_double(f[9], "pivot_count");
    a.nodes = to_double(f[10], "nodes");
    a.objective = to_double(f[11], "objective");
    a.kkt_residual = to_double(f[12], "kkt_residual");
    a.egap = to_double(f[13], "egap");
    a.solved = to_index(f[14], "solved");
    out.push_back(std::move(a));
  }
  return out;
}

}  // namespace perspqp
