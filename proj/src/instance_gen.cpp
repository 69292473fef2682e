#include "perspqp/instance_gen.hpp"

#include "perspqp/qp_engine.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace perspqp {

const char* to_string(Family f) { return f == Family::Cardinality ? "cardinality" : "gridpath"; }

Family parse_family(const std::string& s) {
  if (s == "cardinality") return Family::Cardinality;
  if (s == "gridpath") return Family::GridPath;
  throw std::invalid_argument("unknown family '" + s + "' (expected cardinality or gridpath)");
}

QuadraticFormd gen_quadratic(Index n, Index r, double alpha, Rng& rng) {
  if (n < 1 || r < 1) throw std::invalid_argument("gen_quadratic: n and r must be positive");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("gen_quadratic: alpha must lie in [0,1]");
  Eigen::VectorXd D(n);
  for (Index i = 0; i < n; ++i) D[i] = rng.uniform01();
  Eigen::MatrixXd H(r, r);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < r; ++j) H(i, j) = rng.uniform(-1.0, 1.0);
  Eigen::MatrixXd F(n, r);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < r; ++j) {
      const bool nonzero = rng.uniform01() < alpha;
      const double v = rng.uniform(-1.0, 1.0);
      F(i, j) = nonzero ? v : 0.0;
    }
  return QuadraticFormd(std::move(F), std::move(H), std::move(D));
}

Eigen::VectorXd gen_costs(const QuadraticFormd& q, Rng& rng) {
  const Eigen::VectorXd diag = q.diagonal_entries();
  Eigen::VectorXd c(diag.size());
  for (Index i = 0; i < c.size(); ++i) c[i] = -2.0 * std::sqrt(std::max(diag[i], 0.0)) * rng.uniform01();
  return c;
}

namespace {

InstanceMeta meta_from(const GenSpec& spec, Index n) {
  InstanceMeta meta;
  meta.family = to_string(spec.family);
  meta.n = n;
  meta.grid_p = spec.family == Family::GridPath ? spec.grid_p : 0;
  meta.grid_q = spec.family == Family::GridPath ? spec.grid_q : 0;
  meta.r = spec.r;
  meta.alpha = spec.alpha;
  meta.omega = spec.omega;
  meta.seed = spec.seed;
  meta.discrete = spec.discrete;
  return meta;
}

std::vector<Index> all_indices(Index n) {
  std::vector<Index> v(n);
  for (Index i = 0; i < n; ++i) v[i] = i;
  return v;
}

}  // namespace

ConicInstanced gen_cardinality(const GenSpec& spec) {
  const Index n = spec.n;
  if (n < 5) throw std::invalid_argument("gen_cardinality: n must be at least 5");
  Rng rng(spec.seed);
  QuadraticFormd q = gen_quadratic(n, spec.r, spec.alpha, rng);
  Eigen::VectorXd c = gen_costs(q, rng);
  SparseMatrix<double> A(1, n);
  std::vector<Eigen::Triplet<double>> trip;
  for (Index j = 0; j < n; ++j) trip.emplace_back(0, j, 1.0);
  A.setFromTriplets(trip.begin(), trip.end());
  Eigen::VectorXd b(1);
  b[0] = static_cast<double>(n / 5);
  Polyhedrond poly(std::move(A), std::move(b), Eigen::VectorXd::Zero(n), Eigen::VectorXd::Ones(n));
  return ConicInstanced(std::move(c), spec.omega, std::move(q), std::move(poly),
                        spec.discrete ? all_indices(n) : std::vector<Index>{}, meta_from(spec, n));
}

Index grid_right_arc(Index, Index q, Index i, Index j) { return i * (q - 1) + j; }
Index grid_down_arc(Index p, Index q, Index i, Index j) { return p * (q - 1) + i * q + j; }

ConicInstanced gen_grid_path(const GenSpec& spec) {
  const Index p = spec.grid_p, q = spec.grid_q;
  if (p < 2 || q < 2) throw std::invalid_argument("gen_grid_path: grid dimensions must be at least 2");
  const Index n = 2 * p * q - p - q;
  Rng rng(spec.seed);
  QuadraticFormd quad = gen_quadratic(n, spec.r, spec.alpha, rng);
  Eigen::VectorXd c = gen_costs(quad, rng);

  std::vector<Eigen::Triplet<double>> trip;
  auto node = [q](Index i, Index j) { return i * q + j; };
  for (Index i = 0; i < p; ++i)
    for (Index j = 0; j < q; ++j) {
      if (j + 1 < q) {
        const Index a = grid_right_arc(p, q, i, j);
        trip.emplace_back(node(i, j), a, 1.0);
        trip.emplace_back(node(i, j + 1), a, -1.0);
      }
      if (i + 1 < p) {
        const Index a = grid_down_arc(p, q, i, j);
        trip.emplace_back(node(i, j), a, 1.0);
        trip.emplace_back(node(i + 1, j), a, -1.0);
      }
    }
  SparseMatrix<double> A(p * q, n);
  A.setFromTriplets(trip.begin(), trip.end());
  Eigen::VectorXd b = Eigen::VectorXd::Zero(p * q);
  b[node(0, 0)] = 1.0;
  b[node(p - 1, q - 1)] = -1.0;
  Polyhedrond poly(std::move(A), std::move(b), Eigen::VectorXd::Zero(n), Eigen::VectorXd::Ones(n));
  return ConicInstanced(std::move(c), spec.omega, std::move(quad), std::move(poly),
                        spec.discrete ? all_indices(n) : std::vector<Index>{}, meta_from(spec, n));
}

ConicInstanced generate(const GenSpec& spec) {
  ConicInstanced inst = spec.family == Family::Cardinality ? gen_cardinality(spec) : gen_grid_path(spec);
  QpProblemd lp;
  lp.linear = Eigen::VectorXd::Zero(inst.size());
  lp.quad = inst.q;
  lp.poly = inst.poly;
  if (solve_qp(lp).status != QpStatus::Optimal)
    throw std::runtime_error("generate: generated polyhedron is empty");
  return inst;
}

std::string instance_id(const InstanceMeta& meta) {
  char buf[160];
  if (meta.family == "gridpath")
    std::snprintf(buf, sizeof buf, "grid_%ldx%ld_r%ld_a%g_o%g_s%llu", static_cast<long>(meta.grid_p),
                  static_cast<long>(meta.grid_q), static_cast<long>(meta.r), meta.alpha, meta.omega,
                  static_cast<unsigned long long>(meta.seed));
  else
    std::snprintf(buf, sizeof buf, "%s_n%ld_r%ld_a%g_o%g_s%llu", meta.family == "cardinality" ? "card" : "inst",
                  static_cast<long>(meta.n), static_cast<long>(meta.r), meta.alpha, meta.omega,
                  static_cast<unsigned long long>(meta.seed));
  return buf;
}

// ---------------------------------------------------------------------------
// file format

namespace {

void put(std::ostringstream& os, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  os << buf;
}

template <typename Vec>
void put_vector(std::ostringstream& os, const Vec& v) {
  os << '[';
  for (Index i = 0; i < v.size(); ++i) {
    if (i) os << ", ";
    put(os, v[i]);
  }
  os << ']';
}

void put_rows(std::ostringstream& os, const Eigen::MatrixXd& M) {
  os << '[';
  for (Index i = 0; i < M.rows(); ++i) {
    os << (i ? ",\n    " : "\n    ");
    put_vector(os, Eigen::VectorXd(M.row(i).transpose()));
  }
  os << (M.rows() ? "\n  ]" : "]");
}

std::string json_string(const std::string& s) { return nlohmann::json(s).dump(); }

}  // namespace

std::string instance_to_string(const ConicInstanced& inst) {
  const Index n = inst.size(), m = inst.poly.num_rows();
  std::ostringstream os;
  os << "{\n  \"version\": " << kInstanceFormatVersion << ",\n";
  const InstanceMeta& mt = inst.meta;
  os << "  \"meta\": {\"family\": " << json_string(mt.family) << ", \"n\": " << mt.n
     << ", \"grid_p\": " << mt.grid_p << ", \"grid_q\": " << mt.grid_q << ", \"r\": " << mt.r << ", \"alpha\": ";
  put(os, mt.alpha);
  os << ", \"omega\": ";
  put(os, mt.omega);
  os << ", \"seed\": " << mt.seed << ", \"discrete\": " << (mt.discrete ? "true" : "false") << "},\n";
  os << "  \"n\": " << n << ",\n  \"m\": " << m << ",\n  \"r\": " << inst.q.rank() << ",\n  \"omega\": ";
  put(os, inst.omega);
  os << ",\n  \"c\": ";
  put_vector(os, inst.c);
  os << ",\n  \"F\": ";
  put_rows(os, inst.q.factor());
  os << ",\n  \"H\": ";
  put_rows(os, inst.q.sigma_factor());
  os << ",\n  \"D\": ";
  put_vector(os, inst.q.diag_part());
  os << ",\n  \"A\": [";
  bool first = true;
  // Row-major triples.
  const SparseMatrix<double> At = inst.poly.A().transpose();
  for (Index i = 0; i < At.outerSize(); ++i)
    for (SparseMatrix<double>::InnerIterator it(At, i); it; ++it) {
      os << (first ? "" : ", ") << '[' << it.col() << ", " << it.row() << ", ";
      put(os, it.value());
      os << ']';
      first = false;
    }
  os << "],\n  \"b\": ";
  put_vector(os, inst.poly.b());
  os << ",\n  \"lower\": ";
  put_vector(os, inst.poly.lower());
  os << ",\n  \"upper\": ";
  put_vector(os, inst.poly.upper());
  os << ",\n  \"integer_vars\": [";
  for (std::size_t k = 0; k < inst.integer_vars.size(); ++k) os << (k ? ", " : "") << inst.integer_vars[k];
  os << "]\n}\n";
  return os.str();
}

namespace {

using nlohmann::json;

class Reader {
 public:
  Reader(const json& doc, std::string origin) : doc_(doc), origin_(std::move(origin)) {}

  [[noreturn]] void fail(const std::string& field, const std::string& what) const {
    throw std::runtime_error("instance " + origin_ + ": field '" + field + "': " + what);
  }

  const json& get(const std::string& field) const {
    auto it = doc_.find(field);
    if (it == doc_.end()) fail(field, "missing");
    return *it;
  }

  double number(const json& v, const std::string& field) const {
    if (!v.is_number()) fail(field, "expected a number");
    return v.get<double>();
  }

  Index integer(const json& v, const std::string& field) const {
    if (!v.is_number_integer()) fail(field, "expected an integer");
    return v.get<Index>();
  }

  Eigen::VectorXd vec(const std::string& field, Index len) const {
    const json& v = get(field);
    if (!v.is_array()) fail(field, "expected an array");
    if (static_cast<Index>(v.size()) != len)
      fail(field, "expected " + std::to_string(len) + " entries, found " + std::to_string(v.size()));
    Eigen::VectorXd out(len);
    for (Index i = 0; i < len; ++i) out[i] = number(v[i], field + "[" + std::to_string(i) + "]");
    return out;
  }

  Eigen::MatrixXd rows(const std::string& field, Index nrows, Index ncols) const {
    const json& v = get(field);
    if (!v.is_array() || static_cast<Index>(v.size()) != nrows)
      fail(field, "expected an array of " + std::to_string(nrows) + " rows");
    Eigen::MatrixXd out(nrows, ncols);
    for (Index i = 0; i < nrows; ++i) {
      const json& row = v[i];
      const std::string name = field + "[" + std::to_string(i) + "]";
      if (!row.is_array() || static_cast<Index>(row.size()) != ncols)
        fail(name, "expected a row of " + std::to_string(ncols) + " entries");
      for (Index j = 0; j < ncols; ++j) out(i, j) = number(row[j], name);
    }
    return out;
  }

 private:
  const json& doc_;
  std::string origin_;
};

}  // namespace

ConicInstanced instance_from_string(const std::string& text, const std::string& origin) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::runtime_error("instance " + origin + ": " + e.what());
  }
  if (!doc.is_object()) throw std::runtime_error("instance " + origin + ": top level must be an object");
  Reader rd(doc, origin);
  const Index version = rd.integer(rd.get("version"), "version");
  if (version != kInstanceFormatVersion)
    rd.fail("version", "unsupported version " + std::to_string(version) + " (this build reads version " +
                           std::to_string(kInstanceFormatVersion) + ")");
  const Index n = rd.integer(rd.get("n"), "n");
  const Index m = rd.integer(rd.get("m"), "m");
  if (n < 1) rd.fail("n", "must be positive");
  if (m < 0) rd.fail("m", "must be nonnegative");
  const json& Fj = rd.get("F");
  Index r = 0;
  if (Fj.is_array() && !Fj.empty() && Fj[0].is_array()) r = static_cast<Index>(Fj[0].size());
  if (doc.contains("r") && rd.integer(doc["r"], "r") != r) rd.fail("r", "does not match the width of F");

  const double omega = rd.number(rd.get("omega"), "omega");
  Eigen::VectorXd c = rd.vec("c", n);
  Eigen::MatrixXd F = rd.rows("F", n, r);
  Eigen::MatrixXd H = rd.rows("H", r, r);
  Eigen::VectorXd D = rd.vec("D", n);
  Eigen::VectorXd b = rd.vec("b", m);
  Eigen::VectorXd lower = rd.vec("lower", n);
  Eigen::VectorXd upper = rd.vec("upper", n);

  const json& Aj = rd.get("A");
  if (!Aj.is_array()) rd.fail("A", "expected an array of [row, col, value] triples");
  std::vector<Eigen::Triplet<double>> trip;
  for (std::size_t k = 0; k < Aj.size(); ++k) {
    const std::string name = "A[" + std::to_string(k) + "]";
    const json& e = Aj[k];
    if (!e.is_array() || e.size() != 3) rd.fail(name, "expected [row, col, value]");
    const Index i = rd.integer(e[0], name), j = rd.integer(e[1], name);
    if (i < 0 || i >= m || j < 0 || j >= n) rd.fail(name, "index out of range");
    trip.emplace_back(i, j, rd.number(e[2], name));
  }
  SparseMatrix<double> A(m, n);
  A.setFromTriplets(trip.begin(), trip.end());

  std::vector<Index> ints;
  if (doc.contains("integer_vars")) {
    const json& iv = doc["integer_vars"];
    if (!iv.is_array()) rd.fail("integer_vars", "expected an array");
    for (const json& e : iv) ints.push_back(rd.integer(e, "integer_vars"));
  }

  InstanceMeta meta;
  if (doc.contains("meta")) {
    const json& mj = doc["meta"];
    if (!mj.is_object()) rd.fail("meta", "expected an object");
    meta.family = mj.value("family", std::string());
    meta.n = mj.value("n", Index{0});
    meta.grid_p = mj.value("grid_p", Index{0});
    meta.grid_q = mj.value("grid_q", Index{0});
    meta.r = mj.value("r", Index{0});
    meta.alpha = mj.value("alpha", 0.0);
    meta.omega = mj.value("omega", 0.0);
    meta.seed = mj.value("seed", std::uint64_t{0});
    meta.discrete = mj.value("discrete", false);
  }

  try {
    QuadraticFormd q(std::move(F), std::move(H), std::move(D));
    Polyhedrond poly(std::move(A), std::move(b), std::move(lower), std::move(upper));
    return ConicInstanced(std::move(c), omega, std::move(q), std::move(poly), std::move(ints), std::move(meta));
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error("instance " + origin + ": " + e.what());
  }
}

void save_instance(const ConicInstanced& inst, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write instance file " + path);
  out << instance_to_string(inst);
  if (!out) throw std::runtime_error("error while writing instance file " + path);
}

ConicInstanced load_instance(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read instance file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return instance_from_string(ss.str(), path);
}

}  // namespace perspqp
