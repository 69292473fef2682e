#include "perspqp/bench.hpp"
#include "perspqp/cli.hpp"
#include "perspqp/instance_gen.hpp"

#include "fixtures.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

using namespace perspqp;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code = 0;
  std::string out;
  std::string err;
};

CliRun cli(std::vector<std::string> args) {
  args.insert(args.begin(), "perspqp");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  CliRun r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

/// Value following `key` on its own output line.
std::string field(const std::string& text, const std::string& key) {
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string k, v;
    ls >> k >> v;
    if (k == key) return v;
  }
  return {};
}

double number(const std::string& text, const std::string& key) {
  const std::string v = field(text, key);
  REQUIRE_FALSE(v.empty());
  return std::stod(v);
}

class TempDir {
 public:
  explicit TempDir(const std::string& name) : path_(fs::temp_directory_path() / ("perspqp_cli_" + name)) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string operator/(const std::string& leaf) const { return (path_ / leaf).string(); }
  std::string str() const { return path_.string(); }

 private:
  fs::path path_;
};

std::size_t count_files(const std::string& dir) {
  return static_cast<std::size_t>(std::distance(fs::directory_iterator(dir), fs::directory_iterator{}));
}

}  // namespace

TEST_CASE("gen writes one file per seed") {
  TempDir d("gen");
  const CliRun r = cli({"gen", "--family", "cardinality", "--n", "30", "--r", "5", "--seed", "3", "--reps", "4",
                        "--out", d / "inst"});
  CHECK(r.code == kExitOk);
  CHECK(count_files(d / "inst") == 4);

  const CliRun g = cli({"gen", "--family", "gridpath", "--grid", "3x4", "--out", d / "grid", "--discrete"});
  CHECK(g.code == kExitOk);
  REQUIRE(count_files(d / "grid") == 1);
  const auto inst = load_instance(fs::directory_iterator(d / "grid")->path().string());
  CHECK(inst.size() == 17);
  CHECK(inst.is_discrete());
}

TEST_CASE("usage errors exit with code 2") {
  TempDir d("usage");
  CHECK(cli({}).code == kExitUsage);
  CHECK(cli({"gen", "--family", "cardinality", "--n", "30"}).code == kExitUsage);
  CHECK(cli({"gen", "--family", "nope", "--n", "30", "--out", d.str()}).code == kExitUsage);
  CHECK(cli({"solve", "--alg", "newton", "--instance", d / "x.json"}).code == kExitUsage);
  CHECK(cli({"--help"}).code == kExitOk);
  CHECK(cli({"solve", "--instance", d / "missing.json"}).code == kExitError);
}

TEST_CASE("solve reports the known optimum of the symmetric simplex") {
  TempDir d("simplex");
  save_instance(fixtures::symmetric_simplex(), d / "simplex.json");
  for (const char* alg : {"cd", "bisect"}) {
    const CliRun r = cli({"solve", "--alg", alg, "--tol", "1e-9", "--instance", d / "simplex.json"});
    REQUIRE(r.code == kExitOk);
    CHECK(number(r.out, "objective") == doctest::Approx(0.7071068).epsilon(1e-7));
  }
}

TEST_CASE("cd and bisect agree and tighter tolerance does not widen the gap") {
  TempDir d("agree");
  save_instance(generate(fixtures::card_spec(60, 10, 0.3, 2.0, 5)), d / "card.json");
  const CliRun ref = cli({"solve", "--alg", "cd", "--tol", "1e-10", "--instance", d / "card.json"});
  REQUIRE(ref.code == kExitOk);
  const CliRun cd = cli({"solve", "--alg", "cd", "--tol", "1e-8", "--instance", d / "card.json"});
  const CliRun bi = cli({"solve", "--alg", "bisect", "--tol", "1e-8", "--instance", d / "card.json"});
  REQUIRE(cd.code == kExitOk);
  REQUIRE(bi.code == kExitOk);
  const double a = number(cd.out, "objective"), b = number(bi.out, "objective");
  CHECK(std::abs(a - b) <= 1e-6 * std::max(1.0, std::abs(a)));

  const std::string z = field(ref.out, "objective");
  const CliRun loose = cli({"solve", "--tol", "1e-2", "--instance", d / "card.json", "--reference", z});
  const CliRun tight = cli({"solve", "--tol", "1e-8", "--instance", d / "card.json", "--reference", z});
  CHECK(number(tight.out, "optgap") <= number(loose.out, "optgap"));

  const std::string csv = d / "runs.csv";
  CHECK(cli({"solve", "--instance", d / "card.json", "--csv", csv}).code == kExitOk);
  CHECK(cli({"solve", "--alg", "bisect", "--instance", d / "card.json", "--csv", csv}).code == kExitOk);
  std::ifstream in(csv);
  const auto rows = read_csv(in);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].method == "cd");
  CHECK(rows[1].method == "bisect");
  CHECK(rows[0].id == "card");
}

TEST_CASE("bnb solves small instances and honours limits") {
  TempDir d("bnb");
  save_instance(generate(fixtures::card_spec(15, 5, 0.5, 2.0, 40, true)), d / "small.json");
  const CliRun r = cli({"bnb", "--instance", d / "small.json"});
  CHECK(r.code == kExitOk);
  CHECK(field(r.out, "solved") == "yes");

  save_instance(generate(fixtures::card_spec(200, 10, 0.5, 2.0, 3, true)), d / "big.json");
  const CliRun t = cli({"bnb", "--instance", d / "big.json", "--time-limit", "0.001"});
  CHECK(t.code == kExitLimit);
  CHECK(field(t.out, "solved") == "no");

  std::vector<Index> ints = {0, 1, 2, 3};
  const auto root = fixtures::make_instance(Eigen::MatrixXd::Identity(4, 4), fixtures::vec({-10.0, 0.0, 0.0, 0.0}),
                                            1.0, Eigen::MatrixXd::Ones(1, 4), fixtures::vec({1.0}),
                                            Eigen::VectorXd::Zero(4), Eigen::VectorXd::Ones(4), ints);
  save_instance(root, d / "root.json");
  const CliRun one = cli({"bnb", "--instance", d / "root.json"});
  CHECK(one.code == kExitOk);
  CHECK(field(one.out, "nodes") == "1");

  save_instance(fixtures::symmetric_simplex(), d / "cont.json");
  CHECK(cli({"bnb", "--instance", d / "cont.json"}).code == kExitUsage);
}

TEST_CASE("bench aggregates one row per cell and method") {
  TempDir d("bench");
  REQUIRE(cli({"gen", "--family", "cardinality", "--n", "20", "--r", "4", "--alpha", "0.5", "--omega", "2", "--reps",
               "5", "--out", d / "inst", "--discrete"})
              .code == kExitOk);
  REQUIRE(cli({"gen", "--family", "gridpath", "--grid", "3x3", "--r", "3", "--reps", "2", "--out", d / "inst"})
              .code == kExitOk);
  const CliRun r = cli({"bench", "--dir", d / "inst", "--methods", "cd,bisect,bnb-cd", "--csv", d / "agg.csv",
                        "--raw", d / "raw.csv"});
  REQUIRE(r.code == kExitOk);

  std::ifstream raw_in(d / "raw.csv");
  const auto raw = read_csv(raw_in);
  std::ifstream agg_in(d / "agg.csv");
  const auto agg = read_aggregate_csv(agg_in);

  // Five discrete cardinality seeds x three methods, two continuous grid seeds x two methods.
  CHECK(raw.size() == 5 * 3 + 2 * 2);
  CHECK(agg.size() == 3 + 2);
  std::map<std::pair<std::string, std::string>, int> seen;
  for (const auto& a : agg) {
    CHECK(++seen[{a.family, a.method}] == 1);
    CHECK(a.count == (a.family == "cardinality" ? 5 : 2));
  }

  const auto again = aggregate(raw);
  REQUIRE(again.size() == agg.size());
  for (std::size_t i = 0; i < agg.size(); ++i) {
    CHECK(again[i].method == agg[i].method);
    CHECK(again[i].count == agg[i].count);
    CHECK(again[i].objective == doctest::Approx(agg[i].objective).epsilon(1e-15));
    CHECK(again[i].qp_count == agg[i].qp_count);
    CHECK(again[i].solved == agg[i].solved);
  }

  TempDir empty("bench_empty");
  CHECK(cli({"bench", "--dir", empty.str(), "--csv", empty / "agg.csv"}).code == kExitUsage);
}

TEST_CASE("aggregate means over a five-seed cell") {
  std::vector<BenchRecord> recs;
  for (int k = 0; k < 5; ++k) {
    BenchRecord r;
    r.id = "s" + std::to_string(k);
    r.family = "cardinality";
    r.n = 20;
    r.r = 4;
    r.alpha = 0.5;
    r.omega = 2.0;
    r.method = "cd";
    r.qp_count = k + 1;
    r.objective = -static_cast<double>(k);
    r.solved = k != 2;
    recs.push_back(r);
  }
  const auto agg = aggregate(recs);
  REQUIRE(agg.size() == 1);
  CHECK(agg[0].count == 5);
  CHECK(agg[0].qp_count == doctest::Approx(3.0));
  CHECK(agg[0].objective == doctest::Approx(-2.0));
  CHECK(agg[0].solved == 4);
  CHECK(std::isnan(agg[0].egap));
}

TEST_CASE("CSV layout and round trip") {
  CHECK(csv_header() ==
        "id,family,n,r,alpha,omega,method,time_s,qp_count,pivot_count,nodes,objective,kkt_residual,egap,solved");
  BenchRecord r;
  r.id = "x";
  r.family = "gridpath";
  r.n = 12;
  r.r = 3;
  r.alpha = 0.1;
  r.omega = 1.0 / 3.0;
  r.method = "bnb-cd";
  r.time_s = 0.125;
  r.objective = -1.2345678901234567;
  r.egap = 0.0;
  r.solved = true;
  const BenchRecord back = parse_csv_row(to_csv_row(r));
  CHECK(back.omega == r.omega);
  CHECK(back.objective == r.objective);
  CHECK(std::isnan(back.kkt_residual));
  CHECK(back.egap == 0.0);
  CHECK(back.solved);

  r.id = "a,b";
  CHECK_THROWS_AS(to_csv_row(r), std::invalid_argument);
  CHECK_THROWS_AS(parse_method_list(""), std::invalid_argument);
  CHECK(parse_method_list("cd,cd,bisect").size() == 2);
}
