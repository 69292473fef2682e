#include "perspqp/bnb.hpp"

#include "fixtures.hpp"

#include <doctest.h>

#include <cmath>
#include <regex>
#include <sstream>

using namespace perspqp;
using fixtures::vec;

namespace {

ConicInstanced pick_one(const Eigen::VectorXd& c, const Eigen::MatrixXd& Q, double omega) {
  const Index n = c.size();
  std::vector<Index> ints(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) ints[static_cast<std::size_t>(i)] = i;
  return fixtures::make_instance(Q, c, omega, Eigen::MatrixXd::Ones(1, n), vec({1.0}), Eigen::VectorXd::Zero(n),
                                 Eigen::VectorXd::Ones(n), ints);
}

void check_run_invariants(const BnbResult& r) {
  for (std::size_t i = 1; i < r.lb_history.size(); ++i) {
    CHECK(r.lb_history[i] >= r.lb_history[i - 1] - 1e-12);
    CHECK(r.ub_history[i] <= r.ub_history[i - 1]);
  }
  for (const auto& [parent, child] : r.parent_child_values) CHECK(child >= parent - 1e-8);
  if (std::isfinite(r.incumbent_obj) && std::isfinite(r.best_bound))
    CHECK(r.incumbent_obj >= r.best_bound - 1e-9);
}

}  // namespace

TEST_CASE("choose one of four: optimum is the best unit vector") {
  Eigen::MatrixXd F(4, 2);
  F << 0.3, -0.2, 0.8, 0.1, -0.5, 0.4, 0.2, 0.9;
  const Eigen::MatrixXd Q = F * F.transpose() + Eigen::MatrixXd(vec({0.2, 0.5, 0.1, 0.3}).asDiagonal());
  const Eigen::VectorXd c = vec({-0.6, -1.2, -0.4, -1.0});
  const auto inst = pick_one(c, Q, 1.5);
  double best = std::numeric_limits<double>::infinity();
  for (Index i = 0; i < 4; ++i) best = std::min(best, c[i] + 1.5 * std::sqrt(Q(i, i)));

  const EnumerationResult ref = enumeration_oracle(inst);
  CHECK(ref.evaluated == 4);
  CHECK(ref.objective == doctest::Approx(best));

  const BnbResult r = solve_bnb(inst);
  CHECK(r.solved());
  CHECK(r.incumbent_obj == doctest::Approx(best).epsilon(1e-9));
  check_run_invariants(r);
}

TEST_CASE("integral root relaxation needs one node") {
  const auto inst = pick_one(vec({-10.0, 0.0, 0.0, 0.0}), Eigen::MatrixXd::Identity(4, 4), 1.0);
  const BnbResult r = solve_bnb(inst);
  CHECK(r.status == BnbStatus::Optimal);
  CHECK(r.nodes_processed == 1);
  CHECK(r.egap == 0.0);
  CHECK(r.incumbent_obj == doctest::Approx(-9.0));
}

TEST_CASE("seeded cardinality and grid instances match enumeration") {
  for (double omega : {1.0, 2.0, 3.0}) {
    for (const auto& spec : {fixtures::card_spec(15, 5, 0.5, omega, 40, true),
                             fixtures::grid_spec(4, 4, 5, 0.5, omega, 41, true)}) {
      const auto inst = generate(spec);
      const EnumerationResult ref = enumeration_oracle(inst);
      const BnbResult r = solve_bnb(inst);
      REQUIRE(r.solved());
      CHECK((r.incumbent_obj - ref.objective) / std::abs(ref.objective + 1e-10) <= 1e-4);
      CHECK(inst.poly.infeasibility(r.incumbent_x) <= 1e-9);
      check_run_invariants(r);
    }
  }
}

TEST_CASE("warm and cold starts build the same tree") {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const auto inst = generate(fixtures::card_spec(20, 5, 0.5, 2.0, 60 + seed, true));
    const BnbResult warm = solve_bnb(inst);
    BnbOptions o;
    o.warm_start = false;
    const BnbResult cold = solve_bnb(inst, o);
    CHECK(warm.nodes_processed == cold.nodes_processed);
    CHECK(warm.incumbent_obj == doctest::Approx(cold.incumbent_obj).epsilon(1e-9));
    CHECK(warm.dual_starts_accepted + warm.dual_starts_repaired <= warm.child_nodes);
    CHECK(cold.dual_starts_accepted == 0);
    if (warm.child_nodes > 0) CHECK(warm.pivot_count < cold.pivot_count);
  }
}

TEST_CASE("limits stop the search with a reported gap") {
  const auto inst = generate(fixtures::card_spec(60, 10, 0.5, 2.0, 3, true));
  BnbOptions t;
  t.time_limit = 0.0;
  const BnbResult rt = solve_bnb(inst, t);
  CHECK(rt.status == BnbStatus::TimeLimit);
  CHECK(rt.nodes_processed == 1);
  CHECK_FALSE(rt.solved());
  CHECK(std::isfinite(rt.best_bound));

  BnbOptions n;
  n.node_limit = 3;
  const BnbResult rn = solve_bnb(inst, n);
  CHECK(rn.status == BnbStatus::NodeLimit);
  CHECK(rn.nodes_processed == 3);
}

TEST_CASE("no integer point means infeasible") {
  // sum x = 1.5 over binaries.
  Eigen::MatrixXd Q = Eigen::MatrixXd::Identity(5, 5);
  auto inst = fixtures::make_instance(Q, Eigen::VectorXd::Constant(5, -1.0), 1.0, Eigen::MatrixXd::Ones(1, 5),
                                      vec({1.5}), Eigen::VectorXd::Zero(5), Eigen::VectorXd::Ones(5), {0, 1, 2, 3, 4});
  const BnbResult r = solve_bnb(inst);
  CHECK(r.status == BnbStatus::Infeasible);
  CHECK(std::isinf(r.incumbent_obj));
  CHECK(r.pruned_infeasible > 0);
}

TEST_CASE("continuous instances are rejected") {
  CHECK_THROWS_AS(solve_bnb(fixtures::symmetric_simplex()), std::invalid_argument);
}

TEST_CASE("progress log lines") {
  const auto inst = generate(fixtures::card_spec(15, 5, 0.5, 2.0, 40, true));
  std::ostringstream log;
  BnbOptions o;
  o.log = &log;
  o.log_stride = 1;
  const BnbResult r = solve_bnb(inst, o);
  std::istringstream in(log.str());
  std::string line;
  Index lines = 0;
  const std::regex re(R"(node=\d+ ub=\S+ lb=\S+ gap=\S+ depth=\d+)");
  while (std::getline(in, line)) {
    CHECK(std::regex_match(line, re));
    ++lines;
  }
  CHECK(lines == r.nodes_processed);
}

TEST_CASE("relative gap formula") {
  CHECK(relative_egap(-99.0, -100.0) == doctest::Approx(0.01));
  CHECK(relative_egap(1.0, 1.0) == 0.0);
  CHECK(std::isinf(relative_egap(std::numeric_limits<double>::infinity(), 1.0)));
}

TEST_CASE("branch_select: maximum infeasibility with lowest-index ties") {
  const std::vector<Index> all = {0, 1};
  CHECK(branch_select(vec({0.5, 0.3}), all).index == 0);
  CHECK(branch_select(vec({0.2, 0.8}), all).index == 0);
  const BranchChoice b = branch_select(vec({1.0, 0.49999}), all, 1e-5);
  CHECK(b.index == 1);
  CHECK(b.floor_val == 0.0);
  CHECK(b.ceil_val == 1.0);
  CHECK(branch_select(vec({2.7, 0.0}), {0}).floor_val == 2.0);
  CHECK_THROWS_AS(branch_select(vec({1.0, 0.000001}), all, 1e-5), std::invalid_argument);
  CHECK_FALSE(find_branch(vec({0.3, 0.3}), {}).has_value());
}

TEST_CASE("enumeration oracle sizes") {
  const auto c10 = generate(fixtures::card_spec(10, 3, 0.5, 1.0, 5, true));
  CHECK(enumeration_oracle(c10).evaluated == 45);

  const auto g33 = generate(fixtures::grid_spec(3, 3, 3, 0.5, 1.0, 5, true));
  const EnumerationResult rg = enumeration_oracle(g33);
  CHECK(rg.evaluated == 6);
  CHECK(std::isfinite(rg.objective));

  CHECK_THROWS_AS(enumeration_oracle(generate(fixtures::grid_spec(7, 7, 3, 0.5, 1.0, 5, true))),
                  std::invalid_argument);
  CHECK_THROWS_AS(enumeration_oracle(fixtures::symmetric_simplex()), std::invalid_argument);
}
