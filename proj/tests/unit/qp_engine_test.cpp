#include "perspqp/qp_engine.hpp"

#include "fixtures.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <random>

using namespace perspqp;
using fixtures::vec;

namespace {

double stationarity_tol(const QpProblemd& p) {
  return 1e-9 * (1.0 + (p.size() ? p.linear.cwiseAbs().maxCoeff() : 0.0));
}

}  // namespace

TEST_CASE("LP vertex on the simplex") {
  const QpProblemd p = fixtures::simplex_qp(vec({1.0, 2.0}), 0.0);
  const QpSolution s = solve_qp(p);
  REQUIRE(s.status == QpStatus::Optimal);
  CHECK(s.x[0] == doctest::Approx(1.0));
  CHECK(s.x[1] == doctest::Approx(0.0));
  CHECK(s.objective == doctest::Approx(1.0));
  CHECK(qp_stationarity(p, s) <= stationarity_tol(p));
}

TEST_CASE("QP projection onto the simplex") {
  const QpProblemd p = fixtures::simplex_qp(vec({0.0, 0.0}), 1.0);
  const QpSolution s = solve_qp(p);
  REQUIRE(s.status == QpStatus::Optimal);
  CHECK(s.x[0] == doctest::Approx(0.5));
  CHECK(s.x[1] == doctest::Approx(0.5));
  CHECK(s.objective == doctest::Approx(0.25));
  CHECK(s.lambda[0] == doctest::Approx(0.5));
}

TEST_CASE("box QP clipped at the upper bound") {
  QpProblemd p;
  p.linear = vec({-2.0});
  p.quad = QuadraticFormd::diagonal(vec({1.0}));
  p.sigma = 1.0;
  p.poly = Polyhedrond(SparseMatrix<double>(0, 1), Eigen::VectorXd(0), vec({0.0}), vec({1.0}));
  const QpSolution s = solve_qp(p);
  REQUIRE(s.status == QpStatus::Optimal);
  CHECK(s.x[0] == doctest::Approx(1.0));
  CHECK(s.objective == doctest::Approx(-1.5));
  CHECK(s.mu_upper[0] == doctest::Approx(1.0));
  CHECK(s.mu_lower[0] == doctest::Approx(0.0));
}

TEST_CASE("offset is included in the objective") {
  QpProblemd p = fixtures::simplex_qp(vec({1.0, 2.0}), 0.0);
  p.offset = 3.5;
  CHECK(solve_qp(p).objective == doctest::Approx(4.5));
}

TEST_CASE("infeasible equality system is reported") {
  QpProblemd p = fixtures::simplex_qp(vec({1.0, 2.0}), 1.0);
  p.poly = Polyhedrond(fixtures::sparse(Eigen::MatrixXd::Ones(1, 2)), vec({3.0}), Eigen::VectorXd::Zero(2),
                       Eigen::VectorXd::Ones(2));
  CHECK(solve_qp(p).status == QpStatus::Infeasible);
}

TEST_CASE("pivot cap yields IterLimit") {
  const auto inst = generate(fixtures::card_spec(40, 5, 0.5, 1.0, 3));
  QpOptions o;
  o.pivot_cap = 2;
  CHECK(solve_qp(subproblem_objective(inst, 1.0), nullptr, StartMode::PrimalStart, o).status == QpStatus::IterLimit);
}

TEST_CASE("matches the face-enumeration oracle on random tiny QPs") {
  std::mt19937_64 rng(2024);
  for (int k = 0; k < 300; ++k) {
    const QpProblemd p = oracle::random_tiny_qp(rng);
    const auto ref = oracle::enumerate_faces(p);
    const QpSolution s = solve_qp(p);
    if (!ref.feasible) {
      CHECK(s.status == QpStatus::Infeasible);
      continue;
    }
    REQUIRE(s.status == QpStatus::Optimal);
    CHECK(std::abs(s.objective - ref.objective) <= 1e-6);
    CHECK(qp_stationarity(p, s) <= stationarity_tol(p));
    CHECK(p.poly.infeasibility(s.x) <= 1e-9);
    CHECK(complementarity_violation(p.poly, s.x, s.mu_lower, s.mu_upper) <= 1e-9);
    CHECK(s.mu_lower.minCoeff() >= 0.0);
    CHECK(s.mu_upper.minCoeff() >= 0.0);
  }
}

TEST_CASE("warm starts reproduce cold objectives") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto spec = seed % 2 ? fixtures::card_spec(30, 5, 0.3, 1.0 + seed % 3, seed)
                               : fixtures::grid_spec(4, 5, 5, 0.3, 1.0 + seed % 3, seed);
    const auto inst = generate(spec);
    const QpProblemd first = subproblem_objective(inst, 2.0);
    const QpProblemd second = subproblem_objective(inst, 3.0);
    const QpSolution a = solve_qp(first);
    const QpSolution cold = solve_qp(second);
    const QpSolution warm = solve_qp(second, &a.basis);
    REQUIRE(cold.status == QpStatus::Optimal);
    REQUIRE(warm.status == QpStatus::Optimal);
    CHECK(std::abs(warm.objective - cold.objective) <= 1e-9 * (1.0 + std::abs(cold.objective)));
    CHECK(warm.warm);
  }
}

TEST_CASE("re-solving from the optimal basis takes no pivots") {
  const auto inst = generate(fixtures::card_spec(50, 10, 0.1, 2.0, 9));
  const QpProblemd p = subproblem_objective(inst, 5.0);
  const QpSolution s = solve_qp(p);
  const QpSolution again = solve_qp(p, &s.basis);
  CHECK(again.iterations == 0);
  CHECK(again.objective == doctest::Approx(s.objective).epsilon(1e-12));
}

TEST_CASE("primal objective is monotone over pivots") {
  QpOptions o;
  o.record_objective = true;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto inst = generate(fixtures::card_spec(40, 5, 0.5, 1.0, seed));
    const QpSolution s = solve_qp(subproblem_objective(inst, 3.0), nullptr, StartMode::PrimalStart, o);
    REQUIRE(s.objective_trace.size() > 1);
    for (std::size_t i = 1; i < s.objective_trace.size(); ++i)
      CHECK(s.objective_trace[i] <= s.objective_trace[i - 1] + 1e-12 * (1.0 + std::abs(s.objective_trace[i - 1])));
  }
}

TEST_CASE("identical inputs give identical pivot sequences") {
  const auto inst = generate(fixtures::grid_spec(5, 5, 5, 0.5, 2.0, 4));
  const QpProblemd p = subproblem_objective(inst, 1.5);
  const QpSolution a = solve_qp(p);
  const QpSolution b = solve_qp(p);
  CHECK(a.iterations == b.iterations);
  CHECK(a.x == b.x);
  CHECK(a.basis.head == b.basis.head);
}

TEST_CASE("reoptimize after a satisfied bound change keeps the optimum") {
  const QpProblemd p = fixtures::simplex_qp(vec({1.0, 2.0}), 0.0);
  const QpSolution s = solve_qp(p);
  QpProblemd c = p;
  c.poly = p.poly.with_bounds(vec({0.0, 0.0}), vec({1.0, 0.5}));  // x2 <= 0.5 holds at x = (1, 0)
  const QpSolution r = reoptimize_after_bound_change(s, c);
  CHECK(r.status == QpStatus::Optimal);
  CHECK(r.iterations == 0);
  CHECK(r.x == s.x);
}

TEST_CASE("reoptimize moves to the other vertex when it must") {
  const QpProblemd p = fixtures::simplex_qp(vec({1.0, 2.0}), 0.0);
  const QpSolution s = solve_qp(p);
  QpProblemd c = p;
  c.poly = p.poly.with_bounds(vec({0.0, 0.0}), vec({0.0, 1.0}));
  const QpSolution r = reoptimize_after_bound_change(s, c);
  REQUIRE(r.status == QpStatus::Optimal);
  CHECK(r.x[0] == doctest::Approx(0.0));
  CHECK(r.x[1] == doctest::Approx(1.0));
  CHECK(r.objective == doctest::Approx(2.0));
  CHECK(r.mode == StartMode::DualStart);
}

TEST_CASE("dual starts after random bound tightenings agree with the oracle") {
  std::mt19937_64 rng(77);
  int compared = 0, dual_without_repair = 0, strictly_convex = 0;
  for (int k = 0; k < 600; ++k) {
    const QpProblemd p = oracle::random_tiny_qp(rng);
    const QpSolution s = solve_qp(p);
    if (s.status != QpStatus::Optimal) continue;
    const Index j = std::uniform_int_distribution<Index>(0, p.size() - 1)(rng);
    Eigen::VectorXd lo = p.poly.lower(), up = p.poly.upper();
    const double mid = lo[j] + (up[j] - lo[j]) * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    if (rng() % 2) up[j] = std::min(up[j], mid);
    else lo[j] = std::max(lo[j], mid);
    QpProblemd c = p;
    c.poly = p.poly.with_bounds(lo, up);
    const auto ref = oracle::enumerate_faces(c);
    const QpSolution r = reoptimize_after_bound_change(s, c);
    if (!ref.feasible) {
      CHECK(r.status == QpStatus::Infeasible);
      continue;
    }
    REQUIRE(r.status == QpStatus::Optimal);
    ++compared;
    CHECK(std::abs(r.objective - ref.objective) <= 1e-6);
    CHECK(qp_stationarity(c, r) <= stationarity_tol(c));
    CHECK(r.objective >= s.objective - 1e-9 * (1.0 + std::abs(s.objective)));
    if (c.sigma > 0 && c.quad.diag_part().minCoeff() > 0) {
      ++strictly_convex;
      dual_without_repair += r.repaired ? 0 : 1;
    }
  }
  CHECK(compared > 300);
  CHECK(dual_without_repair >= 0.9 * strictly_convex);
}

TEST_CASE("redundant equality rows are handled") {
  // Grid flow conservation has one dependent row per instance.
  const auto inst = generate(fixtures::grid_spec(6, 6, 5, 0.5, 1.0, 1));
  const QpProblemd p = subproblem_objective(inst, 2.0);
  const QpSolution s = solve_qp(p);
  REQUIRE(s.status == QpStatus::Optimal);
  CHECK(p.poly.infeasibility(s.x) <= 1e-9);
  CHECK(qp_stationarity(p, s) <= stationarity_tol(p));
}

TEST_CASE("dimension mismatch of a warm basis is rejected") {
  const QpProblemd p = fixtures::simplex_qp(vec({1.0, 2.0}), 1.0);
  WorkingBasis w;
  w.status = {VarStatus::Basic, VarStatus::AtLower, VarStatus::AtLower};
  CHECK_THROWS_AS(solve_qp(p, &w), std::invalid_argument);
}
