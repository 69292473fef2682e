#pragma once

#include "perspqp/core_model.hpp"
#include "perspqp/instance_gen.hpp"

#include <vector>

namespace perspqp::fixtures {

inline SparseMatrix<double> sparse(const Eigen::MatrixXd& A) { return A.sparseView(); }

inline Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

inline ConicInstanced make_instance(const Eigen::MatrixXd& Q, const Eigen::VectorXd& c, double omega,
                                    const Eigen::MatrixXd& A, const Eigen::VectorXd& b, const Eigen::VectorXd& lo,
                                    const Eigen::VectorXd& up, std::vector<Index> ints = {}) {
  return ConicInstanced(c, omega, QuadraticFormd::from_dense(Q), Polyhedrond(sparse(A), b, lo, up), std::move(ints));
}

/// Q = I2, c = 0, omega = 1, x1 + x2 = 1, 0 <= x <= 1. Optimum (1/2, 1/2).
inline ConicInstanced symmetric_simplex() {
  return make_instance(Eigen::MatrixXd::Identity(2, 2), Eigen::VectorXd::Zero(2), 1.0, Eigen::MatrixXd::Ones(1, 2),
                       vec({1.0}), Eigen::VectorXd::Zero(2), Eigen::VectorXd::Ones(2));
}

/// n = 1, x = 1, Q = [[4]], c = -1, omega = 1. Objective 1 at t = 2.
inline ConicInstanced single_point() {
  return make_instance(Eigen::MatrixXd::Constant(1, 1, 4.0), vec({-1.0}), 1.0, Eigen::MatrixXd::Ones(1, 1), vec({1.0}),
                       vec({0.0}), vec({2.0}));
}

/// Simplex polytope x1 + x2 = 1, 0 <= x <= 1 as a QP with the given data.
inline QpProblemd simplex_qp(const Eigen::VectorXd& linear, double sigma) {
  QpProblemd p;
  p.linear = linear;
  p.quad = QuadraticFormd::diagonal(Eigen::VectorXd::Ones(2));
  p.sigma = sigma;
  p.poly = Polyhedrond(sparse(Eigen::MatrixXd::Ones(1, 2)), vec({1.0}), Eigen::VectorXd::Zero(2),
                       Eigen::VectorXd::Ones(2));
  return p;
}

inline GenSpec card_spec(Index n, Index r, double alpha, double omega, std::uint64_t seed, bool discrete = false) {
  GenSpec g;
  g.family = Family::Cardinality;
  g.n = n;
  g.r = r;
  g.alpha = alpha;
  g.omega = omega;
  g.seed = seed;
  g.discrete = discrete;
  return g;
}

inline GenSpec grid_spec(Index p, Index q, Index r, double alpha, double omega, std::uint64_t seed,
                         bool discrete = false) {
  GenSpec g;
  g.family = Family::GridPath;
  g.grid_p = p;
  g.grid_q = q;
  g.r = r;
  g.alpha = alpha;
  g.omega = omega;
  g.seed = seed;
  g.discrete = discrete;
  return g;
}

}  // namespace perspqp::fixtures
