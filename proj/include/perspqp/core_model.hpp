#pragma once

// Domain types for minimizing c'x + omega*sqrt(x'Qx) over {Ax = b, l <= x <= u}
// and the perspective-reformulation quantities built on top of them.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

namespace perspqp {

using Index = Eigen::Index;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using SparseMatrix = Eigen::SparseMatrix<Scalar, Eigen::ColMajor>;

/// x'Qx at or below this value counts as zero (the h(x, 0) branch).
inline constexpr double kQZeroTol = 1e-12;
/// Largest dimension for which a dense copy of Q is materialized.
inline constexpr Index kDenseCacheLimit = 4000;

namespace detail {

template <typename Scalar>
struct QuadraticData {
  Matrix<Scalar> F;      // n x r
  Matrix<Scalar> H;      // r x r, Sigma = H H'
  Vector<Scalar> D;      // n, nonnegative
  Matrix<Scalar> dense;  // explicit Q when supplied or built
  bool has_dense = false;
  bool explicit_dense = false;  // dense matrix was the user input
  std::once_flag dense_once;
};

template <typename Derived>
void require(bool ok, const Derived& what) {
  if (!ok) throw std::invalid_argument(what);
}

}  // namespace detail

/// PSD matrix Q = F * (H H') * F' + diag(D).
///
/// A QuadraticForm is an immutable handle: copies share the same storage, so
/// passing it by value into QP subproblems is cheap. Products are evaluated in
/// factored form; the dense matrix is built on first request (n <= 4000 only).
template <typename Scalar>
class QuadraticForm {
 public:
  QuadraticForm() : data_(std::make_shared<detail::QuadraticData<Scalar>>()) {}

  QuadraticForm(Matrix<Scalar> F, Matrix<Scalar> H, Vector<Scalar> D)
      : data_(std::make_shared<detail::QuadraticData<Scalar>>()) {
    detail::require(F.rows() == D.size(), "QuadraticForm: F rows must equal length of D");
    detail::require(H.rows() == F.cols() && H.cols() == F.cols(),
                    "QuadraticForm: H must be r x r with r = cols(F)");
    detail::require(D.allFinite() && F.allFinite() && H.allFinite(),
                    "QuadraticForm: non-finite entry");
    detail::require((D.array() >= Scalar(0)).all(), "QuadraticForm: D entries must be >= 0");
    data_->F = std::move(F);
    data_->H = std::move(H);
    data_->D = std::move(D);
  }

  /// Pure diagonal form (rank 0).
  static QuadraticForm diagonal(Vector<Scalar> D) {
    const Index n = D.size();
    return QuadraticForm(Matrix<Scalar>(n, 0), Matrix<Scalar>(0, 0), std::move(D));
  }

  /// Wraps an explicit symmetric PSD matrix. The factor is taken from an
  /// eigendecomposition; the dense input is kept verbatim as the cache.
  static QuadraticForm from_dense(const Matrix<Scalar>& Q) {
    detail::require(Q.rows() == Q.cols(), "QuadraticForm: dense Q must be square");
    detail::require((Q - Q.transpose()).cwiseAbs().maxCoeff() <=
                        Scalar(1e-12) * (Scalar(1) + Q.cwiseAbs().maxCoeff()),
                    "QuadraticForm: dense Q must be symmetric");
    const Index n = Q.rows();
    Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(Q);
    const Vector<Scalar>& ev = es.eigenvalues();
    const Scalar scale = Scalar(1) + Q.cwiseAbs().maxCoeff();
    detail::require(n == 0 || ev.minCoeff() >= -Scalar(1e-10) * scale,
                    "QuadraticForm: dense Q is not positive semidefinite");
    Matrix<Scalar> F = es.eigenvectors() * ev.cwiseMax(Scalar(0)).cwiseSqrt().asDiagonal();
    QuadraticForm form(std::move(F), Matrix<Scalar>::Identity(n, n), Vector<Scalar>::Zero(n));
    form.data_->dense = Q;
    form.data_->has_dense = true;
    form.data_->explicit_dense = true;
    std::call_once(form.data_->dense_once, [] {});
    return form;
  }

  Index size() const { return data_->D.size(); }
  Index rank() const { return data_->F.cols(); }
  const Matrix<Scalar>& factor() const { return data_->F; }
  const Matrix<Scalar>& sigma_factor() const { return data_->H; }
  const Vector<Scalar>& diag_part() const { return data_->D; }

  /// Q * X for a vector or a block of columns, in factored form. Forms built
  /// from a dense matrix use the dense matrix directly.
  template <typename Derived>
  Matrix<Scalar> apply(const Eigen::MatrixBase<Derived>& X) const {
    if (explicit_input()) return data_->dense * X;
    const auto& d = *data_;
    Matrix<Scalar> out = d.D.asDiagonal() * X;
    if (d.F.cols() > 0) {
      Matrix<Scalar> inner = d.H.transpose() * (d.F.transpose() * X);
      out.noalias() += d.F * (d.H * inner);
    }
    return out;
  }

  Vector<Scalar> apply_vector(const Vector<Scalar>& x) const {
    require_size(x);
    return apply(x);
  }

  /// Qx through the dense cache.
  Vector<Scalar> apply_dense(const Vector<Scalar>& x) const {
    require_size(x);
    return dense() * x;
  }

  /// x'Qx. Nonnegative by construction in factored form.
  Scalar quad(const Vector<Scalar>& x) const {
    require_size(x);
    if (explicit_input()) return std::max(Scalar(0), x.dot(data_->dense * x));
    const auto& d = *data_;
    Scalar val = (d.D.array() * x.array().square()).sum();
    if (d.F.cols() > 0) val += (d.H.transpose() * (d.F.transpose() * x)).squaredNorm();
    return val;
  }

  /// Diagonal entries Q_ii.
  Vector<Scalar> diagonal_entries() const {
    if (explicit_input()) return data_->dense.diagonal();
    const auto& d = *data_;
    Vector<Scalar> out = d.D;
    if (d.F.cols() > 0) out += (d.F * d.H).rowwise().squaredNorm();
    return out;
  }

  const Matrix<Scalar>& dense() const {
    detail::require(size() <= kDenseCacheLimit, "QuadraticForm: dense cache disabled for n > 4000");
    auto& d = *data_;
    std::call_once(d.dense_once, [&d] {
      Matrix<Scalar> FH = d.F * d.H;
      d.dense = FH * FH.transpose();
      d.dense.diagonal() += d.D;
      d.has_dense = true;
    });
    return d.dense;
  }

  /// True when the form was built from a user-supplied dense matrix.
  bool explicit_input() const { return data_->explicit_dense; }

 private:
  void require_size(const Vector<Scalar>& x) const {
    if (x.size() != size()) throw std::invalid_argument("QuadraticForm: dimension mismatch");
  }

  std::shared_ptr<detail::QuadraticData<Scalar>> data_;
};

/// {x : Ax = b, lower <= x <= upper} with finite bounds.
///
/// A and b are shared between copies; bounds are owned per copy so that
/// branch-and-bound children can tighten them cheaply.
template <typename Scalar>
class Polyhedron {
 public:
  Polyhedron() = default;

  Polyhedron(SparseMatrix<Scalar> A, Vector<Scalar> b, Vector<Scalar> lower, Vector<Scalar> upper)
      : A_(std::make_shared<const SparseMatrix<Scalar>>(std::move(A))),
        b_(std::make_shared<const Vector<Scalar>>(std::move(b))),
        lower_(std::move(lower)),
        upper_(std::move(upper)) {
    validate();
  }

  Index num_vars() const { return lower_.size(); }
  Index num_rows() const { return b_ ? b_->size() : 0; }
  const SparseMatrix<Scalar>& A() const { return *A_; }
  const Vector<Scalar>& b() const { return *b_; }
  const Vector<Scalar>& lower() const { return lower_; }
  const Vector<Scalar>& upper() const { return upper_; }

  /// Same equality system, new bounds.
  Polyhedron with_bounds(Vector<Scalar> lower, Vector<Scalar> upper) const {
    Polyhedron out;
    out.A_ = A_;
    out.b_ = b_;
    out.lower_ = std::move(lower);
    out.upper_ = std::move(upper);
    out.validate();
    return out;
  }

  /// max(||Ax - b||_inf, largest bound violation).
  Scalar infeasibility(const Vector<Scalar>& x) const {
    if (x.size() != num_vars()) throw std::invalid_argument("Polyhedron: dimension mismatch");
    Scalar viol = 0;
    if (num_rows() > 0) viol = (*A_ * x - *b_).cwiseAbs().maxCoeff();
    if (num_vars() > 0) {
      viol = std::max(viol, (lower_ - x).cwiseMax(Scalar(0)).maxCoeff());
      viol = std::max(viol, (x - upper_).cwiseMax(Scalar(0)).maxCoeff());
    }
    return viol;
  }

  bool contains(const Vector<Scalar>& x, Scalar tol) const { return infeasibility(x) <= tol; }

 private:
  void validate() const {
    const Index n = lower_.size();
    detail::require(upper_.size() == n, "Polyhedron: bound vectors differ in length");
    detail::require(A_ && b_, "Polyhedron: missing equality system");
    detail::require(A_->cols() == n, "Polyhedron: A must have one column per variable");
    detail::require(A_->rows() == b_->size(), "Polyhedron: A rows must equal length of b");
    detail::require(lower_.allFinite() && upper_.allFinite(), "Polyhedron: bounds must be finite");
    detail::require(b_->allFinite(), "Polyhedron: b must be finite");
    for (Index j = 0; j < n; ++j) {
      if (lower_[j] > upper_[j])
        throw std::invalid_argument("Polyhedron: lower > upper at variable " + std::to_string(j));
    }
  }

  std::shared_ptr<const SparseMatrix<Scalar>> A_;
  std::shared_ptr<const Vector<Scalar>> b_;
  Vector<Scalar> lower_;
  Vector<Scalar> upper_;
};

/// Generator parameters carried alongside an instance.
struct InstanceMeta {
  std::string family;  // "cardinality", "gridpath", or free text
  Index n = 0;
  Index grid_p = 0;
  Index grid_q = 0;
  Index r = 0;
  double alpha = 0.0;
  double omega = 0.0;
  std::uint64_t seed = 0;
  bool discrete = false;
};

template <typename Scalar>
struct ConicInstance {
  Vector<Scalar> c;
  Scalar omega = 1;
  QuadraticForm<Scalar> q;
  Polyhedron<Scalar> poly;
  std::vector<Index> integer_vars;
  InstanceMeta meta;

  ConicInstance() = default;
  ConicInstance(Vector<Scalar> c_, Scalar omega_, QuadraticForm<Scalar> q_, Polyhedron<Scalar> poly_,
                std::vector<Index> integer_vars_ = {}, InstanceMeta meta_ = {})
      : c(std::move(c_)),
        omega(omega_),
        q(std::move(q_)),
        poly(std::move(poly_)),
        integer_vars(std::move(integer_vars_)),
        meta(std::move(meta_)) {
    validate();
  }

  Index size() const { return c.size(); }
  bool is_discrete() const { return !integer_vars.empty(); }

  void validate() const {
    detail::require(std::isfinite(static_cast<double>(omega)) && omega > 0,
                    "ConicInstance: omega must be positive");
    detail::require(q.size() == c.size(), "ConicInstance: Q dimension differs from c");
    detail::require(poly.num_vars() == c.size(), "ConicInstance: polyhedron dimension differs from c");
    detail::require(c.allFinite(), "ConicInstance: c must be finite");
    for (Index j : integer_vars)
      detail::require(j >= 0 && j < c.size(), "ConicInstance: integer variable index out of range");
  }
};

/// Multipliers for the conic stationarity system
///   c + grad f(x) - A'lambda - mu_lower + mu_upper = 0,
/// with mu_lower, mu_upper >= 0 attached to active lower / upper bounds.
/// Residual norms are infinity norms.
template <typename Scalar>
struct KktCertificate {
  Vector<Scalar> lambda;
  Vector<Scalar> mu_lower;
  Vector<Scalar> mu_upper;
  Scalar residual_inf = 0;
  Scalar comp_viol = 0;
  static constexpr const char* norm = "inf";
};

/// min linear'x + (sigma/2) x'Qx + offset over poly. sigma == 0 is an LP.
template <typename Scalar>
struct QpProblem {
  Vector<Scalar> linear;
  QuadraticForm<Scalar> quad;
  Scalar sigma = 0;
  Scalar offset = 0;
  Polyhedron<Scalar> poly;

  Index size() const { return linear.size(); }

  Scalar objective(const Vector<Scalar>& x) const {
    Scalar val = linear.dot(x) + offset;
    if (sigma != 0) val += Scalar(0.5) * sigma * quad.quad(x);
    return val;
  }
};

// ---------------------------------------------------------------------------
// Operations

template <typename Scalar>
Scalar eval_objective(const ConicInstance<Scalar>& inst, const Vector<Scalar>& x) {
  if (x.size() != inst.size()) throw std::invalid_argument("eval_objective: dimension mismatch");
  return inst.c.dot(x) + inst.omega * std::sqrt(std::max(inst.q.quad(x), Scalar(0)));
}

/// Closure of the perspective of x'Qx: x'Qx/t for t > 0, 0 at (x'Qx = 0, t = 0),
/// +infinity otherwise.
template <typename Scalar>
Scalar eval_h(const QuadraticForm<Scalar>& q, const Vector<Scalar>& x, Scalar t) {
  if (!(t >= 0)) throw std::invalid_argument("eval_h: t must be nonnegative");
  const Scalar qx = q.quad(x);
  if (t > 0) return qx / t;
  return qx <= Scalar(kQZeroTol) ? Scalar(0) : std::numeric_limits<Scalar>::infinity();
}

/// c'x + (omega/2) h(x, t) + (omega/2) t.
template <typename Scalar>
Scalar eval_perspective(const ConicInstance<Scalar>& inst, const Vector<Scalar>& x, Scalar t) {
  return inst.c.dot(x) + Scalar(0.5) * inst.omega * eval_h(inst.q, x, t) + Scalar(0.5) * inst.omega * t;
}

/// The QP solved for fixed t: min c'x + (omega/2t) x'Qx + (omega/2) t.
/// t = +infinity yields the LP relaxation with the offset dropped.
template <typename Scalar>
QpProblem<Scalar> subproblem_objective(const ConicInstance<Scalar>& inst, Scalar t) {
  if (!(t > 0)) throw std::invalid_argument("subproblem_objective: t must be positive");
  QpProblem<Scalar> p;
  p.linear = inst.c;
  p.quad = inst.q;
  p.poly = inst.poly;
  if (std::isinf(static_cast<double>(t))) {
    p.sigma = 0;
    p.offset = 0;
  } else {
    p.sigma = inst.omega / t;
    p.offset = Scalar(0.5) * inst.omega * t;
  }
  return p;
}

/// Gradient of f(x) = omega * sqrt(x'Qx). Undefined where x'Qx vanishes.
template <typename Scalar>
Vector<Scalar> grad_f(const ConicInstance<Scalar>& inst, const Vector<Scalar>& x) {
  if (x.size() != inst.size()) throw std::invalid_argument("grad_f: dimension mismatch");
  const Scalar qx = inst.q.quad(x);
  if (qx <= Scalar(kQZeroTol))
    throw std::domain_error("grad_f: x'Qx is zero; the optimum is in the t -> 0 regime");
  return inst.omega * inst.q.apply_vector(x) / std::sqrt(qx);
}

/// Infinity norm of c + grad f(x) - A'lambda - mu_lower + mu_upper.
template <typename Scalar>
Scalar kkt_residual(const ConicInstance<Scalar>& inst, const Vector<Scalar>& x,
                    const KktCertificate<Scalar>& cert) {
  const Index n = inst.size();
  if (x.size() != n || cert.lambda.size() != inst.poly.num_rows() || cert.mu_lower.size() != n ||
      cert.mu_upper.size() != n)
    throw std::invalid_argument("kkt_residual: dimension mismatch");
  if (inst.poly.infeasibility(x) > Scalar(1e-7))
    throw std::invalid_argument("kkt_residual: x is not feasible");
  Vector<Scalar> r = inst.c + grad_f(inst, x) - inst.poly.A().transpose() * cert.lambda -
                     cert.mu_lower + cert.mu_upper;
  return n == 0 ? Scalar(0) : r.cwiseAbs().maxCoeff();
}

/// max_j mu_lower_j (x_j - l_j) and mu_upper_j (u_j - x_j).
template <typename Scalar>
Scalar complementarity_violation(const Polyhedron<Scalar>& poly, const Vector<Scalar>& x,
                                 const Vector<Scalar>& mu_lower, const Vector<Scalar>& mu_upper) {
  Scalar viol = 0;
  for (Index j = 0; j < x.size(); ++j) {
    viol = std::max(viol, std::abs(mu_lower[j] * (x[j] - poly.lower()[j])));
    viol = std::max(viol, std::abs(mu_upper[j] * (poly.upper()[j] - x[j])));
  }
  return viol;
}

/// Builds a certificate from multipliers and fills in both residual fields.
template <typename Scalar>
KktCertificate<Scalar> certify(const ConicInstance<Scalar>& inst, const Vector<Scalar>& x,
                               Vector<Scalar> lambda, Vector<Scalar> mu_lower, Vector<Scalar> mu_upper) {
  KktCertificate<Scalar> cert;
  cert.lambda = std::move(lambda);
  cert.mu_lower = std::move(mu_lower);
  cert.mu_upper = std::move(mu_upper);
  cert.residual_inf = kkt_residual(inst, x, cert);
  cert.comp_viol = complementarity_violation(inst.poly, x, cert.mu_lower, cert.mu_upper);
  return cert;
}

/// Upper bound on the conic stationarity violation after a coordinate-descent
/// step t_prev -> t_next: qp_eps + |t_next - t_prev| / t_prev * ||grad f(x_next)||_inf.
template <typename Scalar>
Scalar dual_bound_estimate(const ConicInstance<Scalar>& inst, const Vector<Scalar>& x_next, Scalar t_prev,
                           Scalar t_next, Scalar qp_eps) {
  if (!(t_prev > 0)) throw std::invalid_argument("dual_bound_estimate: t_prev must be positive");
  if (t_next == t_prev) return qp_eps;
  const Vector<Scalar> g = grad_f(inst, x_next);
  return qp_eps + std::abs(t_next - t_prev) / t_prev * g.cwiseAbs().maxCoeff();
}

using QuadraticFormd = QuadraticForm<double>;
using Polyhedrond = Polyhedron<double>;
using ConicInstanced = ConicInstance<double>;
using KktCertificated = KktCertificate<double>;
using QpProblemd = QpProblem<double>;

}  // namespace perspqp
