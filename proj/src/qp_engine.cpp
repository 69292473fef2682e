#include "perspqp/qp_engine.hpp"

#include "basis_factor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace perspqp {

const char* to_string(QpStatus s) {
  switch (s) {
    case QpStatus::Optimal: return "optimal";
    case QpStatus::Infeasible: return "infeasible";
    case QpStatus::IterLimit: return "iteration-limit";
  }
  return "?";
}

const char* to_string(StartMode m) {
  return m == StartMode::PrimalStart ? "primal" : "dual";
}

Index WorkingBasis::num_basic() const {
  return std::count(status.begin(), status.end(), VarStatus::Basic);
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Internal variable classification. Free marks a nonbasic variable strictly
// between its bounds that could not be made superbasic (zero curvature).
enum class Kind : std::uint8_t { Basic, Super, Lower, Upper, Free };

struct DualFallback {};

}  // namespace

class QpSolver::Impl {
 public:
  explicit Impl(const QpOptions& opt) : opt_(opt) {}

  QpSolution solve(const QpProblemd& p, const WorkingBasis* warm, StartMode mode);

 private:
  // -- setup -------------------------------------------------------------
  void load(const QpProblemd& p);
  void set_phase2_objective();
  void crash(const std::vector<Index>& candidates);
  void refactor();
  void maybe_refactor();

  // -- linear algebra helpers ---------------------------------------------
  Eigen::VectorXd column(Index j) const;
  double col_dot(Index j, const Eigen::VectorXd& v) const;
  void compute_basics();
  Eigen::VectorXd gradient() const;
  Eigen::VectorXd reduced_costs(const Eigen::VectorXd& g, const Eigen::VectorXd& pi) const;
  Eigen::VectorXd hessian_times(const Eigen::VectorXd& z) const;

  // -- superbasic set ------------------------------------------------------
  void curvature_column(Index j, const Eigen::VectorXd& wj, Eigen::VectorXd& mcol, double& hjj) const;
  bool try_append(Index j, const Eigen::VectorXd& wj);
  void remove_super(Index s);
  void rebuild_reduced();
  void install_superbasics();
  Eigen::VectorXd chol_solve(const Eigen::VectorXd& rhs) const;
  bool accept_pivot(double gamma, double hjj) const;

  // -- algorithms ----------------------------------------------------------
  QpStatus primal(bool phase1);
  QpStatus phase1_from_current();
  QpStatus run_primal_start(const WorkingBasis* warm);
  QpStatus run_dual_start(const WorkingBasis& warm);
  QpStatus dual_loop();
  Index price(const Eigen::VectorXd& d) const;
  void basis_swap(Index row, Index entering, const Eigen::VectorXd& w);
  QpSolution finish(QpStatus status);

  bool is_fixed(Index j) const { return lo_[j] == up_[j]; }
  double violation(Index j) const { return std::max(lo_[j] - x_[j], x_[j] - up_[j]); }

  QpOptions opt_;
  const QpProblemd* p_ = nullptr;
  Index n_ = 0, m_ = 0, N_ = 0;
  Eigen::VectorXd lo_, up_, x_, cost_;
  double sigma_ = 0.0;
  double dtol_ = 0.0;
  std::vector<Kind> kind_;
  std::vector<Index> head_;
  std::vector<Index> pos_;   // row in head_ or -1
  std::vector<Index> S_;
  std::vector<Index> spos_;  // index in S_ or -1
  detail::BasisFactor bf_;
  Eigen::MatrixXd W_;  // m x |S| : B^{-1} a_q
  Eigen::MatrixXd M_;  // |S| x |S| reduced Hessian Z'HZ
  Eigen::MatrixXd L_;  // lower Cholesky factor of M_

  Index iters_ = 0, cap_ = 0, phase1_iters_ = 0, dual_iters_ = 0;
  int degenerate_run_ = 0;
  bool bland_ = false;
  bool repaired_ = false;
  bool phase1_ = false;
  std::vector<double> trace_;
};

// ---------------------------------------------------------------------------
// setup

void QpSolver::Impl::load(const QpProblemd& p) {
  p_ = &p;
  n_ = p.poly.num_vars();
  m_ = p.poly.num_rows();
  N_ = n_ + m_;
  if (p.linear.size() != n_ || p.quad.size() != n_)
    throw std::invalid_argument("solve_qp: inconsistent problem dimensions");
  if (!(p.sigma >= 0)) throw std::invalid_argument("solve_qp: sigma must be nonnegative");
  lo_.resize(N_);
  up_.resize(N_);
  lo_.head(n_) = p.poly.lower();
  up_.head(n_) = p.poly.upper();
  lo_.tail(m_).setZero();
  up_.tail(m_).setZero();
  x_ = Eigen::VectorXd::Zero(N_);
  cost_ = Eigen::VectorXd::Zero(N_);
  kind_.assign(N_, Kind::Lower);
  head_.clear();
  pos_.assign(N_, -1);
  S_.clear();
  spos_.assign(N_, -1);
  W_.resize(m_, 0);
  M_.resize(0, 0);
  L_.resize(0, 0);
  iters_ = phase1_iters_ = dual_iters_ = 0;
  degenerate_run_ = 0;
  bland_ = false;
  repaired_ = false;
  phase1_ = false;
  trace_.clear();
  cap_ = opt_.pivot_cap > 0 ? opt_.pivot_cap : 50 * (n_ + m_) + 50;
}

void QpSolver::Impl::set_phase2_objective() {
  phase1_ = false;
  sigma_ = p_->sigma;
  cost_.setZero();
  cost_.head(n_) = p_->linear;
  lo_.tail(m_).setZero();
  up_.tail(m_).setZero();
  const double scale = n_ > 0 ? p_->linear.cwiseAbs().maxCoeff() : 0.0;
  dtol_ = opt_.opt_tol * (1.0 + scale);
}

Eigen::VectorXd QpSolver::Impl::column(Index j) const {
  Eigen::VectorXd a = Eigen::VectorXd::Zero(m_);
  if (j < n_) {
    for (SparseMatrix<double>::InnerIterator it(p_->poly.A(), j); it; ++it) a[it.row()] = it.value();
  } else {
    a[j - n_] = 1.0;
  }
  return a;
}

double QpSolver::Impl::col_dot(Index j, const Eigen::VectorXd& v) const {
  if (j >= n_) return v[j - n_];
  double s = 0.0;
  for (SparseMatrix<double>::InnerIterator it(p_->poly.A(), j); it; ++it) s += it.value() * v[it.row()];
  return s;
}

void QpSolver::Impl::crash(const std::vector<Index>& candidates) {
  head_.resize(m_);
  std::fill(pos_.begin(), pos_.end(), -1);
  for (Index i = 0; i < m_; ++i) {
    head_[i] = n_ + i;
    pos_[n_ + i] = i;
  }
  bf_.factor(Eigen::MatrixXd::Identity(m_, m_));
  for (Index j : candidates) {
    if (j < 0 || j >= n_ || pos_[j] >= 0) continue;
    Eigen::VectorXd w = bf_.ftran(column(j));
    Index best = -1;
    double big = 0.0;
    for (Index r = 0; r < m_; ++r) {
      if (head_[r] >= n_ && std::abs(w[r]) > big) {
        big = std::abs(w[r]);
        best = r;
      }
    }
    if (best < 0 || big <= 1e-7 * std::max(1.0, w.cwiseAbs().maxCoeff())) continue;
    bf_.replace(best, w);
    pos_[head_[best]] = -1;
    head_[best] = j;
    pos_[j] = best;
    if (bf_.update_count() >= opt_.refactor_interval) {
      Eigen::MatrixXd B(m_, m_);
      for (Index r = 0; r < m_; ++r) B.col(r) = column(head_[r]);
      bf_.factor(B);
    }
  }
  Eigen::MatrixXd B(m_, m_);
  for (Index r = 0; r < m_; ++r) B.col(r) = column(head_[r]);
  bf_.factor(B);
  for (Index r = 0; r < m_; ++r) kind_[head_[r]] = Kind::Basic;
}

void QpSolver::Impl::refactor() {
  Eigen::MatrixXd B(m_, m_);
  for (Index r = 0; r < m_; ++r) B.col(r) = column(head_[r]);
  if (bf_.factor(B)) return;
  // Numerically singular basis: rebuild from the structural columns that survive a crash.
  std::vector<Index> cand;
  for (Index j : head_)
    if (j < n_) cand.push_back(j);
  const std::vector<Index> old = head_;
  crash(cand);
  for (Index j : old) {
    if (pos_[j] < 0) kind_[j] = j < n_ ? Kind::Free : Kind::Lower;
  }
}

void QpSolver::Impl::maybe_refactor() {
  if (bf_.update_count() >= opt_.refactor_interval || bf_.growth() > opt_.growth_limit) refactor();
}

void QpSolver::Impl::compute_basics() {
  if (m_ == 0) return;
  Eigen::VectorXd rhs = p_->poly.b();
  const auto& A = p_->poly.A();
  for (Index j = 0; j < n_; ++j) {
    if (pos_[j] >= 0 || x_[j] == 0.0) continue;
    for (SparseMatrix<double>::InnerIterator it(A, j); it; ++it) rhs[it.row()] -= it.value() * x_[j];
  }
  for (Index i = 0; i < m_; ++i)
    if (pos_[n_ + i] < 0) rhs[i] -= x_[n_ + i];
  const Eigen::VectorXd xb = bf_.ftran(rhs);
  for (Index r = 0; r < m_; ++r) x_[head_[r]] = xb[r];
}

Eigen::VectorXd QpSolver::Impl::gradient() const {
  Eigen::VectorXd g = cost_;
  if (sigma_ > 0) g.head(n_) += sigma_ * p_->quad.apply(x_.head(n_));
  return g;
}

Eigen::VectorXd QpSolver::Impl::reduced_costs(const Eigen::VectorXd& g, const Eigen::VectorXd& pi) const {
  Eigen::VectorXd d(N_);
  d.head(n_) = g.head(n_) - p_->poly.A().transpose() * pi;
  d.tail(m_) = g.tail(m_) - pi;
  for (Index j : head_) d[j] = 0.0;
  return d;
}

Eigen::VectorXd QpSolver::Impl::hessian_times(const Eigen::VectorXd& z) const {
  Eigen::VectorXd hz = Eigen::VectorXd::Zero(N_);
  if (sigma_ > 0) hz.head(n_) = sigma_ * p_->quad.apply(z.head(n_));
  return hz;
}

// ---------------------------------------------------------------------------
// superbasic set and reduced Hessian

bool QpSolver::Impl::accept_pivot(double gamma, double hjj) const {
  return gamma > 1e-9 * hjj && gamma > 1e-14;
}

void QpSolver::Impl::curvature_column(Index j, const Eigen::VectorXd& wj, Eigen::VectorXd& mcol,
                                      double& hjj) const {
  const Index ns = static_cast<Index>(S_.size());
  mcol = Eigen::VectorXd::Zero(ns);
  hjj = 0.0;
  if (sigma_ <= 0) return;
  Eigen::VectorXd z = Eigen::VectorXd::Zero(N_);
  z[j] = 1.0;
  for (Index r = 0; r < m_; ++r) z[head_[r]] -= wj[r];
  const Eigen::VectorXd hz = hessian_times(z);
  Eigen::VectorXd hz_head(m_);
  for (Index r = 0; r < m_; ++r) hz_head[r] = hz[head_[r]];
  for (Index k = 0; k < ns; ++k) mcol[k] = hz[S_[k]];
  if (ns > 0 && m_ > 0) mcol.noalias() -= W_.transpose() * hz_head;
  hjj = z.dot(hz);
}

bool QpSolver::Impl::try_append(Index j, const Eigen::VectorXd& wj) {
  Eigen::VectorXd mcol;
  double hjj;
  curvature_column(j, wj, mcol, hjj);
  const Index ns = static_cast<Index>(S_.size());
  Eigen::VectorXd l = mcol;
  if (ns > 0) L_.triangularView<Eigen::Lower>().solveInPlace(l);
  const double gamma = hjj - l.squaredNorm();
  if (!accept_pivot(gamma, hjj)) return false;
  W_.conservativeResize(m_, ns + 1);
  W_.col(ns) = wj;
  M_.conservativeResize(ns + 1, ns + 1);
  M_.col(ns).head(ns) = mcol;
  M_.row(ns).head(ns) = mcol.transpose();
  M_(ns, ns) = hjj;
  L_.conservativeResize(ns + 1, ns + 1);
  L_.col(ns).setZero();
  L_.row(ns).head(ns) = l.transpose();
  L_(ns, ns) = std::sqrt(gamma);
  S_.push_back(j);
  spos_[j] = ns;
  kind_[j] = Kind::Super;
  return true;
}

void QpSolver::Impl::remove_super(Index s) {
  const Index ns = static_cast<Index>(S_.size());
  const Index tail = ns - s - 1;
  // Cholesky downdate: the trailing block absorbs the removed column as a rank-one update.
  Eigen::VectorXd v = L_.col(s).tail(tail);
  Eigen::MatrixXd T = L_.bottomRightCorner(tail, tail);
  for (Index k = 0; k < tail; ++k) {
    const double r = std::hypot(T(k, k), v[k]);
    const double c = r / T(k, k);
    const double sn = v[k] / T(k, k);
    T(k, k) = r;
    for (Index i = k + 1; i < tail; ++i) {
      T(i, k) = (T(i, k) + sn * v[i]) / c;
      v[i] = c * v[i] - sn * T(i, k);
    }
  }
  Eigen::MatrixXd L(ns - 1, ns - 1);
  L.setZero();
  L.topLeftCorner(s, s) = L_.topLeftCorner(s, s);
  L.bottomLeftCorner(tail, s) = L_.bottomLeftCorner(tail, s);
  L.bottomRightCorner(tail, tail) = T;
  L_ = std::move(L);

  Eigen::MatrixXd M(ns - 1, ns - 1);
  M.topLeftCorner(s, s) = M_.topLeftCorner(s, s);
  M.topRightCorner(s, tail) = M_.topRightCorner(s, tail);
  M.bottomLeftCorner(tail, s) = M_.bottomLeftCorner(tail, s);
  M.bottomRightCorner(tail, tail) = M_.bottomRightCorner(tail, tail);
  M_ = std::move(M);

  Eigen::MatrixXd W(m_, ns - 1);
  W.leftCols(s) = W_.leftCols(s);
  W.rightCols(tail) = W_.rightCols(tail);
  W_ = std::move(W);

  spos_[S_[s]] = -1;
  S_.erase(S_.begin() + s);
  for (Index k = s; k < ns - 1; ++k) spos_[S_[k]] = k;
}

void QpSolver::Impl::rebuild_reduced() {
  const std::vector<Index> cand = S_;
  for (Index j : cand) spos_[j] = -1;
  S_.clear();
  W_.resize(m_, 0);
  M_.resize(0, 0);
  L_.resize(0, 0);
  if (cand.empty()) return;
  if (sigma_ <= 0) {
    for (Index j : cand) kind_[j] = Kind::Free;
    return;
  }
  const Index nc = static_cast<Index>(cand.size());
  Eigen::MatrixXd AS(m_, nc);
  for (Index k = 0; k < nc; ++k) AS.col(k) = column(cand[k]);
  const Eigen::MatrixXd Wc = m_ > 0 ? bf_.ftran(AS) : Eigen::MatrixXd(0, nc);
  Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(n_, nc);
  for (Index k = 0; k < nc; ++k)
    if (cand[k] < n_) Z(cand[k], k) = 1.0;
  for (Index r = 0; r < m_; ++r)
    if (head_[r] < n_) Z.row(head_[r]) -= Wc.row(r);
  const Eigen::MatrixXd QZ = sigma_ * p_->quad.apply(Z);
  Eigen::MatrixXd Mc = Z.transpose() * QZ;
  Mc = 0.5 * (Mc + Mc.transpose()).eval();

  // Greedy incremental Cholesky; columns that would make the factor singular are demoted.
  std::vector<Index> keep;
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(nc, nc);
  for (Index k = 0; k < nc; ++k) {
    const Index a = static_cast<Index>(keep.size());
    Eigen::VectorXd l(a);
    for (Index i = 0; i < a; ++i) l[i] = Mc(keep[i], k);
    if (a > 0) L.topLeftCorner(a, a).triangularView<Eigen::Lower>().solveInPlace(l);
    const double gamma = Mc(k, k) - l.squaredNorm();
    if (!accept_pivot(gamma, Mc(k, k))) {
      kind_[cand[k]] = Kind::Free;
      continue;
    }
    L.row(a).head(a) = l.transpose();
    L(a, a) = std::sqrt(gamma);
    keep.push_back(k);
  }
  const Index ns = static_cast<Index>(keep.size());
  L_ = L.topLeftCorner(ns, ns);
  M_.resize(ns, ns);
  W_.resize(m_, ns);
  for (Index a = 0; a < ns; ++a) {
    W_.col(a) = Wc.col(keep[a]);
    for (Index b = 0; b < ns; ++b) M_(a, b) = Mc(keep[a], keep[b]);
    S_.push_back(cand[keep[a]]);
    spos_[cand[keep[a]]] = a;
    kind_[cand[keep[a]]] = Kind::Super;
  }
}

void QpSolver::Impl::install_superbasics() {
  for (Index j : S_) spos_[j] = -1;
  S_.clear();
  for (Index j = 0; j < n_; ++j) {
    if (pos_[j] >= 0) continue;
    if (kind_[j] == Kind::Free || kind_[j] == Kind::Super) {
      kind_[j] = Kind::Super;
      S_.push_back(j);
    }
  }
  rebuild_reduced();
}

Eigen::VectorXd QpSolver::Impl::chol_solve(const Eigen::VectorXd& rhs) const {
  Eigen::VectorXd y = rhs;
  if (y.size() == 0) return y;
  L_.triangularView<Eigen::Lower>().solveInPlace(y);
  L_.transpose().triangularView<Eigen::Upper>().solveInPlace(y);
  return y;
}

// ---------------------------------------------------------------------------
// primal active-set iterations

Index QpSolver::Impl::price(const Eigen::VectorXd& d) const {
  Index best = -1;
  double best_v = 0.0;
  for (Index j = 0; j < N_; ++j) {
    if (pos_[j] >= 0 || spos_[j] >= 0 || is_fixed(j)) continue;
    double v = 0.0;
    switch (kind_[j]) {
      case Kind::Lower: v = -d[j]; break;
      case Kind::Upper: v = d[j]; break;
      case Kind::Free: v = std::abs(d[j]); break;
      default: break;
    }
    if (v <= dtol_) continue;
    if (bland_) return j;
    if (v > best_v) {
      best_v = v;
      best = j;
    }
  }
  return best;
}

void QpSolver::Impl::basis_swap(Index row, Index entering, const Eigen::VectorXd& w) {
  const Index leaving = head_[row];
  bf_.replace(row, w);
  head_[row] = entering;
  pos_[leaving] = -1;
  pos_[entering] = row;
  kind_[entering] = Kind::Basic;
  maybe_refactor();
}

QpStatus QpSolver::Impl::primal(bool phase1) {
  const double harris = 0.5 * opt_.feas_tol;
  for (;;) {
    if (iters_ >= cap_) return QpStatus::IterLimit;
    const Eigen::VectorXd g = gradient();
    Eigen::VectorXd gB(m_);
    for (Index r = 0; r < m_; ++r) gB[r] = g[head_[r]];
    const Eigen::VectorXd pi = bf_.btran(gB);
    const Eigen::VectorXd d = reduced_costs(g, pi);

    const Index ns0 = static_cast<Index>(S_.size());
    Eigen::VectorXd dS(ns0);
    for (Index k = 0; k < ns0; ++k) dS[k] = d[S_[k]];

    Index enter = -1;  // zero-curvature entering variable (not in S)
    double dir = 0.0;
    Eigen::VectorXd w_enter;
    Eigen::VectorXd pS;
    double alpha_max = 1.0;

    if (ns0 > 0 && dS.cwiseAbs().maxCoeff() > dtol_) {
      pS = -chol_solve(dS);
    } else {
      const Index j = price(d);
      if (j < 0) return QpStatus::Optimal;
      w_enter = bf_.ftran(column(j));
      if (sigma_ > 0 && j < n_ && try_append(j, w_enter)) {
        Eigen::VectorXd dS1(ns0 + 1);
        dS1.head(ns0) = dS;
        dS1[ns0] = d[j];
        pS = -chol_solve(dS1);
      } else {
        enter = j;
        dir = d[j] < 0 ? 1.0 : -1.0;
        alpha_max = kInf;
        if (ns0 > 0) {
          Eigen::VectorXd mcol;
          double hjj;
          curvature_column(j, w_enter, mcol, hjj);
          pS = -dir * chol_solve(mcol);
        } else {
          pS.resize(0);
        }
      }
    }

    const Index ns = static_cast<Index>(S_.size());
    Eigen::VectorXd pB = Eigen::VectorXd::Zero(m_);
    if (ns > 0 && m_ > 0) pB.noalias() = -W_ * pS;
    if (enter >= 0) pB -= dir * w_enter;

    // Harris two-pass ratio test over basics, superbasics and the entering variable.
    double pmax = 0.0;
    if (ns > 0) pmax = pS.cwiseAbs().maxCoeff();
    if (m_ > 0) pmax = std::max(pmax, pB.cwiseAbs().maxCoeff());
    if (enter >= 0) pmax = std::max(pmax, 1.0);
    const double ptol = opt_.pivot_tol * std::max(1.0, pmax);

    auto for_each_move = [&](auto&& fn) {
      for (Index r = 0; r < m_; ++r) fn(head_[r], pB[r]);
      for (Index k = 0; k < ns; ++k) fn(S_[k], pS[k]);
      if (enter >= 0) fn(enter, dir);
    };
    double relaxed = alpha_max;
    for_each_move([&](Index j, double pj) {
      if (std::abs(pj) <= ptol) return;
      const double room = pj > 0 ? up_[j] - x_[j] : x_[j] - lo_[j];
      if (std::isinf(room)) return;
      relaxed = std::min(relaxed, (std::max(room, 0.0) + harris) / std::abs(pj));
    });
    Index block = -1;
    double alpha = alpha_max;
    double block_p = 0.0;
    for_each_move([&](Index j, double pj) {
      if (std::abs(pj) <= ptol) return;
      const double room = pj > 0 ? up_[j] - x_[j] : x_[j] - lo_[j];
      if (std::isinf(room)) return;
      const double a = std::max(room, 0.0) / std::abs(pj);
      if (a > relaxed || a > alpha_max) return;
      const bool better = block < 0 || (bland_ ? j < block : std::abs(pj) > std::abs(block_p));
      if (better) {
        block = j;
        block_p = pj;
        alpha = a;
      }
    });
    if (block < 0 && std::isinf(alpha)) throw std::runtime_error("solve_qp: unbounded direction");

    // Take the step.
    for (Index r = 0; r < m_; ++r) x_[head_[r]] += alpha * pB[r];
    for (Index k = 0; k < ns; ++k) x_[S_[k]] += alpha * pS[k];
    if (enter >= 0) x_[enter] += alpha * dir;
    ++iters_;
    if (phase1) ++phase1_iters_;
    if (alpha * pmax <= 1e-14) {
      if (++degenerate_run_ >= opt_.degenerate_limit) bland_ = true;
    } else {
      degenerate_run_ = 0;
      bland_ = false;
    }

    if (block >= 0) {
      const bool to_upper = block_p > 0;
      x_[block] = to_upper ? up_[block] : lo_[block];
      const Kind at = to_upper ? Kind::Upper : Kind::Lower;
      if (block == enter) {
        kind_[block] = at;
      } else if (spos_[block] >= 0) {
        remove_super(spos_[block]);
        kind_[block] = at;
        if (enter >= 0) {
          if (x_[enter] == lo_[enter]) kind_[enter] = Kind::Lower;
          else if (x_[enter] == up_[enter]) kind_[enter] = Kind::Upper;
          else if (!(sigma_ > 0 && enter < n_ && try_append(enter, w_enter))) kind_[enter] = Kind::Free;
        }
      } else {
        const Index row = pos_[block];
        // Replacement column: the superbasic (or entering variable) with the largest pivot in this row.
        Index q = -1;
        double big = 0.0;
        for (Index k = 0; k < ns; ++k) {
          if (std::abs(W_(row, k)) > big) {
            big = std::abs(W_(row, k));
            q = S_[k];
          }
        }
        if (enter >= 0 && std::abs(w_enter[row]) >= big) {
          big = std::abs(w_enter[row]);
          q = enter;
        }
        if (q < 0) throw std::runtime_error("solve_qp: no pivot for leaving basic variable");
        const Eigen::VectorXd wq = q == enter ? w_enter : Eigen::VectorXd(W_.col(spos_[q]));
        if (spos_[q] >= 0) {
          spos_[q] = -1;
          S_.erase(std::find(S_.begin(), S_.end(), q));
        }
        basis_swap(row, q, wq);
        kind_[block] = at;
        if (enter >= 0 && enter != q) {
          if (x_[enter] == lo_[enter]) kind_[enter] = Kind::Lower;
          else if (x_[enter] == up_[enter]) kind_[enter] = Kind::Upper;
          else {
            kind_[enter] = Kind::Super;
            S_.push_back(enter);
          }
        }
        rebuild_reduced();
      }
    } else if (enter >= 0) {
      kind_[enter] = Kind::Free;
    }
    compute_basics();
    if (opt_.record_objective && !phase1) trace_.push_back(p_->objective(x_.head(n_)));
  }
}

QpStatus QpSolver::Impl::phase1_from_current() {
  // Structurals keep their (bound-feasible) values; logicals absorb the residual.
  for (Index j : S_) spos_[j] = -1;
  S_.clear();
  W_.resize(m_, 0);
  M_.resize(0, 0);
  L_.resize(0, 0);
  for (Index j = 0; j < n_; ++j) {
    x_[j] = std::clamp(x_[j], lo_[j], up_[j]);
    if (x_[j] == lo_[j]) kind_[j] = Kind::Lower;
    else if (x_[j] == up_[j]) kind_[j] = Kind::Upper;
    else kind_[j] = Kind::Free;
  }
  crash({});
  const Eigen::VectorXd s = p_->poly.b() - p_->poly.A() * x_.head(n_);
  cost_.setZero();
  for (Index i = 0; i < m_; ++i) {
    x_[n_ + i] = s[i];
    if (s[i] >= 0) {
      lo_[n_ + i] = 0.0;
      up_[n_ + i] = kInf;
      cost_[n_ + i] = 1.0;
    } else {
      lo_[n_ + i] = -kInf;
      up_[n_ + i] = 0.0;
      cost_[n_ + i] = -1.0;
    }
  }
  sigma_ = 0.0;
  phase1_ = true;
  dtol_ = opt_.opt_tol * 2.0;
  const QpStatus st = primal(true);
  if (st != QpStatus::Optimal) return st;

  const double scale = 1.0 + (m_ > 0 ? p_->poly.b().cwiseAbs().maxCoeff() : 0.0);
  double infeas = 0.0;
  for (Index i = 0; i < m_; ++i) infeas = std::max(infeas, std::abs(x_[n_ + i]));
  set_phase2_objective();
  for (Index i = 0; i < m_; ++i) {
    const Index j = n_ + i;
    if (pos_[j] < 0) {
      x_[j] = 0.0;
      kind_[j] = Kind::Lower;
    }
  }
  if (infeas > opt_.feas_tol * scale) return QpStatus::Infeasible;
  compute_basics();
  return QpStatus::Optimal;
}

QpStatus QpSolver::Impl::run_primal_start(const WorkingBasis* warm) {
  set_phase2_objective();
  bool feasible = false;
  if (warm) {
    for (Index j = 0; j < n_; ++j) x_[j] = std::clamp(warm->values[j], lo_[j], up_[j]);
    for (Index j = 0; j < n_; ++j) {
      if (warm->status[j] == VarStatus::AtLower) x_[j] = lo_[j];
      else if (warm->status[j] == VarStatus::AtUpper) x_[j] = up_[j];
    }
    crash(warm->head);
    for (Index j = 0; j < n_; ++j) {
      if (pos_[j] >= 0) continue;
      if (warm->status[j] == VarStatus::Basic && x_[j] > lo_[j] && x_[j] < up_[j]) kind_[j] = Kind::Free;
      else if (x_[j] == up_[j] && x_[j] != lo_[j]) kind_[j] = Kind::Upper;
      else if (x_[j] == lo_[j]) kind_[j] = Kind::Lower;
      else kind_[j] = Kind::Free;
    }
    for (Index i = 0; i < m_; ++i)
      if (pos_[n_ + i] < 0) {
        x_[n_ + i] = 0.0;
        kind_[n_ + i] = Kind::Lower;
      }
    compute_basics();
    feasible = true;
    for (Index j : head_)
      if (violation(j) > opt_.feas_tol) feasible = false;
    if (!feasible) repaired_ = true;
  } else {
    x_.head(n_) = lo_.head(n_);
  }
  if (!feasible) {
    const QpStatus st = phase1_from_current();
    if (st != QpStatus::Optimal) return st;
  }
  install_superbasics();
  return primal(false);
}

QpStatus QpSolver::Impl::run_dual_start(const WorkingBasis& warm) {
  set_phase2_objective();
  if (sigma_ <= 0) throw DualFallback{};
  x_.head(n_) = warm.values;
  for (Index j = 0; j < n_; ++j) {
    if (warm.status[j] == VarStatus::AtLower) x_[j] = lo_[j];
    else if (warm.status[j] == VarStatus::AtUpper) x_[j] = up_[j];
  }
  crash(warm.head);
  for (Index j = 0; j < n_; ++j) {
    if (pos_[j] >= 0) continue;
    if (warm.status[j] == VarStatus::Basic) kind_[j] = Kind::Free;
    else kind_[j] = x_[j] == up_[j] && x_[j] != lo_[j] ? Kind::Upper : Kind::Lower;
  }
  for (Index i = 0; i < m_; ++i)
    if (pos_[n_ + i] < 0) {
      x_[n_ + i] = 0.0;
      kind_[n_ + i] = Kind::Lower;
    }
  compute_basics();
  install_superbasics();
  for (Index j = 0; j < n_; ++j)
    if (kind_[j] == Kind::Free) throw DualFallback{};

  // Move to the minimizer on the current working set, ignoring bounds of free variables.
  {
    const Eigen::VectorXd g = gradient();
    Eigen::VectorXd gB(m_);
    for (Index r = 0; r < m_; ++r) gB[r] = g[head_[r]];
    const Eigen::VectorXd d = reduced_costs(g, bf_.btran(gB));
    const Index ns = static_cast<Index>(S_.size());
    Eigen::VectorXd dS(ns);
    for (Index k = 0; k < ns; ++k) dS[k] = d[S_[k]];
    if (ns > 0 && dS.cwiseAbs().maxCoeff() > dtol_) {
      const Eigen::VectorXd pS = -chol_solve(dS);
      for (Index k = 0; k < ns; ++k) x_[S_[k]] += pS[k];
      compute_basics();
      ++iters_;
      ++dual_iters_;
    }
  }
  // The working set must be dual feasible for the new problem.
  {
    const Eigen::VectorXd g = gradient();
    Eigen::VectorXd gB(m_);
    for (Index r = 0; r < m_; ++r) gB[r] = g[head_[r]];
    const Eigen::VectorXd d = reduced_costs(g, bf_.btran(gB));
    const double tol = 1e-6 * (1.0 + g.head(n_).cwiseAbs().maxCoeff());
    for (Index j = 0; j < N_; ++j) {
      if (pos_[j] >= 0 || spos_[j] >= 0 || is_fixed(j)) continue;
      if ((kind_[j] == Kind::Lower && d[j] < -tol) || (kind_[j] == Kind::Upper && d[j] > tol))
        throw DualFallback{};
    }
  }
  const QpStatus st = dual_loop();
  if (st != QpStatus::Optimal) return st;
  compute_basics();
  return primal(false);
}

QpStatus QpSolver::Impl::dual_loop() {
  const double ftol = opt_.feas_tol;
  const Index dual_cap = dual_iters_ + 4 * (n_ + m_) + 20;
  for (;;) {
    if (iters_ >= cap_) return QpStatus::IterLimit;
    if (dual_iters_ >= dual_cap) throw DualFallback{};
    // Most violated superbasic, else most violated basic. A basic target is
    // first exchanged into the superbasic set, so it is picked up next round.
    Index target = -1;
    double worst = ftol;
    for (Index j : S_)
      if (violation(j) > worst) {
        worst = violation(j);
        target = j;
      }
    if (target < 0)
      for (Index j : head_)
        if (violation(j) > worst) {
          worst = violation(j);
          target = j;
        }
    if (target < 0) return QpStatus::Optimal;
    const bool to_upper = x_[target] > up_[target];
    const double bound = to_upper ? up_[target] : lo_[target];
    ++iters_;
    ++dual_iters_;

    const Eigen::VectorXd g = gradient();
    Eigen::VectorXd gB(m_);
    for (Index r = 0; r < m_; ++r) gB[r] = g[head_[r]];
    const Eigen::VectorXd d = reduced_costs(g, bf_.btran(gB));

    if (pos_[target] >= 0) {
      const Index row = pos_[target];
      const Index ns = static_cast<Index>(S_.size());
      Index q = -1;
      double big = 0.0;
      for (Index k = 0; k < ns; ++k)
        if (std::abs(W_(row, k)) > big) {
          big = std::abs(W_(row, k));
          q = k;
        }
      if (q >= 0 && big > 1e-9) {
        // Exchange with a superbasic so the target can be moved directly.
        const Index qv = S_[q];
        const Eigen::VectorXd wq = W_.col(q);
        S_[q] = target;
        spos_[qv] = -1;
        spos_[target] = q;
        basis_swap(row, qv, wq);
        kind_[target] = Kind::Super;
        rebuild_reduced();
        if (spos_[target] < 0) throw DualFallback{};
        continue;
      }
      // No superbasic reaches this row: dual simplex ratio test over the nonbasics.
      Eigen::VectorXd er = Eigen::VectorXd::Zero(m_);
      er[row] = 1.0;
      const Eigen::VectorXd rho = bf_.btran(er);
      const double sgn = bound > x_[target] ? 1.0 : -1.0;
      const double atol = 1e-9 * std::max(1.0, rho.cwiseAbs().maxCoeff());
      Index enter = -1;
      double best_ratio = kInf, best_alpha = 0.0;
      for (Index j = 0; j < N_; ++j) {
        if (pos_[j] >= 0 || spos_[j] >= 0 || is_fixed(j)) continue;
        const double a = col_dot(j, rho);
        if (std::abs(a) <= atol) continue;
        bool helps = false;
        if (kind_[j] == Kind::Lower) helps = a * sgn < 0;
        else if (kind_[j] == Kind::Upper) helps = a * sgn > 0;
        else if (kind_[j] == Kind::Free) helps = true;
        if (!helps) continue;
        const double ratio = std::abs(d[j]) / std::abs(a);
        if (ratio < best_ratio || (ratio == best_ratio && std::abs(a) > best_alpha)) {
          best_ratio = ratio;
          best_alpha = std::abs(a);
          enter = j;
        }
      }
      if (enter < 0) return QpStatus::Infeasible;
      basis_swap(row, enter, bf_.ftran(column(enter)));
      kind_[target] = Kind::Super;
      S_.push_back(target);
      rebuild_reduced();
      if (spos_[target] < 0) {
        x_[target] = bound;
        kind_[target] = to_upper ? Kind::Upper : Kind::Lower;
        compute_basics();
      }
      continue;
    }

    // Target is superbasic: follow the working-set minimizer as the target moves to its bound.
    const Index si = spos_[target];
    const Index ns = static_cast<Index>(S_.size());
    Eigen::VectorXd ei = Eigen::VectorXd::Zero(ns);
    ei[si] = 1.0;
    const Eigen::VectorXd y = chol_solve(ei);
    const Eigen::VectorXd pS = y / y[si];
    const Eigen::VectorXd pB = m_ > 0 ? Eigen::VectorXd(-W_ * pS) : Eigen::VectorXd(0);
    const double delta = bound - x_[target];
    Eigen::VectorXd u = Eigen::VectorXd::Zero(N_);
    for (Index k = 0; k < ns; ++k) u[S_[k]] = pS[k];
    for (Index r = 0; r < m_; ++r) u[head_[r]] = pB[r];
    const Eigen::VectorXd hu = hessian_times(u);
    Eigen::VectorXd huB(m_);
    for (Index r = 0; r < m_; ++r) huB[r] = hu[head_[r]];
    const Eigen::VectorXd dpi = bf_.btran(huB);

    double tau = 1.0;
    Index release = -1;
    double release_rate = 0.0;
    const double rtol = 1e-12 * (1.0 + hu.cwiseAbs().maxCoeff()) * std::abs(delta);
    for (Index j = 0; j < N_; ++j) {
      if (pos_[j] >= 0 || spos_[j] >= 0 || is_fixed(j)) continue;
      const double rate = delta * (hu[j] - col_dot(j, dpi));
      double tj = kInf;
      if (kind_[j] == Kind::Lower && rate < -rtol) tj = std::max(d[j], 0.0) / -rate;
      else if (kind_[j] == Kind::Upper && rate > rtol) tj = std::max(-d[j], 0.0) / rate;
      else if (kind_[j] == Kind::Free && std::abs(rate) > rtol) tj = 0.0;
      if (tj < tau || (tj == tau && release >= 0 && std::abs(rate) > std::abs(release_rate))) {
        tau = tj;
        release = j;
        release_rate = rate;
      }
    }
    for (Index k = 0; k < ns; ++k) x_[S_[k]] += tau * delta * pS[k];
    for (Index r = 0; r < m_; ++r) x_[head_[r]] += tau * delta * pB[r];
    if (release >= 0 && tau < 1.0) {
      if (!try_append(release, bf_.ftran(column(release)))) throw DualFallback{};
    } else {
      x_[target] = bound;
      remove_super(si);
      kind_[target] = to_upper ? Kind::Upper : Kind::Lower;
    }
    compute_basics();
  }
}

QpSolution QpSolver::Impl::finish(QpStatus status) {
  QpSolution sol;
  sol.status = status;
  if (status != QpStatus::Infeasible) compute_basics();
  sol.x = x_.head(n_);
  sol.lambda = Eigen::VectorXd::Zero(m_);
  sol.mu_lower = Eigen::VectorXd::Zero(n_);
  sol.mu_upper = Eigen::VectorXd::Zero(n_);
  if (!phase1_) {
    const Eigen::VectorXd g = gradient();
    Eigen::VectorXd gB(m_);
    for (Index r = 0; r < m_; ++r) gB[r] = g[head_[r]];
    sol.lambda = bf_.btran(gB);
    const Eigen::VectorXd d = reduced_costs(g, sol.lambda);
    for (Index j = 0; j < n_; ++j) {
      if (pos_[j] >= 0 || spos_[j] >= 0) continue;
      if (is_fixed(j)) {
        if (d[j] >= 0) sol.mu_lower[j] = d[j];
        else sol.mu_upper[j] = -d[j];
      } else if (kind_[j] == Kind::Lower) {
        sol.mu_lower[j] = std::max(d[j], 0.0);
      } else if (kind_[j] == Kind::Upper) {
        sol.mu_upper[j] = std::max(-d[j], 0.0);
      }
    }
  }
  sol.objective = p_->objective(sol.x);
  sol.basis.status.resize(n_);
  for (Index j = 0; j < n_; ++j) {
    switch (kind_[j]) {
      case Kind::Lower: sol.basis.status[j] = VarStatus::AtLower; break;
      case Kind::Upper: sol.basis.status[j] = VarStatus::AtUpper; break;
      default: sol.basis.status[j] = VarStatus::Basic; break;
    }
  }
  sol.basis.head = head_;
  sol.basis.values = sol.x;
  sol.iterations = iters_;
  sol.phase1_iterations = phase1_iters_;
  sol.dual_iterations = dual_iters_;
  sol.repaired = repaired_;
  sol.objective_trace = std::move(trace_);
  return sol;
}

QpSolution QpSolver::Impl::solve(const QpProblemd& p, const WorkingBasis* warm, StartMode mode) {
  load(p);
  if (warm && warm->empty()) warm = nullptr;
  if (warm && (static_cast<Index>(warm->status.size()) != n_ || warm->values.size() != n_))
    throw std::invalid_argument("solve_qp: warm basis does not match the problem dimensions");
  QpStatus st;
  if (warm && mode == StartMode::DualStart) {
    try {
      st = run_dual_start(*warm);
    } catch (const DualFallback&) {
      const Index spent = iters_;
      const Index spent_dual = dual_iters_;
      load(p);
      iters_ = spent;
      dual_iters_ = spent_dual;
      repaired_ = true;
      WorkingBasis projected = *warm;
      st = run_primal_start(&projected);
      repaired_ = true;
    }
  } else {
    st = run_primal_start(warm);
  }
  QpSolution sol = finish(st);
  sol.mode = warm ? mode : StartMode::PrimalStart;
  sol.warm = warm != nullptr;
  return sol;
}

// ---------------------------------------------------------------------------

QpSolver::QpSolver(QpOptions options) : options_(options), impl_(std::make_unique<Impl>(options)) {}
QpSolver::~QpSolver() = default;
QpSolver::QpSolver(QpSolver&&) noexcept = default;
QpSolver& QpSolver::operator=(QpSolver&&) noexcept = default;

QpSolution QpSolver::solve(const QpProblemd& problem, const WorkingBasis* warm, StartMode mode) {
  return impl_->solve(problem, warm, mode);
}

QpSolution solve_qp(const QpProblemd& problem, const WorkingBasis* warm, StartMode mode,
                    const QpOptions& options) {
  QpSolver solver(options);
  return solver.solve(problem, warm, mode);
}

QpSolution reoptimize_after_bound_change(const QpSolution& previous, const QpProblemd& problem,
                                         const QpOptions& options) {
  return solve_qp(problem, &previous.basis, StartMode::DualStart, options);
}

double qp_stationarity(const QpProblemd& problem, const QpSolution& sol) {
  Eigen::VectorXd r = problem.linear - problem.poly.A().transpose() * sol.lambda - sol.mu_lower + sol.mu_upper;
  if (problem.sigma > 0) r += problem.sigma * problem.quad.apply_vector(sol.x);
  return r.size() == 0 ? 0.0 : r.cwiseAbs().maxCoeff();
}

}  // namespace perspqp
