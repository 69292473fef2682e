#include "basis_factor.hpp"

#include <algorithm>
#include <cmath>

namespace perspqp::detail {

bool BasisFactor::factor(const Eigen::MatrixXd& B) {
  size_ = B.rows();
  etas_.clear();
  growth_ = 1.0;
  if (size_ == 0) return true;
  lu_.compute(B);
  const double rc = lu_.rcond();
  return std::isfinite(rc) && rc > 1e-13;
}

Eigen::VectorXd BasisFactor::ftran(Eigen::VectorXd rhs) const {
  if (size_ == 0) return rhs;
  Eigen::VectorXd y = lu_.solve(rhs);
  // B_k = B_0 E_1 ... E_k, so B_k^{-1} = E_k^{-1} ... E_1^{-1} B_0^{-1}.
  for (const Eta& e : etas_) {
    const double yp = y[e.pos] / e.w[e.pos];
    y -= yp * e.w;
    y[e.pos] = yp;
  }
  return y;
}

Eigen::MatrixXd BasisFactor::ftran(const Eigen::MatrixXd& R) const {
  Eigen::MatrixXd out(R.rows(), R.cols());
  if (size_ == 0) return out;
  out = lu_.solve(R);
  for (const Eta& e : etas_) {
    Eigen::RowVectorXd yp = out.row(e.pos) / e.w[e.pos];
    out.noalias() -= e.w * yp;
    out.row(e.pos) = yp;
  }
  return out;
}

Eigen::VectorXd BasisFactor::btran(Eigen::VectorXd rhs) const {
  if (size_ == 0) return rhs;
  // B_k' = E_k' ... E_1' B_0'; peel the etas from the outside in.
  for (auto it = etas_.rbegin(); it != etas_.rend(); ++it) {
    const double wp = it->w[it->pos];
    const double rp = rhs[it->pos];
    rhs[it->pos] = 0.0;
    rhs[it->pos] = (rp - it->w.dot(rhs)) / wp;
  }
  return lu_.transpose().solve(rhs);
}

void BasisFactor::replace(Eigen::Index pos, const Eigen::VectorXd& w) {
  const double piv = std::abs(w[pos]);
  const double big = w.cwiseAbs().maxCoeff();
  growth_ *= std::max(1.0, big / piv);
  etas_.push_back({pos, w});
}

}  // namespace perspqp::detail
