#pragma once

#include <Eigen/Dense>

#include <vector>

namespace perspqp::detail {

/// LU factorization of a square basis matrix with product-form column
/// replacements. Callers refactorize once update_count() or growth() passes
/// their limits.
class BasisFactor {
 public:
  /// Returns false when the matrix is numerically singular.
  bool factor(const Eigen::MatrixXd& B);

  /// Solves B y = rhs.
  Eigen::VectorXd ftran(Eigen::VectorXd rhs) const;
  /// Solves B' y = rhs.
  Eigen::VectorXd btran(Eigen::VectorXd rhs) const;
  /// Solves B Y = R column by column.
  Eigen::MatrixXd ftran(const Eigen::MatrixXd& R) const;

  /// Replaces column `pos` of B; `w` must be ftran(new column).
  void replace(Eigen::Index pos, const Eigen::VectorXd& w);

  Eigen::Index size() const { return size_; }
  int update_count() const { return static_cast<int>(etas_.size()); }
  double growth() const { return growth_; }

 private:
  struct Eta {
    Eigen::Index pos;
    Eigen::VectorXd w;
  };

  Eigen::Index size_ = 0;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
  std::vector<Eta> etas_;
  double growth_ = 1.0;
};

}  // namespace perspqp::detail
