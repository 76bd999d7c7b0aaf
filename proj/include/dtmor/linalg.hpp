#pragma once

#include <memory>

#include "types.hpp"

namespace dtmor {

/// Owning wrapper around a sparse LU factorization that throws on failure
/// and supports solves with the factored matrix and its transpose.
template <typename Scalar>
class SparseFactor {
 public:
  using Sparse = Eigen::SparseMatrix<Scalar>;
  using Dense = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  SparseFactor() = default;

  explicit SparseFactor(const Sparse& A) { compute(A); }

  void compute(const Sparse& A) {
    if (A.rows() != A.cols()) throw DimensionError("factorization of a non-square matrix");
    lu_ = std::make_shared<Eigen::SparseLU<Sparse>>();
    Sparse Ac = A;
    Ac.makeCompressed();
    lu_->analyzePattern(Ac);
    lu_->factorize(Ac);
    if (lu_->info() != Eigen::Success)
      throw SolvabilityError("sparse LU failed: matrix is singular");
    // SparseLU accepts tiny pivots; reject factors that are singular in all
    // but name.
    if (!std::isfinite(std::real(lu_->logAbsDeterminant())))
      throw SolvabilityError("sparse LU failed: matrix is singular");
    n_ = A.rows();
  }

  Index size() const { return n_; }

  template <typename Rhs>
  Dense solve(const Rhs& X) const {
    Dense Xd = X;
    if (Xd.rows() != n_) throw DimensionError("sparse solve: rhs rows mismatch");
    Dense out = lu_->solve(Xd);
    return out;
  }

  template <typename Rhs>
  Dense solve_transpose(const Rhs& X) const {
    Dense Xd = X;
    if (Xd.rows() != n_) throw DimensionError("sparse solve: rhs rows mismatch");
    Dense out = lu_->transpose().solve(Xd);
    return out;
  }

 private:
  std::shared_ptr<Eigen::SparseLU<Sparse>> lu_;
  Index n_ = 0;
};

/// Result of extending an orthonormal basis by one block.
struct BlockOrth {
  Mat block;  // new orthonormal columns, orthogonal to the basis
  Mat h;      // basis coefficients (basis^T * input)
  Mat beta;   // input = basis*h + block*beta, up to deflated parts
};

/// Orthogonalize G against the orthonormal columns of Q by classical
/// Gram-Schmidt applied twice, then orthonormalize the remainder with a
/// pivoted QR. Remainder directions whose size falls below tol times the
/// norm of G are deflated.
inline BlockOrth orthogonalize_block(const Mat& Q, const Mat& G, double tol = 1e-10) {
  BlockOrth out;
  const Index c = G.cols();
  const double ref = G.norm();
  Mat R = G;
  out.h = Mat::Zero(Q.cols(), c);
  if (Q.cols() > 0) {
    for (int pass = 0; pass < 2; ++pass) {
      Mat coef = Q.transpose() * R;
      R.noalias() -= Q * coef;
      out.h += coef;
    }
  }
  if (c == 0 || ref == 0.0) {
    out.block.resize(G.rows(), 0);
    out.beta.resize(0, c);
    return out;
  }
  Eigen::ColPivHouseholderQR<Mat> qr(R);
  const Mat& QR = qr.matrixQR();
  Index rank = 0;
  const Index kmax = std::min<Index>(R.rows(), c);
  for (Index i = 0; i < kmax; ++i) {
    if (std::abs(QR(i, i)) > tol * ref) ++rank;
    else break;
  }
  Mat Qfull = qr.householderQ() * Mat::Identity(R.rows(), rank);
  Mat Rtop = QR.topRows(rank).template triangularView<Eigen::Upper>();
  out.block = Qfull;
  out.beta = Rtop * qr.colsPermutation().transpose();
  return out;
}

/// Orthonormal basis of range(G) with deflation relative to the norm of G.
inline Mat orth(const Mat& G, double tol = 1e-10) { return orthogonalize_block(Mat(G.rows(), 0), G, tol).block; }

/// Integer matrix power by repeated squaring.
inline Mat matrix_power(const Mat& A, long k) {
  if (k < 0) throw DimensionError("negative matrix power");
  Mat result = Mat::Identity(A.rows(), A.cols());
  Mat base = A;
  while (k > 0) {
    if (k & 1) result = result * base;
    k >>= 1;
    if (k > 0) base = base * base;
  }
  return result;
}

/// A^k * X by repeated squaring of A; cost is about log2(k) products.
inline Mat power_times(const Mat& A, long k, const Mat& X) {
  if (k < 0) throw DimensionError("negative matrix power");
  Mat result = X;
  Mat base = A;
  while (k > 0) {
    if (k & 1) result = base * result;
    k >>= 1;
    if (k > 0) base = base * base;
  }
  return result;
}

/// Square-root factor Z with X ~= Z Z^T for a symmetric PSD matrix. Negative
/// and relatively tiny eigenvalues are dropped.
inline Mat psd_factor(const Mat& X, double rel_tol = 0.0) {
  if (X.size() == 0) return Mat(X.rows(), 0);
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(X));
  const Vec& w = es.eigenvalues();
  const double wmax = std::max(0.0, w.maxCoeff());
  std::vector<Index> keep;
  for (Index i = w.size() - 1; i >= 0; --i)
    if (w(i) > rel_tol * wmax && w(i) > 0.0) keep.push_back(i);
  Mat Z(X.rows(), static_cast<Index>(keep.size()));
  for (std::size_t j = 0; j < keep.size(); ++j)
    Z.col(static_cast<Index>(j)) = es.eigenvectors().col(keep[j]) * std::sqrt(w(keep[j]));
  return Z;
}

inline SpMat to_sparse(const Mat& X) {
  SpMat S = X.sparseView(0.0, 0.0);  // keep every nonzero entry exactly
  S.makeCompressed();
  return S;
}

}  // namespace dtmor
