#pragma once

#include <optional>
#include <string>

#include "dense_stein.hpp"
#include "linalg.hpp"
#include "system.hpp"
#include "types.hpp"

namespace dtmor {

/// Hankel singular values, nonincreasing.
struct HankelSpectrum {
  Vec sigma;
  Horizon tau;

  Index size() const { return sigma.size(); }
};

/// Exactly one of a fixed order or an HSV-tail tolerance.
struct OrderSpec {
  std::optional<Index> order;
  std::optional<double> hsv_tol;

  static OrderSpec fixed(Index r) { return OrderSpec{r, std::nullopt}; }
  static OrderSpec tolerance(double eps) { return OrderSpec{std::nullopt, eps}; }

  void validate() const {
    if (order.has_value() == hsv_tol.has_value()) throw ConfigError("give exactly one of order and hsv tolerance");
    if (order && *order < 1) throw ConfigError("order must be >= 1");
    if (hsv_tol && !(*hsv_tol > 0.0)) throw ConfigError("hsv tolerance must be positive");
  }
};

/// 2 * sum_{k>r} sigma_k (0 when r >= length).
inline double hsv_tail_bound(const Vec& sigma, Index r) {
  if (r < 0) throw DimensionError("hsv_tail_bound: negative order");
  if (r >= sigma.size()) return 0.0;
  return 2.0 * sigma.tail(sigma.size() - r).sum();
}

inline double hsv_tail_bound(const HankelSpectrum& s, Index r) { return hsv_tail_bound(s.sigma, r); }

/// Smallest r >= 1 with 2 * sum_{k>r} sigma_k <= eps.
inline Index adaptive_order(const Vec& sigma, double eps) {
  if (sigma.size() == 0) throw DimensionError("adaptive_order: empty spectrum");
  for (Index r = 1; r < sigma.size(); ++r)
    if (hsv_tail_bound(sigma, r) <= eps) return r;
  return sigma.size();
}

struct ReducedOrderModel {
  DiscreteLTISystem sys;  // (Ahat, Bhat, Chat), no mass matrix
  Mat A, B, C;            // dense copies
  Mat F, G;               // Ahat^tau Bhat and Chat Ahat^tau (zero for tau = inf)
  Mat V, W;               // projection bases, W^T V = I_r
  Horizon tau;
  std::string method;     // "BT" or "TLBT"
  double hsv_tail = 0.0;

  Index order() const { return A.rows(); }
};

namespace detail {

inline ReducedOrderModel make_rom(Mat A, Mat B, Mat C, Horizon tau) {
  ReducedOrderModel rom;
  rom.tau = tau;
  rom.method = tau.is_finite() ? "TLBT" : "BT";
  if (tau.is_finite()) {
    rom.F = power_times(A, tau.steps(), B);
    rom.G = power_times(A.transpose(), tau.steps(), C.transpose()).transpose();
  } else {
    rom.F = Mat::Zero(B.rows(), B.cols());
    rom.G = Mat::Zero(C.rows(), C.cols());
  }
  rom.sys = DiscreteLTISystem(to_sparse(A), B, C);
  rom.sys.kind = "rom-" + rom.method;
  rom.A = std::move(A);
  rom.B = std::move(B);
  rom.C = std::move(C);
  return rom;
}

/// Thin SVD of ZQ^T ZP with descending values, sign-fixed left vectors and
/// the kernel below 1e-12 * sigma_max removed.
struct BalancingSvd {
  Mat U, V;
  Vec sigma;
};

inline BalancingSvd balancing_svd(const Mat& ZP, const Mat& ZQ) {
  if (ZP.rows() != ZQ.rows()) throw DimensionError("Gramian factors have different row counts");
  if (ZP.cols() == 0 || ZQ.cols() == 0 || ZP.norm() == 0.0 || ZQ.norm() == 0.0)
    throw SolvabilityError("zero Gramian factor");
  Mat X = ZQ.transpose() * ZP;
  Eigen::BDCSVD<Mat> svd(X, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vec& s = svd.singularValues();
  Index q = 0;
  const double smax = s.size() ? s(0) : 0.0;
  while (q < s.size() && s(q) > 1e-12 * smax) ++q;
  if (q == 0) throw SolvabilityError("Gramian product is zero");
  BalancingSvd out;
  out.U = svd.matrixU().leftCols(q);
  out.V = svd.matrixV().leftCols(q);
  out.sigma = s.head(q);
  for (Index j = 0; j < q; ++j) {
    Index i = 0;
    const double cmax = out.U.col(j).cwiseAbs().maxCoeff();
    while (i < out.U.rows() && std::abs(out.U(i, j)) <= 1e-12 * cmax) ++i;
    if (i < out.U.rows() && out.U(i, j) < 0.0) {
      out.U.col(j) *= -1.0;
      out.V.col(j) *= -1.0;
    }
  }
  return out;
}

}  // namespace detail

/// Square-root balanced truncation from Gramian factors of the standard
/// form (P ~ ZP ZP^T, Q ~ ZQ ZQ^T).
inline std::pair<ReducedOrderModel, HankelSpectrum> square_root_truncate(const Mat& ZP, const Mat& ZQ,
                                                                         const DiscreteLTISystem& sys,
                                                                         const OrderSpec& order, Horizon tau) {
  order.validate();
  if (ZP.rows() != sys.n() || ZQ.rows() != sys.n()) throw DimensionError("factor rows must equal the system order");
  detail::BalancingSvd svd = detail::balancing_svd(ZP, ZQ);
  const Index q = svd.sigma.size();
  Index r = 0;
  if (order.order) {
    r = *order.order;
    if (r > q)
      throw DimensionError("requested order " + std::to_string(r) + " exceeds numerical rank " + std::to_string(q));
  } else {
    r = adaptive_order(svd.sigma, *order.hsv_tol);
  }
  const Vec s = svd.sigma.head(r).cwiseSqrt().cwiseInverse();
  Mat V = ZP * svd.V.leftCols(r) * s.asDiagonal();
  Mat W = ZQ * svd.U.leftCols(r) * s.asDiagonal();
  Mat Ah = W.transpose() * sys.apply(V);
  Mat Bh = W.transpose() * sys.Bbar();
  Mat Ch = sys.C() * V;
  ReducedOrderModel rom = detail::make_rom(std::move(Ah), std::move(Bh), std::move(Ch), tau);
  rom.V = std::move(V);
  rom.W = std::move(W);
  rom.hsv_tail = hsv_tail_bound(svd.sigma, r);
  return {std::move(rom), HankelSpectrum{svd.sigma, tau}};
}

/// Blocks of a balanced realization split after the first r states.
struct Partition {
  Index r = 0;
  Mat A11, A12, A21, A22, B1, B2, C1, C2, F1, F2, G1, G2;
  Vec sigma1, sigma2;

  Mat Acol2() const {  // A_{:2} = [A12; A22]
    Mat X(A12.rows() + A22.rows(), A12.cols());
    X << A12, A22;
    return X;
  }
  Mat Arow2() const {  // A_{2:} = [A21, A22]
    Mat X(A21.rows(), A21.cols() + A22.cols());
    X << A21, A22;
    return X;
  }
};

/// Full balanced realization of the standard form: T P T^T = T^{-T} Q T^{-1}
/// = diag(sigma). States outside the kernel-removal threshold are dropped.
struct BalancedRealization {
  Mat T, Tinv;  // q x n and n x q with T Tinv = I_q
  Mat A, B, C;
  Mat F, G;     // A^tau B and C A^tau in balanced coordinates
  Vec sigma;
  Horizon tau;
  double diag_error_p = 0.0;  // ||T P T^T - Sigma|| / ||Sigma||
  double diag_error_q = 0.0;

  Index order() const { return A.rows(); }

  Partition partition(Index r) const {
    const Index q = order();
    if (r < 0 || r > q) throw DimensionError("partition: order out of range");
    const Index s = q - r;
    Partition p;
    p.r = r;
    p.A11 = A.topLeftCorner(r, r);
    p.A12 = A.topRightCorner(r, s);
    p.A21 = A.bottomLeftCorner(s, r);
    p.A22 = A.bottomRightCorner(s, s);
    p.B1 = B.topRows(r);
    p.B2 = B.bottomRows(s);
    p.C1 = C.leftCols(r);
    p.C2 = C.rightCols(s);
    p.F1 = F.topRows(r);
    p.F2 = F.bottomRows(s);
    p.G1 = G.leftCols(r);
    p.G2 = G.rightCols(s);
    p.sigma1 = sigma.head(r);
    p.sigma2 = sigma.tail(s);
    return p;
  }

  /// The balanced system itself (order q).
  DiscreteLTISystem system() const { return DiscreteLTISystem(to_sparse(A), B, C); }

  /// Truncated model (A11, B1, C1) with its own TL terms.
  ReducedOrderModel truncate(Index r) const {
    if (r < 1 || r > order()) throw DimensionError("truncate: order out of range");
    ReducedOrderModel rom = detail::make_rom(A.topLeftCorner(r, r), B.topRows(r), C.leftCols(r), tau);
    rom.V = Tinv.leftCols(r);
    rom.W = T.topRows(r).transpose();
    rom.hsv_tail = hsv_tail_bound(sigma, r);
    return rom;
  }
};

/// Dense balancing from Gramians P, Q of the standard form.
inline BalancedRealization balance_dense(const DiscreteLTISystem& sys, const Mat& P, const Mat& Q, Horizon tau) {
  require_dense(sys.n(), "balance_dense");
  const Index n = sys.n();
  if (P.rows() != n || P.cols() != n || Q.rows() != n || Q.cols() != n)
    throw DimensionError("balance_dense: Gramian sizes do not match the system");
  const Mat ZP = psd_factor(P), ZQ = psd_factor(Q);
  detail::BalancingSvd svd = detail::balancing_svd(ZP, ZQ);
  const Vec is = svd.sigma.cwiseSqrt().cwiseInverse();

  BalancedRealization bal;
  bal.tau = tau;
  bal.sigma = svd.sigma;
  bal.T = is.asDiagonal() * svd.U.transpose() * ZQ.transpose();
  bal.Tinv = ZP * svd.V * is.asDiagonal();
  const Mat Abar = sys.dense_Abar();
  bal.A = bal.T * Abar * bal.Tinv;
  bal.B = bal.T * sys.Bbar();
  bal.C = sys.C() * bal.Tinv;
  if (tau.is_finite()) {
    bal.F = bal.T * power_times(Abar, tau.steps(), sys.Bbar());
    bal.G = power_times(Abar.transpose(), tau.steps(), sys.C().transpose()).transpose() * bal.Tinv;
  } else {
    bal.F = Mat::Zero(bal.B.rows(), bal.B.cols());
    bal.G = Mat::Zero(bal.C.rows(), bal.C.cols());
  }
  const Mat S = bal.sigma.asDiagonal();
  const double sn = S.norm();
  bal.diag_error_p = (bal.T * P * bal.T.transpose() - S).norm() / sn;
  bal.diag_error_q = (bal.Tinv.transpose() * Q * bal.Tinv - S).norm() / sn;
  return bal;
}

/// Convenience: dense Gramians (TL or infinite) followed by dense balancing.
inline BalancedRealization balance_dense(const DiscreteLTISystem& sys, Horizon tau) {
  const DenseGramianPair P = tl_gramian_dense(sys, tau, Side::reach);
  const DenseGramianPair Q = tl_gramian_dense(sys, tau, Side::obs);
  return balance_dense(sys, P.gramian, Q.gramian, tau);
}

struct CertificateResult {
  bool holds = false;
  double q_min_eig = nan();   // lambda_min(A12 S2 A12^T + B1 B1^T - F1 F1^T)
  double q_norm = 0.0;
  Index reach_rank = 0;       // rank of the reachability matrix of (A11, Q^{1/2})
  Index order = 0;
  double rank_tol = 1e-10;
  double rho_a11 = nan();     // cross-check, not part of the verdict
};

/// Rank of [X, A X, A^2 X, ...] by an orthogonal staircase.
inline Index reachability_rank(const Mat& A, const Mat& X, double tol = 1e-10) {
  if (X.norm() == 0.0) return 0;
  Mat basis = orth(X, tol);
  Mat last = basis;
  while (basis.cols() < A.rows() && last.cols() > 0) {
    last = orthogonalize_block(basis, A * last, tol).block;
    Mat nb(basis.rows(), basis.cols() + last.cols());
    nb << basis, last;
    basis = std::move(nb);
  }
  return basis.cols();
}

/// Sufficient stability test for the truncated model (A11, B1, C1) of a
/// balanced time-limited realization.
inline CertificateResult stability_certificate(const BalancedRealization& bal, Index r) {
  const Partition p = bal.partition(r);
  CertificateResult out;
  out.order = r;
  if (r == 0) return out;
  Mat Qm = p.B1 * p.B1.transpose() - p.F1 * p.F1.transpose();
  if (p.A12.cols() > 0) Qm += p.A12 * p.sigma2.asDiagonal() * p.A12.transpose();
  Qm = symmetrize(Qm);
  Eigen::SelfAdjointEigenSolver<Mat> es(Qm);
  out.q_min_eig = es.eigenvalues().minCoeff();
  out.q_norm = es.eigenvalues().cwiseAbs().maxCoeff();
  out.rho_a11 = spectral_radius(p.A11);
  const bool psd = out.q_min_eig >= -out.rank_tol * out.q_norm;
  if (!psd || out.q_norm == 0.0) return out;
  out.reach_rank = reachability_rank(p.A11, psd_factor(Qm), out.rank_tol);
  out.holds = out.reach_rank == r;
  return out;
}

}  // namespace dtmor
