#pragma once

#include <map>
#include <optional>
#include <utility>

#include "linalg.hpp"
#include "system.hpp"
#include "types.hpp"

namespace dtmor {

enum class SteinBackend {
  automatic,  // squared Smith, falling back to Schur when Smith diverges
  smith,
  schur,
};

namespace detail {

/// Squared Smith iteration for A X Ahat^T - X + W = 0. Returns nullopt when
/// the doubling does not contract (spectral radius product >= 1).
inline std::optional<Mat> squared_smith(const Mat& A, const Mat& Ahat, const Mat& W) {
  Mat X = W;
  Mat Ak = A;
  Mat Bk = Ahat;
  double prev_inc = std::numeric_limits<double>::infinity();
  for (int it = 0; it < 64; ++it) {
    Mat inc = Ak * X * Bk.transpose();
    const double inc_norm = inc.norm();
    X += inc;
    const double x_norm = X.norm();
    if (!std::isfinite(inc_norm) || !std::isfinite(x_norm)) return std::nullopt;
    if (inc_norm <= 1e-17 * x_norm || x_norm == 0.0) return X;
    // Past the transient, a non-contracting increment means divergence.
    if (it >= 24 && inc_norm >= prev_inc) return std::nullopt;
    prev_inc = inc_norm;
    Ak = Ak * Ak;
    Bk = Bk * Bk;
  }
  return std::nullopt;
}

/// Bartels-Stewart type solve of A X Ahat^T - X + W = 0 via complex Schur
/// forms of both coefficients.
inline Mat stein_schur(const Mat& A, const Mat& Ahat, const Mat& W) {
  const Index n = A.rows(), r = Ahat.rows();
  if (n == 0 || r == 0) return Mat::Zero(n, r);
  Eigen::ComplexSchur<Mat> s1(A), s2(Ahat);
  const CMat& T1 = s1.matrixT();
  const CMat& U1 = s1.matrixU();
  const CMat& T2 = s2.matrixT();
  const CMat& U2 = s2.matrixU();

  double gap = std::numeric_limits<double>::infinity();
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < r; ++j) gap = std::min(gap, std::abs(1.0 - T1(i, i) * T2(j, j)));
  if (gap < 1e-10)
    throw SolvabilityError("Stein equation not uniquely solvable: 1 - lambda*mu = " + std::to_string(gap));

  CMat V = U1.adjoint() * W.cast<Complex>() * U2.conjugate();
  CMat Y(n, r);
  CMat I = CMat::Identity(n, n);
  for (Index j = r - 1; j >= 0; --j) {
    CVec acc = CVec::Zero(n);
    for (Index k = j + 1; k < r; ++k) acc += T2(j, k) * Y.col(k);
    CVec rhs = -V.col(j) - T1 * acc;
    CMat K = T2(j, j) * T1 - I;
    Y.col(j) = K.triangularView<Eigen::Upper>().solve(rhs);
  }
  CMat X = U1 * Y * U2.transpose();
  return X.real();
}

}  // namespace detail

/// Solve A X Ahat^T - X + W = 0 for X (n x r).
inline Mat solve_stein_general(const Mat& A, const Mat& Ahat, const Mat& W,
                               SteinBackend backend = SteinBackend::automatic) {
  if (A.rows() != A.cols() || Ahat.rows() != Ahat.cols())
    throw DimensionError("Stein coefficients must be square");
  if (W.rows() != A.rows() || W.cols() != Ahat.rows()) throw DimensionError("Stein right-hand side has wrong shape");
  require_dense(std::max(A.rows(), Ahat.rows()), "solve_stein_general");
  if (backend == SteinBackend::schur) return detail::stein_schur(A, Ahat, W);
  if (auto X = detail::squared_smith(A, Ahat, W)) return *X;
  if (backend == SteinBackend::smith)
    throw SolvabilityError("Smith iteration diverged (spectral radius >= 1)");
  return detail::stein_schur(A, Ahat, W);
}

/// Solve A X A^T - X + W = 0. The result is symmetrized when W is symmetric.
inline Mat solve_stein_dense(const Mat& A, const Mat& W, SteinBackend backend = SteinBackend::automatic) {
  Mat X = solve_stein_general(A, A, W, backend);
  const double asym = (W - W.transpose()).norm();
  if (asym <= 1e-14 * std::max(1.0, W.norm())) X = symmetrize(X);
  return X;
}

/// A Gramian together with its time-limited term, both in standard form
/// (Abar = M^{-1}A, Bbar = M^{-1}B).
///   reach: gramian = P_tau, tl_term = Abar^tau Bbar          (n x m)
///   obs:   gramian = Q_tau, tl_term = G^T = (C Abar^tau)^T   (n x p)
/// For tau = infinity the tl_term is zero.
struct DenseGramianPair {
  Mat gramian;
  Mat tl_term;
  Horizon tau;
  Side side = Side::reach;

  Mat F() const { return tl_term; }
  Mat G() const { return tl_term.transpose(); }
};

/// Sum_{k<tau} A^k W A^k^T and A^tau by binary powering.
inline std::pair<Mat, Mat> tl_sum_doubling(const Mat& A, const Mat& W, long tau) {
  const Index n = A.rows();
  Mat S = Mat::Zero(n, n);
  Mat Pw = Mat::Identity(n, n);  // A^t
  int top = 0;
  while ((1L << (top + 1)) <= tau) ++top;
  for (int bit = top; bit >= 0; --bit) {
    // t -> 2t
    S += Pw * S * Pw.transpose();
    Pw = Pw * Pw;
    if ((tau >> bit) & 1L) {
      // t -> t + 1
      S = W + A * S * A.transpose();
      Pw = A * Pw;
    }
  }
  return {symmetrize(S), Pw};
}

/// Dense (time-limited) Gramian of a system. Finite horizons use binary
/// powering of the defining sum, which also covers unstable systems.
inline DenseGramianPair tl_gramian_dense(const DiscreteLTISystem& sys, Horizon tau, Side side,
                                         SteinBackend backend = SteinBackend::automatic) {
  require_dense(sys.n(), "tl_gramian_dense");
  Mat Abar = sys.dense_Abar();
  Mat A = side == Side::reach ? Abar : Mat(Abar.transpose());
  Mat Bf = side == Side::reach ? sys.Bbar() : Mat(sys.C().transpose());
  DenseGramianPair out;
  out.tau = tau;
  out.side = side;
  Mat W = Bf * Bf.transpose();
  if (tau.is_finite()) {
    auto [S, Pw] = tl_sum_doubling(A, W, tau.steps());
    out.gramian = std::move(S);
    out.tl_term = Pw * Bf;
  } else {
    if (spectral_radius(Abar) >= 1.0)
      throw SolvabilityError("infinite Gramian requested for an unstable system");
    out.gramian = solve_stein_dense(A, W, backend);
    out.tl_term = Mat::Zero(Bf.rows(), Bf.cols());
  }
  return out;
}

/// Cross Gramian between a full system and a (small, dense) reduced model.
///   reach: Abar Y Ahat^T - Y + Bbar Bhat^T - F Fhat^T = 0
///   obs:   Abar^T Z Ahat - Z + C^T Chat - G^T Ghat = 0
struct CrossGramian {
  Mat X;
  Horizon tau;
  Side side = Side::reach;
  bool direct_sum = false;  // solvability failed; computed from the finite sum
};

namespace detail {

/// Finite sum  Sum_{k<tau} op^k(L) R^T (Rop^T)^k  used as a fallback and oracle.
template <typename Op>
Mat cross_direct_sum(Op&& op, Mat L, const Mat& Ahat, Mat R, long tau) {
  Mat X = Mat::Zero(L.rows(), R.rows());
  for (long k = 0; k < tau; ++k) {
    X.noalias() += L * R.transpose();
    if (k + 1 < tau) {
      L = op(L);
      R = Ahat * R;
    }
  }
  return X;
}

}  // namespace detail

/// Solve the cross Stein/Sylvester equation with r sparse complex solves on
/// the full side (one per Schur diagonal entry of the reduced coefficient).
inline CrossGramian solve_cross_sylvester(const DiscreteLTISystem& sys, const DiscreteLTISystem& rom,
                                          Horizon tau, Side side) {
  if (side == Side::reach && sys.m() != rom.m()) throw DimensionError("cross Gramian: input counts differ");
  if (side == Side::obs && sys.p() != rom.p()) throw DimensionError("cross Gramian: output counts differ");
  require_dense(rom.n(), "solve_cross_sylvester (reduced side)");
  const Index n = sys.n(), r = rom.n();
  const Mat Ah = rom.dense_Abar();
  const bool reach = side == Side::reach;
  // Reduced-side coefficient Rc (X Rc^T form) and factors L, R with W = L R^T.
  const Mat Rc = reach ? Ah : Mat(Ah.transpose());
  const Mat L0 = reach ? sys.Bbar() : Mat(sys.C().transpose());
  const Mat R0 = reach ? rom.Bbar() : Mat(rom.C().transpose());
  auto full_op = [&](const Mat& X) { return reach ? sys.apply(X) : sys.apply_transpose(X); };

  Mat Lf = Mat::Zero(n, L0.cols()), Rf = Mat::Zero(r, R0.cols());
  if (tau.is_finite()) {
    Lf = L0;
    for (long k = 0; k < tau.steps(); ++k) Lf = full_op(Lf);
    Rf = power_times(Rc, tau.steps(), R0);
  }
  const Mat W = L0 * R0.transpose() - Lf * Rf.transpose();

  CrossGramian out;
  out.tau = tau;
  out.side = side;
  try {
    Eigen::ComplexSchur<Mat> schur(Rc);
    const CMat& T = schur.matrixT();
    const CMat& U = schur.matrixU();
    const CMat Wc = W.cast<Complex>() * U.conjugate();

    CSpMat Acx = sys.A().cast<Complex>();
    CSpMat Mcx(n, n);
    if (sys.M()) Mcx = sys.M()->cast<Complex>();
    else Mcx.setIdentity();

    std::vector<std::pair<Complex, SparseFactor<Complex>>> cache;
    auto factor_for = [&](Complex t) -> const SparseFactor<Complex>& {
      for (auto& [key, f] : cache)
        if (key == t) return f;
      CSpMat K = t * Acx - Mcx;
      cache.emplace_back(t, SparseFactor<Complex>(K));
      return cache.back().second;
    };

    CMat Y(n, r);  // transformed unknown, columns y_j
    CMat Uaux(n, r);  // obs side: u_j with y_j = M^T u_j
    for (Index j = r - 1; j >= 0; --j) {
      const Complex t = T(j, j);
      const SparseFactor<Complex>& F = factor_for(t);
      if (reach) {
        // (t A - M) y_j = -M w_j - A s_j,  s_j = sum_{k>j} T_jk y_k
        CVec s = CVec::Zero(n);
        for (Index k = j + 1; k < r; ++k) s += T(j, k) * Y.col(k);
        CVec rhs = -(Mcx * Wc.col(j)) - Acx * s;
        Y.col(j) = F.solve(rhs);
      } else {
        // (t A^T - M^T) u_j = -w_j - A^T sum_{k>j} T_jk u_k,  y_j = M^T u_j
        CVec su = CVec::Zero(n);
        for (Index k = j + 1; k < r; ++k) su += T(j, k) * Uaux.col(k);
        CVec rhs = -Wc.col(j) - CVec(Acx.transpose() * su);
        Uaux.col(j) = F.solve_transpose(rhs);
        Y.col(j) = Mcx.transpose() * Uaux.col(j);
      }
    }
    CMat Xc = Y * U.transpose();
    out.X = Xc.real();
    if (!Xc.allFinite()) throw SolvabilityError("cross Gramian solve produced non-finite values");

    // Verify: op(X) Rc^T - X + W = 0.
    Mat res = full_op(out.X) * Rc.transpose() - out.X + W;
    const double scale = W.norm() + out.X.norm();
    if (scale > 0.0 && res.norm() > 1e-8 * scale)
      throw SolvabilityError("cross Gramian residual too large; equation is near-singular");
  } catch (const SolvabilityError&) {
    if (tau.is_infinite()) throw;
    out.X = detail::cross_direct_sum(full_op, L0, Rc, R0, tau.steps());
    out.direct_sum = true;
  }
  return out;
}

/// Galerkin-projected (time-limited) Stein solve:
///   H Y H^T - Y + Bk Bk^T - Fk Fk^T = 0   (Fk absent: infinite horizon).
inline Mat solve_projected_tl(const Mat& H, const Mat& Bk, const std::optional<Mat>& Fk = std::nullopt,
                              SteinBackend backend = SteinBackend::automatic) {
  if (H.rows() != H.cols() || Bk.rows() != H.rows()) throw DimensionError("projected Stein: shape mismatch");
  require_dense(H.rows(), "solve_projected_tl");
  Mat W = Bk * Bk.transpose();
  if (Fk) {
    if (Fk->rows() != H.rows()) throw DimensionError("projected Stein: Fk shape mismatch");
    W -= *Fk * Fk->transpose();
  } else if (spectral_radius(H) >= 1.0) {
    throw SolvabilityError("projected Stein: H is not stable for the infinite horizon");
  }
  return symmetrize(solve_stein_general(H, H, W, backend));
}

}  // namespace dtmor
