#pragma once

#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <vector>

#include "dense_stein.hpp"
#include "linalg.hpp"
#include "system.hpp"
#include "types.hpp"

namespace dtmor {

struct SolverConfig {
  double tol = 1e-8;          // scaled residual tolerance
  double tol_f = 1e-8;        // relative change tolerance for the TL term
  int cadence = 5;            // projected solve every cadence-th step
  int max_iter = 300;         // basis expansions
  double trunc_tol = 1e-12;   // eigenvalue cut relative to lambda_max(Y)
  double deflation_tol = 1e-10;

  void validate() const {
    if (!(tol > 0.0 && tol < 1.0)) throw ConfigError("tolerance must lie in (0, 1)");
    if (!(tol_f > 0.0 && tol_f <= tol)) throw ConfigError("TL-term tolerance must lie in (0, tol]");
    if (cadence < 1) throw ConfigError("cadence must be >= 1");
    if (max_iter < 1) throw ConfigError("max_iter must be >= 1");
    if (!(trunc_tol >= 0.0 && trunc_tol < 1.0)) throw ConfigError("truncation tolerance must lie in [0, 1)");
  }
};

enum class ShiftKind { alternating_pm1, adaptive_disc };

inline const char* to_string(ShiftKind k) { return k == ShiftKind::alternating_pm1 ? "pm1" : "disc"; }

/// Shift generator state. Alternating shifts produce xi_j = (-1)^j starting
/// at j = 2. Adaptive shifts maximize |r_k| over h_s points of the unit circle
/// and queue the conjugate of every complex pick.
struct ShiftStrategy {
  ShiftKind kind = ShiftKind::alternating_pm1;
  int disc_points = 200;
  Index block_width = 1;  // multiplicity of each previous shift in r_k
  int step = 2;
  std::vector<Complex> history;
  std::optional<Complex> pending;
};

namespace detail {

inline Complex snap_real(Complex z) {
  if (std::abs(z.imag()) <= 1e-12 * std::max(1.0, std::abs(z))) return {z.real(), 0.0};
  return z;
}

}  // namespace detail

/// Next shift. `ritz` holds the eigenvalues of the current projected matrix
/// (only used by the adaptive strategy).
inline Complex next_shift(ShiftStrategy& s, const std::vector<Complex>& ritz) {
  Complex xi;
  if (s.kind == ShiftKind::alternating_pm1) {
    xi = (s.step % 2 == 0) ? 1.0 : -1.0;
  } else if (s.pending) {
    xi = *s.pending;
    s.pending.reset();
  } else if (s.history.empty() || ritz.empty()) {
    xi = -1.0;
  } else {
    const int hs = std::max(1, s.disc_points);
    double best = -std::numeric_limits<double>::infinity();
    Complex best_xi = -1.0;
    for (int i = 1; i <= hs; ++i) {
      Complex z = detail::snap_real(std::polar(1.0, 2.0 * std::numbers::pi * i / hs));
      bool is_pole = false;
      double val = 0.0;
      for (const Complex& sj : s.history) {
        double d = std::abs(z - sj);
        if (d < 1e-10) {
          is_pole = true;
          break;
        }
        val -= static_cast<double>(s.block_width) * std::log(d);
      }
      if (is_pole) continue;
      for (const Complex& th : ritz) val += std::log(std::abs(z - th));
      if (val > best) {
        best = val;
        best_xi = z;
      }
    }
    xi = best_xi;
    if (xi.imag() != 0.0) s.pending = std::conj(xi);
  }
  ++s.step;
  s.history.push_back(xi);
  return xi;
}

struct IterationRecord {
  int iteration = 0;
  Index dim = 0;               // basis columns
  double residual = nan();     // scaled residual (NaN when not evaluated)
  double tl_change = nan();    // relative change of the TL term
  Complex shift = 0.0;
};

/// Low-rank approximation Q Y Q^T of a (time-limited) Gramian of the standard
/// form, with the TL term (reach: Abar^tau Bbar; obs: (C Abar^tau)^T).
struct GramianApprox {
  Mat Q;
  Mat Y;
  Mat tl_term;
  Horizon tau;
  Side side = Side::reach;
  int iterations = 0;
  double residual = nan();
  bool converged = false;
  Index dim_before_truncation = 0;
  std::vector<Complex> shifts;
  std::vector<IterationRecord> history;

  Index rank() const { return Q.cols(); }

  /// Z with Z Z^T = Q Y Q^T (negative eigenvalues of Y are dropped).
  Mat factor() const {
    if (Y.size() == 0) return Mat(Q.rows(), 0);
    return Q * psd_factor(Y);
  }

  Mat dense() const { return Q * Y * Q.transpose(); }
};

/// Drop eigenpairs of Y below tol * lambda_max and rotate the basis.
inline GramianApprox truncate_factor(const GramianApprox& approx, double tol) {
  GramianApprox out = approx;
  if (approx.Y.size() == 0) return out;
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(approx.Y));
  const Vec& w = es.eigenvalues();
  const double wmax = w.maxCoeff();
  std::vector<Index> keep;
  if (wmax > 0.0)
    for (Index i = w.size() - 1; i >= 0; --i)
      if (w(i) >= tol * wmax && w(i) > 0.0) keep.push_back(i);
  const Index k = static_cast<Index>(keep.size());
  Mat U(w.size(), k);
  Vec lam(k);
  for (Index j = 0; j < k; ++j) {
    U.col(j) = es.eigenvectors().col(keep[static_cast<std::size_t>(j)]);
    lam(j) = w(keep[static_cast<std::size_t>(j)]);
  }
  out.Q = approx.Q * U;
  out.Y = lam.asDiagonal();
  return out;
}

namespace detail {

/// Side operator: Abar (reach) or Abar^T (obs) with the matching
/// right-hand side factor, plus cached shifted factorizations A - s M.
class SideOperator {
 public:
  SideOperator(const DiscreteLTISystem& sys, Side side) : sys_(sys), side_(side) {
    rhs_ = side == Side::reach ? sys.Bbar() : Mat(sys.C().transpose());
  }

  const Mat& rhs() const { return rhs_; }
  Index n() const { return sys_.n(); }

  Mat apply(const Mat& X) const { return side_ == Side::reach ? sys_.apply(X) : sys_.apply_transpose(X); }

  /// (op - s I)^{-1} v for real s.
  Mat solve(double s, const Mat& v) {
    const SparseFactor<double>& f = real_factor(s);
    if (side_ == Side::reach) return f.solve(sys_.mass_times(v));
    return sys_.mass_transpose_times(f.solve_transpose(v));
  }

  /// (op - s I)^{-1} v for complex s.
  CMat solve(Complex s, const Mat& v) {
    const SparseFactor<Complex>& f = complex_factor(s);
    if (side_ == Side::reach) return f.solve(sys_.mass_times(v).cast<Complex>());
    CMat w = f.solve_transpose(v.cast<Complex>());
    if (!sys_.M()) return w;
    return sys_.M()->transpose().cast<Complex>() * w;
  }

 private:
  SpMat mass() const {
    if (sys_.M()) return *sys_.M();
    SpMat I(sys_.n(), sys_.n());
    I.setIdentity();
    return I;
  }

  const SparseFactor<double>& real_factor(double s) {
    for (auto& [key, f] : real_cache_)
      if (key == s) return f;
    SpMat K = sys_.A() - s * mass();
    real_cache_.emplace_back(s, SparseFactor<double>(K));
    return real_cache_.back().second;
  }

  const SparseFactor<Complex>& complex_factor(Complex s) {
    for (auto& [key, f] : complex_cache_)
      if (key == s) return f;
    CSpMat K = sys_.A().cast<Complex>() - s * mass().cast<Complex>();
    complex_cache_.emplace_back(s, SparseFactor<Complex>(K));
    return complex_cache_.back().second;
  }

  const DiscreteLTISystem& sys_;
  Side side_;
  Mat rhs_;
  std::vector<std::pair<double, SparseFactor<double>>> real_cache_;
  std::vector<std::pair<Complex, SparseFactor<Complex>>> complex_cache_;
};

inline double sym_block_norm(const Mat& K) { return K.size() == 0 ? 0.0 : sym_norm2(symmetrize(K)); }

}  // namespace detail

/// Rational Arnoldi bookkeeping for the compressed residual.
///
/// Every shifted solve output g_j is expanded in the basis, g_j = Q psi_j,
/// and satisfies op g_j = g_j D_j + v_j with v_j in range(Q). Stacking gives
/// op Q_{k+1} Psi = Q_{k+1} Psi D + Q_k Phi, so that the out-of-space part of
/// op Q_k is E_k = gtilde psi_tilde^T.
struct KrylovState {
  Mat Q;       // current basis Q_k (n x l)
  Mat AQ;      // op * Q_k
  Mat H;       // Q_k^T op Q_k
  Mat Bk;      // Q_k^T B
  Mat Psi;     // coefficients of all solve outputs in [Q_k, q_{k+1}] (top l rows used)
  Mat D;       // block diagonal shift matrix matching the columns of Psi
  Mat gtilde;  // q_{k+1} beta D_k - (I - P) op q_{k+1} beta   (n x c)
  bool invariant = false;  // range(Q_k) is op-invariant (E_k = 0)
};

/// Norm of the Stein residual
///   op (Q Y Q^T) op^T - Q Y Q^T + B B^T - (Q Fhat)(Q Fhat)^T
/// through a bordered (l + c) x (l + c) matrix built from the shifted-solve
/// residual gtilde. Falls back to the explicit E_k = (I - QQ^T) op Q when Psi
/// is rank deficient.
inline double stein_residual_norm(const KrylovState& st, const Mat& Y, const std::optional<Mat>& Fhat = std::nullopt) {
  const Index l = st.Q.cols();
  if (Y.rows() != l || Y.cols() != l) throw DimensionError("stein_residual_norm: Y does not match the basis");
  if (st.H.rows() != l) throw DimensionError("stein_residual_norm: H does not match the basis");
  Mat Rp = st.H * Y * st.H.transpose() - Y + st.Bk * st.Bk.transpose();
  if (Fhat) Rp -= *Fhat * Fhat->transpose();
  const double rp = detail::sym_block_norm(Rp);
  if (st.invariant || l == st.Q.rows()) return rp;

  const Index c = st.gtilde.cols();
  const Index ng = st.Psi.cols();
  bool compressed_ok = st.Psi.rows() >= l && ng >= l && c > 0 && st.D.rows() == ng;
  Mat psi;
  if (compressed_ok) {
    const Mat PsiTop = st.Psi.topRows(l);
    Mat Elast = Mat::Zero(ng, c);
    Elast.bottomRows(c).setIdentity();
    Eigen::CompleteOrthogonalDecomposition<Mat> cod(PsiTop.transpose());
    cod.setThreshold(1e-12);
    if (cod.rank() < l) {
      compressed_ok = false;
    } else {
      psi = cod.solve(Elast);
      const double consistency = (PsiTop.transpose() * psi - Elast).norm();
      if (!(consistency <= 1e-8 * std::max(1.0, psi.norm()))) compressed_ok = false;
    }
  }

  // With op Q = Q H + L S^T and L orthogonal to Q,
  //   R = [Q, L] [[Rp, H Y S], [S^T Y H^T, S^T Y S]] [Q, L]^T,
  // and only the triangular factor of L enters the norm.
  auto bordered = [&](const Mat& L, const Mat& S) {
    Eigen::ColPivHouseholderQR<Mat> ql(L);
    const Index kmax = std::min(L.rows(), L.cols());
    const double ref = std::max(L.norm(), 1e-300);
    Index rank = 0;
    for (Index i = 0; i < kmax; ++i)
      if (std::abs(ql.matrixQR()(i, i)) > 1e-14 * ref) ++rank;
    Mat Rl = ql.matrixQR().topRows(rank).template triangularView<Eigen::Upper>();
    Mat T = Rl * ql.colsPermutation().transpose() * S.transpose();  // rank x l
    Mat HY = st.H * Y;
    Mat K(l + rank, l + rank);
    K.topLeftCorner(l, l) = Rp;
    K.topRightCorner(l, rank) = HY * T.transpose();
    K.bottomLeftCorner(rank, l) = T * HY.transpose();
    K.bottomRightCorner(rank, rank) = T * Y * T.transpose();
    return detail::sym_block_norm(K);
  };

  if (compressed_ok) return bordered(st.gtilde, psi);
  return bordered(st.AQ - st.Q * st.H, Mat::Identity(l, l));
}

/// Snapshot handed to an optional observer after every residual evaluation.
struct RksmSnapshot {
  int iteration;
  const KrylovState& state;
  const Mat& Y;
  const std::optional<Mat>& Fhat;
  double residual_norm;    // unscaled ||R_k||_2
  double scaled_residual;  // residual_norm / ||B B^T - F F^T||_2
};

using RksmObserver = std::function<void(const RksmSnapshot&)>;

/// Rational Krylov subspace method for (time-limited) Stein equations of the
/// standard form: op P op^T - P + B B^T - F F^T = 0 with F = op^tau B.
inline GramianApprox rksm(const DiscreteLTISystem& sys, Side side, Horizon tau, ShiftStrategy shifts,
                          const SolverConfig& cfg = {}, const RksmObserver& observer = {}) {
  cfg.validate();
  detail::SideOperator op(sys, side);
  const Mat& B = op.rhs();
  const Index n = sys.n();
  shifts.block_width = B.cols();

  GramianApprox out;
  out.tau = tau;
  out.side = side;

  BlockOrth first = orthogonalize_block(Mat(n, 0), B, cfg.deflation_tol);
  if (first.block.cols() == 0) {
    out.Q = Mat(n, 0);
    out.Y = Mat(0, 0);
    out.tl_term = Mat::Zero(n, B.cols());
    out.residual = 0.0;
    out.converged = true;
    return out;
  }

  KrylovState st;
  st.Q = first.block;
  st.AQ = op.apply(st.Q);
  st.Psi = Mat(st.Q.cols(), 0);
  st.D = Mat(0, 0);
  Index last_begin = 0;  // first column of the newest block

  std::optional<Mat> Fhat, Fprev;
  for (int k = 1;; ++k) {
    const Index l = st.Q.cols();
    st.H = st.Q.transpose() * st.AQ;
    st.Bk = st.Q.transpose() * B;

    IterationRecord rec;
    rec.iteration = k;
    rec.dim = l;

    bool f_ok = true;
    if (tau.is_finite()) {
      Fhat = power_times(st.H, tau.steps(), st.Bk);
      if (Fprev) {
        Mat Fp = Mat::Zero(l, B.cols());
        Fp.topRows(Fprev->rows()) = *Fprev;
        const double denom = Fp.squaredNorm() > 0.0 ? norm2(Fp) * norm2(Fp) : 1.0;
        rec.tl_change = detail::sym_block_norm(*Fhat * Fhat->transpose() - Fp * Fp.transpose()) / denom;
        f_ok = rec.tl_change <= cfg.tol_f;
      } else {
        f_ok = false;
      }
      Fprev = Fhat;
    }

    // Expand the basis by one (block) rational Krylov step.
    BlockOrth ext;
    Mat new_AQ;
    Index cg = 0;
    bool expanded = false;
    if (l < n) {
      std::vector<Complex> ritz;
      if (shifts.kind == ShiftKind::adaptive_disc) {
        Eigen::EigenSolver<Mat> es(st.H, false);
        for (Index i = 0; i < es.eigenvalues().size(); ++i) ritz.push_back(es.eigenvalues()(i));
      }
      Complex s = next_shift(shifts, ritz);
      rec.shift = s;
      const Mat v = st.Q.middleCols(last_begin, l - last_begin);
      Mat g, Dk;
      auto solve_with = [&](Complex sh) {
        if (sh.imag() == 0.0) {
          g = op.solve(sh.real(), v);
          Dk = sh.real() * Mat::Identity(v.cols(), v.cols());
        } else {
          CMat gc = op.solve(sh, v);
          const Index c = v.cols();
          g.resize(n, 2 * c);
          g.leftCols(c) = gc.real();
          g.rightCols(c) = gc.imag();
          Dk = Mat::Zero(2 * c, 2 * c);
          Dk.topLeftCorner(c, c) = sh.real() * Mat::Identity(c, c);
          Dk.bottomRightCorner(c, c) = sh.real() * Mat::Identity(c, c);
          Dk.topRightCorner(c, c) = sh.imag() * Mat::Identity(c, c);
          Dk.bottomLeftCorner(c, c) = -sh.imag() * Mat::Identity(c, c);
        }
      };
      try {
        solve_with(s);
      } catch (const SolvabilityError&) {
        // Perturb the shift once (staying on the same side of the real axis).
        Complex sp = s * (1.0 + 1e-6) + Complex(1e-8, 0.0);
        try {
          solve_with(sp);
          shifts.history.back() = sp;
          if (shifts.pending) shifts.pending = std::conj(sp);
          s = sp;
          rec.shift = sp;
        } catch (const SolvabilityError&) {
          throw ConvergenceError("singular shifted solve at shift (" + std::to_string(s.real()) + ", " +
                                 std::to_string(s.imag()) + ")");
        }
      }
      // A complex shift covers its conjugate; record it without another solve.
      if (s.imag() != 0.0 && shifts.pending) next_shift(shifts, {});

      ext = orthogonalize_block(st.Q, g, cfg.deflation_tol);
      cg = g.cols();
      const Index cnew = ext.block.cols();
      // Psi columns for this solve, expressed in [Q_k, q_{k+1}].
      const Index ng_old = st.Psi.cols();
      Mat Psi(l + cnew, ng_old + cg);
      Psi.setZero();
      Psi.topLeftCorner(st.Psi.rows(), ng_old) = st.Psi;
      Psi.block(0, ng_old, l, cg) = ext.h;
      Psi.block(l, ng_old, cnew, cg) = ext.beta;
      st.Psi = std::move(Psi);
      Mat Dn = Mat::Zero(ng_old + cg, ng_old + cg);
      Dn.topLeftCorner(ng_old, ng_old) = st.D;
      Dn.bottomRightCorner(cg, cg) = Dk;
      st.D = std::move(Dn);

      if (cnew > 0) {
        new_AQ = op.apply(ext.block);
        Mat qbeta = ext.block * ext.beta;
        Mat aqbeta = new_AQ * ext.beta;
        aqbeta -= st.Q * (st.Q.transpose() * aqbeta);
        st.gtilde = qbeta * Dk - aqbeta;
        st.invariant = false;
      } else {
        st.gtilde = Mat::Zero(n, cg);
        st.invariant = true;
      }
      expanded = cnew > 0;
    } else {
      st.invariant = true;
    }

    const bool solve_now = (k % cfg.cadence == 0) || st.invariant || l == n;
    std::optional<Mat> Y;
    const bool f_settled = f_ok || st.invariant || l == n;
    if (solve_now) {
      try {
        Y = solve_projected_tl(st.H, st.Bk, Fhat);
      } catch (const SolvabilityError&) {
        if (tau.is_finite()) Y = tl_sum_doubling(st.H, st.Bk * st.Bk.transpose(), tau.steps()).first;
      }
    }
    if (Y) {
      const double res = stein_residual_norm(st, *Y, Fhat);
      Mat rhs = st.Bk * st.Bk.transpose();
      if (Fhat) rhs -= *Fhat * Fhat->transpose();
      const double denom = detail::sym_block_norm(rhs);
      rec.residual = denom > 0.0 ? res / denom : res;
      if (observer) observer(RksmSnapshot{k, st, *Y, Fhat, res, rec.residual});
      out.history.push_back(rec);
      if (f_settled && rec.residual <= cfg.tol) {
        out.Q = st.Q;
        out.Y = *Y;
        out.tl_term = Fhat ? Mat(st.Q * *Fhat) : Mat::Zero(n, B.cols());
        out.iterations = k;
        out.residual = rec.residual;
        out.converged = true;
        out.dim_before_truncation = l;
        out.shifts = shifts.history;
        if (shifts.pending) out.shifts.pop_back();
        return truncate_factor(out, cfg.trunc_tol);
      }
    } else {
      out.history.push_back(rec);
    }

    if (k >= cfg.max_iter || (!expanded && (st.invariant || l == n) && !Y))
      throw ConvergenceError("rksm: no convergence after " + std::to_string(k) + " iterations (last residual " +
                             std::to_string(out.history.back().residual) + ")");
    if (expanded) {
      last_begin = l;
      Mat Qn(n, l + ext.block.cols());
      Qn << st.Q, ext.block;
      st.Q = std::move(Qn);
      Mat AQn(n, st.Q.cols());
      AQn << st.AQ, new_AQ;
      st.AQ = std::move(AQn);
    }
  }
}

/// Smith-Arnoldi (block Arnoldi) method. Builds an orthonormal basis of the
/// block Krylov space K_k(op, B) and accumulates the Smith iterates in
/// coordinates: r_1 = beta, r_{i+1} = H r_i, Y = sum r_i r_i^T. For finite tau
/// exactly tau+1 blocks are used and F is read off r_{tau+1}.
inline GramianApprox smith_arnoldi(const DiscreteLTISystem& sys, Side side, Horizon tau, const SolverConfig& cfg = {}) {
  cfg.validate();
  detail::SideOperator op(sys, side);
  const Mat& B = op.rhs();
  const Index n = sys.n(), m = B.cols();

  GramianApprox out;
  out.tau = tau;
  out.side = side;

  BlockOrth first = orthogonalize_block(Mat(n, 0), B, cfg.deflation_tol);
  Mat Q = first.block;
  if (Q.cols() == 0) {
    out.Q = Mat(n, 0);
    out.Y = Mat(0, 0);
    out.tl_term = Mat::Zero(n, m);
    out.residual = 0.0;
    out.converged = true;
    return out;
  }
  Mat H = Mat::Zero(Q.cols(), Q.cols());
  Index expanded_cols = 0;  // columns of Q whose image is already in H
  bool exhausted = false;
  Mat r = first.beta;  // coordinates of op^{i-1} B
  Mat Y = Mat::Zero(Q.cols(), Q.cols());
  const double b_norm2 = norm2(first.beta) * norm2(first.beta);
  int expansions = 0;

  auto ensure_expanded = [&](Index needed_cols) {
    while (!exhausted && expanded_cols < needed_cols) {
      const Index begin = expanded_cols, end = Q.cols();
      Mat blk = Q.middleCols(begin, end - begin);
      Mat g = op.apply(blk);
      BlockOrth ext = orthogonalize_block(Q, g, cfg.deflation_tol);
      const Index l = Q.cols(), cnew = ext.block.cols();
      Mat Hn = Mat::Zero(l + cnew, l + cnew);
      Hn.topLeftCorner(l, l) = H;
      Hn.block(0, begin, l, end - begin) = ext.h;
      Hn.block(l, begin, cnew, end - begin) = ext.beta;
      H = std::move(Hn);
      if (cnew > 0) {
        Mat Qn(n, l + cnew);
        Qn << Q, ext.block;
        Q = std::move(Qn);
      } else {
        exhausted = true;
      }
      expanded_cols = end;
      ++expansions;
    }
  };
  auto grow = [](const Mat& X, Index rows, Index cols) {
    Mat P = Mat::Zero(rows, cols);
    P.topLeftCorner(X.rows(), X.cols()) = X;
    return P;
  };

  const long max_steps = tau.is_finite() ? tau.steps() : 1000000L;
  long steps = 0;
  double smith_res = nan();
  bool checked_exhausted = false;
  while (steps < max_steps) {
    ++steps;
    // Accumulate r_i, then advance to r_{i+1} = H r_i.
    ensure_expanded(r.rows());
    const Index l = Q.cols();
    const Mat rp = grow(r, l, m);
    Y = grow(Y, l, l);
    Y += rp * rp.transpose();
    r = H * rp;
    out.history.push_back(IterationRecord{static_cast<int>(steps), l, nan(), nan(), 0.0});
    if (tau.is_infinite()) {
      smith_res = b_norm2 > 0.0 ? norm2(r) * norm2(r) / b_norm2 : 0.0;
      out.history.back().residual = smith_res;
      if (smith_res <= cfg.tol) break;
      if (!exhausted && expansions >= cfg.max_iter)
        throw ConvergenceError("smith_arnoldi: basis cap reached with residual " + std::to_string(smith_res));
      if (exhausted && !checked_exhausted) {
        checked_exhausted = true;
        if (spectral_radius(H) >= 1.0)
          throw ConvergenceError("smith_arnoldi: invariant subspace is not contracting; infinite sum diverges");
      }
    }
  }
  if (tau.is_infinite() && !(smith_res <= cfg.tol))
    throw ConvergenceError("smith_arnoldi: no convergence (spectral radius too close to 1?)");

  const Index l = Q.cols();
  Y = grow(Y, l, l);
  r = grow(r, l, m);
  out.Q = Q;
  out.Y = symmetrize(Y);
  out.tl_term = tau.is_finite() ? Mat(Q * r) : Mat::Zero(n, m);
  out.iterations = static_cast<int>(steps);
  out.dim_before_truncation = l;
  out.converged = true;
  if (tau.is_finite()) {
    // Residual in coordinates; zero up to rounding by construction.
    const Mat beta = grow(first.beta, l, m);
    const Mat rhs = beta * beta.transpose() - r * r.transpose();
    const Mat R = grow(H, l, l) * out.Y * grow(H, l, l).transpose() - out.Y + rhs;
    const double denom = detail::sym_block_norm(rhs);
    out.residual = detail::sym_block_norm(R) / (denom > 0.0 ? denom : 1.0);
  } else {
    out.residual = smith_res;
  }
  return truncate_factor(out, cfg.trunc_tol);
}

}  // namespace dtmor
