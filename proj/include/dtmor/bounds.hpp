#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "balancing.hpp"
#include "dense_stein.hpp"
#include "lowrank.hpp"
#include "system.hpp"
#include "types.hpp"

namespace dtmor {

namespace detail {

/// Sum_{k<tau} A^k W Ah^k^T by binary powering (no solvability condition).
inline Mat cross_sum_doubling(const Mat& A, const Mat& Ah, const Mat& W, long tau) {
  Mat S = Mat::Zero(A.rows(), Ah.rows());
  Mat Pa = Mat::Identity(A.rows(), A.rows());
  Mat Ph = Mat::Identity(Ah.rows(), Ah.rows());
  int top = 0;
  while ((1L << (top + 1)) <= tau) ++top;
  for (int bit = top; bit >= 0 && tau > 0; --bit) {
    S += Pa * S * Ph.transpose();
    Pa = Pa * Pa;
    Ph = Ph * Ph;
    if ((tau >> bit) & 1L) {
      S = W + A * S * Ah.transpose();
      Pa = A * Pa;
      Ph = Ah * Ph;
    }
  }
  return S;
}

inline double trace_product(const Mat& X, const Mat& Y) { return (X.cwiseProduct(Y.transpose())).sum(); }

/// Sum_{j<=K} trace(h1(j) h2(j)^T) from impulse responses.
inline double impulse_inner(const DiscreteLTISystem& s1, const DiscreteLTISystem& s2, long K) {
  Mat X1 = s1.Bbar(), X2 = s2.Bbar();
  double acc = 0.0;
  for (long k = 1; k <= K; ++k) {
    acc += trace_product(s1.C() * X1, (s2.C() * X2).transpose());
    if (k < K) {
      X1 = s1.apply(X1);
      X2 = s2.apply(X2);
    }
  }
  return acc;
}

}  // namespace detail

/// Direct summation of the TL inner product (oracle and fallback).
inline double tl_h2_inner_direct(const DiscreteLTISystem& s1, const DiscreteLTISystem& s2, Horizon tau) {
  if (s1.m() != s2.m() || s1.p() != s2.p()) throw DimensionError("inner product needs matching m and p");
  if (tau.is_infinite()) throw ConfigError("direct summation needs a finite horizon");
  return detail::impulse_inner(s1, s2, tau.steps());
}

struct InnerProduct {
  double value = 0.0;
  bool direct_sum = false;
};

/// <S1, S2>_{h2,tau} = trace(C1 Y C2^T) with the cross Gramian Y from the
/// large-sparse/small-dense Sylvester solve; s2 must fit the dense cap.
inline InnerProduct tl_h2_inner_ex(const DiscreteLTISystem& s1, const DiscreteLTISystem& s2, Horizon tau) {
  if (s1.m() != s2.m() || s1.p() != s2.p()) throw DimensionError("inner product needs matching m and p");
  const CrossGramian Y = solve_cross_sylvester(s1, s2, tau, Side::reach);
  return {detail::trace_product(s1.C() * Y.X, s2.C().transpose()), Y.direct_sum};
}

inline double tl_h2_inner(const DiscreteLTISystem& s1, const DiscreteLTISystem& s2, Horizon tau) {
  return tl_h2_inner_ex(s1, s2, tau).value;
}

struct NormSides {
  double c_side = 0.0;  // trace(C P C^T)
  double b_side = 0.0;  // trace(Bbar^T Q Bbar)
};

/// Both Gramian-trace evaluations of ||S||^2_{h2,tau}.
inline NormSides tl_h2_norm_sides(const DiscreteLTISystem& sys, Horizon tau) {
  const DenseGramianPair P = tl_gramian_dense(sys, tau, Side::reach);
  const DenseGramianPair Q = tl_gramian_dense(sys, tau, Side::obs);
  return {detail::trace_product(sys.C() * P.gramian, sys.C().transpose()),
          detail::trace_product(sys.Bbar().transpose() * Q.gramian, sys.Bbar())};
}

/// ||S||_{h2,tau}.
inline double tl_h2_norm(const DiscreteLTISystem& sys, Horizon tau) {
  const NormSides s = tl_h2_norm_sides(sys, tau);
  return std::sqrt(std::max(0.0, s.c_side));
}

/// Output error bound epsilon with its raw trace sides and flags.
struct OutputBound {
  double epsilon = 0.0;
  double c_side = 0.0;
  double b_side = 0.0;
  bool sides_disagree = false;  // relative gap above 1e-6
  bool abs_applied = false;     // average was negative
  bool direct_sum = false;      // a cross Gramian used the finite-sum fallback
  bool large_scale = false;     // full Gramian traces from low-rank factors
};

/// Full-system Gramian data for the bound: dense Gramians, or low-rank
/// factors for large problems.
struct FullGramianTraces {
  double c_trace = 0.0;  // trace(C P C^T)
  double b_trace = 0.0;  // trace(Bbar^T Q Bbar)
  bool large_scale = false;
};

inline FullGramianTraces full_traces_dense(const DiscreteLTISystem& sys, Horizon tau) {
  const NormSides s = tl_h2_norm_sides(sys, tau);
  return {s.c_side, s.b_side, false};
}

inline FullGramianTraces full_traces_lowrank(const DiscreteLTISystem& sys, const GramianApprox& P,
                                             const GramianApprox& Q) {
  const Mat ZP = P.factor(), ZQ = Q.factor();
  return {(sys.C() * ZP).squaredNorm(), (sys.Bbar().transpose() * ZQ).squaredNorm(), true};
}

inline OutputBound bound_output_tl(const DiscreteLTISystem& sys, const DiscreteLTISystem& rom, Horizon tau,
                                   const FullGramianTraces& full) {
  if (sys.m() != rom.m() || sys.p() != rom.p()) throw DimensionError("bound: system and ROM differ in m or p");
  const DenseGramianPair Ph = tl_gramian_dense(rom, tau, Side::reach);
  const DenseGramianPair Qh = tl_gramian_dense(rom, tau, Side::obs);
  const CrossGramian Y = solve_cross_sylvester(sys, rom, tau, Side::reach);
  const CrossGramian Z = solve_cross_sylvester(sys, rom, tau, Side::obs);
  OutputBound out;
  out.c_side = full.c_trace + detail::trace_product(rom.C() * Ph.gramian, rom.C().transpose()) -
               2.0 * detail::trace_product(sys.C() * Y.X, rom.C().transpose());
  out.b_side = full.b_trace + detail::trace_product(rom.Bbar().transpose() * Qh.gramian, rom.Bbar()) -
               2.0 * detail::trace_product(sys.Bbar().transpose() * Z.X, rom.Bbar());
  const double avg = 0.5 * (out.c_side + out.b_side);
  const double scale = std::max({std::abs(out.c_side), std::abs(out.b_side), full.c_trace, 1e-300});
  out.sides_disagree = std::abs(out.c_side - out.b_side) > 1e-6 * scale;
  out.abs_applied = avg < 0.0;
  out.direct_sum = Y.direct_sum || Z.direct_sum;
  out.large_scale = full.large_scale;
  out.epsilon = std::sqrt(std::abs(avg));
  return out;
}

inline OutputBound bound_output_tl(const DiscreteLTISystem& sys, const DiscreteLTISystem& rom, Horizon tau) {
  return bound_output_tl(sys, rom, tau, full_traces_dense(sys, tau));
}

/// Pointwise bound level epsilon * (sum_{j<=tau} ||u(j)||^2)^{1/2}; u holds
/// one sample per column.
inline double bound_level(double epsilon, const Mat& u, long tau) {
  const long K = std::min<long>(tau, static_cast<long>(u.cols()) - 1);
  return epsilon * (K >= 0 ? u.leftCols(K + 1).norm() : 0.0);
}

/// Squared TL error expression of a balanced truncation, one line per side.
struct TlbtExpression {
  double value = 0.0;   // |average of both lines|
  double c_side = 0.0;  // line with P-hat and Z
  double b_side = 0.0;  // line with Q-hat and Y
  double r_tau = 0.0;   // residual TL term (average of both sides)
  double r_tau_c = 0.0;
  double r_tau_b = 0.0;
  bool abs_applied = false;
  std::vector<std::pair<std::string, double>> terms;  // side averages; they sum to the signed average
};

/// Error expression for truncating a balanced realization after r states,
/// evaluated at the realization's horizon. For tau = inf this is the
/// infinite-horizon expression (the TL terms vanish).
inline TlbtExpression error_expr_tlbt(const BalancedRealization& bal, Index r) {
  const Partition p = bal.partition(r);
  const Horizon tau = bal.tau;
  const Mat& A = bal.A;
  const Mat& Ah = p.A11;
  TlbtExpression out;
  Mat Fh = Mat::Zero(p.B1.rows(), p.B1.cols()), Gh = Mat::Zero(p.C1.rows(), p.C1.cols());
  if (tau.is_finite()) {
    Fh = power_times(Ah, tau.steps(), p.B1);
    Gh = power_times(Ah.transpose(), tau.steps(), p.C1.transpose()).transpose();
  }
  Mat Y = Mat::Zero(A.rows(), r), Z = Mat::Zero(A.rows(), r), Ph = Mat::Zero(r, r), Qh = Mat::Zero(r, r);
  if (r > 0) {
    if (tau.is_finite()) {
      Y = detail::cross_sum_doubling(A, Ah, bal.B * p.B1.transpose(), tau.steps());
      Z = detail::cross_sum_doubling(A.transpose(), Ah.transpose(), bal.C.transpose() * p.C1, tau.steps());
      Ph = detail::cross_sum_doubling(Ah, Ah, p.B1 * p.B1.transpose(), tau.steps());
      Qh = detail::cross_sum_doubling(Ah.transpose(), Ah.transpose(), p.C1.transpose() * p.C1, tau.steps());
    } else {
      Y = solve_stein_general(A, Ah, bal.B * p.B1.transpose() - bal.F * Fh.transpose());
      Z = solve_stein_general(A.transpose(), Ah.transpose(), bal.C.transpose() * p.C1 - bal.G.transpose() * Gh);
      Ph = solve_stein_dense(Ah, p.B1 * p.B1.transpose());
      Qh = solve_stein_dense(Ah.transpose(), p.C1.transpose() * p.C1);
    }
  }
  const Mat S1 = p.sigma1.asDiagonal();
  const Mat S2 = p.sigma2.asDiagonal();
  using detail::trace_product;
  const double t1 = trace_product(p.C2 * S2, p.C2.transpose());
  const double t2 = 2.0 * trace_product(p.A12 * S2 * p.Acol2().transpose(), Z);
  const double t3 = trace_product(p.C1 * (Ph - S1), p.C1.transpose());
  const double t4 = 2.0 * trace_product(S1 * p.G1.transpose(), Gh);
  const double t5 = -2.0 * trace_product(p.F1 * bal.F.transpose(), Z);
  const double u1 = trace_product(p.B2.transpose() * S2, p.B2);
  const double u2 = 2.0 * trace_product(p.A21.transpose() * S2 * p.Arow2(), Y);
  const double u3 = trace_product(p.B1.transpose() * (Qh - S1), p.B1);
  const double u4 = 2.0 * trace_product(S1 * p.F1, Fh.transpose());
  const double u5 = -2.0 * trace_product(p.G1.transpose() * bal.G, Y);
  out.c_side = t1 + t2 + t3 + t4 + t5;
  out.b_side = u1 + u2 + u3 + u4 + u5;
  out.r_tau_c = t4 + t5;
  out.r_tau_b = u4 + u5;
  out.r_tau = 0.5 * (out.r_tau_c + out.r_tau_b);
  out.terms = {{"neglected-states", 0.5 * (t1 + u1)},
               {"coupling", 0.5 * (t2 + u2)},
               {"reduced-gramian", 0.5 * (t3 + u3)},
               {"tl-sigma", 0.5 * (t4 + u4)},
               {"tl-cross", 0.5 * (t5 + u5)}};
  const double avg = 0.5 * (out.c_side + out.b_side);
  out.abs_applied = avg < 0.0;
  out.value = std::abs(avg);
  return out;
}

/// Infinite-horizon error expression and its simplified upper value.
struct InfHorizonBound {
  double value = 0.0;  // |average|, squared-norm scale
  double c_side = 0.0;
  double b_side = 0.0;
  double upper = 0.0;  // first two C-side terms
  bool abs_applied = false;
};

inline InfHorizonBound bound_inf_horizon(const BalancedRealization& bal, Index r) {
  if (!bal.tau.is_infinite()) throw ConfigError("bound_inf_horizon needs an infinite-horizon balanced realization");
  if (spectral_radius(bal.A) >= 1.0) throw SolvabilityError("infinite-horizon bound needs a stable system");
  const TlbtExpression e = error_expr_tlbt(bal, r);
  InfHorizonBound out;
  out.value = e.value;
  out.c_side = e.c_side;
  out.b_side = e.b_side;
  out.abs_applied = e.abs_applied;
  const Partition p = bal.partition(r);
  Mat Z = Mat::Zero(bal.A.rows(), r);
  if (r > 0) Z = solve_stein_general(bal.A.transpose(), p.A11.transpose(), bal.C.transpose() * p.C1);
  const Mat S2 = p.sigma2.asDiagonal();
  out.upper = detail::trace_product(p.C2 * S2, p.C2.transpose()) +
              2.0 * detail::trace_product(p.A12 * S2 * p.Acol2().transpose(), Z);
  return out;
}

enum class ConstantMethod { eigen, numerical_radius };

inline const char* to_string(ConstantMethod m) {
  return m == ConstantMethod::eigen ? "eigen-decomposition" : "numerical-radius";
}

/// ||A^k||_2 <= c * lambda^k.
struct AsymptoticConstants {
  double c = 1.0;
  double lambda = 0.0;
  ConstantMethod method = ConstantMethod::eigen;
};

namespace detail {

inline double hermitian_part_max(const Mat& A, double theta) {
  const Complex e = std::polar(1.0, theta);
  const CMat X = e * A.cast<Complex>();
  const CMat H = 0.5 * (X + X.adjoint());
  Eigen::SelfAdjointEigenSolver<CMat> es(H, Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

/// Shifted power iteration for lambda_max of the Hermitian part.
inline double hermitian_part_power(const Mat& A, double theta, double shift) {
  const Complex e = std::polar(1.0, theta);
  const Index n = A.rows();
  CVec x = CVec::Ones(n) / std::sqrt(static_cast<double>(n));
  double prev = -std::numeric_limits<double>::infinity(), rq = 0.0;
  for (int it = 0; it < 5000; ++it) {
    CVec Ax = A.cast<Complex>() * x;
    CVec Atx = A.transpose().cast<Complex>() * x;
    CVec y = 0.5 * (e * Ax + std::conj(e) * Atx) + shift * x;
    rq = std::real(x.dot(y)) - shift;
    const double ny = y.norm();
    if (ny == 0.0) break;
    x = y / ny;
    if (std::abs(rq - prev) <= 1e-6 * std::max(std::abs(rq), 1e-300)) break;
    prev = rq;
  }
  return rq;
}

}  // namespace detail

/// Numerical radius max{|x^* A x| : ||x|| = 1}. Dense path for n <= 400
/// (64 angles plus golden-section refinement), power iteration otherwise.
inline double numerical_radius(const Mat& A) {
  if (A.rows() != A.cols()) throw DimensionError("numerical_radius: matrix must be square");
  if (A.size() == 0) return 0.0;
  constexpr int angles = 64;
  const double h = 2.0 * std::numbers::pi / angles;
  if (A.rows() > 400) {
    const double shift = A.cwiseAbs().rowwise().sum().maxCoeff() + A.cwiseAbs().colwise().sum().maxCoeff();
    double best = 0.0;
    for (int i = 0; i < angles; ++i) best = std::max(best, detail::hermitian_part_power(A, i * h, shift));
    return best;
  }
  double best = -1.0, best_theta = 0.0;
  for (int i = 0; i < angles; ++i) {
    const double v = detail::hermitian_part_max(A, i * h);
    if (v > best) {
      best = v;
      best_theta = i * h;
    }
  }
  double lo = best_theta - h, hi = best_theta + h;
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = hi - g * (hi - lo), x2 = lo + g * (hi - lo);
  double f1 = detail::hermitian_part_max(A, x1), f2 = detail::hermitian_part_max(A, x2);
  for (int it = 0; it < 60; ++it) {
    if (f1 < f2) {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + g * (hi - lo);
      f2 = detail::hermitian_part_max(A, x2);
    } else {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - g * (hi - lo);
      f1 = detail::hermitian_part_max(A, x1);
    }
  }
  return std::max({best, f1, f2});
}

inline AsymptoticConstants asymptotic_constants(const Mat& A, ConstantMethod method) {
  if (A.rows() != A.cols()) throw DimensionError("asymptotic_constants: matrix must be square");
  AsymptoticConstants k;
  k.method = method;
  if (method == ConstantMethod::numerical_radius) {
    k.c = 1.0 + std::numbers::sqrt2;
    k.lambda = numerical_radius(A);
    return k;
  }
  k.lambda = spectral_radius(A);
  const double an = A.squaredNorm();
  if ((A * A.transpose() - A.transpose() * A).norm() <= 1e-12 * an) {
    k.c = 1.0;
    return k;
  }
  Eigen::EigenSolver<Mat> es(A);
  CMat X = es.eigenvectors();
  for (Index j = 0; j < X.cols(); ++j) X.col(j).normalize();
  Eigen::JacobiSVD<CMat> svd(X);
  const auto& s = svd.singularValues();
  const double kappa = s(0) / s(s.size() - 1);
  if (!std::isfinite(kappa) || kappa > 1e12)
    throw SolvabilityError("eigenvector matrix is numerically singular (kappa = " + std::to_string(kappa) + ")");
  k.c = std::max(1.0, kappa);
  return k;
}

struct AsymptoticBound {
  double J = 0.0;
  double J_tl = 0.0;
  double total = 0.0;
  double sigma_next = 0.0;  // sigma_{r+1} (0 when r = order)
  bool fallback = false;    // lambda >= 1 or lambda_hat >= 1
};

/// Asymptotic bound total = J * sigma_{r+1} + J_TL for the squared TL error of
/// truncating `bal` after r states, evaluated at horizon tau.
inline AsymptoticBound bound_asymptotic(const BalancedRealization& bal, Index r, Horizon tau,
                                      const AsymptoticConstants& full, const AsymptoticConstants& rom) {
  const Partition p = bal.partition(r);
  AsymptoticBound out;
  const double pp = static_cast<double>(bal.C.rows()), mm = static_cast<double>(bal.B.cols());
  const double rr = static_cast<double>(r);
  out.sigma_next = r < bal.order() ? bal.sigma(r) : 0.0;
  const double sigma1 = bal.sigma.size() ? bal.sigma(0) : 0.0;
  const double nC2 = norm2(p.C2), nA12 = norm2(p.A12), nA2 = norm2(p.Acol2());
  const double nC = norm2(bal.C), nC1 = norm2(p.C1), nB = norm2(bal.B), nB1 = norm2(p.B1);
  const double c = full.c, ch = rom.c, l = full.lambda, lh = rom.lambda;

  if (l < 1.0 && lh < 1.0) {
    const double lt = tau.is_finite() ? std::pow(l, static_cast<double>(tau.steps())) : 0.0;
    const double lht = tau.is_finite() ? std::pow(lh, static_cast<double>(tau.steps())) : 0.0;
    const double mix = c * ch * lt * lht;
    out.J = pp * nC2 * nC2 + 2.0 * rr * c * ch * (1.0 + mix) / (1.0 - l * lh) * nA12 * nA2 * nC * nC1;
    out.J_tl = pp * ch * ch / (1.0 - lh * lh) * nC1 * nC1 * (c * c * lt * lt * nB * nB + ch * ch * lht * lht * nB1 * nB1) +
               2.0 * pp * sigma1 * mix * nC * nC1 +
               2.0 * mm * c * ch / (1.0 - l * lh) * c * c * lt * lt * nB * nB * nC * nC1 * (1.0 + mix);
  } else {
    out.fallback = true;
    const Mat& A = bal.A;
    const Mat& Ah = p.A11;
    Mat Z = Mat::Zero(A.rows(), r), Ph = Mat::Zero(r, r);
    Mat F = Mat::Zero(bal.B.rows(), bal.B.cols()), Gh = Mat::Zero(p.C1.rows(), r);
    Mat Gfull = Mat::Zero(bal.C.rows(), bal.C.cols());
    if (tau.is_finite()) {
      const long t = tau.steps();
      F = power_times(A, t, bal.B);
      Gfull = power_times(A.transpose(), t, bal.C.transpose()).transpose();
      Gh = power_times(Ah.transpose(), t, p.C1.transpose()).transpose();
      if (r > 0) {
        Z = detail::cross_sum_doubling(A.transpose(), Ah.transpose(), bal.C.transpose() * p.C1, t);
        Ph = detail::cross_sum_doubling(Ah, Ah, p.B1 * p.B1.transpose(), t);
      }
    } else if (r > 0) {
      Z = solve_stein_general(A.transpose(), Ah.transpose(), bal.C.transpose() * p.C1);
      Ph = solve_stein_dense(Ah, p.B1 * p.B1.transpose());
    }
    const double nZ = norm2(Z);
    const Mat S1 = p.sigma1.asDiagonal();
    out.J = pp * nC2 * nC2 + 2.0 * rr * nA12 * nA2 * nZ;
    out.J_tl = pp * nC1 * nC1 * norm2(Ph - S1) + 2.0 * pp * sigma1 * norm2(Gfull.leftCols(r)) * norm2(Gh) +
               2.0 * mm * nZ * norm2(F.topRows(r)) * norm2(F);
  }
  out.total = out.J * out.sigma_next + out.J_tl;
  return out;
}

}  // namespace dtmor
