#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "linalg.hpp"
#include "random.hpp"
#include "types.hpp"

namespace dtmor {

/// Discrete-time LTI system  M x(k+1) = A x(k) + B u(k),  y(k) = C x(k),
/// x(0) = 0. M is optional (identity when absent).
///
/// All algorithms work on the equivalent standard form with Abar = M^{-1}A
/// and Bbar = M^{-1}B, applied implicitly through one cached sparse LU of M.
/// Instances are immutable and safe to share read-only.
class DiscreteLTISystem {
 public:
  DiscreteLTISystem() = default;

  DiscreteLTISystem(SpMat A, Mat B, Mat C, std::optional<SpMat> M = std::nullopt)
      : A_(std::move(A)), B_(std::move(B)), C_(std::move(C)), M_(std::move(M)) {
    const Index n = A_.rows();
    if (n < 1) throw DimensionError("system order must be positive");
    if (A_.cols() != n) throw DimensionError("A must be square");
    if (B_.rows() != n) throw DimensionError("B must have as many rows as A");
    if (C_.cols() != n) throw DimensionError("C must have as many columns as A");
    if (B_.cols() < 1 || C_.rows() < 1) throw DimensionError("need at least one input and one output");
    if (M_ && (M_->rows() != n || M_->cols() != n)) throw DimensionError("M must match A");
    A_.makeCompressed();
    if (M_) {
      M_->makeCompressed();
      mass_ = SparseFactor<double>(*M_);
      Bbar_ = mass_.solve(B_);
    } else {
      Bbar_ = B_;
    }
  }

  Index n() const { return A_.rows(); }
  Index m() const { return B_.cols(); }
  Index p() const { return C_.rows(); }

  const SpMat& A() const { return A_; }
  const Mat& B() const { return B_; }
  const Mat& C() const { return C_; }
  const std::optional<SpMat>& M() const { return M_; }
  bool has_mass() const { return M_.has_value(); }

  /// M^{-1}B.
  const Mat& Bbar() const { return Bbar_; }

  Mat solve_mass(const Mat& X) const { return M_ ? mass_.solve(X) : X; }
  Mat solve_mass_transpose(const Mat& X) const { return M_ ? mass_.solve_transpose(X) : X; }
  Mat mass_times(const Mat& X) const { return M_ ? Mat(*M_ * X) : X; }
  Mat mass_transpose_times(const Mat& X) const { return M_ ? Mat(M_->transpose() * X) : X; }

  /// Abar * X.
  Mat apply(const Mat& X) const { return solve_mass(A_ * X); }
  /// Abar^T * X.
  Mat apply_transpose(const Mat& X) const { return A_.transpose() * solve_mass_transpose(X); }

  /// Dense M^{-1}A; refuses above the dense cap.
  Mat dense_Abar() const {
    require_dense(n(), "dense_Abar");
    Mat Ad(A_);
    return solve_mass(Ad);
  }

  // Provenance metadata carried into the manifest.
  std::string kind = "custom";
  std::uint64_t seed = 0;

 private:
  SpMat A_;
  Mat B_;
  Mat C_;
  std::optional<SpMat> M_;
  SparseFactor<double> mass_;
  Mat Bbar_;
};

/// Validating constructor; throws DimensionError or SolvabilityError.
inline DiscreteLTISystem build_system(const SpMat& A, const Mat& B, const Mat& C,
                                      const std::optional<SpMat>& M = std::nullopt) {
  return DiscreteLTISystem(A, B, C, M);
}

inline DiscreteLTISystem build_system(const Mat& A, const Mat& B, const Mat& C) {
  return DiscreteLTISystem(to_sparse(A), B, C);
}

inline DiscreteLTISystem build_system(const Mat& A, const Mat& B, const Mat& C, const Mat& M) {
  return DiscreteLTISystem(to_sparse(A), B, C, to_sparse(M));
}

/// h(k) = C Abar^{k-1} Bbar, h(0) = 0.
inline Mat impulse_response(const DiscreteLTISystem& sys, long k) {
  if (k < 0) throw DimensionError("impulse_response: k must be nonnegative");
  if (k == 0) return Mat::Zero(sys.p(), sys.m());
  Mat X = sys.Bbar();
  for (long i = 1; i < k; ++i) X = sys.apply(X);
  return sys.C() * X;
}

/// h(0..K) in one pass.
inline std::vector<Mat> impulse_sequence(const DiscreteLTISystem& sys, long K) {
  if (K < 0) throw DimensionError("impulse_sequence: K must be nonnegative");
  std::vector<Mat> h;
  h.reserve(static_cast<std::size_t>(K + 1));
  h.push_back(Mat::Zero(sys.p(), sys.m()));
  Mat X = sys.Bbar();
  for (long k = 1; k <= K; ++k) {
    h.push_back(sys.C() * X);
    if (k < K) X = sys.apply(X);
  }
  return h;
}

/// Inputs and outputs stored column-wise: column k is u(k) or y(k).
struct SimulationTrace {
  Mat u;  // m x (K+1)
  Mat y;  // p x (K+1)
  long horizon() const { return static_cast<long>(u.cols()) - 1; }
};

/// State recursion from x(0) = 0 over k = 0..K. Extra input columns beyond K
/// are ignored; missing columns are an error.
inline SimulationTrace simulate(const DiscreteLTISystem& sys, const Mat& u, long K) {
  if (K < 0) throw DimensionError("simulate: horizon must be nonnegative");
  if (u.rows() != sys.m()) throw DimensionError("simulate: input length does not match m");
  if (u.cols() < K + 1) throw DimensionError("simulate: need K+1 input samples");
  SimulationTrace tr;
  tr.u = u.leftCols(K + 1);
  tr.y = Mat::Zero(sys.p(), K + 1);
  Vec x = Vec::Zero(sys.n());
  for (long k = 0; k <= K; ++k) {
    tr.y.col(k) = sys.C() * x;
    if (k < K) {
      Vec rhs = sys.A() * x + sys.B() * tr.u.col(k);
      x = sys.solve_mass(rhs);
    }
  }
  return tr;
}

/// u(0) = ones, zero afterwards.
inline Mat impulse_input(Index m, long K) {
  Mat u = Mat::Zero(m, K + 1);
  u.col(0).setOnes();
  return u;
}

enum class ExampleKind { jacobi, gauss_seidel, random_stable, laplacian_grid };

inline const char* to_string(ExampleKind k) {
  switch (k) {
    case ExampleKind::jacobi: return "jacobi";
    case ExampleKind::gauss_seidel: return "gauss-seidel";
    case ExampleKind::random_stable: return "random-stable";
    case ExampleKind::laplacian_grid: return "laplacian-grid";
  }
  return "unknown";
}

inline ExampleKind parse_example_kind(const std::string& s) {
  if (s == "jacobi" || s == "jac") return ExampleKind::jacobi;
  if (s == "gauss-seidel" || s == "gs") return ExampleKind::gauss_seidel;
  if (s == "random-stable") return ExampleKind::random_stable;
  if (s == "laplacian-grid") return ExampleKind::laplacian_grid;
  throw ConfigError("unknown example kind: " + s);
}

struct ExampleSpec {
  ExampleKind kind = ExampleKind::jacobi;
  Index size = 10;  // grid size N for grid kinds, order n for random-stable
  Index m = 1;
  Index p = 1;
  std::uint64_t seed = 0;
  double target_radius = 0.95;  // random-stable only
};

/// 5-point finite-difference Laplacian on the N x N interior grid.
inline SpMat laplacian_2d(Index N) {
  const Index n = N * N;
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(static_cast<std::size_t>(5 * n));
  for (Index i = 0; i < N; ++i) {
    for (Index j = 0; j < N; ++j) {
      const Index k = i * N + j;
      t.emplace_back(k, k, 4.0);
      if (i > 0) t.emplace_back(k, k - N, -1.0);
      if (i + 1 < N) t.emplace_back(k, k + N, -1.0);
      if (j > 0) t.emplace_back(k, k - 1, -1.0);
      if (j + 1 < N) t.emplace_back(k, k + 1, -1.0);
    }
  }
  SpMat S(n, n);
  S.setFromTriplets(t.begin(), t.end());
  S.makeCompressed();
  return S;
}

inline DiscreteLTISystem generate_example(const ExampleSpec& spec) {
  if (spec.m < 1 || spec.p < 1) throw ConfigError("m and p must be positive");
  Rng rng(spec.seed);
  DiscreteLTISystem sys;
  switch (spec.kind) {
    case ExampleKind::jacobi:
    case ExampleKind::gauss_seidel: {
      if (spec.size < 2) throw ConfigError("grid size must be at least 2");
      SpMat S = laplacian_2d(spec.size);
      SpMat L = S.triangularView<Eigen::StrictlyLower>();
      SpMat U = S.triangularView<Eigen::StrictlyUpper>();
      SpMat D(S.rows(), S.cols());
      D.setIdentity();
      D.diagonal() = S.diagonal();
      SpMat A, M;
      if (spec.kind == ExampleKind::jacobi) {
        A = L + U;
        M = D;
      } else {
        A = L;
        M = U + D;
      }
      const Index n = S.rows();
      Mat B = rng.uniform_matrix(n, spec.m);
      Mat C = rng.uniform_matrix(spec.p, n);
      sys = DiscreteLTISystem(A, B, C, M);
      break;
    }
    case ExampleKind::laplacian_grid: {
      if (spec.size < 2) throw ConfigError("grid size must be at least 2");
      SpMat S = laplacian_2d(spec.size);
      const Index n = S.rows();
      SpMat I(n, n);
      I.setIdentity();
      SpMat A = I - 0.125 * S;
      Mat B = rng.uniform_matrix(n, spec.m);
      Mat C = rng.uniform_matrix(spec.p, n);
      sys = DiscreteLTISystem(A, B, C);
      break;
    }
    case ExampleKind::random_stable: {
      if (spec.size < 1) throw ConfigError("order must be at least 1");
      if (!(spec.target_radius > 0.0)) throw ConfigError("target radius must be positive");
      const Index n = spec.size;
      Mat A = rng.normal_matrix(n, n);
      Mat B = rng.normal_matrix(n, spec.m);
      Mat C = rng.normal_matrix(spec.p, n);
      const double rho = spectral_radius(A);
      if (rho > 0.0) A *= spec.target_radius / rho;
      sys = DiscreteLTISystem(to_sparse(A), B, C);
      break;
    }
  }
  sys.kind = to_string(spec.kind);
  sys.seed = spec.seed;
  return sys;
}

}  // namespace dtmor
