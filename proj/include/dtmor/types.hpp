#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <complex>
#include <cstdlib>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>

namespace dtmor {

using Index = Eigen::Index;
using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using Complex = std::complex<double>;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;
using SpMat = Eigen::SparseMatrix<double>;
using CSpMat = Eigen::SparseMatrix<Complex>;

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Inconsistent matrix shapes or invalid arguments.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A matrix equation has no (numerically) unique solution, or a required
/// stability assumption fails.
class SolvabilityError : public Error {
 public:
  using Error::Error;
};

/// An iterative method hit its iteration cap or a shifted solve broke down.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Time horizon: a positive number of steps or infinity.
class Horizon {
 public:
  Horizon() = default;  // infinite

  static Horizon infinite() { return Horizon(); }
  static Horizon finite(long steps) {
    if (steps < 1) throw DimensionError("horizon must be >= 1");
    Horizon h;
    h.steps_ = steps;
    return h;
  }

  bool is_infinite() const { return !steps_.has_value(); }
  bool is_finite() const { return steps_.has_value(); }
  long steps() const {
    if (!steps_) throw DimensionError("infinite horizon has no step count");
    return *steps_;
  }
  std::string str() const { return steps_ ? std::to_string(*steps_) : "inf"; }

  bool operator==(const Horizon&) const = default;

 private:
  std::optional<long> steps_;
};

enum class Side { reach, obs };

inline const char* to_string(Side s) { return s == Side::reach ? "reach" : "obs"; }

/// States above which dense operations refuse to run. Override with the
/// DTMOR_DENSE_CAP environment variable.
inline Index dense_cap() {
  if (const char* env = std::getenv("DTMOR_DENSE_CAP")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end != env && v > 0) return static_cast<Index>(v);
  }
  return 2000;
}

inline void require_dense(Index n, const char* what) {
  if (n > dense_cap())
    throw DimensionError(std::string(what) + ": size " + std::to_string(n) +
                         " exceeds dense cap " + std::to_string(dense_cap()));
}

inline double nan() { return std::numeric_limits<double>::quiet_NaN(); }

/// Largest singular value.
inline double norm2(const Mat& X) {
  if (X.size() == 0) return 0.0;
  if (X.rows() == 1 || X.cols() == 1) return X.norm();
  if (std::min(X.rows(), X.cols()) <= 16) return Eigen::JacobiSVD<Mat>(X).singularValues()(0);
  return Eigen::BDCSVD<Mat>(X).singularValues()(0);
}

/// Largest absolute eigenvalue of a symmetric matrix (its 2-norm).
inline double sym_norm2(const Mat& X) {
  if (X.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Mat> es(X, Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

inline Mat symmetrize(const Mat& X) { return 0.5 * (X + X.transpose()); }

/// Spectral radius of a dense square matrix.
inline double spectral_radius(const Mat& A) {
  if (A.size() == 0) return 0.0;
  Eigen::EigenSolver<Mat> es(A, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace dtmor
