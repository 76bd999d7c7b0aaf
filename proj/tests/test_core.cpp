// System model, Matrix Market I/O and dense Stein solvers.

#include <gtest/gtest.h>

#include <filesystem>
#include <numbers>

#include <unsupported/Eigen/KroneckerProduct>

#include "dtmor/dtmor.hpp"

using namespace dtmor;
namespace fs = std::filesystem;

namespace {

double rel_err(const Mat& X, const Mat& ref) { return (X - ref).norm() / std::max(ref.norm(), 1e-300); }

Mat mat(std::initializer_list<std::initializer_list<double>> rows) {
  Mat X(static_cast<Index>(rows.size()), static_cast<Index>(rows.begin()->size()));
  Index i = 0;
  for (const auto& r : rows) {
    Index j = 0;
    for (double v : r) X(i, j++) = v;
    ++i;
  }
  return X;
}

DiscreteLTISystem scalar_system(double a, double b = 1.0, double c = 1.0) {
  return build_system(mat({{a}}), mat({{b}}), mat({{c}}));
}

DiscreteLTISystem random_system(Index n, Index m, Index p, std::uint64_t seed, double radius = 0.9) {
  ExampleSpec spec;
  spec.kind = ExampleKind::random_stable;
  spec.size = n;
  spec.m = m;
  spec.p = p;
  spec.seed = seed;
  spec.target_radius = radius;
  return generate_example(spec);
}

DiscreteLTISystem grid_system(ExampleKind kind, Index N, Index m, Index p, std::uint64_t seed) {
  ExampleSpec spec;
  spec.kind = kind;
  spec.size = N;
  spec.m = m;
  spec.p = p;
  spec.seed = seed;
  return generate_example(spec);
}

// Plain loop over the definition, no doubling.
Mat brute_tl_sum(const Mat& A, const Mat& L, const Mat& Ah, const Mat& R, long tau) {
  Mat X = Mat::Zero(A.rows(), Ah.rows());
  Mat Lj = L, Rj = R;
  for (long j = 0; j < tau; ++j) {
    X += Lj * Rj.transpose();
    Lj = A * Lj;
    Rj = Ah * Rj;
  }
  return X;
}

// vec(X) = (I - Ahat (x) A)^{-1} vec(W)  for  A X Ahat^T - X + W = 0.
Mat kron_stein(const Mat& A, const Mat& Ah, const Mat& W) {
  const Index n = A.rows(), r = Ah.rows();
  Mat K = Mat::Identity(n * r, n * r) - Mat(Eigen::kroneckerProduct(Ah, A));
  Vec w = Eigen::Map<const Vec>(W.data(), n * r);
  Vec x = K.fullPivLu().solve(w);
  return Eigen::Map<Mat>(x.data(), n, r);
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("dtmor_test_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                        "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

// ---------------------------------------------------------------- system

TEST(System, ScalarConstruction) {
  auto sys = scalar_system(0.5);
  EXPECT_EQ(sys.n(), 1);
  EXPECT_EQ(sys.m(), 1);
  EXPECT_EQ(sys.p(), 1);
  EXPECT_FALSE(sys.has_mass());
}

TEST(System, DimensionMismatch) {
  EXPECT_THROW(build_system(Mat::Identity(2, 2), Mat::Ones(3, 1), Mat::Ones(1, 2)), DimensionError);
  EXPECT_THROW(build_system(Mat::Identity(2, 2), Mat::Ones(2, 1), Mat::Ones(1, 3)), DimensionError);
  EXPECT_THROW(build_system(Mat::Ones(2, 3), Mat::Ones(2, 1), Mat::Ones(1, 2)), DimensionError);
  EXPECT_THROW(build_system(Mat::Identity(2, 2), Mat::Ones(2, 1), Mat::Ones(1, 2), Mat::Identity(3, 3)),
               DimensionError);
}

TEST(System, GeneralizedDiagonalMass) {
  auto sys = build_system(Mat::Identity(2, 2), mat({{1}, {1}}), mat({{1, 0}}), 2.0 * Mat::Identity(2, 2));
  EXPECT_EQ(sys.n(), 2);
  EXPECT_TRUE(sys.has_mass());
  EXPECT_NEAR(sys.Bbar()(0, 0), 0.5, 1e-15);
  EXPECT_NEAR(impulse_response(sys, 3)(0, 0), 0.5 * 0.25, 1e-15);
}

TEST(System, SingularMassRejected) {
  Mat M = Mat::Zero(2, 2);
  M(0, 0) = 1.0;
  EXPECT_THROW(build_system(Mat::Identity(2, 2), Mat::Ones(2, 1), Mat::Ones(1, 2), M), SolvabilityError);
}

TEST(System, ImpulseResponseZeroAtOrigin) {
  auto sys = random_system(5, 2, 3, 7);
  Mat h0 = impulse_response(sys, 0);
  EXPECT_EQ(h0.rows(), 3);
  EXPECT_EQ(h0.cols(), 2);
  EXPECT_EQ(h0.norm(), 0.0);
  EXPECT_THROW(impulse_response(sys, -1), DimensionError);
}

TEST(System, ImpulseResponseMatchesDensePower) {
  auto sys = random_system(8, 2, 2, 11);
  Mat A = Mat(sys.A());
  Mat ref = sys.C() * A * A * A * A * sys.B();
  EXPECT_LT(rel_err(impulse_response(sys, 5), ref), 1e-12);
}

TEST(System, SimulateScalarImpulse) {
  auto sys = scalar_system(0.5);
  auto tr = simulate(sys, impulse_input(1, 3), 3);
  ASSERT_EQ(tr.y.cols(), 4);
  EXPECT_DOUBLE_EQ(tr.y(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(tr.y(0, 1), 1.0);
  EXPECT_DOUBLE_EQ(tr.y(0, 2), 0.5);
  EXPECT_DOUBLE_EQ(tr.y(0, 3), 0.25);
}

TEST(System, SimulateZeroInput) {
  auto sys = random_system(6, 2, 2, 3);
  auto tr = simulate(sys, Mat::Zero(2, 21), 20);
  EXPECT_EQ(tr.y.norm(), 0.0);
}

TEST(System, SimulateMatchesConvolution) {
  auto sys = random_system(10, 3, 2, 5);
  const long K = 50;
  Rng rng(99);
  Mat u = rng.normal_matrix(3, K + 1);
  auto tr = simulate(sys, u, K);
  // h(j) from explicit dense powers.
  Mat A = Mat(sys.A());
  std::vector<Mat> h(K + 1);
  h[0] = Mat::Zero(2, 3);
  Mat P = Mat::Identity(10, 10);
  for (long j = 1; j <= K; ++j) {
    h[j] = sys.C() * P * sys.B();
    P = A * P;
  }
  Mat yref = Mat::Zero(2, K + 1);
  for (long k = 0; k <= K; ++k)
    for (long j = 0; j <= k; ++j) yref.col(k) += h[k - j] * u.col(j);
  EXPECT_LT(rel_err(tr.y, yref), 1e-10);
}

TEST(System, GeneralizedSimulationMatchesEliminated) {
  auto gen = grid_system(ExampleKind::gauss_seidel, 4, 2, 2, 1);
  auto std_sys = build_system(gen.dense_Abar(), gen.Bbar(), gen.C());
  Rng rng(4);
  Mat u = rng.normal_matrix(2, 31);
  EXPECT_LT(rel_err(simulate(gen, u, 30).y, simulate(std_sys, u, 30).y), 1e-12);
}

TEST(Examples, JacobiStructure) {
  auto sys = grid_system(ExampleKind::jacobi, 3, 1, 1, 0);
  EXPECT_EQ(sys.n(), 9);
  ASSERT_TRUE(sys.M());
  Mat M = Mat(*sys.M());
  EXPECT_EQ((M - 4.0 * Mat::Identity(9, 9)).norm(), 0.0);
  EXPECT_EQ(Mat(sys.A()).diagonal().norm(), 0.0);
}

TEST(Examples, JacobiAndGaussSeidelRadius) {
  // Independent dense eigenvalue computation of the iteration matrices.
  auto jac = grid_system(ExampleKind::jacobi, 3, 1, 1, 0);
  auto gs = grid_system(ExampleKind::gauss_seidel, 3, 1, 1, 0);
  Eigen::EigenSolver<Mat> ej(jac.dense_Abar()), eg(gs.dense_Abar());
  const double rj = ej.eigenvalues().cwiseAbs().maxCoeff();
  const double rg = eg.eigenvalues().cwiseAbs().maxCoeff();
  EXPECT_NEAR(rj, std::cos(std::numbers::pi / 4), 1e-12);
  EXPECT_NEAR(rg, rj * rj, 1e-10);
}

TEST(Examples, RandomStableRadiusAndSeeding) {
  auto a = random_system(20, 2, 3, 42, 0.95);
  auto b = random_system(20, 2, 3, 42, 0.95);
  auto c = random_system(20, 2, 3, 43, 0.95);
  EXPECT_NEAR(spectral_radius(Mat(a.A())), 0.95, 1e-10);
  EXPECT_EQ((Mat(a.A()) - Mat(b.A())).norm(), 0.0);
  EXPECT_EQ((a.B() - b.B()).norm(), 0.0);
  EXPECT_GT((a.B() - c.B()).norm(), 0.0);
}

TEST(Examples, LaplacianGridIsStable) {
  auto sys = grid_system(ExampleKind::laplacian_grid, 5, 1, 1, 0);
  EXPECT_EQ(sys.n(), 25);
  EXPECT_LT(spectral_radius(sys.dense_Abar()), 1.0);
}

TEST(Examples, InvalidSpec) {
  ExampleSpec spec;
  spec.m = 0;
  EXPECT_THROW(generate_example(spec), ConfigError);
  EXPECT_THROW(parse_example_kind("disc"), ConfigError);
}

// -------------------------------------------------------------------- io

TEST(Io, ScalarRoundTrip) {
  TempDir tmp;
  auto sys = scalar_system(0.5, 2.0, -3.0);
  write_system(sys, tmp.path / "s");
  auto back = read_system(tmp.path / "s");
  EXPECT_EQ(Mat(back.A()), Mat(sys.A()));
  EXPECT_EQ(back.B(), sys.B());
  EXPECT_EQ(back.C(), sys.C());
  EXPECT_FALSE(back.has_mass());
}

TEST(Io, BitExactValues) {
  TempDir tmp;
  Mat A = mat({{0.1, -0.0}, {1e-300, 1.0 / 3.0}});
  Mat B = mat({{std::numbers::pi}, {4.9e-324}});
  Mat C = mat({{-2.5e17, 7.0}});
  auto sys = build_system(A, B, C);
  write_system(sys, tmp.path / "s");
  auto back = read_system(tmp.path / "s");
  EXPECT_EQ(back.B(), B);
  EXPECT_EQ(back.C(), C);
  EXPECT_EQ(Mat(back.A())(1, 1), 1.0 / 3.0);
  EXPECT_EQ(Mat(back.A())(1, 0), 1e-300);
}

TEST(Io, JacobiNonzerosPreserved) {
  TempDir tmp;
  const Index N = 10;
  auto sys = grid_system(ExampleKind::jacobi, N, 2, 2, 5);
  write_system(sys, tmp.path / "jac");
  auto back = read_system(tmp.path / "jac");
  // Each interior grid edge contributes two off-diagonal entries; 2 N (N-1) edges.
  const Index expected = 2 * 2 * N * (N - 1);
  EXPECT_EQ(back.A().nonZeros(), expected);
  EXPECT_EQ((Mat(back.A()) - Mat(sys.A())).norm(), 0.0);
  ASSERT_TRUE(back.M());
  EXPECT_EQ((Mat(*back.M()) - Mat(*sys.M())).norm(), 0.0);
  EXPECT_EQ(back.B(), sys.B());
}

TEST(Io, ManifestDimensionDisagreement) {
  TempDir tmp;
  auto sys = random_system(4, 1, 1, 2);
  write_system(sys, tmp.path / "s");
  std::string manifest = detail::read_text_file(tmp.path / "s" / "manifest.json");
  auto j = nlohmann::json::parse(manifest);
  j["n"] = 5;
  detail::write_text_file(tmp.path / "s" / "manifest.json", j.dump());
  EXPECT_THROW(read_system(tmp.path / "s"), DimensionError);
}

TEST(Io, MissingDirectoryAndMalformedFiles) {
  TempDir tmp;
  EXPECT_THROW(read_system(tmp.path / "nope"), IoError);
  EXPECT_THROW(parse_mtx("not a header\n1 1 1\n"), IoError);
  EXPECT_THROW(parse_mtx("%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n"), IoError);
  EXPECT_THROW(parse_mtx("%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n"), IoError);
}

TEST(Io, SymmetricCoordinateExpanded) {
  auto d = parse_mtx(
      "%%MatrixMarket matrix coordinate real symmetric\n% comment\n2 2 2\n1 1 3.0\n2 1 -1.5\n");
  Mat X = Mat(d.to_sparse_matrix());
  EXPECT_EQ(X(0, 1), -1.5);
  EXPECT_EQ(X(1, 0), -1.5);
  EXPECT_EQ(X(0, 0), 3.0);
}

TEST(Io, DenseArrayRoundTrip) {
  TempDir tmp;
  Rng rng(1);
  Mat X = rng.normal_matrix(3, 4);
  write_mtx(tmp.path / "x.mtx", X);
  EXPECT_EQ(read_mtx_dense(tmp.path / "x.mtx"), X);
}

TEST(Io, AtomicDirectoryReplace) {
  TempDir tmp;
  const fs::path dir = tmp.path / "out";
  write_directory_atomically(dir, [](const fs::path& d) { detail::write_text_file(d / "old.txt", "1"); });
  write_directory_atomically(dir, [](const fs::path& d) { detail::write_text_file(d / "new.txt", "2"); });
  EXPECT_FALSE(fs::exists(dir / "old.txt"));
  EXPECT_TRUE(fs::exists(dir / "new.txt"));
  // A failing fill leaves the previous content untouched.
  EXPECT_THROW(write_directory_atomically(dir, [](const fs::path&) { throw IoError("boom"); }), IoError);
  EXPECT_TRUE(fs::exists(dir / "new.txt"));
}

// ----------------------------------------------------------- dense stein

TEST(DenseStein, ScalarGeometricSeries) {
  EXPECT_NEAR(solve_stein_dense(mat({{0.5}}), mat({{1.0}}))(0, 0), 4.0 / 3.0, 1e-14);
}

TEST(DenseStein, DiagonalClosedForm) {
  Mat A = Mat::Zero(2, 2);
  A.diagonal() << 0.5, -0.5;
  Mat B = mat({{1}, {1}});
  Mat X = solve_stein_dense(A, B * B.transpose());
  Mat ref = mat({{4.0 / 3.0, 0.8}, {0.8, 4.0 / 3.0}});
  EXPECT_LT(rel_err(X, ref), 1e-14);
}

TEST(DenseStein, NilpotentCase) {
  Rng rng(2);
  Mat G = rng.normal_matrix(4, 4);
  Mat W = G + G.transpose();
  EXPECT_LT(rel_err(solve_stein_dense(Mat::Zero(4, 4), W), W), 1e-15);
}

TEST(DenseStein, BackendsAgreeWithKronecker) {
  auto sys = random_system(12, 2, 2, 8, 0.97);
  Mat A = Mat(sys.A());
  Mat W = sys.B() * sys.B().transpose();
  Mat ref = kron_stein(A, A, W);
  EXPECT_LT(rel_err(solve_stein_dense(A, W, SteinBackend::smith), ref), 1e-10);
  EXPECT_LT(rel_err(solve_stein_dense(A, W, SteinBackend::schur), ref), 1e-10);
  EXPECT_LT(rel_err(solve_stein_dense(A, W), ref), 1e-10);
}

TEST(DenseStein, UnstableViaSchur) {
  // rho(A) > 1 but no eigenvalue product equals one: only the Schur path solves it.
  Mat A = Mat::Zero(2, 2);
  A.diagonal() << 2.0, 0.3;
  Mat W = Mat::Identity(2, 2);
  Mat X = solve_stein_dense(A, W);
  EXPECT_LT(rel_err(X, kron_stein(A, A, W)), 1e-12);
  EXPECT_THROW(solve_stein_dense(A, W, SteinBackend::smith), SolvabilityError);
}

TEST(DenseStein, SolvabilityViolation) {
  Mat A = Mat::Zero(2, 2);
  A.diagonal() << 2.0, 0.5;  // 2 * 0.5 = 1
  EXPECT_THROW(solve_stein_dense(A, Mat::Identity(2, 2)), SolvabilityError);
  EXPECT_THROW(solve_stein_dense(mat({{1.0}}), mat({{1.0}})), SolvabilityError);
}

TEST(DenseStein, DimensionChecks) {
  EXPECT_THROW(solve_stein_dense(Mat::Zero(2, 3), Mat::Zero(2, 2)), DimensionError);
  EXPECT_THROW(solve_stein_dense(Mat::Zero(2, 2), Mat::Zero(3, 3)), DimensionError);
}

TEST(TlGramian, ScalarTwoTerms) {
  auto g = tl_gramian_dense(scalar_system(0.5), Horizon::finite(2), Side::reach);
  EXPECT_NEAR(g.gramian(0, 0), 1.25, 1e-15);
  EXPECT_NEAR(g.tl_term(0, 0), 0.25, 1e-15);
  const double a = 0.5, p = g.gramian(0, 0), f = g.tl_term(0, 0);
  EXPECT_NEAR(a * p * a - p + 1.0 - f * f, 0.0, 1e-15);
}

TEST(TlGramian, ScalarUnitPole) {
  auto g = tl_gramian_dense(scalar_system(1.0), Horizon::finite(3), Side::reach);
  EXPECT_NEAR(g.gramian(0, 0), 3.0, 1e-14);
  EXPECT_NEAR(g.tl_term(0, 0), 1.0, 1e-15);
  EXPECT_THROW(tl_gramian_dense(scalar_system(1.0), Horizon::infinite(), Side::reach), SolvabilityError);
}

TEST(TlGramian, SingleStep) {
  auto sys = random_system(7, 2, 3, 13);
  auto g = tl_gramian_dense(sys, Horizon::finite(1), Side::reach);
  EXPECT_LT(rel_err(g.gramian, sys.B() * sys.B().transpose()), 1e-15);
  EXPECT_LT(rel_err(g.tl_term, Mat(sys.A()) * sys.B()), 1e-15);
  auto q = tl_gramian_dense(sys, Horizon::finite(1), Side::obs);
  EXPECT_LT(rel_err(q.gramian, sys.C().transpose() * sys.C()), 1e-15);
  EXPECT_LT(rel_err(q.tl_term, Mat((sys.C() * Mat(sys.A())).transpose())), 1e-15);
}

TEST(TlGramian, BruteForceEquivalence) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    auto sys = random_system(30 + 20 * static_cast<Index>(seed), 2, 3, seed, 0.99);
    Mat A = Mat(sys.A());
    for (long tau : {1L, 5L, 50L}) {
      auto P = tl_gramian_dense(sys, Horizon::finite(tau), Side::reach);
      auto Q = tl_gramian_dense(sys, Horizon::finite(tau), Side::obs);
      EXPECT_LT(rel_err(P.gramian, brute_tl_sum(A, sys.B(), A, sys.B(), tau)), 1e-10) << seed << " " << tau;
      Mat At = A.transpose(), Ct = sys.C().transpose();
      EXPECT_LT(rel_err(Q.gramian, brute_tl_sum(At, Ct, At, Ct, tau)), 1e-10) << seed << " " << tau;
    }
  }
}

TEST(TlGramian, SymmetricAndMonotone) {
  auto sys = random_system(15, 2, 2, 21, 0.9);
  Mat prev = tl_gramian_dense(sys, Horizon::finite(1), Side::reach).gramian;
  for (long tau = 2; tau <= 12; ++tau) {
    Mat cur = tl_gramian_dense(sys, Horizon::finite(tau), Side::reach).gramian;
    EXPECT_LT((cur - cur.transpose()).norm(), 1e-14 * cur.norm());
    Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(cur - prev));
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-12 * cur.norm());
    prev = cur;
  }
}

TEST(TlGramian, GeometricConvergenceToInfinite) {
  auto sys = random_system(10, 1, 1, 31, 0.8);
  const Mat Pinf = tl_gramian_dense(sys, Horizon::infinite(), Side::reach).gramian;
  const double rho = spectral_radius(Mat(sys.A()));
  // Ratio test: the scaled gap e(tau) / rho^{2 tau} stays bounded.
  double first = 0.0;
  for (long tau : {5L, 10L, 20L, 40L}) {
    const double gap = (Pinf - tl_gramian_dense(sys, Horizon::finite(tau), Side::reach).gramian).norm();
    const double scaled = gap / std::pow(rho, 2.0 * tau);
    if (first == 0.0) first = scaled;
    EXPECT_LT(scaled, 1e3 * first) << tau;
  }
}

TEST(TlGramian, GeneralizedMatchesEliminated) {
  auto gen = grid_system(ExampleKind::gauss_seidel, 5, 2, 3, 9);
  auto std_sys = build_system(gen.dense_Abar(), gen.Bbar(), gen.C());
  for (Horizon tau : {Horizon::finite(17), Horizon::infinite()}) {
    for (Side side : {Side::reach, Side::obs}) {
      auto a = tl_gramian_dense(gen, tau, side);
      auto b = tl_gramian_dense(std_sys, tau, side);
      EXPECT_LT(rel_err(a.gramian, b.gramian), 1e-10);
      if (tau.is_finite()) {
        EXPECT_LT(rel_err(a.tl_term, b.tl_term), 1e-10);
      }
    }
  }
}

TEST(TlGramian, DenseCapEnforced) {
  ::setenv("DTMOR_DENSE_CAP", "10", 1);
  auto sys = random_system(12, 1, 1, 1);
  EXPECT_THROW(tl_gramian_dense(sys, Horizon::finite(3), Side::reach), DimensionError);
  ::unsetenv("DTMOR_DENSE_CAP");
  EXPECT_NO_THROW(tl_gramian_dense(sys, Horizon::finite(3), Side::reach));
}

TEST(TlSumDoubling, MatchesLoop) {
  Rng rng(5);
  Mat A = 0.3 * rng.normal_matrix(6, 6);
  Mat G = rng.normal_matrix(6, 2);
  Mat W = G * G.transpose();
  for (long tau : {1L, 2L, 3L, 7L, 64L, 100L}) {
    auto [S, Ap] = tl_sum_doubling(A, W, tau);
    Mat ref = Mat::Zero(6, 6), Aj = Mat::Identity(6, 6);
    for (long j = 0; j < tau; ++j) {
      ref += Aj * W * Aj.transpose();
      Aj = A * Aj;
    }
    EXPECT_LT(rel_err(S, ref), 1e-12) << tau;
    EXPECT_LT(rel_err(Ap, Aj), 1e-12) << tau;
  }
}

TEST(CrossSylvester, SelfCrossEqualsGramian) {
  auto sys = scalar_system(0.5);
  auto Y = solve_cross_sylvester(sys, sys, Horizon::finite(2), Side::reach);
  EXPECT_NEAR(Y.X(0, 0), 1.25, 1e-14);
}

TEST(CrossSylvester, NilpotentReducedSide) {
  auto Y = solve_cross_sylvester(scalar_system(0.5), scalar_system(0.0), Horizon::finite(2), Side::reach);
  EXPECT_NEAR(Y.X(0, 0), 1.0, 1e-14);
}

TEST(CrossSylvester, BruteForceBothSides) {
  auto sys = random_system(12, 2, 3, 17, 0.95);
  auto rom = random_system(4, 2, 3, 18, 0.7);
  Mat A = Mat(sys.A()), Ah = Mat(rom.A());
  for (Horizon tau : {Horizon::finite(30), Horizon::infinite()}) {
    auto Y = solve_cross_sylvester(sys, rom, tau, Side::reach);
    auto Z = solve_cross_sylvester(sys, rom, tau, Side::obs);
    const long steps = tau.is_finite() ? tau.steps() : 4000;
    Mat Yref = brute_tl_sum(A, sys.B(), Ah, rom.B(), steps);
    Mat Zref = brute_tl_sum(A.transpose(), sys.C().transpose(), Ah.transpose(), rom.C().transpose(), steps);
    EXPECT_LT(rel_err(Y.X, Yref), 1e-10);
    EXPECT_LT(rel_err(Z.X, Zref), 1e-10);
    // Trace identity of the h2 inner product: tr(C Y Chat^T) = tr(B^T Z Bhat).
    const double t1 = (sys.C() * Y.X * rom.C().transpose()).trace();
    const double t2 = (sys.B().transpose() * Z.X * rom.B()).trace();
    EXPECT_NEAR(t1, t2, 1e-10 * std::abs(t1));
  }
}

TEST(CrossSylvester, GeneralizedFullSide) {
  auto gen = grid_system(ExampleKind::jacobi, 4, 2, 2, 3);
  auto std_sys = build_system(gen.dense_Abar(), gen.Bbar(), gen.C());
  auto rom = random_system(3, 2, 2, 4, 0.5);
  for (Side side : {Side::reach, Side::obs}) {
    auto a = solve_cross_sylvester(gen, rom, Horizon::finite(9), side);
    auto b = solve_cross_sylvester(std_sys, rom, Horizon::finite(9), side);
    EXPECT_LT(rel_err(a.X, b.X), 1e-10);
  }
}

TEST(CrossSylvester, SingularCaseFallsBackForFiniteHorizon) {
  // lambda * mu = 1 between full and reduced poles.
  Mat A = Mat::Zero(2, 2);
  A.diagonal() << 2.0, 0.1;
  auto sys = build_system(A, Mat::Ones(2, 1), Mat::Ones(1, 2));
  auto rom = scalar_system(0.5);
  auto Y = solve_cross_sylvester(sys, rom, Horizon::finite(6), Side::reach);
  EXPECT_TRUE(Y.direct_sum);
  EXPECT_LT(rel_err(Y.X, brute_tl_sum(A, Mat::Ones(2, 1), mat({{0.5}}), mat({{1.0}}), 6)), 1e-12);
  EXPECT_THROW(solve_cross_sylvester(sys, rom, Horizon::infinite(), Side::reach), SolvabilityError);
}

TEST(ProjectedTl, ScalarCases) {
  EXPECT_NEAR(solve_projected_tl(mat({{0.5}}), mat({{1}}), mat({{0.25}}))(0, 0), 1.25, 1e-14);
  EXPECT_NEAR(solve_projected_tl(mat({{0.5}}), mat({{1}}))(0, 0), 4.0 / 3.0, 1e-14);
  EXPECT_THROW(solve_projected_tl(mat({{1.1}}), mat({{1}})), SolvabilityError);
}
