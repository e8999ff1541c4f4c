#include <doctest.h>

#include <random>

#include "dknd/linalg.hpp"
#include "test_util.hpp"

using namespace dknd;
using dknd::testing::random_matrix;

TEST_CASE("pinv of small fixed matrices") {
  Matrix D(2, 2);
  D << 2, 0, 0, 4;
  Matrix expected(2, 2);
  expected << 0.5, 0, 0, 0.25;
  CHECK((pinv_full_row_rank(D) - expected).norm() < 1e-15);

  Matrix row(1, 3);
  row << 1, 0, 0;
  const Matrix p = pinv_full_row_rank(row);
  REQUIRE(p.rows() == 3);
  REQUIRE(p.cols() == 1);
  CHECK((p - Vector::Unit(3, 0)).norm() < 1e-15);
}

TEST_CASE("pinv matches an explicit 2x2 normal-equations oracle") {
  Matrix D(2, 3);
  D << 1, 1, 0, 0, 1, 1;
  // D D^T = [[2,1],[1,2]], det 3, inverse [[2,-1],[-1,2]]/3
  Matrix K_inv(2, 2);
  K_inv << 2.0 / 3, -1.0 / 3, -1.0 / 3, 2.0 / 3;
  Matrix oracle(3, 2);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 2; ++j) oracle(i, j) = D(0, i) * K_inv(0, j) + D(1, i) * K_inv(1, j);
  }
  CHECK((pinv_full_row_rank(D) - oracle).norm() < 1e-14);
}

TEST_CASE("pinv rejects rank-deficient and tall inputs") {
  Matrix D(2, 3);
  D << 1, 2, 3, 2, 4, 6;
  CHECK_THROWS_AS(pinv_full_row_rank(D), RankDeficient);
  CHECK_THROWS_AS(pinv_full_row_rank(Matrix::Ones(3, 2)), ShapeMismatch);
  try {
    pinv_full_row_rank(D);
  } catch (const RankDeficient& e) {
    CHECK(e.smallest_eigenvalue() < 1e-10);
  }
}

TEST_CASE("Moore-Penrose identity and agreement with the SVD pseudoinverse") {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 50; ++trial) {
    const int rows = 1 + trial % 6;
    const int cols = rows + trial % 5;
    const Matrix D = random_matrix(rows, cols, rng);
    const Matrix P = pinv_full_row_rank(D);
    CHECK((D * P * D - D).norm() / D.norm() < 1e-8);
    CHECK(testing::rel_err(P, svd_pseudoinverse(D)) < 1e-6);
  }
}

TEST_CASE("svd of fixed matrices") {
  const auto f = svd(Matrix::Identity(3, 3));
  CHECK((f.S - Vector::Ones(3)).norm() < 1e-15);

  Matrix D(2, 2);
  D << 3, 0, 0, 0;
  const auto g = svd(D);
  CHECK(g.S(0) == doctest::Approx(3.0));
  CHECK(g.S(1) == doctest::Approx(0.0));
  // U stays orthonormal even with a zero singular value
  CHECK((g.U.transpose() * g.U - Matrix::Identity(2, 2)).norm() < 1e-12);
}

TEST_CASE("svd reconstructs random matrices") {
  std::mt19937_64 rng(7);
  for (auto [r, c] : {std::pair{4, 6}, std::pair{6, 4}, std::pair{5, 5}, std::pair{1, 7}, std::pair{30, 12}}) {
    const Matrix D = random_matrix(r, c, rng);
    const auto f = svd(D);
    const Matrix recon = f.U * f.S.asDiagonal() * f.V.transpose();
    CHECK((recon - D).norm() < 1e-8);
    for (Eigen::Index i = 1; i < f.S.size(); ++i) CHECK(f.S(i - 1) >= f.S(i));
    const Eigen::Index k = f.S.size();
    CHECK((f.U.transpose() * f.U - Matrix::Identity(k, k)).norm() < 1e-10);
    CHECK((f.V.transpose() * f.V - Matrix::Identity(k, k)).norm() < 1e-10);
  }
}

TEST_CASE("svd rejects non-finite input") {
  Matrix D = Matrix::Ones(2, 2);
  D(0, 1) = std::nan("");
  CHECK_THROWS_AS(svd(D), NonFinite);
}

TEST_CASE("svd reports non-convergence under a tiny sweep budget") {
  std::mt19937_64 rng(5);
  CHECK_THROWS_AS(svd(random_matrix(8, 8, rng), 1), NoConvergence);
}

TEST_CASE("inverse_differential fixed cases") {
  const double eps = 1e-3;
  Matrix dK = Matrix::Zero(2, 2);
  dK(0, 0) = eps;
  Matrix expected = Matrix::Zero(2, 2);
  expected(0, 0) = -eps;
  CHECK((inverse_differential(Matrix::Identity(2, 2), dK) - expected).norm() < 1e-15);

  Matrix K_inv = Eigen::Vector2d(0.5, 0.25).asDiagonal();
  const Matrix d = inverse_differential(K_inv, Matrix::Identity(2, 2));
  CHECK(d(0, 0) == doctest::Approx(-0.25));
  CHECK(d(1, 1) == doctest::Approx(-0.0625));
  CHECK(d(0, 1) == 0.0);

  CHECK_THROWS_AS(inverse_differential(Matrix::Identity(2, 2), Matrix::Identity(3, 3)), ShapeMismatch);
}

TEST_CASE("inverse_differential matches finite differences of the inverse") {
  std::mt19937_64 rng(11);
  for (int n : {3, 6}) {
    for (int trial = 0; trial < 5; ++trial) {
      const Matrix K = random_matrix(n, n, rng) + n * Matrix::Identity(n, n);
      const Matrix K_inv = K.inverse();
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
          Matrix E = Matrix::Zero(n, n);
          E(i, j) = 1.0;
          // forward difference with h = 1e-6, and a central one for the property
          const double h = 1e-6;
          const Matrix fwd = ((K + h * E).inverse() - K_inv) / h;
          const Matrix central = ((K + h * E).inverse() - (K - h * E).inverse()) / (2 * h);
          const Matrix analytic = inverse_differential(K_inv, E);
          CHECK(testing::rel_err(analytic, fwd) < 1e-4);
          CHECK(testing::rel_err(analytic, central) < 1e-4);
        }
      }
    }
  }
}

TEST_CASE("sherman_morrison fixed cases") {
  const Matrix I = Matrix::Identity(2, 2);
  CHECK((sherman_morrison(I, Vector::Zero(2), Vector::Zero(2)) - I).norm() == 0.0);
  Matrix expected(2, 2);
  expected << 0.5, 0, 0, 1;
  const Vector e1 = Vector::Unit(2, 0);
  CHECK((sherman_morrison(I, e1, e1) - expected).norm() < 1e-15);
  // 1 + v^T u = 0
  CHECK_THROWS_AS(sherman_morrison(I, e1, Vector(-e1)), SingularUpdate);
}

TEST_CASE("sherman_morrison agrees with Gauss-Jordan inversion") {
  std::mt19937_64 rng(3);
  int checked = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const Matrix A = random_matrix(5, 5, rng) + 5 * Matrix::Identity(5, 5);
    const Vector u = random_matrix(5, 1, rng);
    const Vector v = random_matrix(5, 1, rng);
    const Matrix A_inv = testing::gauss_jordan_inverse(A);
    const Matrix updated = A + u * v.transpose();
    if (std::abs(1.0 + v.dot(A_inv * u)) < 1e-3) continue;
    const Matrix direct = testing::gauss_jordan_inverse(updated);
    const Matrix sm = sherman_morrison(A_inv, u, v);
    CHECK((sm - direct).norm() / direct.norm() < 1e-10);
    CHECK((sm * updated - Matrix::Identity(5, 5)).norm() < 1e-9);
    ++checked;
  }
  CHECK(checked > 90);
}

TEST_CASE("gram_inverse threshold") {
  Matrix D(1, 2);
  D << 1e-6, 0;  // D D^T = 1e-12
  CHECK_THROWS_AS(gram_inverse(D, kRankTolerance), RankDeficient);
  CHECK(gram_inverse(D, 1e-13)(0, 0) == doctest::Approx(1e12));
}
