#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dknd/errors.hpp"
#include "dknd/types.hpp"

namespace dknd {

/// Absolute floor on the smallest eigenvalue of D*D^T for a full-row-rank D.
inline constexpr double kRankTolerance = 1e-10;

template <typename Scalar>
struct SvdFactors {
  MatrixX<Scalar> U;  ///< left singular vectors, thin
  VectorX<Scalar> S;  ///< nonincreasing, >= 0
  MatrixX<Scalar> V;  ///< right singular vectors, thin
};

/// Inverse of the Gram matrix D*D^T. Throws RankDeficient when the smallest
/// eigenvalue is at or below `tol`.
template <typename Derived>
MatrixX<typename Derived::Scalar> gram_inverse(const Eigen::MatrixBase<Derived>& D,
                                               double tol = kRankTolerance) {
  using Scalar = typename Derived::Scalar;
  const MatrixX<Scalar> K = D * D.transpose();
  Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> eig(K, Eigen::EigenvaluesOnly);
  const Scalar smallest = K.rows() == 0 ? Scalar(0) : eig.eigenvalues().minCoeff();
  if (!(smallest > Scalar(tol))) {
    throw RankDeficient(static_cast<double>(smallest),
                        "Gram matrix is numerically singular (smallest eigenvalue " +
                            std::to_string(static_cast<double>(smallest)) + ")");
  }
  return K.llt().solve(MatrixX<Scalar>::Identity(K.rows(), K.cols()));
}

/// Moore-Penrose inverse of a full-row-rank matrix through the normal
/// equations, D^T (D D^T)^{-1}.
template <typename Derived>
MatrixX<typename Derived::Scalar> pinv_full_row_rank(const Eigen::MatrixBase<Derived>& D,
                                                     double tol = kRankTolerance) {
  if (D.rows() > D.cols()) {
    throw ShapeMismatch("pinv_full_row_rank: matrix has more rows than columns");
  }
  return D.transpose() * gram_inverse(D, tol);
}

namespace detail {

// Fill near-zero columns of Q with unit vectors orthogonal to the rest.
template <typename Scalar>
void complete_orthonormal(MatrixX<Scalar>& Q, const std::vector<bool>& valid) {
  const Eigen::Index m = Q.rows();
  for (Eigen::Index j = 0; j < Q.cols(); ++j) {
    if (valid[static_cast<std::size_t>(j)]) continue;
    for (Eigen::Index e = 0; e < m; ++e) {
      VectorX<Scalar> cand = VectorX<Scalar>::Unit(m, e);
      for (Eigen::Index k = 0; k < Q.cols(); ++k) {
        if (k == j || (!valid[static_cast<std::size_t>(k)] && k > j)) continue;
        cand -= Q.col(k).dot(cand) * Q.col(k);
      }
      // second pass for numerical orthogonality
      for (Eigen::Index k = 0; k < Q.cols(); ++k) {
        if (k == j || (!valid[static_cast<std::size_t>(k)] && k > j)) continue;
        cand -= Q.col(k).dot(cand) * Q.col(k);
      }
      if (cand.norm() > Scalar(0.5)) {
        Q.col(j) = cand.normalized();
        break;
      }
    }
  }
}

// One-sided Jacobi on a matrix with rows >= cols.
template <typename Scalar>
SvdFactors<Scalar> jacobi_svd_tall(MatrixX<Scalar> W, int max_sweeps) {
  const Eigen::Index n = W.cols();
  MatrixX<Scalar> V = MatrixX<Scalar>::Identity(n, n);
  const Scalar eps = std::numeric_limits<Scalar>::epsilon();

  bool converged = n < 2;
  for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
    bool rotated = false;
    for (Eigen::Index p = 0; p + 1 < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const Scalar alpha = W.col(p).squaredNorm();
        const Scalar beta = W.col(q).squaredNorm();
        const Scalar gamma = W.col(p).dot(W.col(q));
        if (gamma == Scalar(0) || std::abs(gamma) <= eps * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const Scalar zeta = (beta - alpha) / (Scalar(2) * gamma);
        const Scalar t = (zeta >= Scalar(0) ? Scalar(1) : Scalar(-1)) /
                         (std::abs(zeta) + std::sqrt(Scalar(1) + zeta * zeta));
        const Scalar c = Scalar(1) / std::sqrt(Scalar(1) + t * t);
        const Scalar s = c * t;
        for (Eigen::Index i = 0; i < W.rows(); ++i) {
          const Scalar wp = W(i, p);
          const Scalar wq = W(i, q);
          W(i, p) = c * wp - s * wq;
          W(i, q) = s * wp + c * wq;
        }
        for (Eigen::Index i = 0; i < n; ++i) {
          const Scalar vp = V(i, p);
          const Scalar vq = V(i, q);
          V(i, p) = c * vp - s * vq;
          V(i, q) = s * vp + c * vq;
        }
      }
    }
    converged = !rotated;
  }
  if (!converged) {
    throw NoConvergence("svd: one-sided Jacobi did not converge in " +
                        std::to_string(max_sweeps) + " sweeps");
  }

  VectorX<Scalar> norms = W.colwise().norm().transpose();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return norms(a) > norms(b); });

  SvdFactors<Scalar> out;
  out.U.resize(W.rows(), n);
  out.S.resize(n);
  out.V.resize(n, n);
  const Scalar cutoff = norms.size() ? norms.maxCoeff() * eps * Scalar(W.rows()) : Scalar(0);
  std::vector<bool> valid(static_cast<std::size_t>(n));
  for (Eigen::Index k = 0; k < n; ++k) {
    const Eigen::Index j = order[static_cast<std::size_t>(k)];
    out.S(k) = norms(j);
    out.V.col(k) = V.col(j);
    const bool ok = norms(j) > cutoff && norms(j) > Scalar(0);
    valid[static_cast<std::size_t>(k)] = ok;
    out.U.col(k) = ok ? VectorX<Scalar>(W.col(j) / norms(j)) : VectorX<Scalar>::Zero(W.rows());
  }
  complete_orthonormal(out.U, valid);
  return out;
}

}  // namespace detail

/// Thin SVD by one-sided Jacobi rotations. Throws NoConvergence after
/// `max_sweeps` sweeps without reaching orthogonality.
template <typename Derived>
SvdFactors<typename Derived::Scalar> svd(const Eigen::MatrixBase<Derived>& D,
                                         int max_sweeps = 200) {
  using Scalar = typename Derived::Scalar;
  if (!D.allFinite()) throw NonFinite("svd: input has non-finite entries");
  if (D.rows() >= D.cols()) return detail::jacobi_svd_tall<Scalar>(D, max_sweeps);
  auto t = detail::jacobi_svd_tall<Scalar>(D.transpose(), max_sweeps);
  return {std::move(t.V), std::move(t.S), std::move(t.U)};
}

/// Pseudoinverse V diag(1/S) U^T from the SVD; singular values below
/// rel_cutoff * S_max are treated as zero.
template <typename Derived>
MatrixX<typename Derived::Scalar> svd_pseudoinverse(const Eigen::MatrixBase<Derived>& D,
                                                    double rel_cutoff = 1e-12) {
  using Scalar = typename Derived::Scalar;
  const auto f = svd(D);
  VectorX<Scalar> inv = VectorX<Scalar>::Zero(f.S.size());
  const Scalar cut = f.S.size() ? f.S(0) * Scalar(rel_cutoff) : Scalar(0);
  for (Eigen::Index i = 0; i < f.S.size(); ++i) {
    if (f.S(i) > cut) inv(i) = Scalar(1) / f.S(i);
  }
  return f.V * inv.asDiagonal() * f.U.transpose();
}

/// First-order change of K^{-1} under the perturbation dK: -K^{-1} dK K^{-1}.
template <typename D1, typename D2>
MatrixX<typename D1::Scalar> inverse_differential(const Eigen::MatrixBase<D1>& K_inv,
                                                  const Eigen::MatrixBase<D2>& dK) {
  if (K_inv.rows() != K_inv.cols() || dK.rows() != K_inv.rows() || dK.cols() != K_inv.cols()) {
    throw ShapeMismatch("inverse_differential: K_inv and dK must be square with equal shape");
  }
  return -(K_inv * dK * K_inv);
}

/// Inverse of (A + u v^T) given A^{-1}.
template <typename D1, typename D2, typename D3>
MatrixX<typename D1::Scalar> sherman_morrison(const Eigen::MatrixBase<D1>& A_inv,
                                              const Eigen::MatrixBase<D2>& u,
                                              const Eigen::MatrixBase<D3>& v) {
  using Scalar = typename D1::Scalar;
  if (A_inv.rows() != A_inv.cols() || u.cols() != 1 || v.cols() != 1 ||
      u.rows() != A_inv.rows() || v.rows() != A_inv.rows()) {
    throw ShapeMismatch("sherman_morrison: expected square A_inv and matching column vectors");
  }
  const VectorX<Scalar> Au = A_inv * u;
  const Eigen::Matrix<Scalar, 1, Eigen::Dynamic> vA = v.transpose() * A_inv;
  const Scalar denom = Scalar(1) + v.dot(Au);
  if (!(std::abs(denom) > Scalar(1e-12))) {
    throw SingularUpdate("sherman_morrison: 1 + v^T A^{-1} u vanishes");
  }
  return A_inv - (Au * vA) / denom;
}

}  // namespace dknd
