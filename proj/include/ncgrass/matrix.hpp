#pragma once

// Small dense complex/real matrix kernels: the complex -> real block embedding,
// a cyclic Jacobi symmetric eigensolver and the PSD square roots built on it.
// Matrices handled here are tiny (at most a few dozen rows), so the routines
// favour robustness over asymptotic speed.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <string>
#include <vector>

#include "ncgrass/error.hpp"

namespace ncgrass {

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using RealMatrix = Eigen::MatrixXd;
using RealVector = Eigen::VectorXd;
using Index = Eigen::Index;

inline bool allFinite(const ComplexMatrix& m) { return m.allFinite(); }
inline bool allFinite(const RealMatrix& m) { return m.allFinite(); }

inline void requireFinite(const ComplexMatrix& m, const char* what) {
  if (!m.allFinite()) throw InvalidArgument(std::string(what) + ": non-finite entry");
}
inline void requireFinite(const RealMatrix& m, const char* what) {
  if (!m.allFinite()) throw InvalidArgument(std::string(what) + ": non-finite entry");
}

// ---------------------------------------------------------------------------
// Real embedding
// ---------------------------------------------------------------------------

/// Real 2p x 2q matrix [[A, -B], [B, A]] standing for the complex p x q matrix A + iB.
///
/// The embedding is a ring homomorphism, so products, transposes (which map to
/// conjugate transposes) and inverses of structured matrices stay structured.
class StructuredRealMatrix {
 public:
  StructuredRealMatrix() = default;
  StructuredRealMatrix(RealMatrix blockA, RealMatrix blockB) : a_(std::move(blockA)), b_(std::move(blockB)) {
    if (a_.rows() != b_.rows() || a_.cols() != b_.cols())
      throw InvalidArgument("StructuredRealMatrix: blocks must have equal shape");
  }

  [[nodiscard]] Index halfRows() const noexcept { return a_.rows(); }
  [[nodiscard]] Index halfCols() const noexcept { return a_.cols(); }
  [[nodiscard]] const RealMatrix& blockA() const noexcept { return a_; }
  [[nodiscard]] const RealMatrix& blockB() const noexcept { return b_; }

  [[nodiscard]] RealMatrix dense() const {
    const Index p = halfRows(), q = halfCols();
    RealMatrix out(2 * p, 2 * q);
    out.topLeftCorner(p, q) = a_;
    out.topRightCorner(p, q) = -b_;
    out.bottomLeftCorner(p, q) = b_;
    out.bottomRightCorner(p, q) = a_;
    return out;
  }

  /// Parse a dense matrix; any deviation from the block layout is rejected (tolerance 0).
  static StructuredRealMatrix fromDense(const RealMatrix& m) {
    if (m.rows() % 2 != 0 || m.cols() % 2 != 0)
      throw StructureError("structured matrix needs even dimensions, got " + std::to_string(m.rows()) + "x" +
                           std::to_string(m.cols()));
    const Index p = m.rows() / 2, q = m.cols() / 2;
    RealMatrix a = m.topLeftCorner(p, q);
    RealMatrix b = m.bottomLeftCorner(p, q);
    if (m.bottomRightCorner(p, q) != a || m.topRightCorner(p, q) != -b)
      throw StructureError("matrix does not have [[A,-B],[B,A]] block structure");
    return {std::move(a), std::move(b)};
  }

  /// Nearest structured matrix in Frobenius norm (averages the duplicated blocks).
  static StructuredRealMatrix project(const RealMatrix& m) {
    if (m.rows() % 2 != 0 || m.cols() % 2 != 0) throw StructureError("structured matrix needs even dimensions");
    const Index p = m.rows() / 2, q = m.cols() / 2;
    RealMatrix a = 0.5 * (m.topLeftCorner(p, q) + m.bottomRightCorner(p, q));
    RealMatrix b = 0.5 * (m.bottomLeftCorner(p, q) - m.topRightCorner(p, q));
    return {std::move(a), std::move(b)};
  }

  StructuredRealMatrix operator*(const StructuredRealMatrix& rhs) const {
    if (halfCols() != rhs.halfRows()) throw InvalidArgument("StructuredRealMatrix product: shape mismatch");
    return {a_ * rhs.a_ - b_ * rhs.b_, a_ * rhs.b_ + b_ * rhs.a_};
  }

  [[nodiscard]] StructuredRealMatrix transpose() const { return {a_.transpose(), -b_.transpose()}; }

  bool operator==(const StructuredRealMatrix& other) const {
    return a_.rows() == other.a_.rows() && a_.cols() == other.a_.cols() && a_ == other.a_ && b_ == other.b_;
  }

 private:
  RealMatrix a_;
  RealMatrix b_;
};

/// Largest absolute deviation of a dense 2p x 2q matrix from the [[A,-B],[B,A]] layout.
inline double structureResidual(const RealMatrix& m) {
  if (m.rows() % 2 != 0 || m.cols() % 2 != 0) return std::numeric_limits<double>::infinity();
  const Index p = m.rows() / 2, q = m.cols() / 2;
  const double diag = (m.topLeftCorner(p, q) - m.bottomRightCorner(p, q)).cwiseAbs().maxCoeff();
  const double off = (m.topRightCorner(p, q) + m.bottomLeftCorner(p, q)).cwiseAbs().maxCoeff();
  return std::max(diag, off);
}

inline StructuredRealMatrix embed(const ComplexMatrix& m) {
  requireFinite(m, "embed");
  return {m.real(), m.imag()};
}

inline RealMatrix embedDense(const ComplexMatrix& m) { return embed(m).dense(); }

inline ComplexMatrix unembed(const StructuredRealMatrix& s) {
  ComplexMatrix out(s.halfRows(), s.halfCols());
  out.real() = s.blockA();
  out.imag() = s.blockB();
  return out;
}

/// Dense overload; throws StructureError unless the layout is exact.
inline ComplexMatrix unembed(const RealMatrix& dense) { return unembed(StructuredRealMatrix::fromDense(dense)); }

// ---------------------------------------------------------------------------
// Symmetric eigendecomposition (cyclic Jacobi)
// ---------------------------------------------------------------------------

struct SymmetricEigen {
  RealVector values;   // descending
  RealMatrix vectors;  // orthonormal columns, vectors.col(i) pairs with values(i)
};

inline void requireSymmetric(const RealMatrix& a, const char* what) {
  if (a.rows() != a.cols()) throw InvalidArgument(std::string(what) + ": matrix must be square");
  requireFinite(a, what);
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw InvalidArgument(std::string(what) + ": matrix is not symmetric");
}

/// Eigen-decomposition of a real symmetric matrix by cyclic Jacobi rotations.
inline SymmetricEigen symEig(const RealMatrix& input, int maxSweeps = 100) {
  requireSymmetric(input, "symEig");
  const Index n = input.rows();
  RealMatrix a = 0.5 * (input + input.transpose());
  RealMatrix v = RealMatrix::Identity(n, n);
  const double frob = a.norm();

  auto offNorm = [&] {
    double s = 0.0;
    for (Index p = 0; p < n; ++p)
      for (Index q = p + 1; q < n; ++q) s += 2.0 * a(p, q) * a(p, q);
    return std::sqrt(s);
  };

  bool converged = false;
  for (int sweep = 0; sweep < maxSweeps; ++sweep) {
    if (offNorm() <= 1e-17 * frob) {
      converged = true;
      break;
    }
    for (Index p = 0; p < n; ++p) {
      for (Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        const double app = a(p, p), aqq = a(q, q);
        if (apq == 0.0) continue;
        // Entry too small to perturb either diagonal element: drop it.
        if (std::abs(apq) <= 1e-18 * (std::abs(app) + std::abs(aqq)) && sweep > 3) {
          a(p, q) = a(q, p) = 0.0;
          continue;
        }
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Index k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Index k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = a(q, p) = 0.0;
        for (Index k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  if (!converged && offNorm() > 1e-17 * frob)
    throw ConvergenceError("symEig: Jacobi iteration did not converge in " + std::to_string(maxSweeps) + " sweeps");

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index i, Index j) { return a(i, i) > a(j, j); });
  SymmetricEigen out{RealVector(n), RealMatrix(n, n)};
  for (Index i = 0; i < n; ++i) {
    out.values(i) = a(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(i)]);
    out.vectors.col(i) = v.col(order[static_cast<std::size_t>(i)]);
  }
  return out;
}

/// Near-singularity guard for inverse square roots: 1e-10 * trace(A) / n.
inline double nearSingularThreshold(const RealMatrix& a) {
  return 1e-10 * a.trace() / static_cast<double>(a.rows());
}

namespace detail {

template <class Fn>
RealMatrix spectralMap(const SymmetricEigen& eig, Fn&& fn) {
  const RealVector mapped = eig.values.unaryExpr(fn);
  RealMatrix r = eig.vectors * mapped.asDiagonal() * eig.vectors.transpose();
  return 0.5 * (r + r.transpose());
}

}  // namespace detail

/// Symmetric inverse square root A^{-1/2} of a positive definite matrix.
inline RealMatrix psdInvSqrt(const RealMatrix& a) {
  const SymmetricEigen eig = symEig(a);
  const double guard = nearSingularThreshold(a);
  const double lambdaMin = eig.values(eig.values.size() - 1);
  if (!(lambdaMin > guard))
    throw NearSingularError("psdInvSqrt: smallest eigenvalue " + std::to_string(lambdaMin) +
                            " is below the near-singularity threshold " + std::to_string(guard));
  return detail::spectralMap(eig, [](double l) { return 1.0 / std::sqrt(l); });
}

/// Symmetric PSD square root. Eigenvalues within the guard band below zero are clamped.
inline RealMatrix psdSqrt(const RealMatrix& a) {
  const SymmetricEigen eig = symEig(a);
  const double guard = std::abs(nearSingularThreshold(a));
  const double lambdaMin = eig.values(eig.values.size() - 1);
  if (lambdaMin < -guard)
    throw NearSingularError("psdSqrt: matrix is not positive semidefinite (eigenvalue " + std::to_string(lambdaMin) +
                            ")");
  return detail::spectralMap(eig, [](double l) { return std::sqrt(std::max(l, 0.0)); });
}

// ---------------------------------------------------------------------------
// Complex helpers built on the embedding
// ---------------------------------------------------------------------------

/// Singular values of a complex matrix, descending, length min(rows, cols).
///
/// Computed from the real-embedded Gram matrix, whose spectrum repeats each
/// eigenvalue of M^H M twice.
inline RealVector singularValues(const ComplexMatrix& m) {
  requireFinite(m, "singularValues");
  const Index k = std::min(m.rows(), m.cols());
  if (k == 0) return RealVector(0);
  const ComplexMatrix gram = m.rows() >= m.cols() ? ComplexMatrix(m.adjoint() * m) : ComplexMatrix(m * m.adjoint());
  const RealMatrix realGram = embedDense(gram);
  const SymmetricEigen eig = symEig(0.5 * (realGram + realGram.transpose()));
  RealVector out(k);
  for (Index i = 0; i < k; ++i) out(i) = std::sqrt(std::max(eig.values(2 * i), 0.0));
  return out;
}

/// Sum of singular values. Closed forms for 1x1 and 2x2, otherwise the general path.
inline double nuclearNorm(const ComplexMatrix& m) {
  if (m.rows() == 1 && m.cols() == 1) return std::abs(m(0, 0));
  if (m.rows() == 2 && m.cols() == 2) {
    // (s1 + s2)^2 = s1^2 + s2^2 + 2 s1 s2 = ||M||_F^2 + 2 |det M|
    const double det = std::abs(m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0));
    return std::sqrt(m.squaredNorm() + 2.0 * det);
  }
  return singularValues(m).sum();
}

/// Inverse square root of a Hermitian positive definite matrix, via the embedding.
inline ComplexMatrix hermitianInvSqrt(const ComplexMatrix& h) {
  const RealMatrix r = embedDense(h);
  return unembed(StructuredRealMatrix::project(psdInvSqrt(0.5 * (r + r.transpose()))));
}

/// Polar factor G (G^H G)^{-1/2}: the closest matrix with orthonormal columns.
inline ComplexMatrix orthonormalizeColumns(const ComplexMatrix& g) {
  if (g.cols() > g.rows()) throw InvalidArgument("orthonormalizeColumns: more columns than rows");
  return g * hermitianInvSqrt(g.adjoint() * g);
}

/// Orthonormal basis (n x k) of the dominant k-dimensional invariant subspace of a Hermitian matrix.
///
/// The real embedding doubles every eigenvalue; its top 2k eigenvectors [a; b]
/// map to complex vectors a + ib spanning the wanted subspace. A pivoted
/// Gram-Schmidt pass extracts k orthonormal vectors from those 2k spanning vectors.
inline ComplexMatrix hermitianDominantSubspace(const ComplexMatrix& h, Index k) {
  const Index n = h.rows();
  if (h.cols() != n || k < 1 || k > n) throw InvalidArgument("hermitianDominantSubspace: bad shape");
  const RealMatrix r = embedDense(h);
  const SymmetricEigen eig = symEig(0.5 * (r + r.transpose()));
  ComplexMatrix span(n, 2 * k);
  for (Index j = 0; j < 2 * k; ++j) {
    span.col(j).real() = eig.vectors.col(j).head(n);
    span.col(j).imag() = eig.vectors.col(j).tail(n);
  }
  ComplexMatrix basis(n, k);
  std::vector<bool> used(static_cast<std::size_t>(2 * k), false);
  for (Index i = 0; i < k; ++i) {
    Index best = -1;
    double bestNorm = -1.0;
    for (Index j = 0; j < 2 * k; ++j) {
      if (used[static_cast<std::size_t>(j)]) continue;
      const double nrm = span.col(j).norm();
      if (nrm > bestNorm) {
        bestNorm = nrm;
        best = j;
      }
    }
    used[static_cast<std::size_t>(best)] = true;
    basis.col(i) = span.col(best) / bestNorm;
    for (Index j = 0; j < 2 * k; ++j) {
      if (used[static_cast<std::size_t>(j)]) continue;
      const Complex proj = basis.col(i).dot(span.col(j));
      span.col(j) -= proj * basis.col(i);
    }
  }
  // One re-orthonormalization pass removes Gram-Schmidt drift.
  return orthonormalizeColumns(basis);
}

/// ||X^H X - I||_F, the unitarity residual of a tall matrix.
inline double unitarityResidual(const ComplexMatrix& x) {
  return (x.adjoint() * x - ComplexMatrix::Identity(x.cols(), x.cols())).norm();
}

inline double orthonormalityResidual(const RealMatrix& x) {
  return (x.transpose() * x - RealMatrix::Identity(x.cols(), x.cols())).norm();
}

}  // namespace ncgrass
