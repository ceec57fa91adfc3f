#pragma once

#include <limits>
#include <vector>

#include "ncgrass/constellation.hpp"
#include "ncgrass/error.hpp"
#include "ncgrass/matrix.hpp"

namespace ncgrass {

struct DetectionResult {
  Index index = 0;
  double score = 0.0;
  double scoreGap = 0.0;  // score minus the runner-up score
  // The codebook is not Grassmannian, so the subspace metric is not the ML rule for it.
  bool mismatchedDetector = false;
};

/// Noncoherent ML metric Tr{Y^H X X^H Y}, evaluated as ||X^H Y||_F^2.
inline double mlScore(const ComplexMatrix& x, const ComplexMatrix& y) {
  if (x.rows() != y.rows()) throw InvalidArgument("mlScore: X and Y must have the same number of rows");
  return (x.adjoint() * y).squaredNorm();
}

/// Exhaustive scan over the codebook; ties go to the lowest index.
inline DetectionResult detect(const ComplexMatrix& y, const Codebook& cb) {
  if (cb.size() == 0) throw InvalidArgument("detect: empty codebook");
  if (y.rows() != cb.T()) throw InvalidArgument("detect: Y has the wrong number of rows");
  DetectionResult out;
  out.mismatchedDetector = !cb.grassmannian();
  double best = -std::numeric_limits<double>::infinity();
  double second = -std::numeric_limits<double>::infinity();
  for (Index m = 0; m < cb.size(); ++m) {
    const double s = mlScore(cb[m], y);
    if (s > best) {
      second = best;
      best = s;
      out.index = m;
    } else if (s > second) {
      second = s;
    }
  }
  out.score = best;
  out.scoreGap = cb.size() > 1 ? best - second : 0.0;
  return out;
}

/// Allocation-free detector for Monte Carlo loops. Holds conj(X_m) in a flat
/// buffer; detectIndex computes the same metric and tie rule as detect().
class MlDetector {
 public:
  explicit MlDetector(const Codebook& cb) : t_(cb.T()), nt_(cb.Nt()), m_(cb.size()) {
    conj_.reserve(static_cast<std::size_t>(m_ * t_ * nt_));
    for (const auto& x : cb.codewords())
      for (Index c = 0; c < nt_; ++c)
        for (Index r = 0; r < t_; ++r) conj_.push_back(std::conj(x(r, c)));
  }

  /// `y` is T x Nr, column-major with leading dimension T.
  [[nodiscard]] Index detectIndex(const Complex* y, Index nr) const {
    Index bestIndex = 0;
    double best = -1.0;
    const Complex* x = conj_.data();
    for (Index m = 0; m < m_; ++m) {
      double score = 0.0;
      for (Index c = 0; c < nt_; ++c) {
        const Complex* xc = x + (m * nt_ + c) * t_;
        for (Index k = 0; k < nr; ++k) {
          const Complex* yk = y + k * t_;
          double re = 0.0, im = 0.0;
          for (Index r = 0; r < t_; ++r) {
            re += xc[r].real() * yk[r].real() - xc[r].imag() * yk[r].imag();
            im += xc[r].real() * yk[r].imag() + xc[r].imag() * yk[r].real();
          }
          score += re * re + im * im;
        }
      }
      if (score > best) {
        best = score;
        bestIndex = m;
      }
    }
    return bestIndex;
  }

 private:
  Index t_;
  Index nt_;
  Index m_;
  std::vector<Complex> conj_;
};

}  // namespace ncgrass
