#pragma once

#include <catch_amalgamated.hpp>

#include <functional>

#include "ncgrass/ncgrass.hpp"

namespace testing {

using namespace ncgrass;

inline ComplexMatrix randomComplex(Index rows, Index cols, RngStream& rng) {
  return sampleComplexGaussian(rows, cols, rng);
}

inline RealMatrix randomReal(Index rows, Index cols, RngStream& rng) {
  RealMatrix m(rows, cols);
  for (Index c = 0; c < cols; ++c)
    for (Index r = 0; r < rows; ++r) m(r, c) = rng.normal();
  return m;
}

// Orthonormal columns by modified Gram-Schmidt; independent of the library's polar factor.
inline ComplexMatrix gramSchmidt(ComplexMatrix g) {
  for (Index j = 0; j < g.cols(); ++j) {
    for (Index i = 0; i < j; ++i) g.col(j) -= g.col(i).dot(g.col(j)) * g.col(i);
    g.col(j) /= g.col(j).norm();
  }
  return g;
}

inline ComplexMatrix randomStiefel(Index t, Index nt, RngStream& rng) { return gramSchmidt(randomComplex(t, nt, rng)); }

inline double relativeError(const RealMatrix& analytic, const RealMatrix& numeric) {
  const double scale = std::max(numeric.norm(), 1e-12);
  return (analytic - numeric).norm() / scale;
}

// Central differences of a scalar function of a matrix argument.
inline RealMatrix numericGradient(const std::function<double(const RealMatrix&)>& f, RealMatrix x,
                                  double step = 1e-5) {
  RealMatrix g(x.rows(), x.cols());
  for (Index i = 0; i < x.size(); ++i) {
    const double saved = x.data()[i];
    x.data()[i] = saved + step;
    const double up = f(x);
    x.data()[i] = saved - step;
    const double down = f(x);
    x.data()[i] = saved;
    g.data()[i] = (up - down) / (2.0 * step);
  }
  return g;
}

// Random linear functional L(Y) = <C, Y> used to probe matrix-valued ops.
inline double probe(const RealMatrix& c, const RealMatrix& y) { return c.cwiseProduct(y).sum(); }

}  // namespace testing
