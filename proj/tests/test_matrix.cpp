#include "support.hpp"

using namespace ncgrass;
using namespace testing;
using Catch::Matchers::WithinAbs;

TEST_CASE("symEig closed forms", "[matrix]") {
  const auto id = symEig(RealMatrix::Identity(2, 2));
  CHECK_THAT(id.values(0), WithinAbs(1.0, 1e-15));
  CHECK_THAT(id.values(1), WithinAbs(1.0, 1e-15));

  RealMatrix a(2, 2);
  a << 2, 1, 1, 2;
  const auto e = symEig(a);
  CHECK_THAT(e.values(0), WithinAbs(3.0, 1e-14));
  CHECK_THAT(e.values(1), WithinAbs(1.0, 1e-14));
}

TEST_CASE("symEig reconstructs random Gram matrices", "[matrix]") {
  RngStream rng(11, 0);
  for (int trial = 0; trial < 20; ++trial) {
    const RealMatrix x = randomReal(6, 4, rng);
    const RealMatrix g = x.transpose() * x;
    const auto e = symEig(g);
    const RealMatrix back = e.vectors * e.values.asDiagonal() * e.vectors.transpose();
    CHECK((back - g).norm() <= 1e-9);
    CHECK((e.vectors.transpose() * e.vectors - RealMatrix::Identity(4, 4)).norm() <= 1e-12);
    for (Index i = 1; i < 4; ++i) CHECK(e.values(i - 1) >= e.values(i));
  }
}

TEST_CASE("symEig rejects asymmetric input", "[matrix]") {
  RealMatrix a(2, 2);
  a << 1, 2, 0, 1;
  CHECK_THROWS_AS(symEig(a), InvalidArgument);
}

TEST_CASE("psdInvSqrt", "[matrix]") {
  CHECK((psdInvSqrt(RealMatrix::Identity(4, 4)) - RealMatrix::Identity(4, 4)).norm() <= 1e-14);
  RealMatrix d = RealMatrix::Zero(2, 2);
  d.diagonal() << 4, 1;
  RealMatrix expected = RealMatrix::Zero(2, 2);
  expected.diagonal() << 0.5, 1;
  CHECK((psdInvSqrt(d) - expected).norm() <= 1e-14);

  RngStream rng(12, 0);
  for (int trial = 0; trial < 20; ++trial) {
    const RealMatrix x = randomReal(8, 4, rng);
    const RealMatrix g = x.transpose() * x;
    const RealMatrix r = psdInvSqrt(g);
    CHECK((r * g * r - RealMatrix::Identity(4, 4)).norm() <= 1e-8);
    CHECK((r - r.transpose()).norm() == 0.0);
    CHECK((r * g - g * r).norm() <= 1e-9 * g.norm());
  }
}

TEST_CASE("psdInvSqrt guards near-singular input", "[matrix]") {
  RealMatrix g = RealMatrix::Zero(2, 2);
  g.diagonal() << 1.0, 1e-14;
  CHECK_THROWS_AS(psdInvSqrt(g), NearSingularError);
  CHECK_THROWS_AS(psdInvSqrt(RealMatrix::Zero(3, 3)), NearSingularError);
}

TEST_CASE("psdSqrt", "[matrix]") {
  CHECK((psdSqrt(RealMatrix::Identity(2, 2)) - RealMatrix::Identity(2, 2)).norm() <= 1e-15);
  RealMatrix c(2, 2);
  c << 1, 0.9, 0.9, 1;
  const RealMatrix s = psdSqrt(c);
  CHECK((s * s - c).norm() <= 1e-10);
  CHECK((s - s.transpose()).norm() == 0.0);
  RealMatrix nine(1, 1);
  nine << 9;
  CHECK_THAT(psdSqrt(nine)(0, 0), WithinAbs(3.0, 1e-15));
  RealMatrix negative(1, 1);
  negative << -1;
  CHECK_THROWS_AS(psdSqrt(negative), NearSingularError);
}

TEST_CASE("singularValues", "[matrix]") {
  const RealVector one = singularValues(ComplexMatrix::Identity(2, 2));
  CHECK_THAT(one(0), WithinAbs(1.0, 1e-14));
  CHECK_THAT(one(1), WithinAbs(1.0, 1e-14));
  CHECK(singularValues(ComplexMatrix::Zero(3, 2)).norm() == 0.0);

  RngStream rng(13, 0);
  for (int trial = 0; trial < 20; ++trial) {
    const ComplexMatrix m = randomComplex(2, 2, rng);
    const RealVector s = singularValues(m);
    // Cross-check against the complex Gram matrix's eigenvalues through Eigen's own solver.
    Eigen::SelfAdjointEigenSolver<ComplexMatrix> ref(m.adjoint() * m);
    CHECK_THAT(s(0) * s(0), WithinAbs(ref.eigenvalues()(1), 1e-9));
    CHECK_THAT(s(1) * s(1), WithinAbs(ref.eigenvalues()(0), 1e-9));
    CHECK_THAT(nuclearNorm(m), WithinAbs(s.sum(), 1e-12));
  }
  for (int trial = 0; trial < 10; ++trial) {
    const RealVector s = singularValues(randomStiefel(4, 2, rng));
    CHECK((s - RealVector::Ones(2)).norm() <= 1e-9);
  }
  CHECK(singularValues(randomComplex(3, 5, rng)).size() == 3);
}

TEST_CASE("embedding is a ring homomorphism", "[matrix]") {
  RngStream rng(14, 0);
  for (int trial = 0; trial < 20; ++trial) {
    const ComplexMatrix a = randomComplex(3, 4, rng);
    const ComplexMatrix b = randomComplex(4, 2, rng);
    const RealMatrix lhs = embedDense(a * b);
    const RealMatrix rhs = embedDense(a) * embedDense(b);
    CHECK((lhs - rhs).norm() <= 1e-12 * lhs.norm());
    CHECK((embedDense(a.adjoint()) - embedDense(a).transpose()).norm() == 0.0);
    CHECK(((embed(a) * embed(b)).dense() - rhs).norm() <= 1e-12 * rhs.norm());
    CHECK(embed(a).transpose() == embed(a.adjoint()));
  }
  // Inverse of a structured square matrix stays structured.
  const ComplexMatrix s = randomComplex(3, 3, rng);
  const RealMatrix inv = embedDense(s).inverse();
  CHECK(structureResidual(inv) <= 1e-12);
  CHECK((unembed(StructuredRealMatrix::project(inv)) - s.inverse()).norm() <= 1e-10);
}

TEST_CASE("structured parsing", "[matrix]") {
  RngStream rng(15, 0);
  const ComplexMatrix a = randomComplex(2, 3, rng);
  CHECK(unembed(embedDense(a)) == a);
  RealMatrix broken = embedDense(a);
  broken(0, 3) += 1e-3;
  CHECK_THROWS_AS(unembed(broken), StructureError);
  CHECK(structureResidual(broken) == Catch::Approx(1e-3).epsilon(1e-9));
  CHECK_THROWS_AS(StructuredRealMatrix::fromDense(RealMatrix::Zero(3, 2)), StructureError);
  CHECK_THROWS_AS(embed(ComplexMatrix::Constant(1, 1, Complex(std::nan(""), 0.0))), InvalidArgument);
}

TEST_CASE("orthonormalizeColumns and dominant subspace", "[matrix]") {
  RngStream rng(16, 0);
  for (int trial = 0; trial < 10; ++trial) {
    const ComplexMatrix q = orthonormalizeColumns(randomComplex(4, 2, rng));
    CHECK(unitarityResidual(q) <= 1e-12);

    // H = U diag(5, 3, 1, 0.5) U^H: the dominant 2-subspace is span of U's first two columns.
    const ComplexMatrix u = randomStiefel(4, 4, rng);
    RealVector lambda(4);
    lambda << 5, 3, 1, 0.5;
    const ComplexMatrix h = u * lambda.cast<Complex>().asDiagonal() * u.adjoint();
    const ComplexMatrix basis = hermitianDominantSubspace(h, 2);
    CHECK(unitarityResidual(basis) <= 1e-12);
    const ComplexMatrix top = u.leftCols(2);
    CHECK((basis * basis.adjoint() - top * top.adjoint()).norm() <= 1e-9);
  }
}
