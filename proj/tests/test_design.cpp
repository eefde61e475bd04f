#include "doctest.h"
#include "mziln/design.hpp"
#include "mziln/errors.hpp"

using namespace mziln;

TEST_CASE("design block is the Kronecker product I_K (x) (1, x')") {
  CovariateRecord record{Eigen::VectorXd::Constant(1, 3.0), "s1"};
  DesignRowBlock block = build_design_row_block(record, 2);
  Eigen::MatrixXd dense = block.dense();
  REQUIRE(dense.rows() == 2);
  REQUIRE(dense.cols() == 4);
  Eigen::MatrixXd expected(2, 4);
  expected << 1, 3, 0, 0, 0, 0, 1, 3;
  CHECK((dense - expected).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("row_dot agrees with the dense product") {
  Eigen::VectorXd x(2);
  x << -0.5, 2.0;
  CovariateRecord record{x, "s1"};
  DesignRowBlock block = build_design_row_block(record, 3);
  Eigen::VectorXd b(9);
  b << 0.1, 0.2, 0.3, -0.4, 0.5, -0.6, 0.7, -0.8, 0.9;
  CoefficientVector beta(b, 3, 2);
  Eigen::VectorXd dense_product = block.dense() * b;
  for (int k = 1; k <= 3; ++k)
    CHECK(block.row_dot(beta, k) == doctest::Approx(dense_product[k - 1]).epsilon(1e-14));
}

TEST_CASE("coefficient vector slices by taxon and by covariate") {
  Eigen::VectorXd b(6);
  b << 1, 2, 3, 4, 5, 6;  // taxon 1: (1,2,3), taxon 2: (4,5,6)
  CoefficientVector beta(b, 2, 2);
  CHECK(beta.dim() == 6);

  Eigen::VectorXd t1 = beta.taxon_coefficients(1);
  CHECK(t1[0] == 1.0);
  CHECK(t1[2] == 3.0);
  Eigen::VectorXd t2 = beta.taxon_coefficients(2);
  CHECK(t2[0] == 4.0);

  Eigen::VectorXd intercepts = beta.covariate_coefficients(0);
  CHECK(intercepts[0] == 1.0);
  CHECK(intercepts[1] == 4.0);
  Eigen::VectorXd slopes2 = beta.covariate_coefficients(2);
  CHECK(slopes2[0] == 3.0);
  CHECK(slopes2[1] == 6.0);

  CHECK(beta.entry(2, 1) == 5.0);
  beta.set_entry(2, 1, -5.0);
  CHECK(beta.entry(2, 1) == -5.0);

  CHECK_THROWS_AS(CoefficientVector(b, 2, 1), InvalidInput);
}

TEST_CASE("working covariance materializes each structure") {
  Eigen::MatrixXd identity = WorkingCovariance::identity().materialize(3);
  CHECK(identity.isIdentity(0.0));

  Eigen::MatrixXd exch = WorkingCovariance::exchangeable(1.3, 0.4).materialize(3);
  CHECK(exch(0, 0) == doctest::Approx(1.6900000000000002).epsilon(1e-14));
  CHECK(exch(0, 1) == doctest::Approx(0.67600000000000016).epsilon(1e-14));
  CHECK(exch(1, 0) == exch(0, 1));

  Eigen::MatrixXd sigma(2, 2);
  sigma << 2.0, 0.5, 0.5, 1.0;
  Eigen::MatrixXd unstructured = WorkingCovariance::unstructured(sigma).materialize(2);
  CHECK((unstructured - sigma).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("working covariance validation catches bad parameters") {
  CHECK_THROWS_AS(WorkingCovariance::exchangeable(0.0, 0.3).validate(3), InvalidInput);
  CHECK_THROWS_AS(WorkingCovariance::exchangeable(1.0, 1.0).validate(3), InvalidInput);
  // rho = -0.6 < -1/(K-1) = -0.5 makes the K=3 exchangeable matrix indefinite
  CHECK_THROWS_AS(WorkingCovariance::exchangeable(1.0, -0.6).validate(3), InvalidInput);
  CHECK_NOTHROW(WorkingCovariance::exchangeable(1.0, -0.4).validate(3));

  Eigen::MatrixXd wrong(2, 3);
  wrong.setZero();
  CHECK_THROWS_AS(WorkingCovariance::unstructured(wrong).validate(2), InvalidInput);
}
