#include <chrono>
#include <cmath>
#include <random>

#include "doctest.h"
#include "evmost/distributions.hpp"
#include "evmost/errors.hpp"
#include "oracles.hpp"

using namespace evmost;

TEST_CASE("NIGParams rejects invalid parameters") {
  CHECK_NOTHROW(NIGParams(0.0, 1.0, 2.0, 1.0));
  CHECK_THROWS_AS(NIGParams(0.0, 0.0, 2.0, 1.0), ValidationError);
  CHECK_THROWS_AS(NIGParams(0.0, 1.0, 1.0, 1.0), ValidationError);
  CHECK_THROWS_AS(NIGParams(0.0, 1.0, 2.0, -1.0), ValidationError);
  CHECK_THROWS_AS(NIGParams(NAN, 1.0, 2.0, 1.0), ValidationError);
  CHECK_THROWS_AS(NIGParams(INFINITY, 1.0, 2.0, 1.0), ValidationError);
  CHECK_THROWS_AS(NIGParams(0.0, NAN, 2.0, 1.0), ValidationError);
}

TEST_CASE("StudentT rejects invalid parameters") {
  CHECK_NOTHROW(StudentT(0.0, 1.0, 2.0001));
  CHECK_THROWS_AS(StudentT(0.0, 1.0, 2.0), ValidationError);
  CHECK_THROWS_AS(StudentT(0.0, 0.0, 4.0), ValidationError);
  CHECK_THROWS_AS(StudentT(0.0, -1.0, 4.0), ValidationError);
}

TEST_CASE("aleatoric and epistemic uncertainty") {
  const NIGParams a(0.0, 1.0, 2.0, 1.0);
  const NIGParams b(2.0, 2.0, 3.0, 6.0);
  CHECK(nig_aleatoric(a) == 1.0);
  CHECK(nig_aleatoric(b) == 3.0);
  CHECK(nig_epistemic(a) == 1.0);
  CHECK(nig_epistemic(b) == 1.5);

  double prev = nig_aleatoric(NIGParams(0.0, 1.0, 1.5, 1.0));
  for (double alpha : {2.0, 5.0, 50.0, 1e4}) {
    const double cur = nig_aleatoric(NIGParams(0.0, 1.0, alpha, 1.0));
    CHECK(cur < prev);
    prev = cur;
  }
  CHECK(prev < 1e-3);
  CHECK(nig_epistemic(NIGParams(0.0, 1e9, 2.0, 1.0)) < 1e-8);
}

TEST_CASE("epistemic is aleatoric over delta") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.1, 10.0);
  for (int i = 0; i < 200; ++i) {
    const NIGParams p(u(rng) - 5.0, u(rng), 1.0 + u(rng), u(rng));
    CHECK(nig_epistemic(p) == doctest::Approx(nig_aleatoric(p) / p.delta()).epsilon(1e-15));
  }
}

TEST_CASE("NIG to Student's t conversion") {
  const StudentT a = nig_to_student_t(NIGParams(0.0, 1.0, 2.0, 1.0));
  CHECK(a.u() == 0.0);
  CHECK(a.sigma() == 1.0);
  CHECK(a.v() == 4.0);
  const StudentT b = nig_to_student_t(NIGParams(2.0, 2.0, 3.0, 6.0));
  CHECK(b.u() == 2.0);
  CHECK(b.sigma() == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(b.v() == 6.0);
  const double eps = 1e-9;
  const StudentT edge = nig_to_student_t(NIGParams(0.0, 1.0, 1.0 + eps, 1.0));
  CHECK(edge.v() == doctest::Approx(2.0 + 2.0 * eps).epsilon(1e-15));
  CHECK(edge.v() > 2.0);
}

TEST_CASE("Student's t density closed forms") {
  CHECK(std::fabs(student_t_pdf(StudentT(0.0, 1.0, 4.0), 0.0) - 0.375) < 1e-14);
  CHECK(std::fabs(student_t_pdf(StudentT(0.0, 1.0, 6.0), 0.0) - 15.0 / (16.0 * std::sqrt(6.0))) <
        1e-14);
  CHECK(std::fabs(student_t_logpdf(StudentT(0.0, 1.0, 4.0), 0.0) - std::log(0.375)) < 1e-14);
}

TEST_CASE("Student's t density integrates to one") {
  const StudentT st(0.0, 1.0, 4.0);
  const double total = testing::adaptive_simpson(
      [&](double y) { return student_t_pdf(st, y); }, -50.0, 50.0, 1e-12);
  // The window misses the tails beyond |y| = 50, about 1e-5 of the mass for v = 4.
  CHECK(std::fabs(total - 1.0) < 1e-4);

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 20; ++i) {
    const StudentT s(4.0 * u(rng) - 2.0, 0.1 + 3.0 * u(rng), 2.5 + 20.0 * u(rng));
    const double w = 50.0 * std::sqrt(s.sigma());
    const double mass = testing::adaptive_simpson(
        [&](double y) { return student_t_pdf(s, y); }, s.u() - w, s.u() + w, 1e-12);
    CHECK(std::fabs(mass - 1.0) < 1e-4);
  }
}

TEST_CASE("logpdf is consistent with pdf and stable in the tails") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    const StudentT s(4.0 * u(rng) - 2.0, 0.1 + 3.0 * u(rng), 2.1 + 30.0 * u(rng));
    const double y = s.u() + 10.0 * (u(rng) - 0.5);
    const double pdf = student_t_pdf(s, y);
    CHECK(std::fabs(std::exp(student_t_logpdf(s, y)) - pdf) <= 1e-12 * pdf);
  }
  const StudentT s(0.0, 1.0, 4.0);
  for (double y : {1e6, -1e6, 1e150}) {
    const double lp = student_t_logpdf(s, y);
    CHECK(std::isfinite(lp));
    CHECK(lp < -50.0);
  }
}

TEST_CASE("pdf peaks at the location and decreases away from it") {
  const StudentT s(1.5, 0.7, 5.0);
  double prev = student_t_pdf(s, 1.5);
  for (double d = 0.01; d < 20.0; d *= 1.5) {
    const double right = student_t_pdf(s, 1.5 + d);
    const double left = student_t_pdf(s, 1.5 - d);
    CHECK(right < prev);
    CHECK(left == doctest::Approx(right).epsilon(1e-14));
    prev = right;
  }
}

TEST_CASE("Student's t variance") {
  CHECK(student_t_variance(StudentT(0.0, 1.0, 4.0)) == 2.0);
  CHECK(student_t_variance(StudentT(0.0, 0.875, 4.0)) == 1.75);
  CHECK(student_t_variance(StudentT(0.0, 1.0, 1e9)) == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(student_t_variance(StudentT(0.0, 2.0, 3.0)) > 2.0);
}

TEST_CASE("variance of the converted distribution is AL + EP") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.05, 8.0);
  for (int i = 0; i < 500; ++i) {
    const NIGParams p(u(rng) - 4.0, u(rng), 1.0 + u(rng), u(rng));
    const double var = student_t_variance(nig_to_student_t(p));
    const double sum = nig_aleatoric(p) + nig_epistemic(p);
    CHECK(std::fabs(var - sum) <= 1e-12 * std::max(1.0, sum));
  }
}

TEST_CASE("quadrature marginal matches the closed form") {
  const NIGParams a(0.0, 1.0, 2.0, 1.0);
  CHECK(std::fabs(nig_marginal_pdf_quadrature(a, 0.0) - 0.375) < 1e-5);

  const NIGParams b(2.0, 2.0, 3.0, 6.0);
  const double closed = student_t_pdf(nig_to_student_t(b), 3.0);
  CHECK(std::fabs(nig_marginal_pdf_quadrature(b, 3.0) - closed) < 1e-5);

  for (double c : {0.3, 1.7, 4.0}) {
    const double up = nig_marginal_pdf_quadrature(b, b.gamma() + c);
    const double down = nig_marginal_pdf_quadrature(b, b.gamma() - c);
    CHECK(std::fabs(up - down) < 1e-8);
  }
}

TEST_CASE("quadrature reports non-convergence") {
  QuadratureSpec coarse;
  coarse.mu_nodes = 5;
  coarse.sigma2_nodes = 5;
  coarse.max_refinements = 0;
  coarse.tolerance = 1e-12;
  CHECK_THROWS_AS(nig_marginal_pdf_quadrature(NIGParams(0.0, 1.0, 2.0, 1.0), 0.3, coarse),
                  NumericalError);
  QuadratureSpec even;
  even.mu_nodes = 2000;
  CHECK_THROWS_AS(nig_marginal_pdf_quadrature(NIGParams(0.0, 1.0, 2.0, 1.0), 0.3, even),
                  ValidationError);
}
