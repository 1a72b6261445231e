#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "evmost/errors.hpp"
#include "evmost/losses.hpp"
#include "oracles.hpp"

using namespace evmost;

namespace {

NIGParams random_nig(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return NIGParams(3.0 * u(rng) - 1.5, 0.1 + 5.0 * u(rng), 1.05 + 6.0 * u(rng), 0.1 + 5.0 * u(rng));
}

// Componentwise toy instances; expected values evaluated in 30-digit arithmetic.
const std::vector<NIGParams> kToyM1{NIGParams(0.3, 1.5, 2.5, 0.8), NIGParams(0.6, 0.7, 1.8, 1.2)};
const std::vector<NIGParams> kToyM2{NIGParams(0.1, 2.0, 3.0, 0.5), NIGParams(0.9, 0.4, 1.6, 2.0)};
constexpr double kToyM1Loss = 2.32183556965933399;
constexpr double kToyM2Loss = 2.21144087571265047;
constexpr double kToyFusedLoss = 2.36705938792775633;
constexpr double kToyTotal = 6.90033583329974079;

}  // namespace

TEST_CASE("nig_nll anchor and Student's t equivalence") {
  CHECK(std::fabs(nig_nll(NIGParams(0.0, 1.0, 2.0, 1.0), 0.0) - std::log(8.0 / 3.0)) < 1e-12);
  CHECK(std::fabs(student_t_nll(StudentT(0.0, 1.0, 4.0), 0.0) - 0.9808292530117262) < 1e-12);

  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-4.0, 4.0);
  for (int i = 0; i < 100; ++i) {
    const NIGParams p = random_nig(rng);
    const double y = p.gamma() + u(rng);
    const double a = nig_nll(p, y);
    CHECK(std::fabs(a + student_t_logpdf(nig_to_student_t(p), y)) < 1e-10);
    CHECK(std::fabs(a - student_t_nll(nig_to_student_t(p), y)) < 1e-10);
  }
}

TEST_CASE("nig_nll grows with the residual") {
  const NIGParams p(0.4, 1.3, 2.2, 0.9);
  double prev = nig_nll(p, 0.4);
  for (double r = 0.05; r < 30.0; r *= 1.4) {
    const double up = nig_nll(p, 0.4 + r);
    CHECK(up > prev);
    CHECK(nig_nll(p, 0.4 - r) == doctest::Approx(up).epsilon(1e-14));
    prev = up;
  }
}

TEST_CASE("student_t_nll grows logarithmically in the tails") {
  const StudentT s(0.0, 1.0, 4.0);
  // slope of nll against log|y| tends to v + 1
  const double y1 = 1e6;
  const double y2 = 1e7;
  const double slope = (student_t_nll(s, y2) - student_t_nll(s, y1)) / std::log(y2 / y1);
  CHECK(slope == doctest::Approx(5.0).epsilon(1e-6));
}

TEST_CASE("cross_entropy") {
  const std::vector<double> flat{0.7, 0.7, 0.7};
  for (std::size_t k = 0; k < 3; ++k) CHECK(cross_entropy(flat, k) == doctest::Approx(std::log(3.0)));
  const std::vector<double> sat{1e6, 0.0};
  CHECK(cross_entropy(sat, 0) == 0.0);
  CHECK(cross_entropy(sat, 1) == doctest::Approx(1e6));
  const std::vector<double> inc{1.0, 2.0, 3.0};
  CHECK(std::fabs(cross_entropy(inc, 2) - 0.40760596444438030) < 1e-14);
  CHECK_THROWS_AS(cross_entropy(inc, 3), ValidationError);
}

TEST_CASE("one-hot validation") {
  const std::vector<double> ok{0.0, 1.0, 0.0};
  CHECK(onehot_label(ok) == 1);
  CHECK_THROWS_AS(onehot_label(std::vector<double>{0.0, 0.0}), ValidationError);
  CHECK_THROWS_AS(onehot_label(std::vector<double>{1.0, 1.0}), ValidationError);
  CHECK_THROWS_AS(onehot_label(std::vector<double>{0.5, 0.5}), ValidationError);
  CHECK_THROWS_AS(modality_loss(kToyM1, std::vector<double>{0.0, 0.0}, 0.5), ValidationError);
}

TEST_CASE("modality_loss") {
  const std::vector<double> y{0.0, 1.0};
  CHECK(modality_loss(kToyM1, y, 0.0) ==
        doctest::Approx(nig_nll(kToyM1[0], 0.0) + nig_nll(kToyM1[1], 1.0)).epsilon(1e-15));
  CHECK(std::fabs(modality_loss(kToyM1, y, 0.5) - kToyM1Loss) < 1e-12);
  CHECK(std::fabs(modality_loss(kToyM2, y, 0.5) - kToyM2Loss) < 1e-12);
  CHECK(kDefaultLambda == 0.5);
}

TEST_CASE("fused_loss") {
  const std::vector<StudentT> st{StudentT(0.8, 0.4, 5.0), StudentT(0.1, 0.9, 3.5),
                                 StudentT(-0.2, 1.3, 7.0)};
  const std::vector<double> y{1.0, 0.0, 0.0};
  CHECK(std::fabs(fused_loss(st, y, 0.5) - 2.92855415816952745) < 1e-12);

  // equals modality_loss when the channels are the conversions of that modality
  std::vector<StudentT> conv;
  for (const auto& p : kToyM1) conv.push_back(nig_to_student_t(p));
  const std::vector<double> y2{0.0, 1.0};
  CHECK(std::fabs(fused_loss(conv, y2, 0.5) - modality_loss(kToyM1, y2, 0.5)) < 1e-10);
}

TEST_CASE("total_loss additivity and lambda linearity") {
  const std::vector<double> y{0.0, 1.0};
  const LossBreakdown b = evidential_objective({kToyM1, kToyM2}, y, 0.5);
  REQUIRE(b.per_modality_nig.size() == 2);
  CHECK(std::fabs(b.per_modality_nig[0] - kToyM1Loss) < 1e-12);
  CHECK(std::fabs(b.per_modality_nig[1] - kToyM2Loss) < 1e-12);
  CHECK(std::fabs(b.fused_st - kToyFusedLoss) < 1e-12);
  CHECK(std::fabs(b.total - kToyTotal) < 1e-12);
  CHECK(std::fabs(b.total - (b.per_modality_nig[0] + b.per_modality_nig[1] + b.fused_st)) < 1e-12);

  // M = 1: the fused term is the modality's own conversion
  const LossBreakdown single = evidential_objective({kToyM1}, y, 0.5);
  CHECK(std::fabs(single.total - 2.0 * kToyM1Loss) < 1e-10);

  // lambda only scales the cross-entropy terms
  const LossBreakdown l0 = evidential_objective({kToyM1, kToyM2}, y, 0.0);
  const LossBreakdown l1 = evidential_objective({kToyM1, kToyM2}, y, 1.0);
  CHECK(std::fabs(b.total - 0.5 * (l0.total + l1.total)) < 1e-12);

  CHECK_THROWS_AS(evidential_objective({kToyM1, kToyM2}, y, 1.5), ValidationError);
  CHECK_THROWS_AS(total_loss({kToyM1, {kToyM2[0]}}, std::vector<StudentT>(2, StudentT(0, 1, 4)), y,
                             0.5),
                  ValidationError);
}

TEST_CASE("losses are invariant under a joint permutation of the channels") {
  std::mt19937_64 rng(33);
  for (int i = 0; i < 50; ++i) {
    std::vector<NIGParams> m1, m2;
    for (int k = 0; k < 3; ++k) {
      m1.push_back(random_nig(rng));
      m2.push_back(random_nig(rng));
    }
    const std::vector<double> y{0.0, 0.0, 1.0};
    const double base = evidential_objective({m1, m2}, y, 0.5).total;
    const std::vector<NIGParams> p1{m1[2], m1[0], m1[1]};
    const std::vector<NIGParams> p2{m2[2], m2[0], m2[1]};
    const std::vector<double> py{1.0, 0.0, 0.0};
    CHECK(evidential_objective({p1, p2}, py, 0.5).total == doctest::Approx(base).epsilon(1e-13));
  }
}

TEST_CASE("nig_nll gradient") {
  const NIGParams p(0.25, 1.4, 2.3, 0.6);
  CHECK(nig_nll_grad(p, 0.25).gamma == 0.0);

  std::mt19937_64 rng(34);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int i = 0; i < 100; ++i) {
    const NIGParams q = random_nig(rng);
    const double y = q.gamma() + u(rng);
    const NIGGrad g = nig_nll_grad(q, y);
    const double h = 1e-5;
    using testing::central_difference;
    using testing::rel_error;
    CHECK(rel_error(g.gamma, central_difference([&](double x) {
            return nig_nll(NIGParams(x, q.delta(), q.alpha(), q.beta()), y);
          }, q.gamma(), h)) < 1e-6);
    CHECK(rel_error(g.delta, central_difference([&](double x) {
            return nig_nll(NIGParams(q.gamma(), x, q.alpha(), q.beta()), y);
          }, q.delta(), h)) < 1e-6);
    CHECK(rel_error(g.alpha, central_difference([&](double x) {
            return nig_nll(NIGParams(q.gamma(), q.delta(), x, q.beta()), y);
          }, q.alpha(), h)) < 1e-6);
    CHECK(rel_error(g.beta, central_difference([&](double x) {
            return nig_nll(NIGParams(q.gamma(), q.delta(), q.alpha(), x), y);
          }, q.beta(), h)) < 1e-6);
  }
}

TEST_CASE("student_t_nll gradient") {
  std::mt19937_64 rng(35);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    const StudentT s(2.0 * u(rng) - 1.0, 0.1 + 3.0 * u(rng), 2.2 + 15.0 * u(rng));
    const double y = s.u() + 6.0 * (u(rng) - 0.5);
    const StudentTGrad g = student_t_nll_grad(s, y);
    const double h = 1e-5;
    using testing::central_difference;
    using testing::rel_error;
    CHECK(rel_error(g.u, central_difference([&](double x) {
            return student_t_nll(StudentT(x, s.sigma(), s.v()), y);
          }, s.u(), h)) < 1e-6);
    CHECK(rel_error(g.sigma, central_difference([&](double x) {
            return student_t_nll(StudentT(s.u(), x, s.v()), y);
          }, s.sigma(), h)) < 1e-6);
    CHECK(rel_error(g.v, central_difference([&](double x) {
            return student_t_nll(StudentT(s.u(), s.sigma(), x), y);
          }, s.v(), h)) < 1e-6);
  }
}

TEST_CASE("lambda = 0 removes the cross-entropy gradient") {
  const std::vector<double> y{0.0, 1.0};
  const LossGradients g = loss_gradients({kToyM1}, y, 0.0);
  // with one modality and no CE, d/dgamma is twice the NLL gradient (own term + fused term)
  for (std::size_t k = 0; k < 2; ++k) {
    const double nll = nig_nll_grad(kToyM1[k], y[k]).gamma;
    CHECK(g.per_modality[0][k].gamma == doctest::Approx(2.0 * nll).epsilon(1e-12));
  }
}
