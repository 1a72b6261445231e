#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "doctest.h"
#include "evmost/errors.hpp"
#include "evmost/eval.hpp"
#include "evmost/model.hpp"
#include "oracles.hpp"

using namespace evmost;
using evmost::testing::rel_error;

namespace {

double sp(double x) { return std::log1p(std::exp(x)); }

// Two modalities, one input feature, one tanh hidden unit, two classes.
MultimodalClassifier micro_model(std::size_t modalities = 2) {
  std::vector<EncoderSpec> enc(modalities, EncoderSpec{1, {1}, Activation::tanh});
  return MultimodalClassifier(enc, 2);
}

struct HandChannel {
  double gamma, delta, alpha, beta, sigma, v;
};

// Direct transcription of the micro-model forward pass.
std::vector<std::vector<HandChannel>> hand_forward(const std::vector<double>& p,
                                                   const std::vector<double>& x) {
  std::vector<std::vector<HandChannel>> out;
  for (std::size_t m = 0; m < x.size(); ++m) {
    const std::size_t o = 18 * m;
    const double h = std::tanh(p[o] * x[m] + p[o + 1]);
    double raw[8];
    for (int j = 0; j < 8; ++j) raw[j] = p[o + 2 + j] * h + p[o + 10 + j];
    std::vector<HandChannel> ch;
    for (int k = 0; k < 2; ++k) {
      HandChannel c;
      c.gamma = raw[4 * k];
      c.delta = sp(raw[4 * k + 1]) + 1e-6;
      c.alpha = 1.0 + sp(raw[4 * k + 2]) + 1e-4;
      c.beta = sp(raw[4 * k + 3]) + 1e-6;
      c.sigma = c.beta * (1.0 + c.delta) / (c.delta * c.alpha);
      c.v = 2.0 * c.alpha;
      ch.push_back(c);
    }
    out.push_back(ch);
  }
  return out;
}

FeatureViews views(const std::vector<double>& x) {
  FeatureViews v;
  for (const double& xi : x) v.emplace_back(&xi, 1);
  return v;
}

}  // namespace

TEST_CASE("head_constrain maps raw values onto a valid NIG") {
  const double raw0[4] = {0.0, 0.0, 0.0, 0.0};
  const NIGParams p = head_constrain(raw0);
  CHECK(p.gamma() == 0.0);
  CHECK(p.delta() == doctest::Approx(std::log(2.0) + 1e-6).epsilon(1e-15));
  CHECK(p.alpha() == doctest::Approx(1.0 + std::log(2.0) + 1e-4).epsilon(1e-15));
  CHECK(p.beta() == doctest::Approx(std::log(2.0) + 1e-6).epsilon(1e-15));

  const double low[4] = {0.0, -800.0, -800.0, -800.0};
  const NIGParams q = head_constrain(low);
  CHECK(q.alpha() == 1.0 + 1e-4);
  CHECK(q.delta() == 1e-6);
  CHECK(q.beta() == 1e-6);

  const double high[4] = {3.0, 0.0, 20.0, 0.0};
  CHECK(head_constrain(high).alpha() ==
        doctest::Approx(21.0 + 1e-4 + std::log1p(std::exp(-20.0))).epsilon(1e-15));
  CHECK(head_constrain(high).gamma() == 3.0);
}

TEST_CASE("head_constrain_backward matches finite differences") {
  const double raw[4] = {0.3, -1.2, 0.7, 2.5};
  const NIGGrad g{1.0, 2.0, -3.0, 0.5};
  const auto d = head_constrain_backward(raw, g);
  for (int j = 0; j < 4; ++j) {
    auto f = [&](double t) {
      double r[4] = {raw[0], raw[1], raw[2], raw[3]};
      r[j] = t;
      const NIGParams p = head_constrain(r);
      return g.gamma * p.gamma() + g.delta * p.delta() + g.alpha * p.alpha() + g.beta * p.beta();
    };
    CHECK(rel_error(d[j], evmost::testing::central_difference(f, raw[j], 1e-6)) < 1e-8);
  }
}

TEST_CASE("encoder spec validation") {
  CHECK_THROWS_AS(MultimodalClassifier({EncoderSpec{0, {4}, Activation::relu}}, 2),
                  ValidationError);
  CHECK_THROWS_AS(MultimodalClassifier({EncoderSpec{3, {}, Activation::relu}}, 2),
                  ValidationError);
  CHECK_THROWS_AS(MultimodalClassifier({EncoderSpec{3, {4}, Activation::relu}}, 1),
                  ValidationError);
  CHECK(parse_activation("relu") == Activation::relu);
  CHECK_THROWS_AS(parse_activation("gelu"), ValidationError);
}

TEST_CASE("parameter layout") {
  const MultimodalClassifier m = micro_model();
  CHECK(m.parameter_count() == 36);
  CHECK(m.layers(0)[0].offset == 0);
  CHECK(m.head_offset(0) == 2);
  CHECK(m.layers(1)[0].offset == 18);
  CHECK(m.layers(1)[1].out == 8);
}

TEST_CASE("fresh model satisfies every output invariant") {
  MultimodalClassifier m({EncoderSpec{4, {16, 8}, Activation::relu},
                          EncoderSpec{3, {8}, Activation::tanh}},
                         3);
  m.initialize(5);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 3.0);
  for (int s = 0; s < 50; ++s) {
    std::vector<double> a(4), b(3);
    for (double& v : a) v = n(rng);
    for (double& v : b) v = n(rng);
    const EvidentialOutput out = m.forward({a, b});
    for (std::size_t k = 0; k < 3; ++k) {
      for (std::size_t mod = 0; mod < 2; ++mod) {
        CHECK(out.nig[mod][k].alpha() > 1.0);
        CHECK(out.student_t[mod][k].v() > 2.0);
      }
      CHECK(out.fused[k].st.v() ==
            std::min(out.student_t[0][k].v(), out.student_t[1][k].v()));
      const auto& f = out.fused[k].st;
      CHECK(out.fused_uncertainty[k] == f.sigma() * f.v() / (f.v() - 2.0));
    }
    const Prediction p = m.predict({a, b});
    CHECK(p.fused_uncertainty == out.fused_uncertainty[out.predicted_class]);
  }
}

TEST_CASE("input dimension mismatch is rejected") {
  MultimodalClassifier m = micro_model();
  const std::vector<double> a{1.0}, b{1.0, 2.0};
  CHECK_THROWS_AS(m.forward({a, b}), ValidationError);
  CHECK_THROWS_AS(m.forward({a}), ValidationError);
}

TEST_CASE("identical modalities fuse onto the shared location") {
  MultimodalClassifier m({EncoderSpec{2, {5}, Activation::tanh},
                          EncoderSpec{2, {5}, Activation::tanh}},
                         3);
  m.initialize(11);
  auto p = m.parameters();
  const std::size_t half = m.parameter_count() / 2;
  std::copy(p.begin(), p.begin() + half, p.begin() + half);
  const std::vector<double> x{0.4, -1.3};
  const EvidentialOutput out = m.forward({x, x});
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(out.fused[k].st.u() == out.student_t[0][k].u());
    CHECK(out.fused[k].st.u() == out.student_t[1][k].u());
    CHECK(out.fused[k].source_index == 0);
    CHECK(out.fused[k].st.sigma() == doctest::Approx(out.student_t[0][k].sigma()).epsilon(1e-14));
  }
}

TEST_CASE("micro-model forward matches the hand computation") {
  MultimodalClassifier m = micro_model();
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> p(36);
    for (double& v : p) v = u(rng);
    std::copy(p.begin(), p.end(), m.parameters().begin());
    const std::vector<double> x{u(rng), u(rng)};
    const auto hand = hand_forward(p, x);
    const EvidentialOutput out = m.forward(views(x));
    double best_u = -std::numeric_limits<double>::infinity();
    std::size_t best_k = 0;
    for (std::size_t k = 0; k < 2; ++k) {
      for (std::size_t mod = 0; mod < 2; ++mod) {
        const HandChannel& c = hand[mod][k];
        CHECK(out.nig[mod][k].gamma() == doctest::Approx(c.gamma).epsilon(1e-13));
        CHECK(out.nig[mod][k].delta() == doctest::Approx(c.delta).epsilon(1e-13));
        CHECK(out.nig[mod][k].alpha() == doctest::Approx(c.alpha).epsilon(1e-13));
        CHECK(out.nig[mod][k].beta() == doctest::Approx(c.beta).epsilon(1e-13));
        CHECK(out.student_t[mod][k].sigma() == doctest::Approx(c.sigma).epsilon(1e-13));
        CHECK(out.aleatoric[mod][k] == doctest::Approx(c.beta / (c.alpha - 1)).epsilon(1e-13));
        CHECK(out.epistemic[mod][k] ==
              doctest::Approx(c.beta / (c.delta * (c.alpha - 1))).epsilon(1e-13));
      }
      const HandChannel& a = hand[0][k];
      const HandChannel& b = hand[1][k];
      const bool first = a.v < b.v || (a.v == b.v && a.sigma <= b.sigma);
      const HandChannel& s = first ? a : b;
      const HandChannel& o = first ? b : a;
      const double sigma_f = 0.5 * (s.sigma + o.v * (s.v - 2) / (s.v * (o.v - 2)) * o.sigma);
      CHECK(out.fused[k].st.u() == doctest::Approx(s.gamma).epsilon(1e-13));
      CHECK(out.fused[k].st.v() == doctest::Approx(s.v).epsilon(1e-13));
      CHECK(out.fused[k].st.sigma() == doctest::Approx(sigma_f).epsilon(1e-13));
      CHECK(out.fused_uncertainty[k] ==
            doctest::Approx(sigma_f * s.v / (s.v - 2)).epsilon(1e-13));
      if (s.gamma > best_u) {
        best_u = s.gamma;
        best_k = k;
      }
    }
    CHECK(out.predicted_class == best_k);
  }
}

TEST_CASE("micro-model gradients match central differences") {
  for (std::size_t modalities : {1u, 2u}) {
    MultimodalClassifier m = micro_model(modalities);
    std::mt19937_64 rng(29 + modalities);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    int checked = 0;
    while (checked < 25) {
      for (double& v : m.parameters()) v = u(rng);
      std::vector<double> x(modalities);
      for (double& v : x) v = 2.0 * u(rng);
      const std::size_t label = rng() % 2;
      const EvidentialOutput out = m.forward(views(x));
      bool near_switch = false;
      if (modalities == 2) {
        for (std::size_t k = 0; k < 2; ++k) {
          near_switch |= std::abs(out.student_t[0][k].v() - out.student_t[1][k].v()) < 1e-3;
        }
      }
      if (near_switch) continue;
      std::vector<double> grad(m.parameter_count(), 0.0);
      m.accumulate_gradient(views(x), label, 0.5, grad);
      for (std::size_t i = 0; i < m.parameter_count(); ++i) {
        const double saved = m.parameters()[i];
        auto f = [&](double t) {
          m.parameters()[i] = t;
          const double l = m.loss(views(x), label, 0.5).total;
          m.parameters()[i] = saved;
          return l;
        };
        const double fd = evmost::testing::central_difference(f, saved, 1e-5);
        CHECK(rel_error(grad[i], fd) <= 1e-4);
      }
      ++checked;
    }
  }
}

TEST_CASE("gradients of a wider relu model match central differences") {
  MultimodalClassifier m({EncoderSpec{3, {6, 4}, Activation::relu},
                          EncoderSpec{2, {5}, Activation::tanh}},
                         3);
  m.initialize(8);
  const std::vector<double> a{0.3, -0.8, 1.1}, b{-0.5, 0.9};
  std::vector<double> grad(m.parameter_count(), 0.0);
  m.accumulate_gradient({a, b}, 2, 0.5, grad);
  for (std::size_t i = 0; i < m.parameter_count(); i += 3) {
    const double saved = m.parameters()[i];
    auto f = [&](double t) {
      m.parameters()[i] = t;
      const double l = m.loss({a, b}, 2, 0.5).total;
      m.parameters()[i] = saved;
      return l;
    };
    CHECK(rel_error(grad[i], evmost::testing::central_difference(f, saved, 1e-6)) <= 1e-4);
  }
}

TEST_CASE("heads_only leaves encoder gradients untouched") {
  MultimodalClassifier m = micro_model();
  m.initialize(2);
  const std::vector<double> x{0.5, -0.5};
  std::vector<double> grad(m.parameter_count(), 0.0);
  m.accumulate_gradient(views(x), 1, 0.5, grad, true);
  CHECK(grad[0] == 0.0);
  CHECK(grad[1] == 0.0);
  CHECK(grad[18] == 0.0);
  CHECK(grad[2] != 0.0);
}

TEST_CASE("prediction confidence") {
  EvidentialOutput out;
  out.nig = {{NIGParams(0.5, 1, 2, 1), NIGParams(0.5, 1, 2, 1)}};
  out.aleatoric = {{1.0, 1.0}};
  out.epistemic = {{1.0, 1.0}};
  out.fused = {{StudentT(0.5, 1.0, 4.0), 0}, {StudentT(0.5, 1.0, 4.0), 0}};
  out.fused_uncertainty = {2.0, 2.0};
  out.predicted_class = 0;
  for (ConfidenceMode mode : {ConfidenceMode::normalized, ConfidenceMode::softmax}) {
    const Prediction p = make_prediction(out, mode);
    CHECK(p.confidence[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(p.confidence[1] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(p.predicted_class == 0);
    CHECK(p.modality_class[0] == 0);
  }
  out.fused[0].st = StudentT(-0.2, 1.0, 4.0);
  out.fused[1].st = StudentT(-0.1, 1.0, 4.0);
  CHECK(make_prediction(out, ConfidenceMode::normalized).confidence[1] == 0.5);
  out.fused[0].st = StudentT(0.9, 1.0, 4.0);
  out.fused[1].st = StudentT(0.3, 1.0, 4.0);
  const Prediction n = make_prediction(out, ConfidenceMode::normalized);
  CHECK(n.confidence[0] == doctest::Approx(0.75).epsilon(1e-15));
  const Prediction s = make_prediction(out, ConfidenceMode::softmax);
  CHECK(s.confidence[0] == doctest::Approx(1.0 / (1.0 + std::exp(-0.6))).epsilon(1e-15));
  CHECK(argmax(std::vector<double>{1.0, 3.0, 3.0}) == 1);
}

TEST_CASE("confidences sum to one") {
  MultimodalClassifier m({EncoderSpec{2, {8}, Activation::tanh},
                          EncoderSpec{2, {8}, Activation::tanh}},
                         4);
  m.initialize(9);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n;
  for (int i = 0; i < 100; ++i) {
    const std::vector<double> a{n(rng), n(rng)}, b{n(rng), n(rng)};
    for (ConfidenceMode mode : {ConfidenceMode::normalized, ConfidenceMode::softmax}) {
      const Prediction p = m.predict({a, b}, mode);
      double total = 0.0;
      for (double c : p.confidence) total += c;
      CHECK(std::abs(total - 1.0) <= 1e-12);
    }
  }
}

namespace {

struct SmallSetup {
  DatasetSplits splits;
  StandardizedSplits z;
};

SmallSetup small_setup(std::size_t classes, double sep, std::size_t per_class) {
  SyntheticSpec spec;
  spec.classes = classes;
  spec.n_per_class = per_class;
  spec.separation = {sep, sep};
  spec.seed = 7;
  SmallSetup s{generate_synthetic(spec), {}};
  s.z = standardize(s.splits.train, {s.splits.val, s.splits.test});
  return s;
}

MultimodalClassifier small_model(std::size_t classes) {
  return MultimodalClassifier({EncoderSpec{4, {16}, Activation::tanh},
                               EncoderSpec{4, {16}, Activation::tanh}},
                              classes);
}

}  // namespace

TEST_CASE("zero learning rate leaves parameters bit-identical") {
  const SmallSetup s = small_setup(3, 3.0, 20);
  MultimodalClassifier m = small_model(3);
  m.initialize(4);
  const std::vector<double> before(m.parameters().begin(), m.parameters().end());
  TrainConfig c;
  c.learning_rate = 0.0;
  c.max_epochs = 1;
  const TrainHistory h = train(m, s.z.train, c);
  CHECK(std::vector<double>(m.parameters().begin(), m.parameters().end()) == before);
  CHECK(h.epoch_loss.size() == 1);
  CHECK(h.epoch_loss[0] == h.initial_loss);
}

TEST_CASE("training is deterministic and lowers the loss") {
  const SmallSetup s = small_setup(3, 3.0, 30);
  TrainConfig c;
  c.max_epochs = 5;
  c.learning_rate = 1e-3;
  MultimodalClassifier a = small_model(3);
  MultimodalClassifier b = small_model(3);
  a.initialize(c.seed);
  b.initialize(c.seed);
  const TrainHistory ha = train(a, s.z.train, c, &s.z.others[0]);
  const TrainHistory hb = train(b, s.z.train, c, &s.z.others[0]);
  CHECK(a == b);
  CHECK(ha.epoch_loss == hb.epoch_loss);
  CHECK(ha.val_loss == hb.val_loss);
  CHECK(ha.epoch_loss.back() <= ha.initial_loss);
  CHECK(ha.selected_epoch == 5);
}

TEST_CASE("separable two-class data reaches high training accuracy") {
  const SmallSetup s = small_setup(2, 6.0, 100);
  MultimodalClassifier m({EncoderSpec{4, {64, 64}, Activation::tanh},
                          EncoderSpec{4, {64, 64}, Activation::tanh}},
                         2);
  TrainConfig c;
  m.initialize(c.seed);
  train(m, s.z.train, c);
  CHECK(evaluate(m, s.z.train).fused.acc >= 0.98);
}

TEST_CASE("freezing encoders updates the heads only") {
  const SmallSetup s = small_setup(3, 3.0, 10);
  MultimodalClassifier m = small_model(3);
  m.initialize(1);
  const std::vector<double> before(m.parameters().begin(), m.parameters().end());
  TrainConfig c;
  c.max_epochs = 2;
  c.freeze_encoders = true;
  train(m, s.z.train, c);
  for (std::size_t mod = 0; mod < 2; ++mod) {
    const DenseLayer& enc = m.layers(mod)[0];
    for (std::size_t i = enc.offset; i < enc.offset + enc.size(); ++i) {
      CHECK(m.parameters()[i] == before[i]);
    }
    CHECK(m.parameters()[m.head_offset(mod)] != before[m.head_offset(mod)]);
  }
}

TEST_CASE("best-validation selection restores the chosen epoch") {
  const SmallSetup s = small_setup(3, 3.0, 20);
  MultimodalClassifier m = small_model(3);
  m.initialize(3);
  TrainConfig c;
  c.max_epochs = 4;
  c.learning_rate = 0.05;
  c.select_best_val = true;
  const TrainHistory h = train(m, s.z.train, c, &s.z.others[0]);
  REQUIRE(h.val_loss.size() == 4);
  if (h.selected_epoch > 0) {
    const double best = *std::min_element(h.val_loss.begin(), h.val_loss.end());
    CHECK(h.val_loss[h.selected_epoch - 1] == best);
    CHECK(mean_loss(m, s.z.others[0], c.lambda) == doctest::Approx(best).epsilon(1e-12));
  }
}

TEST_CASE("non-finite loss aborts training with a diagnostic") {
  SmallSetup s = small_setup(3, 3.0, 10);
  MultimodalClassifier m({EncoderSpec{4, {8}, Activation::relu},
                          EncoderSpec{4, {8}, Activation::relu}},
                         3);
  m.initialize(2);
  for (double& v : s.z.train.features[0]) v *= 1e308;
  TrainConfig c;
  c.max_epochs = 1;
  try {
    train(m, s.z.train, c);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("parameter norm") != std::string::npos);
  }
}

TEST_CASE("train config validation") {
  TrainConfig c;
  c.lambda = 1.5;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = {};
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = {};
  c.learning_rate = -1.0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
}
