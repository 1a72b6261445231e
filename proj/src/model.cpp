#include "evmost/model.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "evmost/errors.hpp"
#include "evmost/random.hpp"
#include "evmost/special.hpp"

namespace evmost {

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  throw ValidationError("unknown activation '" + name + "' (expected relu or tanh)");
}

std::string to_string(ConfidenceMode m) {
  return m == ConfidenceMode::softmax ? "softmax" : "normalized";
}

ConfidenceMode parse_confidence_mode(const std::string& name) {
  if (name == "normalized") return ConfidenceMode::normalized;
  if (name == "softmax") return ConfidenceMode::softmax;
  throw ValidationError("unknown confidence mode '" + name + "' (expected normalized or softmax)");
}

void EncoderSpec::validate() const {
  if (input_dim == 0) throw ValidationError("encoder: input_dim must be positive");
  if (hidden_dims.empty()) throw ValidationError("encoder: at least one hidden layer is required");
  for (std::size_t h : hidden_dims) {
    if (h == 0) throw ValidationError("encoder: hidden dims must be positive");
  }
}

NIGParams head_constrain(std::span<const double> raw) {
  if (raw.size() != 4) throw ValidationError("head_constrain: expected 4 raw values");
  return NIGParams(raw[0], softplus(raw[1]) + 1e-6, 1.0 + softplus(raw[2]) + 1e-4,
                   softplus(raw[3]) + 1e-6);
}

std::array<double, 4> head_constrain_backward(std::span<const double> raw, const NIGGrad& g) {
  return {g.gamma, g.delta * sigmoid(raw[1]), g.alpha * sigmoid(raw[2]),
          g.beta * sigmoid(raw[3])};
}

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

Prediction make_prediction(const EvidentialOutput& out, ConfidenceMode mode) {
  Prediction p;
  p.predicted_class = out.predicted_class;
  const std::size_t k = out.fused.size();
  std::vector<double> u(k);
  for (std::size_t c = 0; c < k; ++c) u[c] = out.fused[c].st.u();
  if (mode == ConfidenceMode::softmax) {
    p.confidence = softmax(u);
  } else {
    p.confidence.assign(k, 0.0);
    double total = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      p.confidence[c] = std::max(u[c], 0.0);
      total += p.confidence[c];
    }
    if (total > 0.0) {
      for (double& c : p.confidence) c /= total;
    } else {
      p.confidence.assign(k, 1.0 / static_cast<double>(k));
    }
  }
  for (std::size_t m = 0; m < out.nig.size(); ++m) {
    std::vector<double> gamma(k);
    for (std::size_t c = 0; c < k; ++c) gamma[c] = out.nig[m][c].gamma();
    const std::size_t cls = argmax(gamma);
    p.modality_class.push_back(cls);
    p.modality_aleatoric.push_back(out.aleatoric[m][cls]);
    p.modality_epistemic.push_back(out.epistemic[m][cls]);
  }
  p.fused_uncertainty = out.fused_uncertainty[out.predicted_class];
  return p;
}

MultimodalClassifier::MultimodalClassifier(std::vector<EncoderSpec> encoders, std::size_t classes)
    : encoders_(std::move(encoders)), classes_(classes) {
  if (encoders_.empty()) throw ValidationError("model: at least one modality is required");
  if (classes_ < 2) throw ValidationError("model: at least 2 classes are required");
  std::size_t offset = 0;
  for (const auto& enc : encoders_) {
    enc.validate();
    std::vector<DenseLayer> layers;
    std::size_t in = enc.input_dim;
    for (std::size_t h : enc.hidden_dims) {
      layers.push_back({in, h, offset});
      offset += layers.back().size();
      in = h;
    }
    layers.push_back({in, 4 * classes_, offset});
    offset += layers.back().size();
    layers_.push_back(std::move(layers));
  }
  params_.assign(offset, 0.0);
}

void MultimodalClassifier::initialize(std::uint64_t seed) {
  Rng rng(seed);
  std::fill(params_.begin(), params_.end(), 0.0);
  for (const auto& layers : layers_) {
    for (const auto& l : layers) {
      const double limit = std::sqrt(6.0 / static_cast<double>(l.in + l.out));
      for (std::size_t i = 0; i < l.weight_count(); ++i) {
        params_[l.offset + i] = rng.uniform(-limit, limit);
      }
    }
  }
}

void MultimodalClassifier::check_input(const FeatureViews& x) const {
  if (x.size() != encoders_.size()) {
    std::ostringstream os;
    os << "model: got " << x.size() << " modalities, expected " << encoders_.size();
    throw ValidationError(os.str());
  }
  for (std::size_t m = 0; m < x.size(); ++m) {
    if (x[m].size() != encoders_[m].input_dim) {
      std::ostringstream os;
      os << "model: modality " << m << " has " << x[m].size() << " features, expected "
         << encoders_[m].input_dim;
      throw ValidationError(os.str());
    }
  }
}

namespace {

// Post-activation outputs of every layer of one modality; the last entry is
// the raw head output.
std::vector<std::vector<double>> run_layers(std::span<const double> params,
                                            const std::vector<DenseLayer>& layers,
                                            Activation act, std::span<const double> input) {
  std::vector<std::vector<double>> outs;
  outs.reserve(layers.size());
  std::span<const double> a = input;
  for (std::size_t li = 0; li < layers.size(); ++li) {
    const DenseLayer& l = layers[li];
    std::vector<double> z(l.out);
    const double* w = params.data() + l.offset;
    const double* b = params.data() + l.bias_offset();
    for (std::size_t o = 0; o < l.out; ++o) {
      double s = b[o];
      const double* row = w + o * l.in;
      for (std::size_t i = 0; i < l.in; ++i) s += row[i] * a[i];
      z[o] = s;
    }
    if (li + 1 < layers.size()) {
      for (double& v : z) v = act == Activation::tanh ? std::tanh(v) : std::max(v, 0.0);
    }
    outs.push_back(std::move(z));
    a = outs.back();
  }
  return outs;
}

struct ForwardTrace {
  std::vector<std::vector<std::vector<double>>> activations;  // [m][layer]
  EvidentialOutput out;
};

}  // namespace

static ForwardTrace forward_trace(std::span<const double> params,
                                  const std::vector<std::vector<DenseLayer>>& layers,
                                  const std::vector<EncoderSpec>& encoders, std::size_t classes,
                                  const FeatureViews& x) {
  ForwardTrace t;
  EvidentialOutput& out = t.out;
  const std::size_t modalities = encoders.size();
  for (std::size_t m = 0; m < modalities; ++m) {
    t.activations.push_back(run_layers(params, layers[m], encoders[m].activation, x[m]));
    const auto& raw = t.activations.back().back();
    std::vector<NIGParams> nig;
    std::vector<StudentT> st;
    std::vector<double> al;
    std::vector<double> ep;
    for (std::size_t k = 0; k < classes; ++k) {
      nig.push_back(head_constrain(std::span<const double>(raw).subspan(4 * k, 4)));
      st.push_back(nig_to_student_t(nig.back()));
      al.push_back(nig_aleatoric(nig.back()));
      ep.push_back(nig_epistemic(nig.back()));
    }
    out.nig.push_back(std::move(nig));
    out.student_t.push_back(std::move(st));
    out.aleatoric.push_back(std::move(al));
    out.epistemic.push_back(std::move(ep));
  }
  out.fused = fuse_classwise(out.student_t);
  std::vector<double> u(classes);
  for (std::size_t k = 0; k < classes; ++k) {
    const FusedPrediction fp = fused_prediction(out.fused[k]);
    out.fused_uncertainty.push_back(fp.uncertainty);
    u[k] = fp.y_hat;
  }
  out.predicted_class = argmax(u);
  return t;
}

EvidentialOutput MultimodalClassifier::forward(const FeatureViews& x) const {
  check_input(x);
  return forward_trace(params_, layers_, encoders_, classes_, x).out;
}

Prediction MultimodalClassifier::predict(const FeatureViews& x, ConfidenceMode mode) const {
  return make_prediction(forward(x), mode);
}

LossBreakdown MultimodalClassifier::loss(const FeatureViews& x, std::size_t label,
                                         double lambda) const {
  const EvidentialOutput out = forward(x);
  const auto onehot = make_onehot(label, classes_);
  return evidential_objective(out.nig, onehot, lambda);
}

LossBreakdown MultimodalClassifier::accumulate_gradient(const FeatureViews& x, std::size_t label,
                                                        double lambda, std::span<double> grad,
                                                        bool heads_only) const {
  check_input(x);
  if (grad.size() != params_.size()) {
    throw ValidationError("accumulate_gradient: gradient buffer has the wrong length");
  }
  const ForwardTrace t = forward_trace(params_, layers_, encoders_, classes_, x);
  const auto onehot = make_onehot(label, classes_);
  const LossGradients lg = loss_gradients(t.out.nig, onehot, lambda);

  for (std::size_t m = 0; m < encoders_.size(); ++m) {
    const auto& layers = layers_[m];
    const auto& acts = t.activations[m];
    const auto& raw = acts.back();
    std::vector<double> delta(raw.size());
    for (std::size_t k = 0; k < classes_; ++k) {
      const auto d = head_constrain_backward(std::span<const double>(raw).subspan(4 * k, 4),
                                             lg.per_modality[m][k]);
      for (std::size_t j = 0; j < 4; ++j) delta[4 * k + j] = d[j];
    }
    for (std::size_t li = layers.size(); li-- > 0;) {
      const DenseLayer& l = layers[li];
      std::span<const double> a_in = li == 0 ? x[m] : std::span<const double>(acts[li - 1]);
      double* gw = grad.data() + l.offset;
      double* gb = grad.data() + l.bias_offset();
      for (std::size_t o = 0; o < l.out; ++o) {
        gb[o] += delta[o];
        double* row = gw + o * l.in;
        for (std::size_t i = 0; i < l.in; ++i) row[i] += delta[o] * a_in[i];
      }
      if (li == 0 || heads_only) break;
      const double* w = params_.data() + l.offset;
      std::vector<double> prev(l.in, 0.0);
      for (std::size_t o = 0; o < l.out; ++o) {
        const double* row = w + o * l.in;
        for (std::size_t i = 0; i < l.in; ++i) prev[i] += row[i] * delta[o];
      }
      const auto& a = acts[li - 1];
      for (std::size_t i = 0; i < l.in; ++i) {
        prev[i] *= encoders_[m].activation == Activation::tanh ? 1.0 - a[i] * a[i]
                                                               : (a[i] > 0.0 ? 1.0 : 0.0);
      }
      delta = std::move(prev);
    }
  }
  return lg.loss;
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ValidationError("train: learning_rate must be finite and >= 0");
  }
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ValidationError("train: lambda must lie in [0, 1]");
  if (batch_size < 1) throw ValidationError("train: batch_size must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ValidationError("train: Adam decay rates must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw ValidationError("train: Adam epsilon must be positive");
}

double mean_loss(const MultimodalClassifier& model, const Dataset& data, double lambda) {
  if (data.size() == 0) throw ValidationError("mean_loss: empty dataset");
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    total += model.loss(data.sample(i), data.labels[i], lambda).total;
  }
  return total / static_cast<double>(data.size());
}

namespace {

void check_compatible(const MultimodalClassifier& model, const Dataset& data) {
  data.validate();
  if (data.classes != model.classes()) {
    throw ValidationError("dataset class count does not match the model");
  }
  if (data.modalities() != model.modalities()) {
    throw ValidationError("dataset modality count does not match the model");
  }
  for (std::size_t m = 0; m < data.modalities(); ++m) {
    if (data.dims[m] != model.encoders()[m].input_dim) {
      throw ValidationError("dataset feature dims do not match the model encoders");
    }
  }
}

double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

TrainHistory train(MultimodalClassifier& model, const Dataset& train_split,
                   const TrainConfig& config, const Dataset* val_split) {
  config.validate();
  if (train_split.size() == 0) throw ValidationError("train: empty training split");
  check_compatible(model, train_split);
  if (val_split) check_compatible(model, *val_split);

  auto checked_loss = [&](const Dataset& data, const char* when) {
    double v = std::numeric_limits<double>::quiet_NaN();
    try {
      v = mean_loss(model, data, config.lambda);
    } catch (const ValidationError&) {
    }
    if (!std::isfinite(v)) {
      std::ostringstream os;
      os << "non-finite mean " << data.split << " loss " << when << " (parameter norm "
         << l2_norm(model.parameters()) << ")";
      throw NumericalError(os.str());
    }
    return v;
  };

  TrainHistory history;
  history.initial_loss = checked_loss(train_split, "before training");
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<double> best_params(model.parameters().begin(), model.parameters().end());
  if (val_split && config.select_best_val) best_val = checked_loss(*val_split, "before training");

  const std::size_t n_params = model.parameter_count();
  std::vector<bool> trainable(n_params, !config.freeze_encoders);
  if (config.freeze_encoders) {
    for (std::size_t m = 0; m < model.modalities(); ++m) {
      const DenseLayer& h = model.layers(m).back();
      for (std::size_t i = h.offset; i < h.offset + h.size(); ++i) trainable[i] = true;
    }
  }

  std::vector<double> grad(n_params), m1(n_params, 0.0), m2(n_params, 0.0);
  std::vector<std::size_t> order(train_split.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(config.seed ^ 0x9E3779B97F4A7C15ULL);
  std::uint64_t step = 0;
  auto params = model.parameters();

  for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t start = 0, batch = 0; start < order.size();
         start += config.batch_size, ++batch) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::fill(grad.begin(), grad.end(), 0.0);
      double batch_loss = 0.0;
      bool head_failed = false;
      for (std::size_t b = start; b < end && !head_failed; ++b) {
        const std::size_t i = order[b];
        try {
          batch_loss += model
                            .accumulate_gradient(train_split.sample(i), train_split.labels[i],
                                                 config.lambda, grad, config.freeze_encoders)
                            .total;
        } catch (const ValidationError&) {
          // non-finite head outputs cannot form a valid NIG
          head_failed = true;
          batch_loss = std::numeric_limits<double>::quiet_NaN();
        }
      }
      const double scale = 1.0 / static_cast<double>(end - start);
      batch_loss *= scale;
      if (head_failed || !std::isfinite(batch_loss) || !std::isfinite(l2_norm(grad))) {
        std::ostringstream os;
        os << "non-finite training loss at epoch " << epoch + 1 << ", batch " << batch + 1
           << " (batch loss " << batch_loss << ", parameter norm " << l2_norm(params)
           << ", gradient norm " << l2_norm(grad) << ")";
        throw NumericalError(os.str());
      }
      ++step;
      const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
      for (std::size_t p = 0; p < n_params; ++p) {
        if (!trainable[p]) continue;
        const double g = grad[p] * scale;
        m1[p] = config.beta1 * m1[p] + (1.0 - config.beta1) * g;
        m2[p] = config.beta2 * m2[p] + (1.0 - config.beta2) * g * g;
        params[p] -= config.learning_rate * (m1[p] / c1) / (std::sqrt(m2[p] / c2) + config.epsilon);
      }
    }
    const std::string when = "after epoch " + std::to_string(epoch + 1);
    history.epoch_loss.push_back(checked_loss(train_split, when.c_str()));
    if (val_split) {
      const double v = checked_loss(*val_split, when.c_str());
      history.val_loss.push_back(v);
      if (config.select_best_val && v < best_val) {
        best_val = v;
        best_params.assign(params.begin(), params.end());
        history.selected_epoch = epoch + 1;
      }
    }
  }
  if (config.select_best_val && val_split) {
    std::copy(best_params.begin(), best_params.end(), params.begin());
  } else {
    history.selected_epoch = config.max_epochs;
  }
  return history;
}

}  // namespace evmost
