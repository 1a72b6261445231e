#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "evmost/data.hpp"
#include "evmost/distributions.hpp"
#include "evmost/fusion.hpp"
#include "evmost/losses.hpp"

namespace evmost {

enum class Activation { relu, tanh };

std::string to_string(Activation a);
/// Accepts "relu" or "tanh"; throws ValidationError otherwise.
Activation parse_activation(const std::string& name);

/// Feedforward encoder for one modality.
struct EncoderSpec {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_dims{64, 64};
  Activation activation = Activation::tanh;

  void validate() const;
  bool operator==(const EncoderSpec&) const = default;
};

/// Maps four raw head outputs onto a valid NIG:
///   gamma = r0, delta = softplus(r1) + 1e-6,
///   alpha = 1 + softplus(r2) + 1e-4, beta = softplus(r3) + 1e-6
NIGParams head_constrain(std::span<const double> raw);

/// Gradient w.r.t. the raw outputs given the gradient w.r.t. the NIG.
std::array<double, 4> head_constrain_backward(std::span<const double> raw, const NIGGrad& g);

/// Location of one dense layer inside the flat parameter vector: the
/// (out x in) row-major weight matrix at `offset`, followed by `out` biases.
struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t offset = 0;

  std::size_t weight_count() const { return in * out; }
  std::size_t bias_offset() const { return offset + in * out; }
  std::size_t size() const { return in * out + out; }
  bool operator==(const DenseLayer&) const = default;
};

struct EvidentialOutput {
  /// [modality][class]
  std::vector<std::vector<NIGParams>> nig;
  std::vector<std::vector<StudentT>> student_t;
  std::vector<std::vector<double>> aleatoric;
  std::vector<std::vector<double>> epistemic;
  /// [class]
  std::vector<FusedStudentT> fused;
  std::vector<double> fused_uncertainty;
  /// argmax of the fused locations, lowest index on ties.
  std::size_t predicted_class = 0;
};

/// How the confidence vector is formed from the fused locations.
///  normalized: p_k = max(u_k, 0) / sum_j max(u_j, 0), uniform if every u_k <= 0
///  softmax:    p = softmax(u)
enum class ConfidenceMode { normalized, softmax };

std::string to_string(ConfidenceMode m);
ConfidenceMode parse_confidence_mode(const std::string& name);

struct Prediction {
  std::size_t predicted_class = 0;
  std::vector<double> confidence;
  /// Per modality, read at that modality's own argmax-gamma class.
  std::vector<std::size_t> modality_class;
  std::vector<double> modality_aleatoric;
  std::vector<double> modality_epistemic;
  /// Fused sigma v / (v - 2) at the predicted class.
  double fused_uncertainty = 0.0;
};

Prediction make_prediction(const EvidentialOutput& out, ConfidenceMode mode);

/// Index of the largest value, lowest index on ties.
std::size_t argmax(std::span<const double> values);

/// One encoder and one evidential head per modality; all parameters live in
/// one flat vector. Per modality the layout is encoder layers in order, then
/// the head, which emits 4 raw values per class ordered (gamma, delta, alpha,
/// beta) class by class.
class MultimodalClassifier {
 public:
  MultimodalClassifier(std::vector<EncoderSpec> encoders, std::size_t classes);

  /// Uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
  void initialize(std::uint64_t seed);

  std::size_t classes() const { return classes_; }
  std::size_t modalities() const { return encoders_.size(); }
  const std::vector<EncoderSpec>& encoders() const { return encoders_; }
  /// Encoder layers followed by the head layer of one modality.
  const std::vector<DenseLayer>& layers(std::size_t modality) const { return layers_[modality]; }

  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }
  std::size_t parameter_count() const { return params_.size(); }
  /// Flat offset where the heads' parameters of `modality` begin.
  std::size_t head_offset(std::size_t modality) const { return layers_[modality].back().offset; }

  EvidentialOutput forward(const FeatureViews& x) const;
  Prediction predict(const FeatureViews& x,
                     ConfidenceMode mode = ConfidenceMode::normalized) const;

  /// Objective for one sample.
  LossBreakdown loss(const FeatureViews& x, std::size_t label, double lambda) const;

  /// Adds d(objective)/d(parameters) into `grad` (length parameter_count())
  /// and returns the objective. With heads_only the encoder entries are left
  /// untouched.
  LossBreakdown accumulate_gradient(const FeatureViews& x, std::size_t label, double lambda,
                                    std::span<double> grad, bool heads_only = false) const;

  bool operator==(const MultimodalClassifier&) const = default;

 private:
  void check_input(const FeatureViews& x) const;

  std::vector<EncoderSpec> encoders_;
  std::size_t classes_;
  std::vector<std::vector<DenseLayer>> layers_;
  std::vector<double> params_;
};

struct TrainConfig {
  double learning_rate = 1e-4;
  std::size_t max_epochs = 100;
  std::size_t batch_size = 16;
  double lambda = kDefaultLambda;
  std::uint64_t seed = 42;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Update the evidential heads only.
  bool freeze_encoders = false;
  /// Keep the parameters of the epoch with the lowest validation loss.
  bool select_best_val = false;

  void validate() const;
};

struct TrainHistory {
  /// Mean objective over the full training split before any update.
  double initial_loss = 0.0;
  /// Mean objective over the full training split after each epoch.
  std::vector<double> epoch_loss;
  /// Mean validation objective after each epoch (empty without a validation split).
  std::vector<double> val_loss;
  /// 1-based epoch whose parameters were kept; 0 means the initialization.
  std::size_t selected_epoch = 0;
};

/// Mean objective of `model` over `data`, summed in row order.
double mean_loss(const MultimodalClassifier& model, const Dataset& data, double lambda);

/// Mini-batch Adam on the mean per-sample objective. Samples are reshuffled
/// every epoch from a generator seeded by config.seed; the model must already
/// be initialized. Throws NumericalError when a batch loss is not finite.
TrainHistory train(MultimodalClassifier& model, const Dataset& train_split,
                   const TrainConfig& config, const Dataset* val_split = nullptr);

}  // namespace evmost
