#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "evmost/data.hpp"
#include "evmost/model.hpp"

namespace evmost {

/// Fraction of exact matches. Throws ValidationError on empty or unequal input.
double accuracy(std::span<const std::size_t> preds, std::span<const std::size_t> labels);

/// Cohen's kappa (p_o - p_e) / (1 - p_e) with p_e from the marginal products.
/// With quadratic weighting, disagreement between classes i and j costs
/// (i - j)^2 / (K - 1)^2. Returns 0 when the expected disagreement is 0.
double cohen_kappa(std::span<const std::size_t> preds, std::span<const std::size_t> labels,
                   std::size_t classes, bool quadratic = false);

struct CalibrationBin {
  double confidence = 0.0;  // mean confidence, 0 for an empty bin
  double accuracy = 0.0;    // fraction correct, 0 for an empty bin
  std::size_t count = 0;
};

struct CalibrationResult {
  double ece = 0.0;
  std::vector<CalibrationBin> bins;
};

/// Expected calibration error over n_bins equal-width, right-closed bins:
/// bin b holds confidences in (b/n, (b+1)/n]; 0 goes to the first bin.
CalibrationResult expected_calibration_error(std::span<const double> confidences,
                                             std::span<const bool> correct, std::size_t n_bins);

struct MetricsReport {
  double acc = 0.0;
  double kappa = 0.0;
  double ece = 0.0;
  std::size_t n_samples = 0;
  std::vector<CalibrationBin> per_bin;
};

nlohmann::json to_json(const MetricsReport& r);

struct NoiseSpec {
  std::size_t modality_index = 0;  // 0-based
  double sigma = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Adds i.i.d. N(0, sigma^2) noise to every feature of one modality. Draws are
/// taken row by row, feature by feature, from Rng(spec.seed). sigma = 0 returns
/// an exact copy.
Dataset inject_noise(const Dataset& data, const NoiseSpec& spec);

struct EvalOptions {
  std::size_t ece_bins = 10;
  bool quadratic_kappa = false;
  ConfidenceMode confidence = ConfidenceMode::normalized;
};

/// Per-sample predictions and the summary derived from them.
struct Evaluation {
  MetricsReport fused;
  /// Accuracy of each modality's own argmax-gamma readout.
  std::vector<double> modality_acc;
  /// Means over samples; modality values are read at the modality's own argmax class.
  std::vector<double> mean_aleatoric;
  std::vector<double> mean_epistemic;
  std::vector<double> mean_modality_uncertainty;  // aleatoric + epistemic
  double mean_fused_uncertainty = 0.0;
  std::vector<Prediction> predictions;
};

Evaluation evaluate(const MultimodalClassifier& model, const Dataset& data,
                    const EvalOptions& options = {});

struct SweepRow {
  double sigma = 0.0;
  std::size_t modality = 0;  // 1-based, as reported
  std::uint64_t seed = 0;
  MetricsReport metrics;
  std::vector<double> modality_acc;
  std::vector<double> mean_epistemic;
  std::vector<double> mean_aleatoric;
  std::vector<double> mean_unc;  // per modality, aleatoric + epistemic
  double mean_unc_fused = 0.0;
};

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population std over seeds
};

MeanStd mean_std(std::span<const double> values);

struct SweepAggregate {
  double sigma = 0.0;
  std::size_t modality = 0;
  std::size_t seeds = 0;
  MeanStd acc, kappa, ece, unc_fused;
  std::vector<MeanStd> modality_acc;
  std::vector<MeanStd> epistemic;
  std::vector<MeanStd> unc;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<SweepAggregate> aggregates;
};

/// Evaluates `data` with noise on one modality (0-based modality_index) at
/// every (sigma, seed). Rows are ordered sigma-major, then seed.
SweepResult noise_sweep(const MultimodalClassifier& model, const Dataset& data,
                        std::span<const double> sigmas, std::size_t modality_index,
                        std::span<const std::uint64_t> seeds, const EvalOptions& options = {});

struct Histogram {
  std::string source;
  double lo = 0.0;
  double hi = 0.0;
  std::vector<std::size_t> counts;
  double mean = 0.0;
};

struct UncertaintyDensity {
  /// One histogram per modality (aleatoric + epistemic at its own argmax
  /// class), then the fused uncertainty; all share the pooled range.
  std::vector<Histogram> histograms;
  std::size_t bins = 64;
};

/// Histograms of per-sample uncertainties over `bins` equal-width bins spanning
/// the pooled min-max range. Optionally corrupts one modality first.
UncertaintyDensity uncertainty_density(const MultimodalClassifier& model, const Dataset& data,
                                       const NoiseSpec* noise = nullptr, std::size_t bins = 64);

nlohmann::json sweep_to_json(const SweepResult& r, const std::string& run_id,
                             const std::string& config_hash);
std::string sweep_to_csv(const SweepResult& r, const std::string& config_hash);
nlohmann::json density_to_json(const UncertaintyDensity& d, const std::string& config_hash);
std::string density_to_csv(const UncertaintyDensity& d, const std::string& config_hash);

}  // namespace evmost
