#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace evmost {

/// Per-modality, per-feature z-scoring statistics.
struct Standardization {
  std::vector<std::vector<double>> mean;
  std::vector<std::vector<double>> stddev;
};

/// Features of one sample, one view per modality.
using FeatureViews = std::vector<std::span<const double>>;

/// Multimodal tabular dataset. features[m] is a row-major (size() x dims[m])
/// matrix; every modality shares the row order of `labels`.
struct Dataset {
  std::vector<std::size_t> dims;
  std::vector<std::vector<double>> features;
  std::vector<std::size_t> labels;
  std::size_t classes = 0;
  std::string split;
  std::optional<Standardization> standardization;

  std::size_t size() const { return labels.size(); }
  std::size_t modalities() const { return dims.size(); }
  std::span<const double> row(std::size_t modality, std::size_t index) const;
  std::span<double> row(std::size_t modality, std::size_t index);
  FeatureViews sample(std::size_t index) const;

  /// Throws ValidationError when row counts disagree or a label is >= classes.
  void validate() const;
};

struct SplitSizes {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;
};

/// Gaussian class-conditional blobs with identity covariance per modality.
///
/// `separation[m]` is the distance between any two class means of modality m
/// in units of the within-class standard deviation. With dims[m] >= classes the
/// means sit at separation / sqrt(2) along distinct axes (a regular simplex);
/// with fewer dimensions they are spaced `separation` apart along the first axis.
struct SyntheticSpec {
  std::size_t classes = 3;
  std::size_t n_per_class = 100;
  std::vector<std::size_t> dims{4, 4};
  std::vector<double> separation{3.0, 3.0};
  std::uint64_t seed = 42;
  /// Explicit split sizes. When unset, K * n_per_class samples are split
  /// 70/15/15; when set, exactly train + val + test samples are drawn with
  /// labels balanced as evenly as the total allows.
  std::optional<SplitSizes> split_sizes;

  void validate() const;
};

struct DatasetSplits {
  Dataset train;
  Dataset val;
  Dataset test;
};

/// Deterministic under spec.seed. Returned splits are not standardized.
DatasetSplits generate_synthetic(const SyntheticSpec& spec);

/// Class means used by generate_synthetic for one modality (classes x dims).
std::vector<std::vector<double>> synthetic_class_means(std::size_t classes, std::size_t dims,
                                                       double separation);

struct CsvSchema {
  std::size_t classes = 0;
  std::vector<std::size_t> dims;
};

/// Header line `label,m1_0,...,m1_{d1-1},m2_0,...` for the schema.
std::string csv_header(const std::vector<std::size_t>& dims);

/// Reads a dataset CSV (UTF-8, comma separated, LF or CRLF line endings).
/// Throws IoError when the file cannot be opened and ValidationError for a
/// missing or mismatched header, ragged rows, non-numeric cells and labels
/// outside [0, classes), naming the offending row and column.
Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema,
                 const std::string& split = "");

/// Parses CSV text; same diagnostics as load_csv with `source` in messages.
Dataset parse_csv(const std::string& text, const CsvSchema& schema, const std::string& source,
                  const std::string& split = "");

/// Writes values with 17 significant digits so they read back exactly.
void write_csv(const std::filesystem::path& path, const Dataset& data);
std::string format_csv(const Dataset& data);

/// Per-feature mean and population standard deviation of `train`.
Standardization compute_standardization(const Dataset& train);

/// z-scores `data` with the given statistics. Features whose train std is
/// below 1e-12 are centred only (their stored std is 1).
Dataset apply_standardization(const Dataset& data, const Standardization& stats);

struct StandardizedSplits {
  Dataset train;
  std::vector<Dataset> others;
  Standardization stats;
};

/// Computes statistics on train only and applies them to train and others.
StandardizedSplits standardize(const Dataset& train, const std::vector<Dataset>& others = {});

nlohmann::json standardization_to_json(const Standardization& stats);
Standardization standardization_from_json(const nlohmann::json& j);

}  // namespace evmost
