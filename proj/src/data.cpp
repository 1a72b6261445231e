#include "evmost/data.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "evmost/errors.hpp"
#include "evmost/random.hpp"

namespace evmost {

std::span<const double> Dataset::row(std::size_t modality, std::size_t index) const {
  const std::size_t d = dims[modality];
  return {features[modality].data() + index * d, d};
}

std::span<double> Dataset::row(std::size_t modality, std::size_t index) {
  const std::size_t d = dims[modality];
  return {features[modality].data() + index * d, d};
}

FeatureViews Dataset::sample(std::size_t index) const {
  FeatureViews views;
  views.reserve(dims.size());
  for (std::size_t m = 0; m < dims.size(); ++m) views.push_back(row(m, index));
  return views;
}

void Dataset::validate() const {
  if (dims.size() != features.size()) {
    throw ValidationError("dataset: dims and feature matrices disagree on modality count");
  }
  for (std::size_t m = 0; m < dims.size(); ++m) {
    if (dims[m] == 0) throw ValidationError("dataset: modality with zero features");
    if (features[m].size() != dims[m] * labels.size()) {
      std::ostringstream os;
      os << "dataset: modality " << m << " holds " << features[m].size() << " values, expected "
         << dims[m] * labels.size();
      throw ValidationError(os.str());
    }
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= classes) {
      std::ostringstream os;
      os << "dataset: label " << labels[i] << " at row " << i << " is outside [0, " << classes
         << ")";
      throw ValidationError(os.str());
    }
  }
}

void SyntheticSpec::validate() const {
  if (classes < 2) throw ValidationError("synthetic spec: need at least 2 classes");
  if (dims.empty() || dims.size() != separation.size()) {
    throw ValidationError("synthetic spec: dims and separation must list every modality");
  }
  for (std::size_t d : dims) {
    if (d == 0) throw ValidationError("synthetic spec: dims must be >= 1");
  }
  for (double s : separation) {
    if (!(s >= 0.0) || !std::isfinite(s)) {
      throw ValidationError("synthetic spec: separation must be finite and >= 0");
    }
  }
  if (split_sizes) {
    if (split_sizes->train == 0) throw ValidationError("synthetic spec: empty train split");
  } else if (n_per_class == 0) {
    throw ValidationError("synthetic spec: n_per_class must be >= 1");
  }
}

std::vector<std::vector<double>> synthetic_class_means(std::size_t classes, std::size_t dims,
                                                       double separation) {
  std::vector<std::vector<double>> means(classes, std::vector<double>(dims, 0.0));
  if (dims >= classes) {
    const double offset = separation / std::sqrt(2.0);
    for (std::size_t k = 0; k < classes; ++k) means[k][k] = offset;
  } else {
    for (std::size_t k = 0; k < classes; ++k) means[k][0] = separation * static_cast<double>(k);
  }
  return means;
}

namespace {

Dataset empty_like(const SyntheticSpec& spec, const std::string& split) {
  Dataset d;
  d.dims = spec.dims;
  d.features.resize(spec.dims.size());
  d.classes = spec.classes;
  d.split = split;
  return d;
}

}  // namespace

DatasetSplits generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  SplitSizes sizes;
  std::size_t total = 0;
  if (spec.split_sizes) {
    sizes = *spec.split_sizes;
    total = sizes.train + sizes.val + sizes.test;
  } else {
    total = spec.classes * spec.n_per_class;
    sizes.train = static_cast<std::size_t>(std::floor(0.70 * static_cast<double>(total) + 0.5));
    sizes.val = static_cast<std::size_t>(std::floor(0.15 * static_cast<double>(total) + 0.5));
    sizes.test = total - sizes.train - sizes.val;
  }

  Rng rng(spec.seed);
  std::vector<std::size_t> labels(total);
  for (std::size_t i = 0; i < total; ++i) labels[i] = i % spec.classes;
  rng.shuffle(std::span<std::size_t>(labels));

  std::vector<std::vector<std::vector<double>>> means;
  for (std::size_t m = 0; m < spec.dims.size(); ++m) {
    means.push_back(synthetic_class_means(spec.classes, spec.dims[m], spec.separation[m]));
  }

  // Modality-major draw order: all rows of modality 1, then modality 2, ...
  std::vector<std::vector<double>> features(spec.dims.size());
  for (std::size_t m = 0; m < spec.dims.size(); ++m) {
    features[m].resize(total * spec.dims[m]);
    for (std::size_t i = 0; i < total; ++i) {
      for (std::size_t f = 0; f < spec.dims[m]; ++f) {
        features[m][i * spec.dims[m] + f] = means[m][labels[i]][f] + rng.normal();
      }
    }
  }

  DatasetSplits out{empty_like(spec, "train"), empty_like(spec, "val"), empty_like(spec, "test")};
  auto fill = [&](Dataset& d, std::size_t begin, std::size_t count) {
    d.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(begin),
                    labels.begin() + static_cast<std::ptrdiff_t>(begin + count));
    for (std::size_t m = 0; m < spec.dims.size(); ++m) {
      const std::size_t dm = spec.dims[m];
      d.features[m].assign(features[m].begin() + static_cast<std::ptrdiff_t>(begin * dm),
                           features[m].begin() + static_cast<std::ptrdiff_t>((begin + count) * dm));
    }
  };
  fill(out.train, 0, sizes.train);
  fill(out.val, sizes.train, sizes.val);
  fill(out.test, sizes.train + sizes.val, sizes.test);
  return out;
}

std::string csv_header(const std::vector<std::size_t>& dims) {
  std::string h = "label";
  for (std::size_t m = 0; m < dims.size(); ++m) {
    for (std::size_t f = 0; f < dims[m]; ++f) {
      h += ",m" + std::to_string(m + 1) + "_" + std::to_string(f);
    }
  }
  return h;
}

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      cells.push_back(line.substr(start));
      break;
    }
    cells.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return cells;
}

[[noreturn]] void csv_error(const std::string& source, std::size_t line, const std::string& what) {
  std::ostringstream os;
  os << source << ": line " << line << ": " << what;
  throw ValidationError(os.str());
}

}  // namespace

Dataset parse_csv(const std::string& text, const CsvSchema& schema, const std::string& source,
                  const std::string& split) {
  if (schema.classes < 1 || schema.dims.empty()) {
    throw ValidationError(source + ": schema needs a class count and modality dims");
  }
  const std::string expected = csv_header(schema.dims);
  const std::size_t columns = 1 + std::accumulate(schema.dims.begin(), schema.dims.end(),
                                                  std::size_t{0});

  Dataset d;
  d.dims = schema.dims;
  d.features.resize(schema.dims.size());
  d.classes = schema.classes;
  d.split = split;

  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!have_header) {
      if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
      if (line != expected) {
        csv_error(source, line_no, "missing or mismatched header; expected '" + expected + "'");
      }
      have_header = true;
      continue;
    }
    if (line.empty()) continue;
    const auto cells = split_commas(line);
    if (cells.size() != columns) {
      std::ostringstream os;
      os << "ragged row " << d.labels.size() + 1 << ": " << cells.size() << " cells, expected "
         << columns;
      csv_error(source, line_no, os.str());
    }
    long long label = 0;
    {
      const auto cell = cells[0];
      const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), label);
      if (res.ec != std::errc() || res.ptr != cell.data() + cell.size()) {
        csv_error(source, line_no, "column 'label': non-integer label '" + std::string(cell) + "'");
      }
      if (label < 0 || static_cast<unsigned long long>(label) >= schema.classes) {
        std::ostringstream os;
        os << "column 'label': label " << label << " outside [0, " << schema.classes << ")";
        csv_error(source, line_no, os.str());
      }
    }
    d.labels.push_back(static_cast<std::size_t>(label));
    std::size_t col = 1;
    for (std::size_t m = 0; m < schema.dims.size(); ++m) {
      for (std::size_t f = 0; f < schema.dims[m]; ++f, ++col) {
        const auto cell = cells[col];
        double value = 0.0;
        const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), value);
        if (res.ec != std::errc() || res.ptr != cell.data() + cell.size() || !std::isfinite(value)) {
          std::ostringstream os;
          os << "column 'm" << m + 1 << "_" << f << "': non-numeric cell '" << cell << "'";
          csv_error(source, line_no, os.str());
        }
        d.features[m].push_back(value);
      }
    }
  }
  if (!have_header) csv_error(source, 1, "missing header; expected '" + expected + "'");
  return d;
}

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema,
                 const std::string& split) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str(), schema, path.string(), split);
}

std::string format_csv(const Dataset& data) {
  data.validate();
  std::string out = csv_header(data.dims);
  out += '\n';
  char num[32];
  for (std::size_t i = 0; i < data.size(); ++i) {
    out += std::to_string(data.labels[i]);
    for (std::size_t m = 0; m < data.modalities(); ++m) {
      for (double v : data.row(m, i)) {
        std::snprintf(num, sizeof num, "%.17g", v);
        out += ',';
        out += num;
      }
    }
    out += '\n';
  }
  return out;
}

void write_csv(const std::filesystem::path& path, const Dataset& data) {
  const std::string text = format_csv(data);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write dataset file " + path.string());
  out << text;
  if (!out) throw IoError("failed while writing " + path.string());
}

Standardization compute_standardization(const Dataset& train) {
  train.validate();
  if (train.size() == 0) throw ValidationError("standardize: empty training split");
  Standardization s;
  const double n = static_cast<double>(train.size());
  for (std::size_t m = 0; m < train.modalities(); ++m) {
    const std::size_t d = train.dims[m];
    std::vector<double> mean(d, 0.0);
    std::vector<double> var(d, 0.0);
    for (std::size_t i = 0; i < train.size(); ++i) {
      const auto r = train.row(m, i);
      for (std::size_t f = 0; f < d; ++f) mean[f] += r[f];
    }
    for (double& v : mean) v /= n;
    for (std::size_t i = 0; i < train.size(); ++i) {
      const auto r = train.row(m, i);
      for (std::size_t f = 0; f < d; ++f) var[f] += (r[f] - mean[f]) * (r[f] - mean[f]);
    }
    std::vector<double> sd(d);
    for (std::size_t f = 0; f < d; ++f) {
      sd[f] = std::sqrt(var[f] / n);
      if (sd[f] < 1e-12) sd[f] = 1.0;
    }
    s.mean.push_back(std::move(mean));
    s.stddev.push_back(std::move(sd));
  }
  return s;
}

Dataset apply_standardization(const Dataset& data, const Standardization& stats) {
  data.validate();
  if (stats.mean.size() != data.modalities() || stats.stddev.size() != data.modalities()) {
    throw ValidationError("standardization statistics do not match the dataset modalities");
  }
  Dataset out = data;
  for (std::size_t m = 0; m < data.modalities(); ++m) {
    if (stats.mean[m].size() != data.dims[m] || stats.stddev[m].size() != data.dims[m]) {
      throw ValidationError("standardization statistics do not match the feature dims");
    }
    for (std::size_t i = 0; i < data.size(); ++i) {
      auto r = out.row(m, i);
      for (std::size_t f = 0; f < r.size(); ++f) {
        r[f] = (r[f] - stats.mean[m][f]) / stats.stddev[m][f];
      }
    }
  }
  out.standardization = stats;
  return out;
}

StandardizedSplits standardize(const Dataset& train, const std::vector<Dataset>& others) {
  StandardizedSplits out;
  out.stats = compute_standardization(train);
  out.train = apply_standardization(train, out.stats);
  for (const auto& o : others) out.others.push_back(apply_standardization(o, out.stats));
  return out;
}

nlohmann::json standardization_to_json(const Standardization& stats) {
  return {{"mean", stats.mean}, {"std", stats.stddev}};
}

Standardization standardization_from_json(const nlohmann::json& j) {
  Standardization s;
  try {
    s.mean = j.at("mean").get<std::vector<std::vector<double>>>();
    s.stddev = j.at("std").get<std::vector<std::vector<double>>>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed standardization block: ") + e.what());
  }
  return s;
}

}  // namespace evmost
