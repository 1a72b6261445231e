#include "evmost/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <sstream>

#include "evmost/errors.hpp"
#include "evmost/random.hpp"

namespace evmost {

namespace {

void check_pair(std::size_t a, std::size_t b, const char* what) {
  if (a == 0) throw ValidationError(std::string(what) + ": empty input");
  if (a != b) throw ValidationError(std::string(what) + ": inputs differ in length");
}

}  // namespace

double accuracy(std::span<const std::size_t> preds, std::span<const std::size_t> labels) {
  check_pair(preds.size(), labels.size(), "accuracy");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hits += preds[i] == labels[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

double cohen_kappa(std::span<const std::size_t> preds, std::span<const std::size_t> labels,
                   std::size_t classes, bool quadratic) {
  check_pair(preds.size(), labels.size(), "cohen_kappa");
  if (classes < 1) throw ValidationError("cohen_kappa: classes must be positive");
  std::vector<double> table(classes * classes, 0.0);
  std::vector<double> row(classes, 0.0), col(classes, 0.0);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] >= classes || labels[i] >= classes) {
      throw ValidationError("cohen_kappa: entry outside [0, classes)");
    }
    table[preds[i] * classes + labels[i]] += 1.0;
    row[preds[i]] += 1.0;
    col[labels[i]] += 1.0;
  }
  const double n = static_cast<double>(preds.size());
  // Disagreement weights: 1 off the diagonal, or the squared normalized distance.
  auto weight = [&](std::size_t i, std::size_t j) {
    if (!quadratic) return i == j ? 0.0 : 1.0;
    if (classes == 1) return 0.0;
    const double d = static_cast<double>(i) - static_cast<double>(j);
    return d * d / static_cast<double>((classes - 1) * (classes - 1));
  };
  double observed = 0.0;
  double expected = 0.0;
  for (std::size_t i = 0; i < classes; ++i) {
    for (std::size_t j = 0; j < classes; ++j) {
      const double w = weight(i, j);
      observed += w * table[i * classes + j] / n;
      expected += w * (row[i] / n) * (col[j] / n);
    }
  }
  if (expected == 0.0) return 0.0;
  return 1.0 - observed / expected;
}

CalibrationResult expected_calibration_error(std::span<const double> confidences,
                                             std::span<const bool> correct, std::size_t n_bins) {
  check_pair(confidences.size(), correct.size(), "ece");
  if (n_bins < 1) throw ValidationError("ece: n_bins must be >= 1");
  std::vector<double> conf_sum(n_bins, 0.0), hit_sum(n_bins, 0.0);
  std::vector<std::size_t> count(n_bins, 0);
  const double nb = static_cast<double>(n_bins);
  for (std::size_t i = 0; i < confidences.size(); ++i) {
    const double c = confidences[i];
    if (!(c >= 0.0 && c <= 1.0)) throw ValidationError("ece: confidence outside [0, 1]");
    const double idx = std::ceil(c * nb) - 1.0;
    const std::size_t b =
        static_cast<std::size_t>(std::clamp(idx, 0.0, nb - 1.0));
    conf_sum[b] += c;
    hit_sum[b] += correct[i] ? 1.0 : 0.0;
    ++count[b];
  }
  CalibrationResult r;
  const double n = static_cast<double>(confidences.size());
  for (std::size_t b = 0; b < n_bins; ++b) {
    CalibrationBin bin;
    bin.count = count[b];
    if (count[b] > 0) {
      bin.confidence = conf_sum[b] / static_cast<double>(count[b]);
      bin.accuracy = hit_sum[b] / static_cast<double>(count[b]);
      r.ece += static_cast<double>(count[b]) / n * std::abs(bin.accuracy - bin.confidence);
    }
    r.bins.push_back(bin);
  }
  return r;
}

nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json bins = nlohmann::json::array();
  for (const auto& b : r.per_bin) {
    bins.push_back({{"confidence", b.confidence}, {"accuracy", b.accuracy}, {"count", b.count}});
  }
  return {{"acc", r.acc},
          {"kappa", r.kappa},
          {"ece", r.ece},
          {"n_samples", r.n_samples},
          {"per_bin", bins}};
}

void NoiseSpec::validate() const {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
    throw ValidationError("noise: sigma must be finite and >= 0");
  }
}

Dataset inject_noise(const Dataset& data, const NoiseSpec& spec) {
  spec.validate();
  if (spec.modality_index >= data.modalities()) {
    std::ostringstream os;
    os << "noise: modality index " << spec.modality_index << " out of range (dataset has "
       << data.modalities() << ")";
    throw ValidationError(os.str());
  }
  Dataset out = data;
  if (spec.sigma == 0.0) return out;
  Rng rng(spec.seed);
  for (double& v : out.features[spec.modality_index]) v += spec.sigma * rng.normal();
  return out;
}

Evaluation evaluate(const MultimodalClassifier& model, const Dataset& data,
                    const EvalOptions& options) {
  data.validate();
  if (data.size() == 0) throw ValidationError("evaluate: empty dataset");
  const std::size_t n = data.size();
  const std::size_t mods = model.modalities();
  Evaluation e;
  std::vector<std::size_t> preds(n);
  std::vector<std::vector<std::size_t>> modality_preds(mods, std::vector<std::size_t>(n));
  std::vector<double> conf(n);
  std::vector<bool> correct_vec(n);
  e.mean_aleatoric.assign(mods, 0.0);
  e.mean_epistemic.assign(mods, 0.0);
  e.mean_modality_uncertainty.assign(mods, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    Prediction p = model.predict(data.sample(i), options.confidence);
    preds[i] = p.predicted_class;
    conf[i] = std::clamp(p.confidence[p.predicted_class], 0.0, 1.0);
    correct_vec[i] = p.predicted_class == data.labels[i];
    for (std::size_t m = 0; m < mods; ++m) {
      modality_preds[m][i] = p.modality_class[m];
      e.mean_aleatoric[m] += p.modality_aleatoric[m];
      e.mean_epistemic[m] += p.modality_epistemic[m];
      e.mean_modality_uncertainty[m] += p.modality_aleatoric[m] + p.modality_epistemic[m];
    }
    e.mean_fused_uncertainty += p.fused_uncertainty;
    e.predictions.push_back(std::move(p));
  }
  const double dn = static_cast<double>(n);
  for (std::size_t m = 0; m < mods; ++m) {
    e.mean_aleatoric[m] /= dn;
    e.mean_epistemic[m] /= dn;
    e.mean_modality_uncertainty[m] /= dn;
    e.modality_acc.push_back(accuracy(modality_preds[m], data.labels));
  }
  e.mean_fused_uncertainty /= dn;

  std::unique_ptr<bool[]> flags(new bool[n]);
  for (std::size_t i = 0; i < n; ++i) flags[i] = correct_vec[i];
  const CalibrationResult cal =
      expected_calibration_error(conf, std::span<const bool>(flags.get(), n), options.ece_bins);
  e.fused.acc = accuracy(preds, data.labels);
  e.fused.kappa = cohen_kappa(preds, data.labels, model.classes(), options.quadratic_kappa);
  e.fused.ece = cal.ece;
  e.fused.n_samples = n;
  e.fused.per_bin = cal.bins;
  return e;
}

MeanStd mean_std(std::span<const double> values) {
  if (values.empty()) throw ValidationError("mean_std: empty input");
  MeanStd r;
  for (double v : values) r.mean += v;
  r.mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - r.mean) * (v - r.mean);
  r.std = std::sqrt(ss / static_cast<double>(values.size()));
  return r;
}

SweepResult noise_sweep(const MultimodalClassifier& model, const Dataset& data,
                        std::span<const double> sigmas, std::size_t modality_index,
                        std::span<const std::uint64_t> seeds, const EvalOptions& options) {
  if (sigmas.empty() || seeds.empty()) {
    throw ValidationError("noise_sweep: need at least one sigma and one seed");
  }
  SweepResult result;
  const std::size_t mods = model.modalities();
  for (double sigma : sigmas) {
    const std::size_t first = result.rows.size();
    for (std::uint64_t seed : seeds) {
      const Dataset noisy = inject_noise(data, {modality_index, sigma, seed});
      const Evaluation e = evaluate(model, noisy, options);
      SweepRow row;
      row.sigma = sigma;
      row.modality = modality_index + 1;
      row.seed = seed;
      row.metrics = e.fused;
      row.modality_acc = e.modality_acc;
      row.mean_epistemic = e.mean_epistemic;
      row.mean_aleatoric = e.mean_aleatoric;
      row.mean_unc = e.mean_modality_uncertainty;
      row.mean_unc_fused = e.mean_fused_uncertainty;
      result.rows.push_back(std::move(row));
    }
    SweepAggregate agg;
    agg.sigma = sigma;
    agg.modality = modality_index + 1;
    agg.seeds = seeds.size();
    auto collect = [&](auto getter) {
      std::vector<double> v;
      for (std::size_t r = first; r < result.rows.size(); ++r) v.push_back(getter(result.rows[r]));
      return mean_std(v);
    };
    agg.acc = collect([](const SweepRow& r) { return r.metrics.acc; });
    agg.kappa = collect([](const SweepRow& r) { return r.metrics.kappa; });
    agg.ece = collect([](const SweepRow& r) { return r.metrics.ece; });
    agg.unc_fused = collect([](const SweepRow& r) { return r.mean_unc_fused; });
    for (std::size_t m = 0; m < mods; ++m) {
      agg.modality_acc.push_back(collect([m](const SweepRow& r) { return r.modality_acc[m]; }));
      agg.epistemic.push_back(collect([m](const SweepRow& r) { return r.mean_epistemic[m]; }));
      agg.unc.push_back(collect([m](const SweepRow& r) { return r.mean_unc[m]; }));
    }
    result.aggregates.push_back(std::move(agg));
  }
  return result;
}

UncertaintyDensity uncertainty_density(const MultimodalClassifier& model, const Dataset& data,
                                       const NoiseSpec* noise, std::size_t bins) {
  if (bins < 1) throw ValidationError("uncertainty_density: bins must be >= 1");
  const Dataset input = noise ? inject_noise(data, *noise) : data;
  const Evaluation e = evaluate(model, input);
  const std::size_t mods = model.modalities();
  std::vector<std::vector<double>> values(mods + 1);
  for (const auto& p : e.predictions) {
    for (std::size_t m = 0; m < mods; ++m) {
      values[m].push_back(p.modality_aleatoric[m] + p.modality_epistemic[m]);
    }
    values[mods].push_back(p.fused_uncertainty);
  }
  double lo = values[0][0];
  double hi = values[0][0];
  for (const auto& v : values) {
    for (double x : v) {
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
  }
  UncertaintyDensity d;
  d.bins = bins;
  const double width = (hi - lo) / static_cast<double>(bins);
  for (std::size_t s = 0; s <= mods; ++s) {
    Histogram h;
    h.source = s < mods ? "m" + std::to_string(s + 1) : "fused";
    h.lo = lo;
    h.hi = hi;
    h.counts.assign(bins, 0);
    for (double x : values[s]) {
      std::size_t b = 0;
      if (width > 0.0) {
        b = static_cast<std::size_t>(std::floor((x - lo) / width));
        b = std::min(b, bins - 1);
      }
      ++h.counts[b];
      h.mean += x;
    }
    h.mean /= static_cast<double>(values[s].size());
    d.histograms.push_back(std::move(h));
  }
  return d;
}

namespace {

nlohmann::json mean_std_json(const MeanStd& m) { return {{"mean", m.mean}, {"std", m.std}}; }

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

nlohmann::json sweep_to_json(const SweepResult& r, const std::string& run_id,
                             const std::string& config_hash) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) {
    nlohmann::json j = {{"sigma", row.sigma},
                        {"modality", row.modality},
                        {"seed", row.seed},
                        {"acc", row.metrics.acc},
                        {"kappa", row.metrics.kappa},
                        {"ece", row.metrics.ece},
                        {"n_samples", row.metrics.n_samples}};
    for (std::size_t m = 0; m < row.mean_unc.size(); ++m) {
      const std::string s = std::to_string(m + 1);
      j["mean_unc_m" + s] = row.mean_unc[m];
      j["mean_ep_m" + s] = row.mean_epistemic[m];
      j["mean_al_m" + s] = row.mean_aleatoric[m];
      j["acc_m" + s] = row.modality_acc[m];
    }
    j["mean_unc_fused"] = row.mean_unc_fused;
    rows.push_back(std::move(j));
  }
  nlohmann::json aggs = nlohmann::json::array();
  for (const auto& a : r.aggregates) {
    nlohmann::json j = {{"sigma", a.sigma},          {"modality", a.modality},
                        {"seeds", a.seeds},          {"acc", mean_std_json(a.acc)},
                        {"kappa", mean_std_json(a.kappa)}, {"ece", mean_std_json(a.ece)},
                        {"mean_unc_fused", mean_std_json(a.unc_fused)}};
    for (std::size_t m = 0; m < a.unc.size(); ++m) {
      const std::string s = std::to_string(m + 1);
      j["mean_unc_m" + s] = mean_std_json(a.unc[m]);
      j["mean_ep_m" + s] = mean_std_json(a.epistemic[m]);
      j["acc_m" + s] = mean_std_json(a.modality_acc[m]);
    }
    aggs.push_back(std::move(j));
  }
  return {{"run_id", run_id}, {"config_hash", config_hash}, {"rows", rows}, {"aggregates", aggs}};
}

std::string sweep_to_csv(const SweepResult& r, const std::string& config_hash) {
  std::ostringstream os;
  const std::size_t mods = r.rows.empty() ? 0 : r.rows.front().mean_unc.size();
  os << "config_hash,sigma,modality,seed,acc,kappa,ece";
  for (std::size_t m = 1; m <= mods; ++m) os << ",mean_unc_m" << m;
  os << ",mean_unc_fused";
  for (std::size_t m = 1; m <= mods; ++m) os << ",mean_ep_m" << m << ",acc_m" << m;
  os << '\n';
  for (const auto& row : r.rows) {
    os << config_hash << ',' << fmt(row.sigma) << ',' << row.modality << ',' << row.seed << ','
       << fmt(row.metrics.acc) << ',' << fmt(row.metrics.kappa) << ',' << fmt(row.metrics.ece);
    for (double u : row.mean_unc) os << ',' << fmt(u);
    os << ',' << fmt(row.mean_unc_fused);
    for (std::size_t m = 0; m < mods; ++m) {
      os << ',' << fmt(row.mean_epistemic[m]) << ',' << fmt(row.modality_acc[m]);
    }
    os << '\n';
  }
  return os.str();
}

nlohmann::json density_to_json(const UncertaintyDensity& d, const std::string& config_hash) {
  nlohmann::json hs = nlohmann::json::array();
  for (const auto& h : d.histograms) {
    hs.push_back({{"source", h.source},
                  {"lo", h.lo},
                  {"hi", h.hi},
                  {"mean", h.mean},
                  {"counts", h.counts}});
  }
  return {{"config_hash", config_hash}, {"bins", d.bins}, {"histograms", hs}};
}

std::string density_to_csv(const UncertaintyDensity& d, const std::string& config_hash) {
  std::ostringstream os;
  os << "config_hash,source,bin,bin_lo,bin_hi,count\n";
  for (const auto& h : d.histograms) {
    const double width = (h.hi - h.lo) / static_cast<double>(d.bins);
    for (std::size_t b = 0; b < d.bins; ++b) {
      os << config_hash << ',' << h.source << ',' << b << ','
         << fmt(h.lo + width * static_cast<double>(b)) << ','
         << fmt(h.lo + width * static_cast<double>(b + 1)) << ',' << h.counts[b] << '\n';
    }
  }
  return os.str();
}

}  // namespace evmost
