// evmost: generate data, train, evaluate, sweep noise, report densities, fuse.
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "evmost/artifact.hpp"
#include "evmost/checkpoint.hpp"
#include "evmost/data.hpp"
#include "evmost/errors.hpp"
#include "evmost/eval.hpp"
#include "evmost/fusion.hpp"
#include "evmost/model.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace evmost;

namespace {

enum ExitCode { kOk = 0, kValidation = 1, kIo = 2, kNumerical = 3 };

template <typename T>
std::vector<T> parse_list(const std::string& text, const std::string& flag) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::istringstream is(item);
    T v{};
    if (!(is >> v) || !(is >> std::ws).eof()) {
      throw ValidationError(flag + ": cannot parse '" + item + "'");
    }
    out.push_back(v);
  }
  if (out.empty()) throw ValidationError(flag + ": empty list");
  return out;
}

// Fills options that were not given on the command line from a flat JSON
// object keyed by long flag names.
void apply_config_file(CLI::App* cmd, const std::string& path) {
  const json j = read_json_file(path);
  if (!j.is_object()) throw ValidationError(path + ": config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    CLI::Option* opt = cmd->get_option_no_throw("--" + key);
    if (opt == nullptr || key == "config") {
      throw ValidationError(path + ": unknown key '" + key + "' for " + cmd->get_name());
    }
    if (opt->count() > 0) continue;
    std::string text;
    if (value.is_string()) {
      text = value.get<std::string>();
    } else if (value.is_array()) {
      for (std::size_t i = 0; i < value.size(); ++i) {
        text += (i ? "," : "") + (value[i].is_string() ? value[i].get<std::string>()
                                                       : value[i].dump());
      }
    } else {
      text = value.dump();
    }
    opt->add_result(text);
    opt->run_callback();
  }
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir.string());
}

// ---- dataset directory -----------------------------------------------------

struct DatasetDir {
  json sidecar;
  CsvSchema schema;
  fs::path root;
};

DatasetDir open_dataset_dir(const fs::path& dir) {
  DatasetDir d;
  d.root = dir;
  d.sidecar = read_json_file(dir / "dataset.json");
  try {
    d.schema.classes = d.sidecar.at("classes").get<std::size_t>();
    d.schema.dims = d.sidecar.at("dims").get<std::vector<std::size_t>>();
  } catch (const json::exception& e) {
    throw ValidationError((dir / "dataset.json").string() + ": " + e.what());
  }
  return d;
}

Dataset load_split(const DatasetDir& d, const std::string& split) {
  return load_csv(d.root / (split + ".csv"), d.schema, split);
}

// ---- generate-data ---------------------------------------------------------

struct GenerateOptions {
  std::size_t classes = 3;
  std::size_t per_class = 100;
  std::string dims = "4,4";
  std::string sep = "3,3";
  std::string split;
  std::uint64_t seed = 42;
  std::string out = "data";
};

int cmd_generate(const GenerateOptions& o) {
  SyntheticSpec spec;
  spec.classes = o.classes;
  spec.n_per_class = o.per_class;
  spec.dims = parse_list<std::size_t>(o.dims, "--dims");
  spec.separation = parse_list<double>(o.sep, "--sep");
  spec.seed = o.seed;
  if (!o.split.empty()) {
    const auto s = parse_list<std::size_t>(o.split, "--split");
    if (s.size() != 3) throw ValidationError("--split: expected train,val,test");
    spec.split_sizes = SplitSizes{s[0], s[1], s[2]};
  }
  spec.validate();
  const DatasetSplits splits = generate_synthetic(spec);
  const Standardization stats = compute_standardization(splits.train);

  json config = {{"command", "generate-data"},
                 {"classes", spec.classes},
                 {"dims", spec.dims},
                 {"separation", spec.separation},
                 {"seed", spec.seed},
                 {"n_per_class", spec.n_per_class},
                 {"split_sizes", {splits.train.size(), splits.val.size(), splits.test.size()}}};
  const std::string hash = config_hash(config);

  const fs::path out(o.out);
  ensure_dir(out);
  write_csv(out / "train.csv", splits.train);
  write_csv(out / "val.csv", splits.val);
  write_csv(out / "test.csv", splits.test);
  json sidecar = config;
  sidecar.erase("command");
  sidecar["format"] = "evmost-dataset";
  sidecar["config_hash"] = hash;
  sidecar["files"] = {{"train", "train.csv"}, {"val", "val.csv"}, {"test", "test.csv"}};
  sidecar["standardization"] = standardization_to_json(stats);
  write_json_file(out / "dataset.json", sidecar);
  std::cout << "wrote " << splits.train.size() << "/" << splits.val.size() << "/"
            << splits.test.size() << " samples to " << out.string() << " (config " << hash
            << ")\n";
  return kOk;
}

// ---- train -----------------------------------------------------------------

struct TrainOptions {
  std::string data = "data";
  std::string out = "run";
  std::string hidden = "64,64";
  std::string activation = "tanh";
  TrainConfig config;
};

int cmd_train(const TrainOptions& o) {
  const DatasetDir d = open_dataset_dir(o.data);
  const Dataset raw_train = load_split(d, "train");
  const Dataset raw_val = load_split(d, "val");
  const Dataset raw_test = load_split(d, "test");
  StandardizedSplits st = standardize(raw_train, {raw_val, raw_test});
  o.config.validate();

  const auto hidden = parse_list<std::size_t>(o.hidden, "--hidden");
  const Activation act = parse_activation(o.activation);
  std::vector<EncoderSpec> encoders;
  for (std::size_t dim : d.schema.dims) encoders.push_back({dim, hidden, act});

  json model_json = json::array();
  for (const auto& e : encoders) model_json.push_back(encoder_spec_to_json(e));
  const json config = {{"command", "train"},
                       {"dataset", d.sidecar.value("config_hash", std::string())},
                       {"classes", d.schema.classes},
                       {"encoders", model_json},
                       {"train", train_config_to_json(o.config)}};
  const std::string hash = config_hash(config);

  MultimodalClassifier model(encoders, d.schema.classes);
  model.initialize(o.config.seed);
  const std::string started = utc_now();
  const TrainHistory history = train(model, st.train, o.config, &st.others[0]);
  const std::string finished = utc_now();

  const fs::path out(o.out);
  ensure_dir(out);
  Checkpoint ckpt{model, o.config, st.stats, hash};
  save_checkpoint(out / "checkpoint.json", ckpt);

  RunArtifact a;
  a.run_id = run_id(config, o.config.seed);
  a.config_hash = hash;
  a.config = config;
  a.seed = o.config.seed;
  a.history = history;
  a.metrics["val"] = evaluate(model, st.others[0]).fused;
  a.metrics["test"] = evaluate(model, st.others[1]).fused;
  a.paths = {{"checkpoint", (out / "checkpoint.json").string()},
             {"data", fs::path(o.data).string()}};
  write_json_file(out / "artifact.json", to_json(a));
  write_json_file(out / "timestamps.json",
                  {{"run_id", a.run_id}, {"started", started}, {"finished", finished}});
  std::printf("loss %.6f -> %.6f over %zu epochs; test acc %.4f ece %.4f (config %s)\n",
              history.initial_loss,
              history.epoch_loss.empty() ? history.initial_loss : history.epoch_loss.back(),
              history.epoch_loss.size(), a.metrics["test"].acc, a.metrics["test"].ece,
              hash.c_str());
  return kOk;
}

// ---- evaluate / noise-sweep / report ---------------------------------------

struct EvalCommon {
  std::string checkpoint = "run/checkpoint.json";
  std::string data = "data";
  std::string split = "test";
  std::string out = "eval";
  std::size_t ece_bins = 10;
  bool quadratic_kappa = false;
  std::string confidence = "normalized";
};

struct Loaded {
  Checkpoint ckpt;
  Dataset data;
  EvalOptions options;
  json config;
};

Loaded load_for_eval(const EvalCommon& o, const std::string& command) {
  Checkpoint ckpt = load_checkpoint(o.checkpoint);
  const DatasetDir d = open_dataset_dir(o.data);
  if (d.schema.classes != ckpt.model.classes() || d.schema.dims.size() != ckpt.model.modalities()) {
    throw ValidationError("dataset schema does not match the checkpoint");
  }
  for (std::size_t m = 0; m < d.schema.dims.size(); ++m) {
    if (d.schema.dims[m] != ckpt.model.encoders()[m].input_dim) {
      throw ValidationError("dataset feature dims do not match the checkpoint");
    }
  }
  Dataset data = load_split(d, o.split);
  if (ckpt.standardization) data = apply_standardization(data, *ckpt.standardization);
  EvalOptions opts;
  opts.ece_bins = o.ece_bins;
  opts.quadratic_kappa = o.quadratic_kappa;
  opts.confidence = parse_confidence_mode(o.confidence);
  json config = {{"command", command},
                 {"model", ckpt.config_hash},
                 {"dataset", d.sidecar.value("config_hash", std::string())},
                 {"split", o.split},
                 {"ece_bins", o.ece_bins},
                 {"quadratic_kappa", o.quadratic_kappa},
                 {"confidence", o.confidence}};
  return {std::move(ckpt), std::move(data), opts, std::move(config)};
}

int cmd_evaluate(const EvalCommon& o) {
  const Loaded l = load_for_eval(o, "evaluate");
  const std::string hash = config_hash(l.config);
  const Evaluation e = evaluate(l.ckpt.model, l.data, l.options);
  json j = {{"run_id", run_id(l.config, l.ckpt.config.seed)},
            {"config_hash", hash},
            {"config", l.config},
            {"metrics", to_json(e.fused)},
            {"mean_unc_fused", e.mean_fused_uncertainty}};
  for (std::size_t m = 0; m < e.modality_acc.size(); ++m) {
    const std::string s = std::to_string(m + 1);
    j["acc_m" + s] = e.modality_acc[m];
    j["mean_unc_m" + s] = e.mean_modality_uncertainty[m];
    j["mean_ep_m" + s] = e.mean_epistemic[m];
  }
  const fs::path out(o.out);
  ensure_dir(out);
  write_json_file(out / "metrics.json", j);
  std::ostringstream csv;
  csv << "config_hash,bin,confidence,accuracy,count\n";
  for (std::size_t b = 0; b < e.fused.per_bin.size(); ++b) {
    const auto& bin = e.fused.per_bin[b];
    char line[160];
    std::snprintf(line, sizeof line, "%s,%zu,%.17g,%.17g,%zu\n", hash.c_str(), b, bin.confidence,
                  bin.accuracy, bin.count);
    csv << line;
  }
  write_text_file(out / "metrics.csv", csv.str());
  std::printf("acc %.4f kappa %.4f ece %.4f n %zu (config %s)\n", e.fused.acc, e.fused.kappa,
              e.fused.ece, e.fused.n_samples, hash.c_str());
  return kOk;
}

struct SweepOptions {
  EvalCommon common;
  std::string sigmas = "0,0.1,0.3,0.5,1.0";
  std::string modality = "1";
  std::string noise_seeds = "1,2,3";
};

int cmd_noise_sweep(const SweepOptions& o) {
  Loaded l = load_for_eval(o.common, "noise-sweep");
  const auto sigmas = parse_list<double>(o.sigmas, "--sigmas");
  const auto modalities = parse_list<std::size_t>(o.modality, "--modality");
  const auto seeds = parse_list<std::uint64_t>(o.noise_seeds, "--noise-seeds");
  l.config["sigmas"] = sigmas;
  l.config["modality"] = modalities;
  l.config["noise_seeds"] = seeds;
  const std::string hash = config_hash(l.config);
  SweepResult all;
  for (std::size_t m : modalities) {
    if (m < 1 || m > l.data.modalities()) {
      throw ValidationError("--modality: " + std::to_string(m) + " is not a modality (1-based)");
    }
    SweepResult r = noise_sweep(l.ckpt.model, l.data, sigmas, m - 1, seeds, l.options);
    all.rows.insert(all.rows.end(), r.rows.begin(), r.rows.end());
    all.aggregates.insert(all.aggregates.end(), r.aggregates.begin(), r.aggregates.end());
  }
  const fs::path out(o.common.out);
  ensure_dir(out);
  json j = sweep_to_json(all, run_id(l.config, l.ckpt.config.seed), hash);
  j["config"] = l.config;
  write_json_file(out / "sweep.json", j);
  write_text_file(out / "sweep.csv", sweep_to_csv(all, hash));
  for (const auto& a : all.aggregates) {
    std::printf("modality %zu sigma %-5g acc %.4f +- %.4f  ece %.4f  unc_fused %.4f\n",
                a.modality, a.sigma, a.acc.mean, a.acc.std, a.ece.mean, a.unc_fused.mean);
  }
  return kOk;
}

struct ReportOptions {
  EvalCommon common;
  std::size_t noise_modality = 1;
  double noise_sigma = 1.0;
  std::uint64_t noise_seed = 1;
  std::size_t bins = 64;
};

int cmd_report(const ReportOptions& o) {
  Loaded l = load_for_eval(o.common, "report");
  l.config["noise_modality"] = o.noise_modality;
  l.config["noise_sigma"] = o.noise_sigma;
  l.config["noise_seed"] = o.noise_seed;
  l.config["bins"] = o.bins;
  const std::string hash = config_hash(l.config);
  if (o.noise_modality < 1 || o.noise_modality > l.data.modalities()) {
    throw ValidationError("--noise-modality must name a modality (1-based)");
  }
  const fs::path out(o.common.out);
  ensure_dir(out);
  const UncertaintyDensity clean = uncertainty_density(l.ckpt.model, l.data, nullptr, o.bins);
  const NoiseSpec noise{o.noise_modality - 1, o.noise_sigma, o.noise_seed};
  const UncertaintyDensity noisy = uncertainty_density(l.ckpt.model, l.data, &noise, o.bins);
  json j = {{"config_hash", hash},
            {"config", l.config},
            {"clean", density_to_json(clean, hash)},
            {"noisy", density_to_json(noisy, hash)}};
  write_json_file(out / "density.json", j);
  write_text_file(out / "density_clean.csv", density_to_csv(clean, hash));
  write_text_file(out / "density_noisy.csv", density_to_csv(noisy, hash));
  for (const auto* d : {&clean, &noisy}) {
    std::printf("%s:", d == &clean ? "clean" : "noisy");
    for (const auto& h : d->histograms) std::printf("  %s mean %.4f", h.source.c_str(), h.mean);
    std::printf("\n");
  }
  return kOk;
}

// ---- fuse ------------------------------------------------------------------

int cmd_fuse(const std::string& in) {
  const json j = read_json_file(in);
  if (!j.is_array() || j.empty()) {
    throw ValidationError(in + ": expected a non-empty array of [u, sigma, v] triples");
  }
  std::vector<StudentT> inputs;
  try {
    for (const auto& item : j) {
      if (item.is_array() && item.size() == 3) {
        inputs.emplace_back(item[0].get<double>(), item[1].get<double>(), item[2].get<double>());
      } else if (item.is_object()) {
        inputs.emplace_back(item.at("u").get<double>(), item.at("sigma").get<double>(),
                            item.at("v").get<double>());
      } else {
        throw ValidationError(in + ": each entry must be [u, sigma, v] or {u, sigma, v}");
      }
    }
  } catch (const json::exception& e) {
    throw ValidationError(in + ": " + e.what());
  }
  const FusedStudentT f = fuse_many(inputs);
  const FusedPrediction p = fused_prediction(f);
  const json out = {{"u", f.st.u()},
                    {"sigma", f.st.sigma()},
                    {"v", f.st.v()},
                    {"source_index", f.source_index},
                    {"y_hat", p.y_hat},
                    {"uncertainty", p.uncertainty}};
  std::cout << out.dump() << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Evidential multimodal classifier with mixture-of-Student's-t fusion"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);
  std::string config_path;

  GenerateOptions gen;
  auto* g = app.add_subcommand("generate-data", "Write synthetic train/val/test CSVs and a sidecar");
  g->add_option("--classes", gen.classes, "Number of classes")->capture_default_str();
  g->add_option("--per-class", gen.per_class, "Samples per class (70/15/15 split)")
      ->capture_default_str();
  g->add_option("--dims", gen.dims, "Feature dims per modality")->capture_default_str();
  g->add_option("--sep", gen.sep, "Class-mean distance per modality")->capture_default_str();
  g->add_option("--split", gen.split, "Explicit train,val,test sizes (overrides --per-class)");
  g->add_option("--seed", gen.seed, "Generator seed")->capture_default_str();
  g->add_option("--out", gen.out, "Output directory")->capture_default_str();

  TrainOptions tr;
  auto* t = app.add_subcommand("train", "Train a model and write a checkpoint and run artifact");
  t->add_option("--data", tr.data, "Dataset directory")->capture_default_str();
  t->add_option("--out", tr.out, "Run directory")->capture_default_str();
  t->add_option("--hidden", tr.hidden, "Hidden layer widths")->capture_default_str();
  t->add_option("--activation", tr.activation, "relu or tanh")->capture_default_str();
  t->add_option("--lr", tr.config.learning_rate, "Learning rate")->capture_default_str();
  t->add_option("--epochs", tr.config.max_epochs, "Epochs")->capture_default_str();
  t->add_option("--batch-size", tr.config.batch_size, "Mini-batch size")->capture_default_str();
  t->add_option("--lambda", tr.config.lambda, "Cross-entropy weight")->capture_default_str();
  t->add_option("--seed", tr.config.seed, "Initialization and shuffling seed")
      ->capture_default_str();
  t->add_option("--beta1", tr.config.beta1, "Adam first-moment decay")->capture_default_str();
  t->add_option("--beta2", tr.config.beta2, "Adam second-moment decay")->capture_default_str();
  t->add_option("--adam-eps", tr.config.epsilon, "Adam epsilon")->capture_default_str();
  t->add_flag("--freeze-encoders", tr.config.freeze_encoders, "Train the heads only");
  t->add_flag("--select-best-val", tr.config.select_best_val,
              "Keep the epoch with the lowest validation loss");

  auto add_eval_options = [](CLI::App* cmd, EvalCommon& c) {
    cmd->add_option("--checkpoint", c.checkpoint, "Checkpoint file")->capture_default_str();
    cmd->add_option("--data", c.data, "Dataset directory")->capture_default_str();
    cmd->add_option("--split", c.split, "train, val or test")->capture_default_str();
    cmd->add_option("--out", c.out, "Output directory")->capture_default_str();
    cmd->add_option("--ece-bins", c.ece_bins, "Calibration bins")->capture_default_str();
    cmd->add_flag("--quadratic-kappa", c.quadratic_kappa, "Quadratic-weighted kappa");
    cmd->add_option("--confidence", c.confidence, "normalized or softmax")->capture_default_str();
  };
  EvalCommon ev;
  auto* e = app.add_subcommand("evaluate", "Compute accuracy, kappa and ECE");
  add_eval_options(e, ev);

  SweepOptions sw;
  auto* s = app.add_subcommand("noise-sweep", "Evaluate under Gaussian noise on one modality");
  add_eval_options(s, sw.common);
  s->add_option("--sigmas", sw.sigmas, "Noise levels")->capture_default_str();
  s->add_option("--modality", sw.modality, "Corrupted modality, 1-based (list allowed)")
      ->capture_default_str();
  s->add_option("--noise-seeds", sw.noise_seeds, "Noise seeds")->capture_default_str();

  ReportOptions rp;
  auto* r = app.add_subcommand("report", "Write uncertainty density tables");
  add_eval_options(r, rp.common);
  r->add_option("--noise-modality", rp.noise_modality, "Corrupted modality, 1-based")
      ->capture_default_str();
  r->add_option("--noise-sigma", rp.noise_sigma, "Noise level")->capture_default_str();
  r->add_option("--noise-seed", rp.noise_seed, "Noise seed")->capture_default_str();
  r->add_option("--bins", rp.bins, "Histogram bins")->capture_default_str();

  std::string fuse_in;
  auto* f = app.add_subcommand("fuse", "Fuse Student's t distributions given as JSON");
  f->add_option("--in", fuse_in, "JSON array of [u, sigma, v]")->required();

  for (auto* cmd : {g, t, e, s, r}) {
    cmd->add_option("--config", config_path, "JSON file of flag values (flags take precedence)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kOk : kValidation;
  }

  try {
    CLI::App* cmd = app.get_subcommands().front();
    if (!config_path.empty()) apply_config_file(cmd, config_path);
    if (cmd == g) return cmd_generate(gen);
    if (cmd == t) return cmd_train(tr);
    if (cmd == e) return cmd_evaluate(ev);
    if (cmd == s) return cmd_noise_sweep(sw);
    if (cmd == r) return cmd_report(rp);
    if (cmd == f) return cmd_fuse(fuse_in);
  } catch (const ValidationError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kValidation;
  } catch (const CLI::Error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kValidation;
  } catch (const IoError& err) {
    std::cerr << "I/O error: " << err.what() << "\n";
    return kIo;
  } catch (const fs::filesystem_error& err) {
    std::cerr << "I/O error: " << err.what() << "\n";
    return kIo;
  } catch (const NumericalError& err) {
    std::cerr << "numerical error: " << err.what() << "\n";
    return kNumerical;
  } catch (const std::invalid_argument& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kValidation;
  }
  return kOk;
}
