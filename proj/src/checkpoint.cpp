#include "evmost/checkpoint.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "evmost/errors.hpp"

namespace evmost {

nlohmann::json train_config_to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"max_epochs", c.max_epochs},
          {"batch_size", c.batch_size},
          {"lambda", c.lambda},
          {"seed", c.seed},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"epsilon", c.epsilon},
          {"freeze_encoders", c.freeze_encoders},
          {"select_best_val", c.select_best_val}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("train config must be a JSON object");
  TrainConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "learning_rate") c.learning_rate = value.get<double>();
      else if (key == "max_epochs") c.max_epochs = value.get<std::size_t>();
      else if (key == "batch_size") c.batch_size = value.get<std::size_t>();
      else if (key == "lambda") c.lambda = value.get<double>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "beta1") c.beta1 = value.get<double>();
      else if (key == "beta2") c.beta2 = value.get<double>();
      else if (key == "epsilon") c.epsilon = value.get<double>();
      else if (key == "freeze_encoders") c.freeze_encoders = value.get<bool>();
      else if (key == "select_best_val") c.select_best_val = value.get<bool>();
      else throw ValidationError("train config: unknown key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::json encoder_spec_to_json(const EncoderSpec& e) {
  return {{"input_dim", e.input_dim},
          {"hidden_dims", e.hidden_dims},
          {"activation", to_string(e.activation)}};
}

EncoderSpec encoder_spec_from_json(const nlohmann::json& j) {
  EncoderSpec e;
  try {
    e.input_dim = j.at("input_dim").get<std::size_t>();
    e.hidden_dims = j.at("hidden_dims").get<std::vector<std::size_t>>();
    e.activation = parse_activation(j.at("activation").get<std::string>());
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError(std::string("encoder spec: ") + ex.what());
  }
  e.validate();
  return e;
}

namespace {

std::string layer_name(std::size_t modality, std::size_t layer, std::size_t n_layers) {
  std::string base = "m" + std::to_string(modality + 1) + ".";
  if (layer + 1 == n_layers) return base + "head";
  return base + "layer" + std::to_string(layer + 1);
}

}  // namespace

nlohmann::json checkpoint_to_json(const Checkpoint& c) {
  const MultimodalClassifier& m = c.model;
  nlohmann::json encoders = nlohmann::json::array();
  for (const auto& e : m.encoders()) encoders.push_back(encoder_spec_to_json(e));
  nlohmann::json tensors = nlohmann::json::array();
  const auto params = m.parameters();
  for (std::size_t mod = 0; mod < m.modalities(); ++mod) {
    const auto& layers = m.layers(mod);
    for (std::size_t li = 0; li < layers.size(); ++li) {
      const DenseLayer& l = layers[li];
      const std::string name = layer_name(mod, li, layers.size());
      tensors.push_back({{"name", name + ".weight"},
                         {"shape", {l.out, l.in}},
                         {"data", std::vector<double>(params.begin() + l.offset,
                                                      params.begin() + l.bias_offset())}});
      tensors.push_back({{"name", name + ".bias"},
                         {"shape", {l.out}},
                         {"data", std::vector<double>(params.begin() + l.bias_offset(),
                                                      params.begin() + l.offset + l.size())}});
    }
  }
  return {{"format", kCheckpointFormat},
          {"version", kCheckpointVersion},
          {"classes", m.classes()},
          {"encoders", encoders},
          {"seed", c.config.seed},
          {"config", train_config_to_json(c.config)},
          {"config_hash", c.config_hash},
          {"standardization", c.standardization ? standardization_to_json(*c.standardization)
                                                : nlohmann::json(nullptr)},
          {"tensors", tensors}};
}

Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != kCheckpointFormat) {
      throw ValidationError("not an evmost checkpoint");
    }
    const int version = j.at("version").get<int>();
    if (version != kCheckpointVersion) {
      throw ValidationError("unsupported checkpoint version " + std::to_string(version));
    }
    std::vector<EncoderSpec> encoders;
    for (const auto& e : j.at("encoders")) encoders.push_back(encoder_spec_from_json(e));
    MultimodalClassifier model(encoders, j.at("classes").get<std::size_t>());

    std::map<std::string, const nlohmann::json*> by_name;
    for (const auto& t : j.at("tensors")) {
      by_name[t.at("name").get<std::string>()] = &t;
    }
    auto params = model.parameters();
    std::size_t consumed = 0;
    for (std::size_t mod = 0; mod < model.modalities(); ++mod) {
      const auto& layers = model.layers(mod);
      for (std::size_t li = 0; li < layers.size(); ++li) {
        const DenseLayer& l = layers[li];
        const std::string name = layer_name(mod, li, layers.size());
        auto load = [&](const std::string& tname, std::vector<std::size_t> shape,
                        std::size_t offset) {
          const auto it = by_name.find(tname);
          if (it == by_name.end()) throw ValidationError("checkpoint: missing tensor " + tname);
          if (it->second->at("shape").get<std::vector<std::size_t>>() != shape) {
            throw ValidationError("checkpoint: tensor " + tname + " has the wrong shape");
          }
          const auto data = it->second->at("data").get<std::vector<double>>();
          std::size_t expected = 1;
          for (std::size_t s : shape) expected *= s;
          if (data.size() != expected) {
            throw ValidationError("checkpoint: tensor " + tname + " has the wrong length");
          }
          std::copy(data.begin(), data.end(), params.begin() + offset);
          ++consumed;
        };
        load(name + ".weight", {l.out, l.in}, l.offset);
        load(name + ".bias", {l.out}, l.bias_offset());
      }
    }
    if (consumed != by_name.size()) throw ValidationError("checkpoint: unexpected extra tensors");

    Checkpoint c{std::move(model), train_config_from_json(j.at("config")), std::nullopt,
                 j.value("config_hash", std::string())};
    if (!j.at("standardization").is_null()) {
      c.standardization = standardization_from_json(j.at("standardization"));
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed checkpoint: ") + e.what());
  }
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(path.string() + ": invalid JSON: " + e.what());
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed while writing " + path.string());
}

void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  write_json_file(path, checkpoint_to_json(c));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return checkpoint_from_json(read_json_file(path));
}

}  // namespace evmost
