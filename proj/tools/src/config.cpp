// SPDX-License-Identifier: Apache-2.0
#include "ska_cli/config.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ska/idx.hpp"

namespace ska::cli {

using nlohmann::ordered_json;

namespace {

std::string_view to_string(DataSource s) noexcept { return s == DataSource::synth ? "synth" : "idx"; }

DataSource parse_source(std::string_view name) {
  if (name == "synth") return DataSource::synth;
  if (name == "idx") return DataSource::idx;
  throw ConfigError("unknown data.source '" + std::string(name) + "' (expected synth or idx)");
}

ordered_json train_json(const TrainConfig& t) {
  return ordered_json{{"optimizer", to_string(t.optimizer.kind)},
                      {"lr", t.lr},
                      {"weight_decay", t.optimizer.weight_decay},
                      {"beta1", t.optimizer.beta1},
                      {"beta2", t.optimizer.beta2},
                      {"eps", t.optimizer.eps},
                      {"momentum", t.optimizer.momentum},
                      {"batch_size", t.batch_size},
                      {"steps", t.steps},
                      {"epochs", t.epochs},
                      {"seed", t.seed},
                      {"schedule", to_string(t.schedule)},
                      {"clip_norm", t.clip_norm},
                      {"eval_every", t.eval_every},
                      {"loss", "cross_entropy"}};
}

ordered_json data_json(const DataConfig& d) {
  return ordered_json{{"source", to_string(d.source)},         {"kind", ska::to_string(d.kind)},
                      {"grid", d.grid},                         {"train_size", d.train_size},
                      {"test_size", d.test_size},               {"seed", d.seed},
                      {"train_images", d.train_images},         {"train_labels", d.train_labels},
                      {"test_images", d.test_images},           {"test_labels", d.test_labels}};
}

ordered_json full_json(const RunConfig& c) {
  return ordered_json{{"model", ordered_json::parse(c.model.to_json())},
                      {"train", train_json(c.train)},
                      {"data", data_json(c.data)}};
}

void check_keys(const ordered_json& j, const ordered_json& schema, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, _] : j.items()) {
    if (!schema.contains(key)) throw ConfigError("unknown key '" + where + "." + key + "'");
  }
}

template <typename T>
T field(const ordered_json& j, const char* section, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string(section) + "." + key + " has the wrong type");
  }
}

std::size_t count_field(const ordered_json& j, const char* section, const char* key) {
  const auto& v = j.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw ConfigError(std::string(section) + "." + key + " must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

TrainConfig parse_train(ordered_json j) {
  const ordered_json defaults = train_json(TrainConfig{});
  check_keys(j, defaults, "train");
  for (const auto& [key, value] : defaults.items()) {
    if (!j.contains(key)) j[key] = value;
  }
  TrainConfig t;
  t.optimizer.kind = parse_optimizer(field<std::string>(j, "train", "optimizer"));
  t.lr = field<double>(j, "train", "lr");
  t.optimizer.weight_decay = field<double>(j, "train", "weight_decay");
  t.optimizer.beta1 = field<double>(j, "train", "beta1");
  t.optimizer.beta2 = field<double>(j, "train", "beta2");
  t.optimizer.eps = field<double>(j, "train", "eps");
  t.optimizer.momentum = field<double>(j, "train", "momentum");
  t.batch_size = count_field(j, "train", "batch_size");
  t.steps = count_field(j, "train", "steps");
  t.epochs = count_field(j, "train", "epochs");
  t.seed = count_field(j, "train", "seed");
  t.schedule = parse_schedule(field<std::string>(j, "train", "schedule"));
  t.clip_norm = field<double>(j, "train", "clip_norm");
  t.eval_every = count_field(j, "train", "eval_every");
  if (field<std::string>(j, "train", "loss") != "cross_entropy") {
    throw ConfigError("train.loss must be cross_entropy");
  }
  return t;
}

DataConfig parse_data(ordered_json j) {
  const ordered_json defaults = data_json(DataConfig{});
  check_keys(j, defaults, "data");
  for (const auto& [key, value] : defaults.items()) {
    if (!j.contains(key)) j[key] = value;
  }
  DataConfig d;
  d.source = parse_source(field<std::string>(j, "data", "source"));
  d.kind = parse_synth_kind(field<std::string>(j, "data", "kind"));
  d.grid = count_field(j, "data", "grid");
  d.train_size = count_field(j, "data", "train_size");
  d.test_size = count_field(j, "data", "test_size");
  d.seed = count_field(j, "data", "seed");
  d.train_images = field<std::string>(j, "data", "train_images");
  d.train_labels = field<std::string>(j, "data", "train_labels");
  d.test_images = field<std::string>(j, "data", "test_images");
  d.test_labels = field<std::string>(j, "data", "test_labels");
  return d;
}

RunConfig parse_run(const ordered_json& j) {
  const ordered_json schema{{"model", nullptr}, {"train", nullptr}, {"data", nullptr}};
  check_keys(j, schema, "config");
  RunConfig c = default_run_config();
  if (j.contains("model")) c.model = ModelConfig::from_json(j.at("model").dump());
  if (j.contains("train")) c.train = parse_train(j.at("train"));
  if (j.contains("data")) c.data = parse_data(j.at("data"));
  return c;
}

const char* type_name(const ordered_json& v) {
  if (v.is_boolean()) return "boolean";
  if (v.is_number_integer()) return "integer";
  if (v.is_number()) return "number";
  if (v.is_string()) return "string";
  if (v.is_array()) return "array";
  if (v.is_object()) return "object";
  return "null";
}

void apply_override(ordered_json& full, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' must look like dotted.path=value");
  }
  const std::string path = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  ordered_json* node = &full;
  // "stages[1].heads" and "stages.1.heads" address the same element.
  std::string dotted;
  for (char c : path) {
    if (c == '[') {
      dotted += '.';
    } else if (c != ']') {
      dotted += c;
    }
  }
  std::stringstream parts(dotted);
  std::string part;
  while (std::getline(parts, part, '.')) {
    if (node->is_object() && node->contains(part)) {
      node = &(*node)[part];
      continue;
    }
    std::size_t index = 0;
    const auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), index);
    if (node->is_array() && ec == std::errc{} && ptr == part.data() + part.size() && index < node->size()) {
      node = &(*node)[index];
      continue;
    }
    throw ConfigError("override '" + path + "' names no config key ('" + part + "' not found)");
  }
  ordered_json value;
  try {
    value = ordered_json::parse(text);
  } catch (const nlohmann::json::exception&) {
    value = text;
  }
  const bool numeric_ok = node->is_number_float() && value.is_number();
  const bool same = std::string_view(type_name(*node)) == type_name(value);
  const bool unsigned_ok = node->is_number_integer() && value.is_number_integer();
  if (!(same || numeric_ok || unsigned_ok)) {
    throw ConfigError("override '" + path + "' expects " + type_name(*node) + ", got " + type_name(value) + " '" +
                      text + "'");
  }
  if (numeric_ok) value = value.get<double>();
  *node = std::move(value);
}

}  // namespace

RunConfig default_run_config() {
  RunConfig c;
  c.model.height = c.model.width = 8;
  c.model.patch = 2;
  c.model.pos_embed = true;
  c.model.stages = {StageConfig{MixerKind::ska, 2, 16, 2, 1}};
  c.train.steps = 3000;
  c.train.batch_size = 32;
  c.train.eval_every = 500;
  return c;
}

std::string RunConfig::to_json() const { return full_json(*this).dump(2); }

RunConfig RunConfig::from_json(std::string_view text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c = parse_run(j);
  c.validate();
  return c;
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
  if (data.source == DataSource::synth) {
    if (data.train_size < 2) throw ConfigError("data.train_size must be >= 2");
    if (data.grid != model.height || data.grid != model.width || model.in_channels != 1) {
      throw ConfigError("data.grid " + std::to_string(data.grid) + " does not match model.input [" +
                        std::to_string(model.in_channels) + ", " + std::to_string(model.height) + ", " +
                        std::to_string(model.width) + "]");
    }
  } else if (data.train_images.empty() || data.train_labels.empty()) {
    throw ConfigError("data.source idx needs data.train_images and data.train_labels");
  }
}

RunConfig load_run_config(const std::string& path, std::span<const std::string> overrides) {
  RunConfig base = default_run_config();
  if (!path.empty()) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file '" + path + "'");
    std::stringstream text;
    text << f.rdbuf();
    try {
      base = parse_run(ordered_json::parse(text.str()));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
    }
  }
  if (overrides.empty()) {
    base.validate();
    return base;
  }
  ordered_json full = full_json(base);
  for (const auto& o : overrides) apply_override(full, o);
  return RunConfig::from_json(full.dump());
}

LoadedData load_data(const DataConfig& cfg, const ModelConfig& model) {
  LoadedData out;
  if (cfg.source == DataSource::synth) {
    const Dataset all = synth_dataset(cfg.kind, cfg.train_size + cfg.test_size, cfg.grid, cfg.seed);
    out.train = all.subset(0, cfg.train_size);
    out.train.split = "train";
    if (cfg.test_size > 0) {
      out.test = all.subset(cfg.train_size, cfg.test_size);
      out.test->split = "test";
    }
  } else {
    for (const std::string* p : {&cfg.train_images, &cfg.train_labels, &cfg.test_images, &cfg.test_labels}) {
      if (!p->empty() && !std::filesystem::exists(*p)) throw ConfigError("dataset file not found: '" + *p + "'");
    }
    out.train = load_idx(cfg.train_images, cfg.train_labels, "train", model.num_classes);
    if (!cfg.test_images.empty()) out.test = load_idx(cfg.test_images, cfg.test_labels, "test", model.num_classes);
  }
  const auto check = [&](const Dataset& d) {
    const Shape& s = d.images.shape();
    if (s[1] != model.in_channels || s[2] != model.height || s[3] != model.width) {
      throw ConfigError(d.split + " images " + shape_string(s) + " do not match model.input [" +
                        std::to_string(model.in_channels) + ", " + std::to_string(model.height) + ", " +
                        std::to_string(model.width) + "]");
    }
    if (d.num_classes > model.num_classes) {
      throw ConfigError(d.split + " labels need " + std::to_string(d.num_classes) + " classes, model has " +
                        std::to_string(model.num_classes));
    }
  };
  check(out.train);
  if (out.test) check(*out.test);
  return out;
}

}  // namespace ska::cli
