// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cctype>

#include <json.hpp>

#include "ska/former.hpp"

namespace ska {

using nlohmann::ordered_json;

std::pair<std::size_t, std::size_t> ModelConfig::stage_grid(std::size_t s) const {
  if (s >= stages.size()) throw ConfigError("stage index " + std::to_string(s) + " out of range");
  if (patch == 0 || height % patch != 0 || width % patch != 0) {
    throw ConfigError("input " + std::to_string(height) + "x" + std::to_string(width) +
                      " is not divisible by patch size " + std::to_string(patch));
  }
  std::size_t h = height / patch, w = width / patch;
  for (std::size_t i = 1; i <= s; ++i) {
    const std::size_t f = stages[i].downsample;
    if (f == 0 || h % f != 0 || w % f != 0) {
      throw ConfigError("stage " + std::to_string(i) + " grid " + std::to_string(h) + "x" + std::to_string(w) +
                        " is not divisible by downsample factor " + std::to_string(f));
    }
    h /= f;
    w /= f;
  }
  return {h, w};
}

std::size_t ModelConfig::stage_tokens(std::size_t s) const {
  const auto [h, w] = stage_grid(s);
  return h * w;
}

MixerConfig ModelConfig::stage_mixer(std::size_t s) const {
  const StageConfig& st = stages.at(s);
  const auto [gh, gw] = stage_grid(s);
  MixerConfig m;
  m.kind = st.kind;
  m.dim = st.dim;
  m.heads = st.heads;
  m.tokens = gh * gw;
  m.grid_h = gh;
  m.grid_w = gw;
  m.activation = activation;
  m.scaled = scaled;
  m.qkv_bias = qkv_bias;
  m.proj_bias = proj_bias;
  m.cls_token = cls_token;
  m.kernel = kernel;
  m.dropout = dropout;
  m.key_init = key_init;
  return m;
}

void ModelConfig::validate() const {
  if (in_channels == 0 || height == 0 || width == 0) throw ConfigError("input extents must be positive");
  if (stages.empty()) throw ConfigError("model needs at least one stage");
  if (num_classes == 0) throw ConfigError("num_classes must be positive");
  if (stages.front().downsample != 1) throw ConfigError("stage 0 downsample must be 1 (the patch embedding sets it)");
  if (cls_token && stages.size() != 1) throw ConfigError("cls_token is only supported for single-stage models");
  if (!(mlp_ratio > 0.0)) throw ConfigError("mlp_ratio must be positive");
  for (std::size_t s = 0; s < stages.size(); ++s) {
    if (stages[s].depth == 0) throw ConfigError("stage " + std::to_string(s) + " depth must be positive");
    stage_mixer(s).validate();
  }
}

namespace {

ordered_json to_json_value(const ModelConfig& c) {
  ordered_json j;
  j["input"] = {c.in_channels, c.height, c.width};
  j["patch"] = c.patch;
  j["num_classes"] = c.num_classes;
  j["cls_token"] = c.cls_token;
  j["pos_embed"] = c.pos_embed;
  j["mlp_ratio"] = c.mlp_ratio;
  j["residual_scale"] = c.residual_scale;
  j["activation"] = std::string(to_string(c.activation));
  j["scaled"] = c.scaled;
  j["qkv_bias"] = c.qkv_bias;
  j["proj_bias"] = c.proj_bias;
  j["kernel"] = c.kernel;
  j["dropout"] = c.dropout;
  j["key_init"] = std::string(to_string(c.key_init));
  ordered_json stages = ordered_json::array();
  for (const auto& s : c.stages) {
    stages.push_back({{"kind", std::string(to_string(s.kind))},
                      {"depth", s.depth},
                      {"dim", s.dim},
                      {"heads", s.heads},
                      {"downsample", s.downsample}});
  }
  j["stages"] = std::move(stages);
  return j;
}

template <typename T>
T get_or(const ordered_json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model.") + key + ": " + e.what());
  }
}

std::size_t get_count(const ordered_json& j, const char* key, std::size_t fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw ConfigError(where + key + " must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

}  // namespace

std::string ModelConfig::to_json() const { return to_json_value(*this).dump(); }

ModelConfig ModelConfig::from_json(std::string_view text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("model config must be an object");
  static const char* known[] = {"input",      "patch",   "num_classes", "cls_token", "pos_embed",
                                "mlp_ratio",  "residual_scale", "activation", "scaled", "qkv_bias",
                                "proj_bias",  "kernel",  "dropout",     "key_init",  "stages"};
  for (const auto& [key, _] : j.items()) {
    if (std::find_if(std::begin(known), std::end(known), [&](const char* k) { return key == k; }) == std::end(known)) {
      throw ConfigError("unknown model key '" + key + "'");
    }
  }
  ModelConfig c;
  if (j.contains("input")) {
    const auto& in = j.at("input");
    if (!in.is_array() || in.size() != 3) throw ConfigError("model.input must be [channels, height, width]");
    c.in_channels = in[0].get<std::size_t>();
    c.height = in[1].get<std::size_t>();
    c.width = in[2].get<std::size_t>();
  }
  c.patch = get_count(j, "patch", c.patch, "model.");
  c.num_classes = get_count(j, "num_classes", c.num_classes, "model.");
  c.cls_token = get_or(j, "cls_token", c.cls_token);
  c.pos_embed = get_or(j, "pos_embed", c.pos_embed);
  c.mlp_ratio = get_or(j, "mlp_ratio", c.mlp_ratio);
  c.residual_scale = get_or(j, "residual_scale", c.residual_scale);
  c.activation = parse_activation(get_or<std::string>(j, "activation", "softmax"));
  c.scaled = get_or(j, "scaled", c.scaled);
  c.qkv_bias = get_or(j, "qkv_bias", c.qkv_bias);
  c.proj_bias = get_or(j, "proj_bias", c.proj_bias);
  c.kernel = get_count(j, "kernel", c.kernel, "model.");
  c.dropout = get_or(j, "dropout", c.dropout);
  c.key_init = parse_key_init(get_or<std::string>(j, "key_init", "normal"));
  if (!j.contains("stages") || !j.at("stages").is_array()) {
    throw ConfigError("model.stages must be an array of {kind, depth, dim, heads}");
  }
  std::size_t index = 0;
  for (const auto& s : j.at("stages")) {
    const std::string where = "model.stages[" + std::to_string(index) + "].";
    if (!s.is_object() || !s.contains("kind")) throw ConfigError(where + "kind is required");
    for (const auto& [key, _] : s.items()) {
      if (key != "kind" && key != "depth" && key != "dim" && key != "heads" && key != "downsample") {
        throw ConfigError("unknown stage key '" + where + key + "'");
      }
    }
    StageConfig st;
    st.kind = parse_mixer_kind(s.at("kind").get<std::string>());
    st.depth = get_count(s, "depth", st.depth, where);
    st.dim = get_count(s, "dim", st.dim, where);
    st.heads = get_count(s, "heads", st.heads, where);
    st.downsample = get_count(s, "downsample", index == 0 ? 1 : 2, where);
    c.stages.push_back(st);
    ++index;
  }
  c.validate();
  return c;
}

std::vector<std::string> ModelConfig::diff(const ModelConfig& other) const {
  const auto a = to_json_value(*this);
  const auto b = to_json_value(other);
  std::vector<std::string> fields;
  for (const auto& [key, value] : a.items()) {
    if (key == "stages") continue;
    if (value != b.at(key)) fields.push_back(key);
  }
  const auto& sa = a.at("stages");
  const auto& sb = b.at("stages");
  if (sa.size() != sb.size()) {
    fields.push_back("stages (count " + std::to_string(sa.size()) + " vs " + std::to_string(sb.size()) + ")");
  } else {
    for (std::size_t i = 0; i < sa.size(); ++i) {
      for (const auto& [key, value] : sa[i].items()) {
        if (value != sb[i].at(key)) fields.push_back("stages[" + std::to_string(i) + "]." + key);
      }
    }
  }
  return fields;
}

std::vector<MixerKind> parse_placement(std::string_view text) {
  std::vector<MixerKind> kinds;
  std::string token;
  auto flush = [&] {
    if (!token.empty()) kinds.push_back(parse_mixer_kind(token));
    token.clear();
  };
  for (char ch : text) {
    if (ch == '[' || ch == ']' || ch == ',' || std::isspace(static_cast<unsigned char>(ch))) {
      flush();
    } else {
      token += ch;
    }
  }
  flush();
  if (kinds.empty()) throw ConfigError("empty stage placement '" + std::string(text) + "'");
  return kinds;
}

ModelConfig placement_model(std::span<const MixerKind> placement, std::size_t base_dim, std::size_t heads,
                            std::size_t image_size, std::size_t patch, std::size_t num_classes) {
  ModelConfig c;
  c.in_channels = 1;
  c.height = image_size;
  c.width = image_size;
  c.patch = patch;
  c.num_classes = num_classes;
  std::size_t dim = base_dim;
  for (std::size_t s = 0; s < placement.size(); ++s) {
    c.stages.push_back(StageConfig{placement[s], 1, dim, heads, s == 0 ? std::size_t{1} : std::size_t{2}});
    dim *= 2;
  }
  c.validate();
  return c;
}

}  // namespace ska
