// SPDX-License-Identifier: Apache-2.0
#include "ska/former.hpp"

#include <cmath>

namespace ska {

namespace {

Tensor fan_in_uniform(Rng& rng, Shape shape, std::size_t fan_in) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return rng_uniform(rng, std::move(shape), -bound, bound);
}

std::string join(const std::string& prefix, std::string_view local) {
  return prefix.empty() ? std::string(local) : prefix + "." + std::string(local);
}

std::size_t mlp_hidden(const BlockConfig& cfg) {
  return static_cast<std::size_t>(std::llround(cfg.mlp_ratio * static_cast<double>(cfg.mixer.dim)));
}

}  // namespace

void BlockConfig::validate() const {
  mixer.validate();
  if (!(mlp_ratio > 0.0)) throw ConfigError("mlp_ratio must be positive");
  if (mlp_hidden(*this) == 0) throw ConfigError("mlp hidden width rounds to zero");
}

Block::Block(BlockConfig cfg, ParameterStore& store, std::string prefix, Rng& rng)
    : cfg_((cfg.validate(), cfg)),
      store_(&store),
      prefix_(std::move(prefix)),
      mixer_([&]() -> Mixer {
        // Norm parameters precede the mixer in the store so names read in
        // execution order.
        const std::size_t d = cfg_.mixer.dim;
        store_->add(join(prefix_, "norm1.weight"), Tensor::ones({d}));
        store_->add(join(prefix_, "norm1.bias"), Tensor::zeros({d}));
        return Mixer(cfg_.mixer, *store_, join(prefix_, to_string(cfg_.mixer.kind)), rng);
      }()) {
  const std::size_t d = cfg_.mixer.dim, hidden = mlp_hidden(cfg_);
  store_->add(join(prefix_, "norm2.weight"), Tensor::ones({d}));
  store_->add(join(prefix_, "norm2.bias"), Tensor::zeros({d}));
  store_->add(join(prefix_, "mlp.fc1.weight"), fan_in_uniform(rng, {d, hidden}, d));
  store_->add(join(prefix_, "mlp.fc1.bias"), fan_in_uniform(rng, {hidden}, d));
  store_->add(join(prefix_, "mlp.fc2.weight"), fan_in_uniform(rng, {hidden, d}, hidden));
  store_->add(join(prefix_, "mlp.fc2.bias"), fan_in_uniform(rng, {d}, hidden));
}

Var Block::forward(Tape& tape, Var x, Tensor* attention) const {
  auto p = [&](std::string_view local) { return tape.param(store_->get(join(prefix_, local))); };
  auto shortcut = [&](Var v) { return cfg_.residual_scale == 1.0 ? v : ad::scale(v, cfg_.residual_scale); };
  Var h = ad::layer_norm(x, p("norm1.weight"), p("norm1.bias"));
  Var y = ad::add(shortcut(x), mixer_.forward(tape, h, attention));
  Var m = ad::layer_norm(y, p("norm2.weight"), p("norm2.bias"));
  m = ad::linear(ad::gelu(ad::linear(m, p("mlp.fc1.weight"), p("mlp.fc1.bias"))), p("mlp.fc2.weight"),
                 p("mlp.fc2.bias"));
  return ad::add(shortcut(y), m);
}

Tensor block_apply(const Block& block, const Tensor& x) {
  Tape tape;
  return block.forward(tape, tape.constant(x)).value();
}

// ---------------------------------------------------------------------------

Model::Model(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)), seed_(seed) {
  cfg_.validate();
  Rng rng(seed);
  const std::size_t c = cfg_.in_channels, p = cfg_.patch, d0 = cfg_.stages.front().dim;
  store_.add("patch_embed.weight", fan_in_uniform(rng, {d0, c, p, p}, c * p * p));
  store_.add("patch_embed.bias", fan_in_uniform(rng, {d0}, c * p * p));
  if (cfg_.cls_token) store_.add("cls_token", scale(rng_normal(rng, {1, 1, d0}), 0.02));
  if (cfg_.pos_embed) {
    store_.add("pos_embed", scale(rng_normal(rng, {1, cfg_.stage_tokens(0) + (cfg_.cls_token ? 1 : 0), d0}), 0.02));
  }
  for (std::size_t s = 0; s < cfg_.stages.size(); ++s) {
    const StageConfig& st = cfg_.stages[s];
    const std::string stage = "stage" + std::to_string(s);
    if (s > 0) {
      const std::size_t prev = cfg_.stages[s - 1].dim, f = st.downsample;
      if (f > 1 || prev != st.dim) {
        store_.add(stage + ".downsample.weight", fan_in_uniform(rng, {st.dim, prev, f, f}, prev * f * f));
        store_.add(stage + ".downsample.bias", fan_in_uniform(rng, {st.dim}, prev * f * f));
      }
    }
    BlockConfig bc{cfg_.stage_mixer(s), cfg_.mlp_ratio, cfg_.residual_scale};
    for (std::size_t j = 0; j < st.depth; ++j) {
      blocks_.push_back(std::make_unique<Block>(bc, store_, stage + ".block" + std::to_string(j), rng));
      stage_of_block_.push_back(s);
    }
  }
  const std::size_t dl = cfg_.stages.back().dim;
  store_.add("norm.weight", Tensor::ones({dl}));
  store_.add("norm.bias", Tensor::zeros({dl}));
  store_.add("head.weight", fan_in_uniform(rng, {dl, cfg_.num_classes}, dl));
  store_.add("head.bias", fan_in_uniform(rng, {cfg_.num_classes}, dl));
}

Var Model::forward(Tape& tape, Var images, std::vector<Tensor>* attention) const {
  if (images.rank() != 4 || images.dim(1) != cfg_.in_channels || images.dim(2) != cfg_.height ||
      images.dim(3) != cfg_.width) {
    throw DimensionError("model expects images [B, " + std::to_string(cfg_.in_channels) + ", " +
                         std::to_string(cfg_.height) + ", " + std::to_string(cfg_.width) + "], got " +
                         shape_string(images.shape()));
  }
  auto& store = const_cast<ParameterStore&>(store_);
  auto p = [&](const std::string& name) { return tape.param(store.get(name)); };
  auto optional_p = [&](const std::string& name) -> std::optional<Var> {
    if (auto* param = store.find(name)) return tape.param(*param);
    return std::nullopt;
  };
  const std::size_t batch = images.dim(0);
  Var x = image_to_tokens(ad::conv2d(images, p("patch_embed.weight"), p("patch_embed.bias"),
                                     Conv2dParams{cfg_.patch, 0, 1}));
  if (cfg_.cls_token) {
    std::vector<Var> parts{ad::expand_leading(p("cls_token"), batch), x};
    x = ad::concat(parts, 1);
  }
  if (cfg_.pos_embed) x = ad::add(x, ad::expand_leading(p("pos_embed"), batch));

  std::size_t current_stage = 0;
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const std::size_t s = stage_of_block_[b];
    if (s != current_stage) {
      const std::string stage = "stage" + std::to_string(s);
      if (auto w = optional_p(stage + ".downsample.weight")) {
        const auto [gh, gw] = cfg_.stage_grid(s - 1);
        const std::size_t f = cfg_.stages[s].downsample;
        x = image_to_tokens(ad::conv2d(tokens_to_image(x, gh, gw), *w, optional_p(stage + ".downsample.bias"),
                                       Conv2dParams{f, 0, 1}));
      }
      current_stage = s;
    }
    Tensor map;
    x = blocks_[b]->forward(tape, x, attention ? &map : nullptr);
    if (attention) attention->push_back(std::move(map));
  }
  x = ad::layer_norm(x, p("norm.weight"), p("norm.bias"));
  const std::size_t d = x.dim(2);
  Var pooled = cfg_.cls_token ? ad::reshape(ad::slice(x, 1, 0, 1), {batch, d}) : ad::mean(x, 1);
  return ad::linear(pooled, p("head.weight"), p("head.bias"));
}

Tensor Model::logits(const Tensor& images) const {
  Tape tape;
  return forward(tape, tape.constant(images)).value();
}

ParameterCounts count_parameters(const ParameterStore& store, std::size_t depth) {
  ParameterCounts counts;
  for (const auto& p : store) {
    if (!p->trainable) continue;
    std::size_t cut = 0;
    for (std::size_t i = 0; i < depth && cut != std::string::npos; ++i) {
      cut = p->name.find('.', i == 0 ? 0 : cut + 1);
    }
    if (cut == std::string::npos) cut = p->name.size();
    counts.by_prefix[p->name.substr(0, cut)] += p->value.numel();
    counts.total += p->value.numel();
  }
  return counts;
}

ParameterCounts count_parameters(const Model& model, std::size_t depth) {
  return count_parameters(model.parameters(), depth);
}

}  // namespace ska
