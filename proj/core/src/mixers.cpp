// SPDX-License-Identifier: Apache-2.0
#include "ska/mixers.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

namespace ska {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

// PyTorch-style default: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
Tensor fan_in_uniform(Rng& rng, Shape shape, std::size_t fan_in) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return rng_uniform(rng, std::move(shape), -bound, bound);
}

Tensor key_init(Rng& rng, Shape shape, KeyInit init) {
  if (init == KeyInit::normal) return rng_normal(rng, std::move(shape));
  // Normal with std 0.02 truncated at two standard deviations.
  Tensor t(std::move(shape));
  for (auto& v : t.data()) {
    double z;
    do {
      z = rng.normal();
    } while (std::abs(z) > 2.0);
    v = 0.02 * z;
  }
  return t;
}

// [B, N, D] -> [B, H, N, d_h]
Var split_heads(Var x, std::size_t heads) {
  const std::size_t b = x.dim(0), n = x.dim(1), d = x.dim(2);
  return ad::permute(ad::reshape(x, {b, n, heads, d / heads}), {0, 2, 1, 3});
}

// [B, H, N, d_h] -> [B, N, D]
Var merge_heads(Var x) {
  const std::size_t b = x.dim(0), h = x.dim(1), n = x.dim(2), dh = x.dim(3);
  return ad::reshape(ad::permute(x, {0, 2, 1, 3}), {b, n, h * dh});
}

void require_kind(const Mixer& m, MixerKind kind) {
  if (m.config().kind != kind) {
    throw ConfigError(std::string(to_string(kind)) + "_forward called on a " +
                      std::string(to_string(m.config().kind)) + " mixer");
  }
}

void require_input(const Mixer& m, Var x) {
  if (x.rank() != 3 || x.dim(2) != m.config().dim) {
    throw DimensionError("mixer expects [B, N, " + std::to_string(m.config().dim) + "] input, got " +
                         shape_string(x.shape()));
  }
}

Var project(const Mixer& m, Tape& tape, Var x, const char* which, bool bias) {
  const std::string w = std::string(which) + ".weight";
  if (!bias) return ad::linear(x, tape.param(m.param(w)));
  return ad::linear(x, tape.param(m.param(w)), tape.param(m.param(std::string(which) + ".bias")));
}

Var activate(const Mixer& m, Tape& tape, Var logits) {
  const MixerConfig& cfg = m.config();
  if (cfg.scaled) logits = ad::scale(logits, 1.0 / std::sqrt(static_cast<double>(cfg.head_dim())));
  switch (cfg.activation) {
    case Activation::softmax:
      return ad::softmax_rows(logits);
    case Activation::gelu:
      return ad::gelu(logits);
    case Activation::relu:
      return ad::relu(logits);
    case Activation::starrelu:
      return ad::star_relu(logits, tape.param(m.param("act.scale")), tape.param(m.param("act.bias")));
  }
  throw ConfigError("unknown activation");
}

// attn [B, H, N', K] x values [B, H, K, d_h] -> projected [B, N', D].
Var attend(const Mixer& m, Tape& tape, Var attn, Var v_heads, Tensor* attention) {
  if (attention) *attention = attn.value();
  Var out = merge_heads(ad::matmul(attn, v_heads));
  out = project(m, tape, out, "proj", m.config().proj_bias);
  return ad::dropout(out, m.config().dropout);
}

}  // namespace

bool mhsa_key_bias(const MixerConfig& cfg) noexcept {
  // Under softmax q . b_k shifts a whole logit row, so the bias has no effect.
  return cfg.qkv_bias && cfg.activation != Activation::softmax;
}

std::string_view to_string(MixerKind kind) noexcept {
  switch (kind) {
    case MixerKind::mhsa:
      return "mhsa";
    case MixerKind::ska:
      return "ska";
    case MixerKind::cska:
      return "cska";
    case MixerKind::sepconv:
      return "sepconv";
  }
  return "?";
}

std::string_view to_string(Activation act) noexcept {
  switch (act) {
    case Activation::softmax:
      return "softmax";
    case Activation::gelu:
      return "gelu";
    case Activation::relu:
      return "relu";
    case Activation::starrelu:
      return "starrelu";
  }
  return "?";
}

std::string_view to_string(KeyInit init) noexcept {
  return init == KeyInit::normal ? "normal" : "trunc_normal";
}

std::string_view to_string(WeightSharing sharing) noexcept {
  return sharing == WeightSharing::none ? "none" : "spatially-global";
}

MixerKind parse_mixer_kind(std::string_view name) {
  const std::string s = lower(name);
  if (s == "mhsa" || s == "attn" || s == "self-attn") return MixerKind::mhsa;
  if (s == "ska") return MixerKind::ska;
  if (s == "cska") return MixerKind::cska;
  if (s == "sepconv" || s == "dwconv" || s == "dw-conv") return MixerKind::sepconv;
  throw ConfigError("unknown mixer kind '" + std::string(name) + "' (valid: mhsa, ska, cska, sepconv)");
}

Activation parse_activation(std::string_view name) {
  const std::string s = lower(name);
  if (s == "softmax") return Activation::softmax;
  if (s == "gelu") return Activation::gelu;
  if (s == "relu") return Activation::relu;
  if (s == "starrelu") return Activation::starrelu;
  throw ConfigError("unknown activation '" + std::string(name) + "' (valid: softmax, gelu, relu, starrelu)");
}

KeyInit parse_key_init(std::string_view name) {
  const std::string s = lower(name);
  if (s == "normal") return KeyInit::normal;
  if (s == "trunc_normal") return KeyInit::trunc_normal;
  throw ConfigError("unknown key init '" + std::string(name) + "' (valid: normal, trunc_normal)");
}

std::pair<std::size_t, std::size_t> MixerConfig::grid() const {
  if (grid_h == 0 && grid_w == 0) {
    const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(tokens))));
    if (side * side != tokens || tokens == 0) {
      throw ConfigError("token count " + std::to_string(tokens) + " is not a square grid; set grid_h/grid_w");
    }
    return {side, side};
  }
  if (grid_h * grid_w != tokens) {
    throw ConfigError("token count " + std::to_string(tokens) + " does not factor into grid " +
                      std::to_string(grid_h) + "x" + std::to_string(grid_w));
  }
  return {grid_h, grid_w};
}

void MixerConfig::validate() const {
  if (dim == 0) throw ConfigError("mixer dim must be positive");
  if (heads == 0 || dim % heads != 0) {
    throw ConfigError("dim " + std::to_string(dim) + " is not divisible by heads " + std::to_string(heads));
  }
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0, 1)");
  if (kind != MixerKind::mhsa && tokens == 0) {
    throw ConfigError(std::string(to_string(kind)) + " needs a fixed token count");
  }
  if (kind == MixerKind::cska || kind == MixerKind::sepconv) {
    (void)grid();
    if (kernel % 2 == 0) throw ConfigError("kernel must be odd, got " + std::to_string(kernel));
  }
  if (kind == MixerKind::sepconv && cls_token) throw ConfigError("sepconv does not support a CLS token");
}

MixerProperties mixer_properties(MixerKind kind) noexcept {
  switch (kind) {
    case MixerKind::sepconv:
      return {kind, WeightSharing::spatially_global, 0};
    case MixerKind::mhsa:
      return {kind, WeightSharing::none, 2};
    case MixerKind::ska:
      return {kind, WeightSharing::none, 1};
    case MixerKind::cska:
      return {kind, WeightSharing::spatially_global, 1};
  }
  return {kind, WeightSharing::none, 0};
}

// ---------------------------------------------------------------------------

Mixer::Mixer(MixerConfig cfg, ParameterStore& store, std::string prefix, Rng& rng)
    : cfg_(cfg), store_(&store), prefix_(std::move(prefix)) {
  cfg_.validate();
  const std::size_t d = cfg_.dim, h = cfg_.heads, dh = cfg_.head_dim();
  auto add = [&](std::string_view local, Tensor value) {
    names_.push_back(name(local));
    store_->add(names_.back(), std::move(value));
  };
  auto linear = [&](const char* which, bool bias) {
    add(std::string(which) + ".weight", fan_in_uniform(rng, {d, d}, d));
    if (bias) add(std::string(which) + ".bias", fan_in_uniform(rng, {d}, d));
  };
  switch (cfg_.kind) {
    case MixerKind::mhsa:
      linear("q", cfg_.qkv_bias);
      linear("k", mhsa_key_bias(cfg_));
      linear("v", cfg_.qkv_bias);
      linear("proj", cfg_.proj_bias);
      break;
    case MixerKind::ska:
      linear("q", cfg_.qkv_bias);
      linear("v", cfg_.qkv_bias);
      add("key", key_init(rng, {h, cfg_.total_tokens(), dh}, cfg_.key_init));
      linear("proj", cfg_.proj_bias);
      break;
    case MixerKind::cska: {
      linear("q", cfg_.qkv_bias);
      linear("v", cfg_.qkv_bias);
      const std::size_t k = cfg_.kernel, n = cfg_.tokens;
      add("key_conv.weight", fan_in_uniform(rng, {h * n, dh, k, k}, dh * k * k));
      if (cfg_.qkv_bias) add("key_conv.bias", fan_in_uniform(rng, {h * n}, dh * k * k));
      if (cfg_.cls_token) add("cls_key", key_init(rng, {h, 1, dh}, cfg_.key_init));
      linear("proj", cfg_.proj_bias);
      break;
    }
    case MixerKind::sepconv: {
      const std::size_t k = cfg_.kernel;
      linear("pw1", cfg_.qkv_bias);
      add("dw.weight", fan_in_uniform(rng, {d, 1, k, k}, k * k));
      if (cfg_.qkv_bias) add("dw.bias", fan_in_uniform(rng, {d}, k * k));
      linear("pw2", cfg_.proj_bias);
      break;
    }
  }
  if (cfg_.activation == Activation::starrelu && cfg_.kind != MixerKind::sepconv) {
    add("act.scale", Tensor::scalar(0.8944));
    add("act.bias", Tensor::scalar(-0.4472));
  }
}

std::string Mixer::name(std::string_view local) const {
  return prefix_.empty() ? std::string(local) : prefix_ + "." + std::string(local);
}

Parameter& Mixer::param(std::string_view local) const { return store_->get(name(local)); }

bool Mixer::has_param(std::string_view local) const { return store_->find(name(local)) != nullptr; }

std::vector<const Parameter*> Mixer::parameters() const {
  std::vector<const Parameter*> out;
  for (const auto& n : names_) out.push_back(&store_->get(n));
  return out;
}

std::size_t Mixer::parameter_count() const {
  std::size_t total = 0;
  for (const auto* p : parameters()) total += p->value.numel();
  return total;
}

Var Mixer::forward(Tape& tape, Var x, Tensor* attention) const {
  switch (cfg_.kind) {
    case MixerKind::mhsa:
      return mhsa_forward(*this, tape, x, attention);
    case MixerKind::ska:
      return ska_forward(*this, tape, x, attention);
    case MixerKind::cska:
      return cska_forward(*this, tape, x, attention);
    case MixerKind::sepconv:
      return sepconv_forward(*this, tape, x);
  }
  throw ConfigError("unknown mixer kind");
}

Var mhsa_forward(const Mixer& m, Tape& tape, Var x, Tensor* attention) {
  require_kind(m, MixerKind::mhsa);
  require_input(m, x);
  const MixerConfig& cfg = m.config();
  Var q = split_heads(project(m, tape, x, "q", cfg.qkv_bias), cfg.heads);
  Var k = split_heads(project(m, tape, x, "k", mhsa_key_bias(cfg)), cfg.heads);
  Var v = split_heads(project(m, tape, x, "v", cfg.qkv_bias), cfg.heads);
  Var attn = activate(m, tape, ad::matmul(q, ad::transpose(k)));
  return attend(m, tape, attn, v, attention);
}

Var ska_forward(const Mixer& m, Tape& tape, Var x, Tensor* attention) {
  require_kind(m, MixerKind::ska);
  require_input(m, x);
  const MixerConfig& cfg = m.config();
  const std::size_t n = x.dim(1);
  Var key = tape.param(m.param("key"));  // [H, N(+1), d_h]
  if (n != cfg.total_tokens()) {
    if (!cfg.interpolate_key) {
      throw DimensionError("ska mixer '" + m.prefix() + "' has a static key for " +
                           std::to_string(cfg.total_tokens()) + " tokens, input carries " + std::to_string(n));
    }
    key = ad::matmul(tape.constant(token_interpolation(cfg.total_tokens(), n)), key);
  }
  Var q = split_heads(project(m, tape, x, "q", cfg.qkv_bias), cfg.heads);
  Var v = split_heads(project(m, tape, x, "v", cfg.qkv_bias), cfg.heads);
  Var attn = activate(m, tape, ad::matmul(q, ad::transpose(key)));
  return attend(m, tape, attn, v, attention);
}

Var cska_forward(const Mixer& m, Tape& tape, Var x, Tensor* attention) {
  require_kind(m, MixerKind::cska);
  require_input(m, x);
  const MixerConfig& cfg = m.config();
  const std::size_t b = x.dim(0), n = cfg.tokens, h = cfg.heads, k = cfg.kernel;
  if (x.dim(1) != cfg.total_tokens()) {
    throw DimensionError("cska mixer '" + m.prefix() + "' expects " + std::to_string(cfg.total_tokens()) +
                         " tokens, input carries " + std::to_string(x.dim(1)));
  }
  const auto [gh, gw] = cfg.grid();
  Var q = project(m, tape, x, "q", cfg.qkv_bias);
  Var v = split_heads(project(m, tape, x, "v", cfg.qkv_bias), h);
  Var q_spatial = cfg.cls_token ? ad::slice(q, 1, 1, n) : q;

  // Channel block h of the grouped conv holds, at each query position, the
  // N key logits of head h.
  Var image = tokens_to_image(q_spatial, gh, gw);
  std::optional<Var> bias;
  if (cfg.qkv_bias) bias = tape.param(m.param("key_conv.bias"));
  Var conv = ad::conv2d(image, tape.param(m.param("key_conv.weight")), bias,
                        Conv2dParams{1, (k - 1) / 2, h});           // [B, H*N, gh, gw]
  Var logits = ad::transpose(ad::reshape(conv, {b, h, n, n}));      // [B, H, query, key]

  if (cfg.cls_token) {
    // Key column 0 belongs to CLS: every query (CLS included) scores it
    // against the CLS static key. The CLS query has no conv logits over
    // spatial keys; those entries are zero.
    Var q_heads = split_heads(q, h);                                            // [B, H, N+1, d_h]
    Var cls_col = ad::matmul(q_heads, ad::transpose(tape.param(m.param("cls_key"))));  // [B, H, N+1, 1]
    Var cls_row = tape.constant(Tensor({b, h, 1, n}));
    std::vector<Var> rows{cls_row, logits};
    Var spatial_cols = ad::concat(rows, 2);                                     // [B, H, N+1, N]
    std::vector<Var> cols{cls_col, spatial_cols};
    logits = ad::concat(cols, 3);                                               // [B, H, N+1, N+1]
  }
  Var attn = activate(m, tape, logits);
  return attend(m, tape, attn, v, attention);
}

Var sepconv_forward(const Mixer& m, Tape& tape, Var x) {
  require_kind(m, MixerKind::sepconv);
  require_input(m, x);
  const MixerConfig& cfg = m.config();
  if (x.dim(1) != cfg.tokens) {
    throw DimensionError("sepconv mixer '" + m.prefix() + "' expects " + std::to_string(cfg.tokens) +
                         " tokens, input carries " + std::to_string(x.dim(1)));
  }
  const auto [gh, gw] = cfg.grid();
  Var y = project(m, tape, x, "pw1", cfg.qkv_bias);
  std::optional<Var> bias;
  if (cfg.qkv_bias) bias = tape.param(m.param("dw.bias"));
  y = image_to_tokens(ad::conv2d(tokens_to_image(y, gh, gw), tape.param(m.param("dw.weight")), bias,
                                 Conv2dParams{1, (cfg.kernel - 1) / 2, cfg.dim}));
  y = project(m, tape, y, "pw2", cfg.proj_bias);
  return ad::dropout(y, cfg.dropout);
}

Tensor mixer_apply(const Mixer& m, const Tensor& x) {
  Tape tape;
  return m.forward(tape, tape.constant(x)).value();
}

GradCheckReport mixer_grad_check(const MixerConfig& cfg, std::uint64_t seed, std::size_t batch,
                                 const GradCheckOptions& opts) {
  ParameterStore store;
  Rng rng(seed);
  const Mixer mixer(cfg, store, std::string(to_string(cfg.kind)), rng);
  Rng xr(seed + 101), rr(seed + 202);
  const Shape shape{batch, cfg.total_tokens(), cfg.dim};
  const Tensor x = rng_normal(xr, shape), r = rng_normal(rr, shape);
  return grad_check(
      [&](Tape& t) { return ad::sum(ad::mul(mixer.forward(t, t.constant(x)), t.constant(r))); }, store, opts);
}

AttentionTrace attention_trace(const Mixer& m, const Tensor& x) {
  if (m.config().kind == MixerKind::sepconv) throw ConfigError("sepconv mixer has no attention map");
  Tape tape;
  AttentionTrace trace;
  m.forward(tape, tape.constant(x), &trace.per_head);
  trace.head_mean = mean(trace.per_head, 1);
  return trace;
}

Var tokens_to_image(Var tokens, std::size_t grid_h, std::size_t grid_w) {
  if (tokens.rank() != 3 || tokens.dim(1) != grid_h * grid_w) {
    throw DimensionError("tokens " + shape_string(tokens.shape()) + " do not fill a " + std::to_string(grid_h) +
                         "x" + std::to_string(grid_w) + " grid");
  }
  const std::size_t b = tokens.dim(0), d = tokens.dim(2);
  return ad::reshape(ad::permute(tokens, {0, 2, 1}), {b, d, grid_h, grid_w});
}

Var image_to_tokens(Var image) {
  if (image.rank() != 4) throw DimensionError("expected [B, C, H, W], got " + shape_string(image.shape()));
  const std::size_t b = image.dim(0), c = image.dim(1), n = image.dim(2) * image.dim(3);
  return ad::permute(ad::reshape(image, {b, c, n}), {0, 2, 1});
}

Tensor token_interpolation(std::size_t from, std::size_t to) {
  Tensor w({to, from});
  for (std::size_t i = 0; i < to; ++i) {
    const double pos = to == 1 ? 0.0 : static_cast<double>(i) * static_cast<double>(from - 1) / static_cast<double>(to - 1);
    const auto lo = std::min(static_cast<std::size_t>(pos), from - 1);
    const std::size_t hi = std::min(lo + 1, from - 1);
    const double frac = pos - static_cast<double>(lo);
    w[i * from + lo] += 1.0 - frac;
    if (hi != lo) w[i * from + hi] += frac;
  }
  return w;
}

}  // namespace ska
