// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ska/autodiff.hpp"
#include "ska/gradcheck.hpp"

namespace ska {

enum class MixerKind { mhsa, ska, cska, sepconv };
enum class Activation { softmax, gelu, relu, starrelu };
enum class KeyInit { normal, trunc_normal };
enum class WeightSharing { none, spatially_global };

std::string_view to_string(MixerKind kind) noexcept;
std::string_view to_string(Activation act) noexcept;
std::string_view to_string(KeyInit init) noexcept;
std::string_view to_string(WeightSharing sharing) noexcept;

/// Accepts "mhsa"/"attn", "ska", "cska", "sepconv"/"dwconv"/"dw-conv"
/// (case-insensitive). Throws ConfigError listing the valid names.
MixerKind parse_mixer_kind(std::string_view name);
Activation parse_activation(std::string_view name);
KeyInit parse_key_init(std::string_view name);

inline constexpr MixerKind kAllMixerKinds[] = {MixerKind::sepconv, MixerKind::mhsa, MixerKind::ska,
                                               MixerKind::cska};

/// Token-mixer configuration. Inputs are [B, tokens (+1 with cls_token), dim].
///
/// Bias flags: `qkv_bias` covers the query, key and value projections, the
/// CSKA key convolution, and the first two SepConv stages; `proj_bias`
/// covers the output projection (the last SepConv stage).
struct MixerConfig {
  MixerKind kind = MixerKind::mhsa;
  std::size_t dim = 0;
  std::size_t heads = 1;
  /// Spatial token count N. Required for ska, cska and sepconv.
  std::size_t tokens = 0;
  /// Token grid; when both are 0 a square grid of `tokens` is assumed.
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;
  Activation activation = Activation::softmax;
  bool scaled = true;
  bool qkv_bias = true;
  bool proj_bias = true;
  bool cls_token = false;
  /// CSKA key kernel and SepConv depthwise kernel.
  std::size_t kernel = 3;
  double dropout = 0.0;
  KeyInit key_init = KeyInit::normal;
  /// SKA only: resample the static key when the input token count differs.
  bool interpolate_key = false;

  std::size_t head_dim() const noexcept { return heads ? dim / heads : 0; }
  /// Tokens carried by the input, including CLS.
  std::size_t total_tokens() const noexcept { return tokens + (cls_token ? 1 : 0); }
  /// Resolved (grid_h, grid_w); throws ConfigError if `tokens` does not fit.
  std::pair<std::size_t, std::size_t> grid() const;
  void validate() const;
  MixerConfig& bias_free() noexcept {
    qkv_bias = false;
    proj_bias = false;
    return *this;
  }
};

/// Whether the MHSA key projection carries a bias: only with `qkv_bias` and a
/// non-softmax activation.
bool mhsa_key_bias(const MixerConfig& cfg) noexcept;

struct MixerProperties {
  MixerKind kind;
  WeightSharing weight_sharing;
  /// Number of input-dependent weight applications.
  int dynamic_weights;
};

MixerProperties mixer_properties(MixerKind kind) noexcept;

/// A token mixer bound to its parameters in a ParameterStore. Parameter
/// names are `<prefix>.<local>`, e.g. "stage0.block1.ska.key".
///
/// Local names:
///   mhsa     q.weight k.weight v.weight proj.weight (+ .bias; k.bias only
///            without softmax)
///   ska      q.weight v.weight key [H, N(+1), d_h] proj.weight (+ .bias)
///   cska     q.weight v.weight key_conv.weight [H*N, d_h, k, k]
///            cls_key [H, 1, d_h] proj.weight (+ .bias)
///   sepconv  pw1.weight dw.weight [D, 1, k, k] pw2.weight (+ .bias)
///   starrelu activation adds act.scale and act.bias.
/// Linear weights are stored [in, out] and applied as x W.
class Mixer {
 public:
  Mixer(MixerConfig cfg, ParameterStore& store, std::string prefix, Rng& rng);

  const MixerConfig& config() const noexcept { return cfg_; }
  const std::string& prefix() const noexcept { return prefix_; }
  Parameter& param(std::string_view local) const;
  bool has_param(std::string_view local) const;
  std::vector<const Parameter*> parameters() const;
  std::size_t parameter_count() const;

  /// (B, N', D) -> (B, N', D). When `attention` is non-null and the mixer
  /// produces an attention map, the post-activation weights [B, H, N', N']
  /// are copied into it.
  Var forward(Tape& tape, Var x, Tensor* attention = nullptr) const;

 private:
  std::string name(std::string_view local) const;

  MixerConfig cfg_;
  ParameterStore* store_;
  std::string prefix_;
  std::vector<std::string> names_;
};

Var mhsa_forward(const Mixer& m, Tape& tape, Var x, Tensor* attention = nullptr);
Var ska_forward(const Mixer& m, Tape& tape, Var x, Tensor* attention = nullptr);
Var cska_forward(const Mixer& m, Tape& tape, Var x, Tensor* attention = nullptr);
Var sepconv_forward(const Mixer& m, Tape& tape, Var x);

/// Value-only forward on a throwaway tape.
Tensor mixer_apply(const Mixer& m, const Tensor& x);

struct AttentionTrace {
  Tensor per_head;   ///< [B, H, N', N']
  Tensor head_mean;  ///< [B, N', N']
};

/// Post-activation attention weights for one input. Throws ConfigError for
/// sepconv, which has no attention map.
AttentionTrace attention_trace(const Mixer& m, const Tensor& x);

/// [B, N, D] tokens <-> [B, D, gh, gw] feature map (row-major token order).
Var tokens_to_image(Var tokens, std::size_t grid_h, std::size_t grid_w);
Var image_to_tokens(Var image);

/// Linear resampling matrix [to, from] over the token axis (endpoints aligned).
Tensor token_interpolation(std::size_t from, std::size_t to);

/// grad_check of sum(mixer(x) * R) for a mixer built from `seed`, with
/// x, R ~ N(0, 1) of shape [batch, N', D] drawn from seed + 101 and seed + 202.
/// Parameter names carry the mixer kind as prefix.
GradCheckReport mixer_grad_check(const MixerConfig& cfg, std::uint64_t seed, std::size_t batch = 2,
                                 const GradCheckOptions& opts = precise_grad_check_options());

}  // namespace ska
