// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ska/mixers.hpp"

namespace ska {

struct BlockConfig {
  MixerConfig mixer;
  double mlp_ratio = 4.0;
  double residual_scale = 1.0;

  void validate() const;
};

/// MetaFormer block:
///   y = rs * x + mixer(norm1(x))
///   z = rs * y + fc2(gelu(fc1(norm2(y))))
class Block {
 public:
  Block(BlockConfig cfg, ParameterStore& store, std::string prefix, Rng& rng);

  const BlockConfig& config() const noexcept { return cfg_; }
  const Mixer& mixer() const noexcept { return mixer_; }
  const std::string& prefix() const noexcept { return prefix_; }

  Var forward(Tape& tape, Var x, Tensor* attention = nullptr) const;

 private:
  BlockConfig cfg_;
  ParameterStore* store_;
  std::string prefix_;
  Mixer mixer_;
};

/// Value-only block forward on a throwaway tape.
Tensor block_apply(const Block& block, const Tensor& x);

struct StageConfig {
  MixerKind kind = MixerKind::mhsa;
  std::size_t depth = 1;
  std::size_t dim = 16;
  std::size_t heads = 1;
  /// Spatial reduction entering this stage. Stage 0 relies on the patch
  /// embedding and must use 1.
  std::size_t downsample = 1;

  friend bool operator==(const StageConfig&, const StageConfig&) = default;
};

/// Hierarchical model: patch embedding, stages of blocks with strided
/// patch-merge convolutions between them, final norm, pooling (or CLS
/// readout) and a linear head.
struct ModelConfig {
  std::size_t in_channels = 1;
  std::size_t height = 8;
  std::size_t width = 8;
  std::size_t patch = 1;
  std::vector<StageConfig> stages;
  std::size_t num_classes = 2;
  bool cls_token = false;
  bool pos_embed = false;
  double mlp_ratio = 4.0;
  double residual_scale = 1.0;
  // Mixer options shared by every stage.
  Activation activation = Activation::softmax;
  bool scaled = true;
  bool qkv_bias = true;
  bool proj_bias = true;
  std::size_t kernel = 3;
  double dropout = 0.0;
  KeyInit key_init = KeyInit::normal;

  /// Token grid seen by stage `s`.
  std::pair<std::size_t, std::size_t> stage_grid(std::size_t s) const;
  std::size_t stage_tokens(std::size_t s) const;
  MixerConfig stage_mixer(std::size_t s) const;
  void validate() const;

  /// Canonical JSON text (stable key order) used in checkpoints.
  std::string to_json() const;
  static ModelConfig from_json(std::string_view text);
  /// Names of fields whose values differ from `other`.
  std::vector<std::string> diff(const ModelConfig& other) const;
};

/// Parses a stage placement such as "[DW-Conv, CSKA, attn, attn]".
std::vector<MixerKind> parse_placement(std::string_view text);

/// Builds a model from a placement with one block per stage, dims doubling
/// from `base_dim`, and downsampling by 2 between stages.
ModelConfig placement_model(std::span<const MixerKind> placement, std::size_t base_dim, std::size_t heads,
                            std::size_t image_size, std::size_t patch, std::size_t num_classes);

class Model {
 public:
  explicit Model(ModelConfig cfg, std::uint64_t seed = 0);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const noexcept { return cfg_; }
  std::uint64_t seed() const noexcept { return seed_; }
  ParameterStore& parameters() noexcept { return store_; }
  const ParameterStore& parameters() const noexcept { return store_; }
  const std::vector<std::unique_ptr<Block>>& blocks() const noexcept { return blocks_; }

  /// images [B, C, H, W] -> logits [B, num_classes]. When `attention` is
  /// non-null it receives one [B, H, N', N'] map per attention block in
  /// order (sepconv blocks contribute a null tensor).
  Var forward(Tape& tape, Var images, std::vector<Tensor>* attention = nullptr) const;
  Tensor logits(const Tensor& images) const;

 private:
  ModelConfig cfg_;
  std::uint64_t seed_;
  ParameterStore store_;
  std::vector<std::unique_ptr<Block>> blocks_;
  std::vector<std::size_t> stage_of_block_;
};

struct ParameterCounts {
  std::map<std::string, std::size_t> by_prefix;
  std::size_t total = 0;
};

/// Trainable elements grouped by the first `depth` dotted name components.
ParameterCounts count_parameters(const ParameterStore& store, std::size_t depth = 2);
ParameterCounts count_parameters(const Model& model, std::size_t depth = 2);

// ---------------------------------------------------------------------------
// Checkpoints. Layout (all integers little-endian):
//   "SKAF" | u32 version | u32 len | config JSON | u64 seed | u64 step |
//   u32 count | count x (u32 len | name | u32 rank | rank x u64 | f64 data)

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::string config_text;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
  std::vector<std::pair<std::string, Tensor>> parameters;
};

void save_checkpoint(const std::string& path, const Model& model, std::uint64_t step = 0);
Checkpoint read_checkpoint(const std::string& path);
/// Loads values into `model`; throws CheckpointError if the stored config
/// differs (message lists the fields) or any parameter is missing.
Checkpoint load_checkpoint(const std::string& path, Model& model);
/// Builds the model described by the checkpoint and loads it.
std::unique_ptr<Model> model_from_checkpoint(const std::string& path);

}  // namespace ska
