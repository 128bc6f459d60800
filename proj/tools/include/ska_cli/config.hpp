// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>

#include "ska/data.hpp"
#include "ska/former.hpp"
#include "ska/train.hpp"

namespace ska::cli {

enum class DataSource { synth, idx };

struct DataConfig {
  DataSource source = DataSource::synth;
  SynthKind kind = SynthKind::stripe_orientation;
  std::size_t grid = 8;
  std::size_t train_size = 2000;
  std::size_t test_size = 500;
  std::uint64_t seed = 0;
  std::string train_images;
  std::string train_labels;
  std::string test_images;
  std::string test_labels;
};

/// One run: sections `model`, `train` and `data` of a JSON config file.
///
///   {
///     "model": {"input": [1, 8, 8], "patch": 2, "stages": [{"kind": "ska", "depth": 2, "dim": 16, "heads": 2}]},
///     "train": {"optimizer": "adamw", "lr": 0.001, "steps": 3000, "seed": 0},
///     "data":  {"source": "synth", "kind": "stripe_orientation", "grid": 8}
///   }
///
/// Missing keys take defaults; unknown keys are errors.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  DataConfig data;

  /// Canonical JSON with every key present.
  std::string to_json() const;
  static RunConfig from_json(std::string_view text);
  void validate() const;
};

RunConfig default_run_config();

/// Loads `path` (defaults only when empty) and applies `dotted.path=value`
/// overrides. An override must name a key present in the canonical config
/// and keep its JSON type; array elements are addressed by index, as in
/// `model.stages.0.kind=cska`.
RunConfig load_run_config(const std::string& path, std::span<const std::string> overrides = {});

struct LoadedData {
  Dataset train;
  std::optional<Dataset> test;
};

/// Builds or reads the datasets and checks them against the model input.
LoadedData load_data(const DataConfig& cfg, const ModelConfig& model);

}  // namespace ska::cli
