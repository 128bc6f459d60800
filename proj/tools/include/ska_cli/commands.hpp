// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "ska/gradcheck.hpp"
#include "ska/mixers.hpp"
#include "ska_cli/config.hpp"

namespace ska::cli {

// gradcheck ------------------------------------------------------------------

struct GradCheckGrid {
  std::vector<MixerKind> kinds{std::begin(kAllMixerKinds), std::end(kAllMixerKinds)};
  std::vector<std::size_t> tokens{4, 16};
  std::vector<std::size_t> dims{8, 32};
  std::vector<std::size_t> heads{1, 2, 4};
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::size_t batch = 2;
  GradCheckOptions options = precise_grad_check_options();
};

struct GradCheckRow {
  MixerKind kind;
  std::size_t tokens;
  std::size_t dim;
  std::size_t heads;
  std::uint64_t seed;
  std::string param;
  double max_rel_error;
  bool pass;
};

/// One row per trainable parameter per grid cell. SepConv ignores heads and
/// runs once per (N, D, seed) with H = 1.
std::vector<GradCheckRow> run_gradcheck_grid(const GradCheckGrid& grid);
std::string gradcheck_csv(std::span<const GradCheckRow> rows);

// sweep ----------------------------------------------------------------------

struct SweepRow {
  std::size_t heads;
  std::size_t params;
  std::uint64_t flops;
  double accuracy;
  std::uint64_t seed;
};

/// Trains `base` once per head count with seed base.train.seed + index. Every
/// cell is validated before any training starts.
std::vector<SweepRow> run_head_sweep(const RunConfig& base, std::span<const std::size_t> heads,
                                     std::ostream* progress = nullptr);
std::string sweep_csv(std::span<const SweepRow> rows);

// ablate ---------------------------------------------------------------------

struct AblationRow {
  Activation activation;
  bool scaled;
  bool normalized;
  double accuracy;
  double max_row_sum_dev;
  std::uint64_t seed;
};

/// {softmax, gelu, relu, starrelu} x {scaled, unscaled}; cell i trains with
/// seed base.train.seed + i. Row-sum deviation is measured on the attention
/// maps of up to 64 evaluation images after training.
std::vector<AblationRow> run_ablation(const RunConfig& base, std::ostream* progress = nullptr);
std::string ablation_csv(std::span<const AblationRow> rows);

// attnmap & shared helpers ---------------------------------------------------

struct LayerMap {
  std::size_t layer;
  MixerKind kind;
  Tensor map;  ///< head-averaged [N', N']; empty for sepconv
};

/// Head-averaged attention of every block for one image [1, C, H, W].
std::vector<LayerMap> attention_maps(const Model& model, const Tensor& image);
std::string matrix_csv(const Tensor& map);

/// Instrumented multiply-accumulates of one single-image forward pass.
std::uint64_t model_macs_per_image(const Model& model);

/// Largest |row sum - 1| over every attention row of the model's maps.
double max_row_sum_deviation(const Model& model, const Tensor& images);

}  // namespace ska::cli
