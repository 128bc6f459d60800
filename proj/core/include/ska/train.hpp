// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ska/data.hpp"
#include "ska/former.hpp"
#include "ska/optim.hpp"

namespace ska {

struct TrainConfig {
  OptimizerConfig optimizer;
  double lr = 1e-3;
  std::size_t batch_size = 32;
  /// Number of optimizer steps; when 0, `epochs` passes over the data are used.
  std::size_t steps = 0;
  std::size_t epochs = 1;
  std::uint64_t seed = 0;
  Schedule schedule = Schedule::constant;
  /// Global-norm gradient clipping threshold; 0 disables clipping.
  double clip_norm = 5.0;
  /// Evaluate on the held-out set every this many steps (and after the last).
  std::size_t eval_every = 0;

  void validate() const;
  /// Resolved step count for a dataset of `rows` samples.
  std::size_t total_steps(std::size_t rows) const;
};

struct RunLogRow {
  std::size_t step;
  double loss;
  std::optional<double> eval_acc;
};

struct RunLog {
  std::vector<RunLogRow> rows;
  double wall_seconds = 0.0;
  double final_loss = 0.0;
  std::optional<double> final_eval_acc;

  /// `step,loss` or `step,loss,eval_acc` (eval cells empty between evaluations).
  std::string to_csv() const;
  void write_csv(const std::string& path) const;
};

struct StepResult {
  double loss;
  double grad_norm;
};

/// One optimizer step on a batch. Throws NumericalError (with step, lr and
/// gradient norm) if the loss or the gradient is not finite.
StepResult train_step(Model& model, Optimizer& opt, const Tensor& images, std::span<const std::size_t> labels,
                      double lr, double clip_norm, std::size_t step_index, std::uint64_t seed);

/// Minibatch training with a seeded Fisher-Yates shuffle per epoch.
RunLog train(Model& model, const Dataset& data, const TrainConfig& cfg, const Dataset* eval = nullptr);

struct EvalResult {
  double accuracy;
  double mean_loss;
};

using LogitsFn = std::function<Tensor(const Tensor& images)>;

/// Accuracy uses argmax with ties broken toward the lowest class index.
/// Throws ConfigError on an empty dataset.
EvalResult evaluate(const LogitsFn& logits, const Dataset& data, std::size_t batch_size = 256);
EvalResult evaluate(const Model& model, const Dataset& data, std::size_t batch_size = 256);

/// Mean cross-entropy of logits [B, C] against labels.
double cross_entropy_value(const Tensor& logits, std::span<const std::size_t> labels);
/// Argmax per row, lowest index on ties.
std::vector<std::size_t> predict(const Tensor& logits);

}  // namespace ska
