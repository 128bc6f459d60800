// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "ska/autodiff.hpp"

namespace ska {

enum class OptimizerKind { sgd, adam, adamw };
OptimizerKind parse_optimizer(std::string_view name);
std::string_view to_string(OptimizerKind kind) noexcept;

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adamw;
  double weight_decay = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double momentum = 0.9;
};

/// In-place parameter update from a gradient map. Parameters without an
/// entry in the map are left untouched (their state does not advance).
///
///   sgd    v = mu v + (g + wd p);         p -= lr v
///   adam   g' = g + wd p; Adam moments on g'; p -= lr m^/(sqrt(v^) + eps)
///   adamw  Adam moments on g;  p -= lr (m^/(sqrt(v^) + eps) + wd p)
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig cfg);

  const OptimizerConfig& config() const noexcept { return cfg_; }
  std::size_t steps() const noexcept { return t_; }
  void step(ParameterStore& params, const GradientMap& grads, double lr);

 private:
  struct State {
    std::vector<double> m;
    std::vector<double> v;
  };
  OptimizerConfig cfg_;
  std::size_t t_ = 0;
  std::map<std::string, State> state_;
};

enum class Schedule { constant, cosine };
Schedule parse_schedule(std::string_view name);
std::string_view to_string(Schedule s) noexcept;

/// Learning rate at 0-based `step` of `total`; cosine decays from `base` to 0.
double scheduled_lr(Schedule s, double base, std::size_t step, std::size_t total) noexcept;

double global_grad_norm(const GradientMap& grads) noexcept;
/// Rescales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_grad_norm(GradientMap& grads, double max_norm);

}  // namespace ska
