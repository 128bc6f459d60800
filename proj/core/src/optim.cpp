// SPDX-License-Identifier: Apache-2.0
#include "ska/optim.hpp"

#include <cctype>
#include <cmath>
#include <numbers>

namespace ska {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

OptimizerKind parse_optimizer(std::string_view name) {
  const std::string s = lower(name);
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "adam") return OptimizerKind::adam;
  if (s == "adamw") return OptimizerKind::adamw;
  throw ConfigError("unknown optimizer '" + std::string(name) + "' (valid: sgd, adam, adamw)");
}

std::string_view to_string(OptimizerKind kind) noexcept {
  switch (kind) {
    case OptimizerKind::sgd:
      return "sgd";
    case OptimizerKind::adam:
      return "adam";
    case OptimizerKind::adamw:
      return "adamw";
  }
  return "?";
}

Optimizer::Optimizer(OptimizerConfig cfg) : cfg_(cfg) {
  if (cfg_.weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
  if (!(cfg_.beta1 >= 0.0 && cfg_.beta1 < 1.0) || !(cfg_.beta2 >= 0.0 && cfg_.beta2 < 1.0)) {
    throw ConfigError("betas must lie in [0, 1)");
  }
  if (!(cfg_.eps > 0.0)) throw ConfigError("eps must be positive");
  if (!(cfg_.momentum >= 0.0 && cfg_.momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
}

void Optimizer::step(ParameterStore& params, const GradientMap& grads, double lr) {
  ++t_;
  const double wd = cfg_.weight_decay;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (auto& p : params) {
    if (!p->trainable) continue;
    const auto it = grads.find(p->name);
    if (it == grads.end()) continue;
    const auto g = it->second.data();
    auto w = p->value.data();
    if (g.size() != w.size()) throw DimensionError("gradient for '" + p->name + "' has the wrong size");
    State& st = state_[p->name];
    if (st.m.empty()) {
      st.m.assign(w.size(), 0.0);
      if (cfg_.kind != OptimizerKind::sgd) st.v.assign(w.size(), 0.0);
    }
    for (std::size_t i = 0; i < w.size(); ++i) {
      switch (cfg_.kind) {
        case OptimizerKind::sgd: {
          st.m[i] = cfg_.momentum * st.m[i] + (g[i] + wd * w[i]);
          w[i] -= lr * st.m[i];
          break;
        }
        case OptimizerKind::adam:
        case OptimizerKind::adamw: {
          const double gi = cfg_.kind == OptimizerKind::adam ? g[i] + wd * w[i] : g[i];
          st.m[i] = cfg_.beta1 * st.m[i] + (1.0 - cfg_.beta1) * gi;
          st.v[i] = cfg_.beta2 * st.v[i] + (1.0 - cfg_.beta2) * gi * gi;
          double update = (st.m[i] / c1) / (std::sqrt(st.v[i] / c2) + cfg_.eps);
          if (cfg_.kind == OptimizerKind::adamw) update += wd * w[i];
          w[i] -= lr * update;
          break;
        }
      }
    }
  }
}

Schedule parse_schedule(std::string_view name) {
  const std::string s = lower(name);
  if (s == "constant") return Schedule::constant;
  if (s == "cosine") return Schedule::cosine;
  throw ConfigError("unknown lr schedule '" + std::string(name) + "' (valid: constant, cosine)");
}

std::string_view to_string(Schedule s) noexcept { return s == Schedule::constant ? "constant" : "cosine"; }

double scheduled_lr(Schedule s, double base, std::size_t step, std::size_t total) noexcept {
  if (s == Schedule::constant || total == 0) return base;
  const double t = static_cast<double>(step) / static_cast<double>(total);
  return 0.5 * base * (1.0 + std::cos(std::numbers::pi * t));
}

double global_grad_norm(const GradientMap& grads) noexcept {
  double s = 0.0;
  for (const auto& [_, g] : grads) {
    for (double v : g.data()) s += v * v;
  }
  return std::sqrt(s);
}

double clip_grad_norm(GradientMap& grads, double max_norm) {
  if (!(max_norm > 0.0)) throw ConfigError("clip norm must be positive");
  const double norm = global_grad_norm(grads);
  if (norm > max_norm && std::isfinite(norm)) {
    const double f = max_norm / norm;
    for (auto& [_, g] : grads) {
      for (double& v : g.data()) v *= f;
    }
  }
  return norm;
}

}  // namespace ska
