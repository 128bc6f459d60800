// SPDX-License-Identifier: Apache-2.0
#include "ska/train.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include <fmt/format.h>

namespace ska {

void TrainConfig::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("train.lr must be a finite value >= 0");
  if (batch_size == 0) throw ConfigError("train.batch_size must be >= 1");
  if (steps == 0 && epochs == 0) throw ConfigError("train.steps or train.epochs must be positive");
  if (clip_norm < 0.0) throw ConfigError("train.clip_norm must be >= 0");
}

std::size_t TrainConfig::total_steps(std::size_t rows) const {
  if (steps > 0) return steps;
  return epochs * ((rows + batch_size - 1) / batch_size);
}

std::string RunLog::to_csv() const {
  bool with_eval = false;
  for (const auto& r : rows) with_eval = with_eval || r.eval_acc.has_value();
  std::string out = with_eval ? "step,loss,eval_acc\n" : "step,loss\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{:.17g}", r.step, r.loss);
    if (with_eval) out += r.eval_acc ? fmt::format(",{:.6f}", *r.eval_acc) : std::string(",");
    out += '\n';
  }
  return out;
}

void RunLog::write_csv(const std::string& path) const {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw ConfigError("cannot open '" + path + "' for writing");
  f << to_csv();
}

StepResult train_step(Model& model, Optimizer& opt, const Tensor& images, std::span<const std::size_t> labels,
                      double lr, double clip_norm, std::size_t step_index, std::uint64_t seed) {
  Tape tape(true, mix64(seed ^ (0xD1B54A32D192ED03ULL * (step_index + 1))));
  Var loss = ad::cross_entropy(model.forward(tape, tape.constant(images)), labels);
  const double value = loss.value().item();
  GradientMap grads = tape.backward(loss);
  const double raw_norm = global_grad_norm(grads);
  if (!std::isfinite(value) || !std::isfinite(raw_norm)) {
    throw NumericalError(fmt::format("non-finite {} at step {} (loss {}, lr {:.6g}, grad-norm {})",
                                     std::isfinite(value) ? "gradient" : "loss", step_index, value, lr, raw_norm));
  }
  const double norm = clip_norm > 0.0 ? clip_grad_norm(grads, clip_norm) : raw_norm;
  opt.step(model.parameters(), grads, lr);
  return {value, norm};
}

RunLog train(Model& model, const Dataset& data, const TrainConfig& cfg, const Dataset* eval) {
  cfg.validate();
  data.validate();
  if (data.size() == 0) throw ConfigError("training set is empty");
  FiniteCheckScope unchecked(false);
  const auto start = std::chrono::steady_clock::now();
  Optimizer opt(cfg.optimizer);
  Rng shuffle_rng = Rng(cfg.seed).split(0x5348554646ULL);
  const std::size_t total = cfg.total_steps(data.size());
  std::vector<std::size_t> order(data.size());
  std::size_t cursor = order.size();
  RunLog log;
  for (std::size_t s = 0; s < total; ++s) {
    std::vector<std::size_t> batch;
    while (batch.size() < cfg.batch_size) {
      if (cursor == order.size()) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[shuffle_rng.below(i + 1)]);
        cursor = 0;
      }
      batch.push_back(order[cursor++]);
      if (batch.size() == data.size()) break;
    }
    const double lr = scheduled_lr(cfg.schedule, cfg.lr, s, total);
    StepResult r;
    try {
      r = train_step(model, opt, data.gather(batch), data.gather_labels(batch), lr, cfg.clip_norm, s + 1, cfg.seed);
    } catch (const NumericalError& e) {
      throw NumericalError(std::string("training aborted: ") + e.what());
    }
    RunLogRow row{s + 1, r.loss, std::nullopt};
    if (eval && cfg.eval_every > 0 && ((s + 1) % cfg.eval_every == 0 || s + 1 == total)) {
      row.eval_acc = evaluate(model, *eval).accuracy;
      log.final_eval_acc = row.eval_acc;
    }
    log.rows.push_back(row);
    log.final_loss = r.loss;
  }
  if (eval && !log.final_eval_acc) log.final_eval_acc = evaluate(model, *eval).accuracy;
  log.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return log;
}

std::vector<std::size_t> predict(const Tensor& logits) {
  if (logits.rank() != 2) throw DimensionError("logits must be [B, C], got " + shape_string(logits.shape()));
  const std::size_t b = logits.dim(0), c = logits.dim(1);
  const auto v = logits.data();
  std::vector<std::size_t> out(b, 0);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 1; j < c; ++j) {
      if (v[i * c + j] > v[i * c + out[i]]) out[i] = j;
    }
  }
  return out;
}

double cross_entropy_value(const Tensor& logits, std::span<const std::size_t> labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
    throw DimensionError("cross-entropy needs logits [B, C] with B labels, got " + shape_string(logits.shape()));
  }
  const std::size_t b = logits.dim(0), c = logits.dim(1);
  const auto v = logits.data();
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    if (labels[i] >= c) throw DimensionError("label " + std::to_string(labels[i]) + " out of range");
    double mx = v[i * c];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, v[i * c + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(v[i * c + j] - mx);
    total += std::log(z) + mx - v[i * c + labels[i]];
  }
  return total / static_cast<double>(b);
}

EvalResult evaluate(const LogitsFn& logits, const Dataset& data, std::size_t batch_size) {
  if (data.size() == 0) throw ConfigError("cannot evaluate on an empty dataset");
  if (batch_size == 0) throw ConfigError("evaluation batch size must be >= 1");
  std::size_t correct = 0;
  double loss = 0.0;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const std::size_t n = std::min(batch_size, data.size() - start);
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), start);
    const auto labels = data.gather_labels(idx);
    const Tensor out = logits(data.gather(idx));
    const auto pred = predict(out);
    for (std::size_t i = 0; i < n; ++i) correct += pred[i] == labels[i];
    loss += cross_entropy_value(out, labels) * static_cast<double>(n);
  }
  const double m = static_cast<double>(data.size());
  return {static_cast<double>(correct) / m, loss / m};
}

EvalResult evaluate(const Model& model, const Dataset& data, std::size_t batch_size) {
  FiniteCheckScope unchecked(false);
  return evaluate([&](const Tensor& x) { return model.logits(x); }, data, batch_size);
}

}  // namespace ska
