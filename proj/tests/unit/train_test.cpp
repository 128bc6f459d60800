// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "helpers.hpp"
#include "ska/data.hpp"
#include "ska/former.hpp"
#include "ska/train.hpp"

using namespace ska;
using ska_test::randn;

namespace {

ModelConfig toy_model(MixerKind kind, std::size_t dim = 16) {
  ModelConfig c;
  c.height = c.width = 8;
  c.patch = 2;
  c.pos_embed = true;
  c.stages = {StageConfig{kind, 2, dim, kind == MixerKind::sepconv ? 1u : 2u, 1}};
  return c;
}

// Textbook Adam on f(p) = 0.5 * sum(a_i * p_i^2).
std::vector<double> adam_oracle(std::vector<double> p, const std::vector<double>& a, double lr, int steps) {
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  std::vector<double> m(p.size(), 0.0), v(p.size(), 0.0);
  for (int t = 1; t <= steps; ++t) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double g = a[i] * p[i];
      m[i] = b1 * m[i] + (1 - b1) * g;
      v[i] = b2 * v[i] + (1 - b2) * g * g;
      const double mh = m[i] / (1 - std::pow(b1, t)), vh = v[i] / (1 - std::pow(b2, t));
      p[i] -= lr * mh / (std::sqrt(vh) + eps);
    }
  }
  return p;
}

std::vector<double> run_quadratic(OptimizerConfig cfg, std::vector<double> p0, const std::vector<double>& a, double lr,
                                  int steps) {
  ParameterStore store;
  Parameter& p = store.add("p", Tensor({p0.size()}, std::vector<double>(p0)));
  Optimizer opt(cfg);
  for (int t = 0; t < steps; ++t) {
    Tensor g({p0.size()});
    for (std::size_t i = 0; i < p0.size(); ++i) g[i] = a[i] * p.value[i];
    opt.step(store, GradientMap{{"p", g}}, lr);
  }
  return {p.value.data().begin(), p.value.data().end()};
}

Dataset tiny_stripes(std::size_t n, std::uint64_t seed) { return synth_dataset(SynthKind::stripe_orientation, n, 8, seed); }

}  // namespace

TEST(Optimizer, AdamWWithoutDecayEqualsAdam) {
  const std::vector<double> p0{1.0, -2.0, 0.5, 3.0}, a{1.0, 10.0, 0.1, 2.5};
  const auto want = adam_oracle(p0, a, 1e-2, 100);
  OptimizerConfig adamw;
  adamw.weight_decay = 0.0;
  OptimizerConfig adam = adamw;
  adam.kind = OptimizerKind::adam;
  const auto w = run_quadratic(adamw, p0, a, 1e-2, 100), b = run_quadratic(adam, p0, a, 1e-2, 100);
  for (std::size_t i = 0; i < p0.size(); ++i) {
    EXPECT_NEAR(w[i], want[i], 1e-12);
    EXPECT_NEAR(b[i], want[i], 1e-12);
  }
}

TEST(Optimizer, DecoupledDecayShrinksWithZeroGradient) {
  OptimizerConfig cfg;
  cfg.weight_decay = 0.1;
  const auto p = run_quadratic(cfg, {2.0}, {0.0}, 0.5, 3);
  EXPECT_NEAR(p[0], 2.0 * std::pow(1 - 0.05, 3), 1e-15);
}

TEST(Optimizer, SgdMomentum) {
  OptimizerConfig cfg;
  cfg.kind = OptimizerKind::sgd;
  cfg.weight_decay = 0.0;
  cfg.momentum = 0.5;
  // g = p; v1 = 1, p1 = 0.9; v2 = 0.5 + 0.9 = 1.4, p2 = 0.76.
  const auto p = run_quadratic(cfg, {1.0}, {1.0}, 0.1, 2);
  EXPECT_NEAR(p[0], 0.76, 1e-15);
  EXPECT_THROW(parse_optimizer("lamb"), ConfigError);
}

TEST(Optimizer, LrZeroLeavesParametersUnchanged) {
  for (OptimizerKind kind : {OptimizerKind::sgd, OptimizerKind::adam, OptimizerKind::adamw}) {
    Model m(toy_model(MixerKind::ska), 3);
    std::vector<Tensor> before;
    for (const auto& p : m.parameters()) before.push_back(p->value);
    TrainConfig cfg;
    cfg.optimizer.kind = kind;
    cfg.lr = 0.0;
    cfg.steps = 5;
    cfg.batch_size = 4;
    train(m, tiny_stripes(16, 0), cfg);
    std::size_t i = 0;
    for (const auto& p : m.parameters()) EXPECT_EQ(p->value, before[i++]) << p->name;
  }
}

TEST(Schedule, CosineEndpoints) {
  EXPECT_EQ(scheduled_lr(Schedule::constant, 0.1, 7, 10), 0.1);
  EXPECT_EQ(scheduled_lr(Schedule::cosine, 0.1, 0, 10), 0.1);
  EXPECT_NEAR(scheduled_lr(Schedule::cosine, 0.1, 5, 10), 0.05, 1e-15);
  EXPECT_NEAR(scheduled_lr(Schedule::cosine, 0.1, 10, 10), 0.0, 1e-15);
  EXPECT_THROW(parse_schedule("step"), ConfigError);
}

TEST(Clip, ScalesToMaxNormAndReportsOriginal) {
  GradientMap g{{"a", Tensor({2}, std::vector<double>{3.0, 4.0})}, {"b", Tensor({1}, std::vector<double>{0.0})}};
  EXPECT_EQ(global_grad_norm(g), 5.0);
  EXPECT_EQ(clip_grad_norm(g, 1.0), 5.0);
  EXPECT_NEAR(global_grad_norm(g), 1.0, 1e-15);
  EXPECT_EQ(clip_grad_norm(g, 10.0), global_grad_norm(g));
}

TEST(Loss, UniformLogitsTenClasses) {
  const std::vector<std::size_t> labels{0, 3, 9};
  EXPECT_NEAR(cross_entropy_value(Tensor({3, 10}, 0.7), labels), std::log(10.0), 1e-15);
  EXPECT_NEAR(std::log(10.0), 2.3026, 1e-4);
}

TEST(Train, SingleSampleOverfit) {
  const Dataset one = tiny_stripes(2, 4).subset(0, 1);
  for (MixerKind kind : kAllMixerKinds) {
    Model m(toy_model(kind, 64), 0);
    TrainConfig cfg;
    cfg.steps = 200;
    cfg.batch_size = 1;
    const RunLog log = train(m, one, cfg);
    EXPECT_LT(log.final_loss, 1e-3) << to_string(kind);
  }
}

TEST(Train, DeterministicRunLog) {
  const Dataset d = tiny_stripes(40, 1);
  TrainConfig cfg;
  cfg.steps = 12;
  cfg.batch_size = 8;
  cfg.seed = 9;
  cfg.eval_every = 4;
  auto run = [&](std::uint64_t seed) {
    Model m(toy_model(MixerKind::cska), 2);
    TrainConfig c = cfg;
    c.seed = seed;
    return train(m, d, c, &d).to_csv();
  };
  const std::string a = run(9);
  EXPECT_EQ(a, run(9));
  EXPECT_NE(a, run(10));
  EXPECT_EQ(a.substr(0, a.find('\n')), "step,loss,eval_acc");
}

TEST(Train, RunLogStepsIncrease) {
  Model m(toy_model(MixerKind::sepconv), 0);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 3;
  const RunLog log = train(m, tiny_stripes(10, 0), cfg);
  ASSERT_EQ(log.rows.size(), 8u);
  for (std::size_t i = 0; i < log.rows.size(); ++i) EXPECT_EQ(log.rows[i].step, i + 1);
  EXPECT_EQ(log.to_csv().substr(0, 10), "step,loss\n");
}

TEST(Train, NonFiniteLossAbortsWithDiagnostics) {
  Model m(toy_model(MixerKind::ska), 0);
  m.parameters().get("head.bias").value[0] = std::nan("");
  TrainConfig cfg;
  cfg.steps = 3;
  cfg.batch_size = 2;
  try {
    train(m, tiny_stripes(8, 0), cfg);
    FAIL();
  } catch (const NumericalError& e) {
    const std::string msg = e.what();
    for (const char* key : {"step 1", "lr", "grad-norm"}) EXPECT_NE(msg.find(key), std::string::npos) << msg;
  }
}

TEST(Train, ConfigValidation) {
  TrainConfig cfg;
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.lr = -1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.steps = 0;
  cfg.epochs = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Evaluate, OneHotOracleIsPerfect) {
  const Dataset d = tiny_stripes(50, 0);
  std::size_t cursor = 0;
  const auto one_hot = [&](const Tensor& images) {
    Tensor out({images.dim(0), 2}, 0.0);
    for (std::size_t i = 0; i < images.dim(0); ++i) out.at({i, d.labels[cursor++]}) = 1.0;
    return out;
  };
  EXPECT_EQ(evaluate(one_hot, d, 7).accuracy, 1.0);
}

TEST(Evaluate, RandomLogitsNearHalf) {
  Dataset d;
  d.images = Tensor({10000, 1, 1, 1}, 0.0);
  for (std::size_t i = 0; i < 10000; ++i) d.labels.push_back(i % 2);
  Rng rng(77);
  const auto random = [&](const Tensor& images) { return rng_normal(rng, {images.dim(0), 2}); };
  EXPECT_NEAR(evaluate(random, d).accuracy, 0.5, 0.02);
}

TEST(Evaluate, TiesGoToLowestIndex) {
  EXPECT_EQ(predict(Tensor::matrix({{1.0, 1.0, 0.5}, {0.0, 2.0, 2.0}})), (std::vector<std::size_t>{0, 1}));
  Dataset d;
  d.images = Tensor({2, 1, 1, 1}, 0.0);
  d.labels = {0, 1};
  const auto flat = [](const Tensor& images) { return Tensor({images.dim(0), 2}, 0.0); };
  const EvalResult r = evaluate(flat, d);
  EXPECT_EQ(r.accuracy, 0.5);
  EXPECT_NEAR(r.mean_loss, std::log(2.0), 1e-15);
}

TEST(Evaluate, EmptyDatasetIsAnError) {
  Dataset empty;
  empty.images = Tensor();
  EXPECT_THROW(evaluate([](const Tensor& t) { return t; }, empty), ConfigError);
}
