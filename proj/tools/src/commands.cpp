// SPDX-License-Identifier: Apache-2.0
#include "ska_cli/commands.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include <fmt/format.h>

#include "ska/former.hpp"
#include "ska/train.hpp"

namespace ska::cli {

std::vector<GradCheckRow> run_gradcheck_grid(const GradCheckGrid& grid) {
  std::vector<GradCheckRow> rows;
  for (MixerKind kind : grid.kinds) {
    const std::vector<std::size_t> heads = kind == MixerKind::sepconv ? std::vector<std::size_t>{1} : grid.heads;
    for (std::size_t n : grid.tokens)
      for (std::size_t d : grid.dims)
        for (std::size_t h : heads)
          for (std::uint64_t seed : grid.seeds) {
            MixerConfig cfg;
            cfg.kind = kind;
            cfg.tokens = n;
            cfg.dim = d;
            cfg.heads = h;
            const GradCheckReport report = mixer_grad_check(cfg, seed, grid.batch, grid.options);
            for (const auto& p : report.params) {
              rows.push_back({kind, n, d, h, seed, p.name, p.max_rel_error, p.pass});
            }
          }
  }
  return rows;
}

std::string gradcheck_csv(std::span<const GradCheckRow> rows) {
  std::string out = "mixer,N,D,H,seed,param,max_rel_error,status\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{},{},{},{},{},{:.3e},{}\n", to_string(r.kind), r.tokens, r.dim, r.heads, r.seed, r.param,
                       r.max_rel_error, r.pass ? "PASS" : "FAIL");
  }
  return out;
}

std::uint64_t model_macs_per_image(const Model& model) {
  const ModelConfig& c = model.config();
  Tape tape;
  model.forward(tape, tape.constant(Tensor({1, c.in_channels, c.height, c.width})));
  return tape.macs();
}

namespace {

struct TrainedCell {
  std::unique_ptr<Model> model;
  double accuracy;
};

TrainedCell train_cell(const RunConfig& cfg, const LoadedData& data) {
  auto model = std::make_unique<Model>(cfg.model, cfg.train.seed);
  TrainConfig tc = cfg.train;
  tc.eval_every = 0;
  train(*model, data.train, tc);
  const Dataset& eval = data.test ? *data.test : data.train;
  const double acc = evaluate(*model, eval).accuracy;
  return {std::move(model), acc};
}

}  // namespace

std::vector<SweepRow> run_head_sweep(const RunConfig& base, std::span<const std::size_t> heads, std::ostream* progress) {
  if (heads.empty()) throw ConfigError("sweep needs at least one head count");
  std::vector<RunConfig> cells;
  for (std::size_t i = 0; i < heads.size(); ++i) {
    RunConfig c = base;
    for (auto& s : c.model.stages) {
      if (s.kind != MixerKind::sepconv) s.heads = heads[i];
    }
    c.train.seed = base.train.seed + i;
    try {
      c.validate();
    } catch (const ConfigError& e) {
      throw ConfigError(fmt::format("sweep cell H={}: {}", heads[i], e.what()));
    }
    cells.push_back(std::move(c));
  }
  const LoadedData data = load_data(base.data, base.model);
  std::vector<SweepRow> rows;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    TrainedCell t = train_cell(cells[i], data);
    rows.push_back({heads[i], count_parameters(*t.model).total, model_macs_per_image(*t.model), t.accuracy,
                    cells[i].train.seed});
    if (progress) *progress << fmt::format("sweep H={} accuracy {:.4f}\n", heads[i], t.accuracy);
  }
  return rows;
}

std::string sweep_csv(std::span<const SweepRow> rows) {
  std::string out = "heads,params,flops,accuracy,seed\n";
  for (const auto& r : rows) out += fmt::format("{},{},{},{:.4f},{}\n", r.heads, r.params, r.flops, r.accuracy, r.seed);
  return out;
}

double max_row_sum_deviation(const Model& model, const Tensor& images) {
  Tape tape;
  std::vector<Tensor> maps;
  model.forward(tape, tape.constant(images), &maps);
  double worst = 0.0;
  for (const Tensor& m : maps) {
    if (m.numel() == 0) continue;
    const std::size_t n = m.dim(m.rank() - 1);
    const auto v = m.data();
    for (std::size_t r = 0; r < m.numel() / n; ++r) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += v[r * n + j];
      worst = std::max(worst, std::abs(s - 1.0));
    }
  }
  return worst;
}

std::vector<AblationRow> run_ablation(const RunConfig& base, std::ostream* progress) {
  constexpr Activation kActs[] = {Activation::softmax, Activation::gelu, Activation::relu, Activation::starrelu};
  const LoadedData data = load_data(base.data, base.model);
  const Dataset& eval = data.test ? *data.test : data.train;
  std::vector<std::size_t> probe(std::min<std::size_t>(64, eval.size()));
  for (std::size_t i = 0; i < probe.size(); ++i) probe[i] = i;
  const Tensor probe_images = eval.gather(probe);
  std::vector<AblationRow> rows;
  std::size_t index = 0;
  for (Activation act : kActs) {
    for (bool scaled : {true, false}) {
      RunConfig c = base;
      c.model.activation = act;
      c.model.scaled = scaled;
      c.train.seed = base.train.seed + index++;
      c.validate();
      TrainedCell t = train_cell(c, data);
      rows.push_back({act, scaled, act == Activation::softmax, t.accuracy,
                      max_row_sum_deviation(*t.model, probe_images), c.train.seed});
      if (progress) {
        *progress << fmt::format("ablate {} scaled={} accuracy {:.4f}\n", to_string(act), scaled, t.accuracy);
      }
    }
  }
  return rows;
}

std::string ablation_csv(std::span<const AblationRow> rows) {
  std::string out = "activation,scaled,normalized,accuracy,max_row_sum_dev,seed\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{},{},{:.4f},{:.3e},{}\n", to_string(r.activation), r.scaled, r.normalized, r.accuracy,
                       r.max_row_sum_dev, r.seed);
  }
  return out;
}

std::vector<LayerMap> attention_maps(const Model& model, const Tensor& image) {
  Tape tape;
  std::vector<Tensor> maps;
  model.forward(tape, tape.constant(image), &maps);
  std::vector<LayerMap> out;
  for (std::size_t l = 0; l < maps.size(); ++l) {
    LayerMap lm{l, model.blocks()[l]->config().mixer.kind, Tensor()};
    if (maps[l].numel() > 0) {
      const Tensor& m = maps[l];  // [1, H, N', N']
      const std::size_t h = m.dim(1), n = m.dim(2);
      lm.map = Tensor({n, n});
      for (std::size_t k = 0; k < h; ++k)
        for (std::size_t i = 0; i < n * n; ++i) lm.map[i] += m[k * n * n + i];
      for (double& v : lm.map.data()) v /= static_cast<double>(h);
    }
    out.push_back(std::move(lm));
  }
  return out;
}

std::string matrix_csv(const Tensor& map) {
  std::string out;
  const std::size_t rows = map.dim(0), cols = map.dim(1);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      if (j) out += ',';
      out += fmt::format("{:.9g}", map[i * cols + j]);
    }
    out += '\n';
  }
  return out;
}

}  // namespace ska::cli
