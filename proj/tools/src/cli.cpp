// SPDX-License-Identifier: Apache-2.0
#include "ska_cli/cli.hpp"

#include <algorithm>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "ska/complexity.hpp"
#include "ska/idx.hpp"
#include "ska_cli/artifacts.hpp"
#include "ska_cli/commands.hpp"
#include "ska_cli/pgm.hpp"

namespace ska::cli {

namespace {

struct SoftmaxHookGuard {
  explicit SoftmaxHookGuard(bool on) { testing_hooks::set_corrupt_softmax_backward(on); }
  ~SoftmaxHookGuard() { testing_hooks::set_corrupt_softmax_backward(false); }
};

struct RunOptions {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;

  RunConfig load() const {
    RunConfig c = load_run_config(config, sets);
    if (seed) c.train.seed = *seed;
    return c;
  }
};

void add_run_options(CLI::App& sub, RunOptions& o) {
  sub.add_option("--config", o.config, "JSON config file with model/train/data sections")->check(CLI::ExistingFile);
  sub.add_option("--set", o.sets, "Override a config key: dotted.path=value (repeatable)")->take_last()->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  sub.add_option("--seed", o.seed, "Overrides train.seed");
}

// train ----------------------------------------------------------------------

struct TrainOptions {
  RunOptions run;
  std::string out;
};

int cmd_train(const TrainOptions& o, std::ostream& out) {
  const RunConfig cfg = o.run.load();
  const LoadedData data = load_data(cfg.data, cfg.model);
  Model model(cfg.model, cfg.train.seed);
  const RunLog log = train(model, data.train, cfg.train, data.test ? &*data.test : nullptr);
  Artifacts art(o.out);
  log.write_csv(art.path("runlog.csv"));
  save_checkpoint(art.path("model.ckpt"), model, log.rows.size());
  art.write_text("config.json", cfg.to_json() + "\n");
  art.write_text("metrics.json",
                 fmt::format("{{\n  \"steps\": {},\n  \"final_loss\": {:.17g},\n  \"test_accuracy\": {},\n  "
                             "\"params\": {},\n  \"wall_seconds\": {:.3f}\n}}\n",
                             log.rows.size(), log.final_loss,
                             log.final_eval_acc ? fmt::format("{:.6f}", *log.final_eval_acc) : "null",
                             count_parameters(model).total, log.wall_seconds));
  art.finish();
  out << fmt::format("trained {} steps: final loss {:.6g}", log.rows.size(), log.final_loss);
  if (log.final_eval_acc) out << fmt::format(", test accuracy {:.4f}", *log.final_eval_acc);
  out << fmt::format(" ({:.1f} s) -> {}\n", log.wall_seconds, o.out);
  return kExitOk;
}

// gradcheck ------------------------------------------------------------------

struct GradCheckOptionsCli {
  std::vector<std::string> mixers{"all"};
  std::vector<std::size_t> tokens{4, 16};
  std::vector<std::size_t> dims{8, 32};
  std::vector<std::size_t> heads{1, 2, 4};
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::optional<std::uint64_t> seed;
  std::size_t batch = 2;
  double tolerance = 1e-5;
  std::string stencil = "richardson";
  std::optional<double> epsilon;
  bool corrupt = false;
  std::string out;
};

int cmd_gradcheck(const GradCheckOptionsCli& o, std::ostream& out, std::ostream& err) {
  GradCheckGrid grid;
  grid.kinds.clear();
  for (const auto& m : o.mixers) {
    if (m == "all") {
      grid.kinds.assign(std::begin(kAllMixerKinds), std::end(kAllMixerKinds));
    } else {
      grid.kinds.push_back(parse_mixer_kind(m));
    }
  }
  grid.tokens = o.tokens;
  grid.dims = o.dims;
  grid.heads = o.heads;
  grid.seeds = o.seed ? std::vector<std::uint64_t>{*o.seed} : o.seeds;
  grid.batch = o.batch;
  if (o.stencil == "richardson") {
    grid.options = precise_grad_check_options(o.tolerance);
  } else if (o.stencil == "central") {
    grid.options = GradCheckOptions{};
    grid.options.tolerance = o.tolerance;
  } else {
    throw ConfigError("unknown --stencil '" + o.stencil + "' (expected richardson or central)");
  }
  if (o.epsilon) grid.options.epsilon = *o.epsilon;
  for (MixerKind k : grid.kinds)
    for (std::size_t n : grid.tokens)
      for (std::size_t d : grid.dims)
        for (std::size_t h : k == MixerKind::sepconv ? std::vector<std::size_t>{1} : grid.heads) {
          MixerConfig c;
          c.kind = k;
          c.tokens = n;
          c.dim = d;
          c.heads = h;
          c.validate();
        }
  std::vector<GradCheckRow> rows;
  {
    SoftmaxHookGuard hook(o.corrupt);
    rows = run_gradcheck_grid(grid);
  }
  const std::string csv = gradcheck_csv(rows);
  out << csv;
  if (!o.out.empty()) {
    Artifacts art(o.out);
    art.write_text("gradcheck.csv", csv);
    art.finish();
  }
  const auto failing = std::count_if(rows.begin(), rows.end(), [](const auto& r) { return !r.pass; });
  double worst = 0.0;
  for (const auto& r : rows) worst = std::max(worst, r.max_rel_error);
  err << fmt::format("gradcheck: {} parameter rows, {} failing, worst rel. error {:.3e}\n", rows.size(), failing, worst);
  return failing ? kExitNumerical : kExitOk;
}

// count / curves -------------------------------------------------------------

struct CountOptions {
  std::string mixer;
  std::size_t tokens = 196;
  std::size_t dim = 64;
  std::size_t heads = 1;
  std::size_t kernel = 3;
  bool bias_free = false;
  bool cls = false;
  std::string convention = "macs";
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_count(const CountOptions& o, std::ostream& out, std::ostream& err) {
  MixerConfig c;
  c.kind = parse_mixer_kind(o.mixer);
  c.tokens = o.tokens;
  c.dim = o.dim;
  c.heads = c.kind == MixerKind::sepconv ? 1 : o.heads;
  c.kernel = o.kernel;
  c.cls_token = o.cls;
  if (o.bias_free) c = c.bias_free();
  const FlopsConvention conv = parse_flops_convention(o.convention);
  const bool kernel_form = o.kernel == 3 || c.kind == MixerKind::mhsa || c.kind == MixerKind::ska;
  if (!kernel_form) {
    err << fmt::format("warning: closed form unsupported for {} with kernel {} (k=3 only); instrumented values only\n",
                       to_string(c.kind), o.kernel);
  }
  const ComplexityReport r = apply_convention(count_ops(c, o.seed), conv);
  std::string text = fmt::format("mixer={} N={} D={} H={} kernel={} bias_free={} cls={} convention={}\n",
                                 to_string(r.kind), r.tokens, r.dim, r.heads, r.kernel, r.bias_free, r.cls_token,
                                 o.convention);
  text += fmt::format("flops_counted={}\nparams_counted={}\n", r.flops_counted, r.params_counted);
  if (r.comparable()) {
    text += fmt::format("flops_closed={}\nparams_closed={}\nratio_closed={} ({:.6g})\nmatch={}\n", *r.flops_closed,
                        *r.params_closed, to_string(*r.ratio_closed), r.ratio_closed->value(), r.matches());
  } else {
    std::string why = !kernel_form ? "kernel != 3" : r.cls_token ? "CLS token" : "biases present; pass --bias-free";
    if (c.activation == Activation::starrelu) why = "starrelu parameters";
    text += "closed_form=unavailable (" + why + ")\n";
  }
  out << text;
  if (!o.out.empty()) {
    Artifacts art(o.out);
    art.write_text("count.txt", text);
    art.finish();
  }
  return r.comparable() && !r.matches() ? kExitNumerical : kExitOk;
}

struct CurveOptions {
  std::string mode = "vary_N";
  std::uint64_t fixed = 256;
  std::uint64_t min = 1;
  std::uint64_t max = 1024;
  std::uint64_t step = 1;
  std::optional<std::uint64_t> seed;
  std::string out;
};

int cmd_curves(const CurveOptions& o, std::ostream& out) {
  const std::string csv = curves_csv(emit_curves(parse_curve_mode(o.mode), o.fixed, o.min, o.max, o.step));
  out << csv;
  if (!o.out.empty()) {
    Artifacts art(o.out);
    art.write_text("curves_" + o.mode + ".csv", csv);
    art.finish();
  }
  return kExitOk;
}

// attnmap --------------------------------------------------------------------

struct AttnOptions {
  std::string checkpoint;
  std::string image;
  std::string idx;
  std::size_t index = 0;
  std::optional<std::size_t> layer;
  std::optional<std::uint64_t> seed;
  std::string out;
};

int cmd_attnmap(const AttnOptions& o, std::ostream& out, std::ostream& err) {
  if (o.image.empty() == o.idx.empty()) throw ConfigError("attnmap needs exactly one of --image or --idx");
  const auto model = model_from_checkpoint(o.checkpoint);
  const ModelConfig& mc = model->config();
  Tensor image;
  if (!o.image.empty()) {
    image = read_pgm(o.image);
  } else {
    const Tensor all = read_idx_images(o.idx);
    if (o.index >= all.dim(0)) {
      throw ConfigError(fmt::format("--index {} out of range for '{}' ({} images)", o.index, o.idx, all.dim(0)));
    }
    const std::size_t per = all.numel() / all.dim(0);
    image = Tensor({1, all.dim(1), all.dim(2), all.dim(3)});
    for (std::size_t i = 0; i < per; ++i) image[i] = all[o.index * per + i];
  }
  if (image.dim(1) != mc.in_channels || image.dim(2) != mc.height || image.dim(3) != mc.width) {
    throw ConfigError(fmt::format("image {} does not match model input [1, {}, {}, {}]", shape_string(image.shape()),
                                  mc.in_channels, mc.height, mc.width));
  }
  const auto maps = attention_maps(*model, image);
  if (o.layer && *o.layer >= maps.size()) {
    throw ConfigError(fmt::format("--layer {} out of range (model has {} layers)", *o.layer, maps.size()));
  }
  Artifacts art(o.out);
  std::size_t written = 0;
  for (const LayerMap& lm : maps) {
    if (o.layer && lm.layer != *o.layer) continue;
    if (lm.map.numel() == 0) {
      err << fmt::format("notice: layer {} ({}) has no attention map; skipped\n", lm.layer, to_string(lm.kind));
      continue;
    }
    const std::string stem = fmt::format("layer{}_attn", lm.layer);
    art.write_text(stem + ".csv", matrix_csv(lm.map));
    write_pgm(art.path(stem + ".pgm"), lm.map);
    ++written;
  }
  art.finish();
  out << fmt::format("wrote {} attention map(s) -> {}\n", written, o.out);
  return kExitOk;
}

// sweep / ablate -------------------------------------------------------------

struct SweepOptions {
  RunOptions run;
  std::vector<std::size_t> heads{1, 2, 4, 8};
  std::string out;
};

int cmd_sweep(const SweepOptions& o, std::ostream& out, std::ostream& err) {
  const std::string csv = sweep_csv(run_head_sweep(o.run.load(), o.heads, &err));
  out << csv;
  if (!o.out.empty()) {
    Artifacts art(o.out);
    art.write_text("sweep.csv", csv);
    art.finish();
  }
  return kExitOk;
}

struct AblateOptions {
  RunOptions run;
  std::string out;
};

int cmd_ablate(const AblateOptions& o, std::ostream& out, std::ostream& err) {
  const std::string csv = ablation_csv(run_ablation(o.run.load(), &err));
  out << csv;
  if (!o.out.empty()) {
    Artifacts art(o.out);
    art.write_text("ablate.csv", csv);
    art.finish();
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Static key attention toolkit: training, gradient checks, complexity counts and attention maps", "ska"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  TrainOptions train_o;
  auto* train_cmd = app.add_subcommand("train", "Train a model from a config and write run log + checkpoint");
  add_run_options(*train_cmd, train_o.run);
  train_cmd->add_option("--out", train_o.out, "Output directory")->required();

  GradCheckOptionsCli gc;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient check over a mixer grid");
  gc_cmd->add_option("--mixer", gc.mixers, "Mixer kinds (comma list) or 'all'")->delimiter(',');
  gc_cmd->add_option("--N", gc.tokens, "Token counts")->delimiter(',');
  gc_cmd->add_option("--D", gc.dims, "Embedding dims")->delimiter(',');
  gc_cmd->add_option("--H", gc.heads, "Head counts")->delimiter(',');
  gc_cmd->add_option("--seeds", gc.seeds, "Seeds")->delimiter(',');
  gc_cmd->add_option("--seed", gc.seed, "Single seed (replaces --seeds)");
  gc_cmd->add_option("--batch", gc.batch, "Batch size")->check(CLI::PositiveNumber);
  gc_cmd->add_option("--tolerance", gc.tolerance, "Max relative error")->check(CLI::PositiveNumber);
  gc_cmd->add_option("--stencil", gc.stencil, "richardson (default, eps 1e-3) or central (eps 1e-5)");
  gc_cmd->add_option("--epsilon", gc.epsilon, "Finite-difference step")->check(CLI::PositiveNumber);
  gc_cmd->add_flag("--corrupt-softmax-backward", gc.corrupt, "Negative control: break the softmax backward rule");
  gc_cmd->add_option("--out", gc.out, "Also write gradcheck.csv here");

  CountOptions co;
  auto* count_cmd = app.add_subcommand("count", "Instrumented MAC and parameter counts against the closed forms");
  count_cmd->add_option("--mixer", co.mixer, "sepconv | mhsa | ska | cska")->required();
  count_cmd->add_option("--N", co.tokens, "Tokens")->check(CLI::PositiveNumber);
  count_cmd->add_option("--D", co.dim, "Embedding dim")->check(CLI::PositiveNumber);
  count_cmd->add_option("--H", co.heads, "Heads")->check(CLI::PositiveNumber);
  count_cmd->add_option("--kernel", co.kernel, "Kernel size (cska, sepconv)")->check(CLI::PositiveNumber);
  count_cmd->add_flag("--bias-free", co.bias_free, "Drop every bias (required for closed-form comparison)");
  count_cmd->add_flag("--cls", co.cls, "Add a CLS token");
  count_cmd->add_option("--flops-convention", co.convention, "macs (default) or 2x");
  count_cmd->add_option("--seed", co.seed, "Initialisation seed");
  count_cmd->add_option("--out", co.out, "Also write count.txt here");

  CurveOptions cu;
  auto* curves_cmd = app.add_subcommand("curves", "FLOPs/params ratio curves as CSV");
  curves_cmd->add_option("--mode", cu.mode, "vary_N or vary_D");
  curves_cmd->add_option("--fixed", cu.fixed, "Value of the fixed dimension");
  curves_cmd->add_option("--min", cu.min, "First x");
  curves_cmd->add_option("--max", cu.max, "Last x");
  curves_cmd->add_option("--step", cu.step, "x increment");
  curves_cmd->add_option("--seed", cu.seed, "Accepted for uniformity; curves are closed-form");
  curves_cmd->add_option("--out", cu.out, "Also write curves_<mode>.csv here");

  AttnOptions ao;
  auto* attn_cmd = app.add_subcommand("attnmap", "Dump head-averaged attention maps (CSV + PGM) per layer");
  attn_cmd->add_option("--checkpoint", ao.checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
  attn_cmd->add_option("--image", ao.image, "Input image (PGM)");
  attn_cmd->add_option("--idx", ao.idx, "IDX image file (with --index)");
  attn_cmd->add_option("--index", ao.index, "Image index within --idx");
  attn_cmd->add_option("--layer", ao.layer, "Only this layer");
  attn_cmd->add_option("--seed", ao.seed, "Accepted for uniformity; inference is deterministic");
  attn_cmd->add_option("--out", ao.out, "Output directory")->required();

  SweepOptions so;
  auto* sweep_cmd = app.add_subcommand("sweep", "Train the config at several head counts");
  add_run_options(*sweep_cmd, so.run);
  sweep_cmd->add_option("--heads", so.heads, "Head counts")->delimiter(',');
  sweep_cmd->add_option("--out", so.out, "Also write sweep.csv here");

  AblateOptions ab;
  auto* ablate_cmd = app.add_subcommand("ablate", "Activation x scaling grid on the config's task");
  add_run_options(*ablate_cmd, ab.run);
  ablate_cmd->add_option("--out", ab.out, "Also write ablate.csv here");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    if (!app.get_subcommands().empty()) err << "run 'ska " << app.get_subcommands().front()->get_name() << " --help'\n";
    return kExitConfig;
  }

  try {
    if (train_cmd->parsed()) return cmd_train(train_o, out);
    if (gc_cmd->parsed()) return cmd_gradcheck(gc, out, err);
    if (count_cmd->parsed()) return cmd_count(co, out, err);
    if (curves_cmd->parsed()) return cmd_curves(cu, out);
    if (attn_cmd->parsed()) return cmd_attnmap(ao, out, err);
    if (sweep_cmd->parsed()) return cmd_sweep(so, out, err);
    if (ablate_cmd->parsed()) return cmd_ablate(ab, out, err);
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const OracleInvalidError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}

}  // namespace ska::cli
