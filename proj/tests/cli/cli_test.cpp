// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "helpers.hpp"
#include "ska/former.hpp"
#include "ska/idx.hpp"
#include "ska_cli/cli.hpp"
#include "ska_cli/config.hpp"
#include "ska_cli/pgm.hpp"

using namespace ska;
using ska_test::TempDir;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result ska_run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string config_path(const std::string& name) { return std::string(SKA_SOURCE_DIR) + "/configs/" + name; }

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& l : lines(text)) {
    std::vector<std::string> cells;
    std::stringstream s(l);
    for (std::string c; std::getline(s, c, ',');) cells.push_back(c);
    rows.push_back(cells);
  }
  return rows;
}

const std::vector<std::string> kQuick{"--set", "train.steps=20", "--set", "data.train_size=200", "--set",
                                      "data.test_size=100"};

std::vector<std::string> with(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

TEST(CliConfig, DefaultsRoundTrip) {
  const cli::RunConfig c = cli::default_run_config();
  const cli::RunConfig back = cli::RunConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_EQ(back.train.steps, 3000u);
}

TEST(CliConfig, OverridesAreTypeChecked) {
  const std::string path = config_path("toy_ska.cfg");
  const std::vector<std::string> ok{"model.stages.0.kind=cska", "train.lr=0.01", "train.lr=1", "model.pos_embed=false",
                                    "data.seed=7", "model.stages[0].heads=4"};
  const cli::RunConfig c = cli::load_run_config(path, ok);
  EXPECT_EQ(c.model.stages[0].kind, MixerKind::cska);
  EXPECT_EQ(c.train.lr, 1.0);
  EXPECT_FALSE(c.model.pos_embed);
  EXPECT_EQ(c.data.seed, 7u);
  EXPECT_EQ(c.model.stages[0].heads, 4u);
  for (std::string bad : {"train.steps=abc", "train.steps=1.5", "model.pos_embed=1", "train.nope=1", "nope",
                          "model.stages.3.kind=ska", "model.stages[3].kind=ska", "model.activation=swish", "train.optimizer=lamb"}) {
    const std::vector<std::string> o{bad};
    EXPECT_THROW(cli::load_run_config(path, o), ConfigError) << bad;
  }
}

TEST(CliConfig, UnknownKeysInFileRejected) {
  TempDir dir;
  std::ofstream(dir.file("c.cfg")) << R"({"train": {"lr": 0.1, "momentun": 0.5}})";
  EXPECT_THROW(cli::load_run_config(dir.file("c.cfg")), ConfigError);
  std::ofstream(dir.file("d.cfg")) << R"({"trainer": {}})";
  EXPECT_THROW(cli::load_run_config(dir.file("d.cfg")), ConfigError);
  std::ofstream(dir.file("e.cfg")) << "{ not json";
  EXPECT_THROW(cli::load_run_config(dir.file("e.cfg")), ConfigError);
}

TEST(CliTrain, TenStepsAndDeterministic) {
  TempDir dir;
  const auto base = std::vector<std::string>{"train", "--config", config_path("toy_ska.cfg"), "--set", "train.steps=10"};
  const Result a = ska_run(with(base, {"--out", dir.file("a")}));
  ASSERT_EQ(a.code, 0) << a.err;
  const Result b = ska_run(with(base, {"--out", dir.file("b")}));
  ASSERT_EQ(b.code, 0) << b.err;
  const std::string csv = read_file(dir.file("a/runlog.csv"));
  EXPECT_EQ(csv, read_file(dir.file("b/runlog.csv")));
  const auto rows = lines(csv);
  ASSERT_EQ(rows.size(), 11u);
  EXPECT_EQ(rows[0], "step,loss,eval_acc");
  EXPECT_EQ(rows[10].substr(0, 3), "10,");
  std::set<std::string> listed;
  for (const auto& l : lines(read_file(dir.file("a/manifest.txt")))) listed.insert(l.substr(0, l.find('\t')));
  EXPECT_EQ(listed, (std::set<std::string>{"runlog.csv", "model.ckpt", "config.json", "metrics.json"}));
  const cli::RunConfig echoed = cli::load_run_config(dir.file("a/config.json"));
  EXPECT_EQ(echoed.train.steps, 10u);
  const auto model = model_from_checkpoint(dir.file("a/model.ckpt"));
  EXPECT_EQ(read_checkpoint(dir.file("a/model.ckpt")).step, 10u);
  EXPECT_EQ(model->config().to_json(), echoed.model.to_json());
}

TEST(CliTrain, SeedFlagChangesRun) {
  TempDir dir;
  const auto base = with({"train", "--config", config_path("toy_cska.cfg")}, kQuick);
  ASSERT_EQ(ska_run(with(base, {"--out", dir.file("a")})).code, 0);
  ASSERT_EQ(ska_run(with(base, {"--out", dir.file("b"), "--seed", "5"})).code, 0);
  EXPECT_NE(read_file(dir.file("a/runlog.csv")), read_file(dir.file("b/runlog.csv")));
}

TEST(CliTrain, MissingDatasetExitsTwoNamingPath) {
  TempDir dir;
  const Result r = ska_run({"train", "--config", config_path("toy_ska.cfg"), "--set", "data.source=idx", "--set",
                            "data.train_images=" + dir.file("absent-images.idx"), "--set",
                            "data.train_labels=" + dir.file("absent-labels.idx"), "--out", dir.file("o")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("absent-images.idx"), std::string::npos) << r.err;
}

TEST(CliTrain, IdxSource) {
  TempDir dir;
  const Dataset d = synth_dataset(SynthKind::two_gaussians_patches, 40, 8, 0);
  Tensor images({40, 8, 8});
  for (std::size_t i = 0; i < images.numel(); ++i) images[i] = std::clamp(d.images[i] * 0.25 + 0.5, 0.0, 1.0);
  write_idx_images(dir.file("img"), images);
  write_idx_labels(dir.file("lab"), d.labels);
  const Result r = ska_run({"train", "--config", config_path("toy_mhsa.cfg"), "--set", "data.source=idx", "--set",
                            "data.train_images=" + dir.file("img"), "--set", "data.train_labels=" + dir.file("lab"),
                            "--set", "train.steps=5", "--out", dir.file("o")});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(lines(read_file(dir.file("o/runlog.csv"))).front(), "step,loss");
}

TEST(CliTrain, UnknownFlagRejected) {
  const Result r = ska_run({"train", "--out", "x", "--stepz", "3"});
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(ska_run({}).code, 2);
  EXPECT_EQ(ska_run({"--help"}).code, 0);
}

TEST(CliGradcheck, OneSectionAllPass) {
  const Result r = ska_run({"gradcheck", "--mixer", "ska", "--N", "16", "--D", "32"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = csv_rows(r.out);
  ASSERT_GT(rows.size(), 1u);
  EXPECT_EQ(r.out.substr(0, r.out.find('\n')), "mixer,N,D,H,seed,param,max_rel_error,status");
  std::set<std::string> heads;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    ASSERT_EQ(rows[i].size(), 8u);
    EXPECT_EQ(rows[i][0], "ska");
    EXPECT_EQ(rows[i][1], "16");
    EXPECT_EQ(rows[i][2], "32");
    EXPECT_EQ(rows[i][7], "PASS");
    heads.insert(rows[i][3]);
  }
  EXPECT_EQ(heads, (std::set<std::string>{"1", "2", "4"}));
}

TEST(CliGradcheck, CorruptedSoftmaxBackwardFails) {
  const Result r = ska_run({"gradcheck", "--mixer", "mhsa", "--N", "4", "--D", "8", "--H", "2", "--seed", "0",
                            "--corrupt-softmax-backward"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find(",FAIL"), std::string::npos);
  EXPECT_FALSE(testing_hooks::corrupt_softmax_backward());
  const Result clean = ska_run({"gradcheck", "--mixer", "mhsa", "--N", "4", "--D", "8", "--H", "2", "--seed", "0"});
  EXPECT_EQ(clean.code, 0);
}

TEST(CliGradcheck, IndivisibleHeadsIsConfigError) {
  EXPECT_EQ(ska_run({"gradcheck", "--mixer", "mhsa", "--D", "8", "--H", "3"}).code, 2);
}

TEST(CliCount, BiasFreeMatchesClosedForm) {
  const Result r = ska_run({"count", "--mixer", "ska", "--N", "196", "--D", "384", "--bias-free"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("match=true"), std::string::npos);
  const std::uint64_t n = 196, d = 384;
  EXPECT_NE(r.out.find("flops_counted=" + std::to_string(n * (2 * n * d + 3 * d * d))), std::string::npos);
  EXPECT_NE(r.out.find("params_counted=" + std::to_string(n * d + 3 * d * d)), std::string::npos);
}

TEST(CliCount, KernelFiveWarns) {
  const Result r = ska_run({"count", "--mixer", "sepconv", "--kernel", "5"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.err.find("closed form unsupported"), std::string::npos);
  EXPECT_NE(r.out.find("flops_counted="), std::string::npos);
  EXPECT_EQ(r.out.find("flops_closed="), std::string::npos);
}

TEST(CliCount, TwoXConvention) {
  const Result r = ska_run({"count", "--mixer", "mhsa", "--N", "16", "--D", "8", "--bias-free", "--flops-convention", "2x"});
  EXPECT_NE(r.out.find("flops_counted=16384"), std::string::npos) << r.out;
  EXPECT_EQ(ska_run({"count", "--mixer", "mhsa", "--flops-convention", "4x"}).code, 2);
}

TEST(CliCurves, RowAt256) {
  const Result r = ska_run({"curves", "--mode", "vary_N", "--fixed", "256", "--max", "1024"});
  ASSERT_EQ(r.code, 0);
  const auto rows = lines(r.out);
  ASSERT_EQ(rows.size(), 1025u);
  EXPECT_EQ(rows[256], "256,256,384,320,277.333");
  EXPECT_EQ(ska_run({"curves", "--mode", "vary_N", "--min", "0"}).code, 2);
}

TEST(CliAttnmap, ZeroKeyGivesUniformMaps) {
  TempDir dir;
  ModelConfig mc = cli::default_run_config().model;
  mc.stages = {StageConfig{MixerKind::sepconv, 1, 16, 1, 1}, StageConfig{MixerKind::ska, 1, 16, 2, 1}};
  Model model(mc, 0);
  for (auto& p : model.parameters()) {
    if (p->name.ends_with(".key")) p->value = Tensor::zeros(p->value.shape());
  }
  save_checkpoint(dir.file("m.ckpt"), model);
  cli::write_pgm(dir.file("in.pgm"), ska_test::randn({8, 8}, 1));
  const Result r = ska_run({"attnmap", "--checkpoint", dir.file("m.ckpt"), "--image", dir.file("in.pgm"), "--out",
                            dir.file("maps")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.err.find("layer 0 (sepconv)"), std::string::npos) << r.err;
  EXPECT_FALSE(std::filesystem::exists(dir.file("maps/layer0_attn.csv")));
  const Tensor pgm = cli::read_pgm(dir.file("maps/layer1_attn.pgm"));
  EXPECT_EQ(pgm.shape(), (Shape{1, 1, 16, 16}));
  for (double v : pgm.data()) EXPECT_EQ(v, pgm[0]);
  for (const auto& row : csv_rows(read_file(dir.file("maps/layer1_attn.csv")))) {
    ASSERT_EQ(row.size(), 16u);
    for (const auto& cell : row) EXPECT_NEAR(std::stod(cell), 1.0 / 16.0, 1e-9);
  }
  const Result only = ska_run({"attnmap", "--checkpoint", dir.file("m.ckpt"), "--image", dir.file("in.pgm"), "--layer",
                               "0", "--out", dir.file("sep")});
  EXPECT_EQ(only.code, 0);
  EXPECT_NE(only.err.find("skipped"), std::string::npos);
}

TEST(CliAttnmap, TrainedRowsSumToOne) {
  TempDir dir;
  ASSERT_EQ(ska_run(with({"train", "--config", config_path("toy_cska.cfg"), "--out", dir.file("t")}, kQuick)).code, 0);
  const Dataset d = synth_dataset(SynthKind::stripe_orientation, 4, 8, 3);
  Tensor images({4, 8, 8});
  for (std::size_t i = 0; i < images.numel(); ++i) images[i] = std::clamp(d.images[i] * 0.25 + 0.5, 0.0, 1.0);
  write_idx_images(dir.file("img.idx"), images);
  const Result r = ska_run({"attnmap", "--checkpoint", dir.file("t/model.ckpt"), "--idx", dir.file("img.idx"),
                            "--index", "2", "--out", dir.file("maps")});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* name : {"maps/layer0_attn.csv", "maps/layer1_attn.csv"}) {
    for (const auto& row : csv_rows(read_file(dir.file(name)))) {
      double s = 0.0;
      for (const auto& cell : row) s += std::stod(cell);
      EXPECT_NEAR(s, 1.0, 1e-6);
    }
  }
  const std::string manifest = read_file(dir.file("maps/manifest.txt"));
  EXPECT_NE(manifest.find("layer1_attn.pgm"), std::string::npos);
  EXPECT_EQ(ska_run({"attnmap", "--checkpoint", dir.file("t/model.ckpt"), "--idx", dir.file("img.idx"), "--index", "9",
                     "--out", dir.file("bad")})
                .code,
            2);
}

TEST(CliSweep, HeadGrid) {
  for (const char* kind : {"mhsa", "ska"}) {
    const Result r = ska_run(with({"sweep", "--config", config_path("toy_sweep.cfg"), "--set",
                                   std::string("model.stages.0.kind=") + kind, "--heads", "1,2,4,8", "--seed", "3"},
                                  {"--set", "train.steps=4", "--set", "data.train_size=64", "--set", "data.test_size=32"}));
    ASSERT_EQ(r.code, 0) << r.err;
    const auto rows = csv_rows(r.out);
    ASSERT_EQ(rows.size(), 5u);
    EXPECT_EQ(rows[0], (std::vector<std::string>{"heads", "params", "flops", "accuracy", "seed"}));
    for (std::size_t i = 1; i < rows.size(); ++i) {
      EXPECT_EQ(rows[i][1], rows[1][1]) << kind;
      EXPECT_EQ(rows[i][4], std::to_string(3 + i - 1));
    }
  }
  EXPECT_EQ(ska_run({"sweep", "--config", config_path("toy_sweep.cfg"), "--heads", "3"}).code, 2);
}

TEST(CliAblate, EightCellsWithFlags) {
  const auto args = with({"ablate", "--config", config_path("toy_ablate.cfg")},
                         {"--set", "train.steps=6", "--set", "data.train_size=64", "--set", "data.test_size=32"});
  const Result a = ska_run(args);
  ASSERT_EQ(a.code, 0) << a.err;
  const auto rows = csv_rows(a.out);
  ASSERT_EQ(rows.size(), 9u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"activation", "scaled", "normalized", "accuracy", "max_row_sum_dev", "seed"}));
  for (std::size_t i = 1; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i][2], rows[i][0] == "softmax" ? "true" : "false");
    const double dev = std::stod(rows[i][4]);
    if (rows[i][0] == "softmax") {
      EXPECT_LT(dev, 1e-12);
    } else {
      EXPECT_GT(dev, 1e-3);
    }
  }
  EXPECT_EQ(ska_run(args).out, a.out);
  const Result bad = ska_run({"ablate", "--set", "model.activation=swish"});
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.err.find("starrelu"), std::string::npos) << bad.err;
}
