// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "helpers.hpp"
#include "oracles.hpp"
#include "ska/data.hpp"
#include "ska/idx.hpp"

using namespace ska;
using ska_test::TempDir;

namespace {

// Per-image pixel mean and variance.
std::vector<double> pooled_features(const Dataset& d) {
  const std::size_t per = d.images.numel() / d.size();
  std::vector<double> f;
  for (std::size_t i = 0; i < d.size(); ++i) {
    double s = 0.0, ss = 0.0;
    for (std::size_t j = 0; j < per; ++j) {
      const double v = d.images[i * per + j];
      s += v;
      ss += v * v;
    }
    const double mean = s / static_cast<double>(per);
    f.push_back(mean);
    f.push_back(ss / static_cast<double>(per) - mean * mean);
  }
  return f;
}

double centroid_accuracy(const Dataset& train, const Dataset& test) {
  const auto a = pooled_features(train), b = pooled_features(test);
  return ska_oracle::nearest_centroid_accuracy(a, train.labels, b, test.labels);
}

void put_be32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<unsigned char>(v >> s));
}

void write_bytes(const std::string& path, const std::vector<unsigned char>& bytes) {
  std::ofstream f(path, std::ios::binary);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST(Synth, SameSeedSameData) {
  for (SynthKind kind : {SynthKind::stripe_orientation, SynthKind::two_gaussians_patches}) {
    const Dataset a = synth_dataset(kind, 64, 8, 5), b = synth_dataset(kind, 64, 8, 5), c = synth_dataset(kind, 64, 8, 6);
    EXPECT_EQ(a.images, b.images);
    EXPECT_EQ(a.labels, b.labels);
    EXPECT_NE(a.images, c.images);
    EXPECT_EQ(a.images.shape(), (Shape{64, 1, 8, 8}));
    EXPECT_NO_THROW(a.validate());
  }
}

TEST(Synth, BalancedLabels) {
  const Dataset d = synth_dataset(SynthKind::stripe_orientation, 101, 8, 0);
  std::size_t ones = 0;
  for (auto l : d.labels) ones += l;
  EXPECT_EQ(ones, 50u);
}

TEST(Synth, StripeGlobalMeansMatchAcrossClasses) {
  const Dataset d = synth_dataset(SynthKind::stripe_orientation, 4000, 8, 1);
  const auto means = pooled_means(d);
  double s[2] = {0, 0}, ss[2] = {0, 0};
  std::size_t n[2] = {0, 0};
  for (std::size_t i = 0; i < d.size(); ++i) {
    s[d.labels[i]] += means[i];
    ss[d.labels[i]] += means[i] * means[i];
    ++n[d.labels[i]];
  }
  const double m0 = s[0] / n[0], m1 = s[1] / n[1];
  const double var0 = ss[0] / n[0] - m0 * m0, var1 = ss[1] / n[1] - m1 * m1;
  const double se = std::sqrt(var0 / n[0] + var1 / n[1]);
  EXPECT_LT(std::abs(m0 - m1), 4.0 * se);
}

TEST(Synth, StripeDefeatsPooledCentroids) {
  const Dataset train = synth_dataset(SynthKind::stripe_orientation, 2000, 8, 2);
  const Dataset test = synth_dataset(SynthKind::stripe_orientation, 2000, 8, 3);
  // Binomial sd at n = 2000 is about 0.011.
  EXPECT_NEAR(centroid_accuracy(train, test), 0.5, 0.05);
}

TEST(Synth, GaussianPatchesAreSeparableAfterPooling) {
  const Dataset train = synth_dataset(SynthKind::two_gaussians_patches, 500, 8, 2);
  const Dataset test = synth_dataset(SynthKind::two_gaussians_patches, 500, 8, 3);
  EXPECT_GT(centroid_accuracy(train, test), 0.99);
}

TEST(Synth, InvalidArguments) {
  EXPECT_THROW(synth_dataset(SynthKind::stripe_orientation, 1, 8, 0), ConfigError);
  EXPECT_THROW(synth_dataset(SynthKind::stripe_orientation, 10, 6, 0), ConfigError);
  EXPECT_THROW(parse_synth_kind("spirals"), ConfigError);
  EXPECT_EQ(parse_synth_kind("stripe_orientation"), SynthKind::stripe_orientation);
}

TEST(DatasetOps, GatherAndSubset) {
  const Dataset d = synth_dataset(SynthKind::two_gaussians_patches, 10, 4, 0);
  const std::vector<std::size_t> rows{7, 2};
  const Tensor g = d.gather(rows);
  EXPECT_EQ(g.shape(), (Shape{2, 1, 4, 4}));
  for (std::size_t j = 0; j < 16; ++j) EXPECT_EQ(g[16 + j], d.images[2 * 16 + j]);
  EXPECT_EQ(d.gather_labels(rows), (std::vector<std::size_t>{d.labels[7], d.labels[2]}));
  const Dataset s = d.subset(3, 4);
  EXPECT_EQ(s.size(), 4u);
  EXPECT_EQ(s.labels[0], d.labels[3]);
  EXPECT_THROW(d.subset(8, 4), DimensionError);
  Dataset bad = d;
  bad.labels[0] = 5;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad.labels.pop_back();
  EXPECT_THROW(bad.validate(), DimensionError);
}

TEST(Idx, HandBuiltFixture) {
  TempDir dir;
  std::vector<unsigned char> img, lab;
  put_be32(img, 0x803);
  put_be32(img, 4);
  put_be32(img, 28);
  put_be32(img, 28);
  for (std::size_t i = 0; i < 4 * 28 * 28; ++i) img.push_back(static_cast<unsigned char>((i * 7) % 256));
  put_be32(lab, 0x801);
  put_be32(lab, 4);
  for (unsigned char l : {3, 0, 9, 1}) lab.push_back(l);
  write_bytes(dir.file("img"), img);
  write_bytes(dir.file("lab"), lab);
  const Dataset d = load_idx(dir.file("img"), dir.file("lab"), "fixture");
  EXPECT_EQ(d.images.shape(), (Shape{4, 1, 28, 28}));
  EXPECT_EQ(d.labels, (std::vector<std::size_t>{3, 0, 9, 1}));
  EXPECT_EQ(d.num_classes, 10u);
  EXPECT_EQ(d.split, "fixture");
  EXPECT_EQ(d.images[1], 7.0 / 255.0);
  EXPECT_EQ(d.images[37], (37 * 7 % 256) / 255.0);
  for (double v : d.images.data()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Idx, WriteReadRoundTrip) {
  TempDir dir;
  Tensor images({3, 2, 5});
  for (std::size_t i = 0; i < images.numel(); ++i) images[i] = static_cast<double>(i % 256) / 255.0;
  write_idx_images(dir.file("i"), images);
  const std::vector<std::size_t> labels{1, 0, 1};
  write_idx_labels(dir.file("l"), labels);
  const Tensor back = read_idx_images(dir.file("i"));
  EXPECT_EQ(back.shape(), (Shape{3, 1, 2, 5}));
  for (std::size_t i = 0; i < images.numel(); ++i) EXPECT_EQ(back[i], images[i]);
  EXPECT_EQ(read_idx_labels(dir.file("l")), labels);
}

TEST(Idx, WrongMagicNamed) {
  TempDir dir;
  std::vector<unsigned char> bytes;
  put_be32(bytes, 0x801);
  put_be32(bytes, 0);
  write_bytes(dir.file("x"), bytes);
  try {
    read_idx_images(dir.file("x"));
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("0x00000801"), std::string::npos) << e.what();
  }
}

TEST(Idx, EmptyAndTruncatedFiles) {
  TempDir dir;
  write_bytes(dir.file("empty"), {});
  try {
    read_idx_images(dir.file("empty"));
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("truncated"), std::string::npos) << e.what();
  }
  std::vector<unsigned char> bytes;
  put_be32(bytes, 0x803);
  put_be32(bytes, 2);
  put_be32(bytes, 2);
  put_be32(bytes, 2);
  bytes.push_back(1);
  write_bytes(dir.file("short"), bytes);
  EXPECT_THROW(read_idx_images(dir.file("short")), FormatError);
  EXPECT_THROW(read_idx_images(dir.file("missing")), FormatError);
}

TEST(Idx, CountMismatch) {
  TempDir dir;
  write_idx_images(dir.file("i"), Tensor({2, 2, 2}, 0.5));
  const std::vector<std::size_t> labels{1, 0, 1};
  write_idx_labels(dir.file("l"), labels);
  EXPECT_THROW(load_idx(dir.file("i"), dir.file("l")), FormatError);
}
