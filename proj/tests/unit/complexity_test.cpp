// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "helpers.hpp"
#include "ska/complexity.hpp"

using namespace ska;
using ska_test::mixer_cfg;

namespace {

// Hand-evaluated closed-form rows.
std::uint64_t flops_oracle(MixerKind kind, std::uint64_t n, std::uint64_t d) {
  switch (kind) {
    case MixerKind::sepconv: return n * (9 * d + 2 * d * d);
    case MixerKind::mhsa: return n * (2 * n * d + 4 * d * d);
    case MixerKind::ska: return n * (2 * n * d + 3 * d * d);
    case MixerKind::cska: return n * (10 * n * d + 3 * d * d);
  }
  return 0;
}

std::uint64_t params_oracle(MixerKind kind, std::uint64_t n, std::uint64_t d) {
  switch (kind) {
    case MixerKind::sepconv: return 9 * d + 2 * d * d;
    case MixerKind::mhsa: return 4 * d * d;
    case MixerKind::ska: return n * d + 3 * d * d;
    case MixerKind::cska: return 9 * n * d + 3 * d * d;
  }
  return 0;
}

MixerConfig bias_free(MixerKind kind, std::size_t n, std::size_t d, std::size_t h) {
  return mixer_cfg(kind, n, d, kind == MixerKind::sepconv ? 1 : h).bias_free();
}

}  // namespace

TEST(ClosedForm, RatiosAtNEqualsD256) {
  EXPECT_EQ(closed_form(MixerKind::mhsa, 256, 256).ratio, Rational::of(384, 1));
  EXPECT_EQ(closed_form(MixerKind::ska, 256, 256).ratio, Rational::of(320, 1));
  EXPECT_EQ(closed_form(MixerKind::cska, 256, 256).ratio, Rational::of(832, 3));
  EXPECT_NEAR(closed_form(MixerKind::cska, 256, 256).ratio.value(), 277.333333333, 1e-6);
  EXPECT_EQ(closed_form(MixerKind::sepconv, 256, 256).ratio, Rational::of(256, 1));
}

TEST(ClosedForm, RatioEqualsExpressionAlgebraically) {
  for (MixerKind kind : kAllMixerKinds)
    for (std::uint64_t n = 1; n <= 300; n += 13)
      for (std::uint64_t d = 1; d <= 300; d += 17) {
        const ClosedForm cf = closed_form(kind, n, d);
        EXPECT_EQ(cf.flops, flops_oracle(kind, n, d));
        EXPECT_EQ(cf.params, params_oracle(kind, n, d));
        EXPECT_EQ(cf.ratio, Rational::of(cf.flops, cf.params));
        EXPECT_EQ(cf.ratio, ratio_expression(kind, n, d)) << to_string(kind) << " " << n << " " << d;
      }
}

TEST(ClosedForm, KernelOtherThanThreeUnsupported) {
  EXPECT_THROW(closed_form(MixerKind::cska, 16, 8, 5), ConfigError);
  EXPECT_THROW(closed_form(MixerKind::sepconv, 16, 8, 1), ConfigError);
  EXPECT_NO_THROW(closed_form(MixerKind::ska, 16, 8, 5));
}

TEST(ClosedForm, SingleToken) {
  for (std::uint64_t d : {1, 8, 64}) EXPECT_EQ(closed_form(MixerKind::mhsa, 1, d).flops, 2 * d + 4 * d * d);
}

TEST(Rational, LowestTerms) {
  EXPECT_EQ(Rational::of(6, 4), (Rational{3, 2}));
  EXPECT_EQ(to_string(Rational::of(832, 3)), "832/3");
  EXPECT_EQ(to_string(Rational::of(8, 2)), "4");
  EXPECT_THROW(Rational::of(1, 0), ConfigError);
}

TEST(CountOps, Examples) {
  EXPECT_EQ(count_ops(bias_free(MixerKind::mhsa, 16, 8, 2)).flops_counted, 8192u);
  EXPECT_EQ(count_ops(bias_free(MixerKind::cska, 16, 8, 2)).flops_counted, 23552u);
  const auto one = count_ops(bias_free(MixerKind::mhsa, 1, 8, 2));
  EXPECT_EQ(one.flops_counted, 2u * 8 + 4u * 64);
  EXPECT_TRUE(one.matches());
}

TEST(CountOps, SmallGridMatchesClosedForms) {
  for (MixerKind kind : kAllMixerKinds)
    for (std::size_t n : {4, 16, 64})
      for (std::size_t d : {8, 64})
        for (std::size_t h : {1, 2, 4}) {
          const auto r = count_ops(bias_free(kind, n, d, h));
          ASSERT_TRUE(r.comparable());
          EXPECT_EQ(r.flops_counted, flops_oracle(kind, n, d)) << to_string(kind) << n << "/" << d << "/" << h;
          EXPECT_EQ(r.params_counted, params_oracle(kind, n, d));
          EXPECT_TRUE(r.matches());
        }
}

TEST(CountOps, ParamsDependOnTokensOnlyForStaticKeys) {
  for (std::size_t d : {8, 64}) {
    const auto p = [&](MixerKind k, std::size_t n) { return count_ops(bias_free(k, n, d, 2)).params_counted; };
    EXPECT_GT(p(MixerKind::ska, 16), p(MixerKind::ska, 4));
    EXPECT_GT(p(MixerKind::cska, 16), p(MixerKind::cska, 4));
    EXPECT_EQ(p(MixerKind::mhsa, 16), p(MixerKind::mhsa, 4));
    EXPECT_EQ(p(MixerKind::sepconv, 16), p(MixerKind::sepconv, 4));
  }
}

TEST(CountOps, IncomparableConfigs) {
  MixerConfig k5 = bias_free(MixerKind::sepconv, 16, 8, 1);
  k5.kernel = 5;
  const auto r = count_ops(k5);
  EXPECT_FALSE(r.comparable());
  EXPECT_EQ(r.params_counted, 25u * 8 + 2 * 64);
  EXPECT_EQ(r.flops_counted, 16u * (25 * 8 + 2 * 64));
  MixerConfig cls = bias_free(MixerKind::ska, 16, 8, 2);
  cls.cls_token = true;
  EXPECT_FALSE(count_ops(cls).comparable());
  EXPECT_FALSE(count_ops(mixer_cfg(MixerKind::ska, 16, 8, 2)).comparable());
  MixerConfig zero = bias_free(MixerKind::mhsa, 0, 8, 2);
  EXPECT_THROW(count_ops(zero), ConfigError);
}

TEST(CountOps, TwoXConvention) {
  const auto r = apply_convention(count_ops(bias_free(MixerKind::ska, 16, 8, 2)), parse_flops_convention("2x"));
  EXPECT_EQ(r.flops_counted, 2 * flops_oracle(MixerKind::ska, 16, 8));
  EXPECT_EQ(*r.flops_closed, r.flops_counted);
  EXPECT_EQ(r.params_counted, params_oracle(MixerKind::ska, 16, 8));
  EXPECT_EQ(*r.ratio_closed, Rational::of(2 * flops_oracle(MixerKind::ska, 16, 8), params_oracle(MixerKind::ska, 16, 8)));
  EXPECT_THROW(parse_flops_convention("3x"), ConfigError);
}

TEST(Curves, RowAt256) {
  const auto rows = emit_curves(CurveMode::vary_n, 256, 1, 1024);
  ASSERT_EQ(rows.size(), 1024u);
  EXPECT_EQ(rows.front().x, 1u);
  const CurveRow& r = rows[255];
  EXPECT_EQ(r.x, 256u);
  EXPECT_NEAR(r.sepconv, 256.0, 1e-9);
  EXPECT_NEAR(r.selfattn, 384.0, 1e-9);
  EXPECT_NEAR(r.ska, 320.0, 1e-9);
  EXPECT_NEAR(r.cska, 832.0 / 3.0, 1e-9);
  const auto d_rows = emit_curves(CurveMode::vary_d, 256, 256, 256);
  ASSERT_EQ(d_rows.size(), 1u);
  EXPECT_NEAR(d_rows[0].cska, 832.0 / 3.0, 1e-9);
}

TEST(Curves, OrderingAndMonotonicity) {
  for (CurveMode mode : {CurveMode::vary_n, CurveMode::vary_d}) {
    const auto rows = emit_curves(mode, 256, 1, 2048, 7);
    for (const CurveRow& r : rows) {
      EXPECT_LE(r.sepconv, r.cska);
      EXPECT_LE(r.cska, r.ska);
      EXPECT_LE(r.ska, r.selfattn);
    }
    if (mode == CurveMode::vary_n) {
      for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_GT(rows[i].selfattn, rows[i - 1].selfattn);
    }
  }
  EXPECT_THROW(emit_curves(CurveMode::vary_n, 256, 0, 10), ConfigError);
  EXPECT_THROW(emit_curves(CurveMode::vary_n, 256, 10, 5), ConfigError);
  EXPECT_THROW(emit_curves(CurveMode::vary_n, 256, 1, 5, 0), ConfigError);
  EXPECT_THROW(parse_curve_mode("vary_H"), ConfigError);
}

TEST(Curves, CsvFormat) {
  const std::string csv = curves_csv(emit_curves(CurveMode::vary_n, 256, 256, 257));
  std::istringstream in(csv);
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_EQ(header, "x,sepconv,selfattn,ska,cska");
  EXPECT_EQ(row, "256,256,384,320,277.333");
}
