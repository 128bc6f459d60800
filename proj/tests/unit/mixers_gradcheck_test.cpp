// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <iostream>

#include "helpers.hpp"

using namespace ska;
using ska_test::MixerFixture;

TEST(MixerGradCheck, EveryKindSmallConfig) {
  for (MixerKind kind : kAllMixerKinds) {
    MixerFixture f(ska_test::mixer_cfg(kind, 4, 8, 2), 0);
    const auto report = ska_test::check_mixer(f, 2, 0);
    for (const auto& p : report.params) {
      EXPECT_TRUE(p.pass) << to_string(kind) << " " << p.name << " " << p.max_rel_error;
    }
  }
}

TEST(MixerGradCheck, FullGrid) {
  double worst = 0;
  for (MixerKind kind : kAllMixerKinds)
    for (std::size_t n : {4, 16})
      for (std::size_t d : {8, 32})
        for (std::size_t h : {1, 2, 4})
          for (std::uint64_t seed : {0, 1, 2}) {
            MixerFixture f(ska_test::mixer_cfg(kind, n, d, h), seed);
            const auto report = ska_test::check_mixer(f, 2, seed, precise_grad_check_options());
            worst = std::max(worst, report.max_rel_error());
            for (const auto& p : report.params) {
              EXPECT_TRUE(p.pass) << to_string(kind) << " N=" << n << " D=" << d << " H=" << h << " seed=" << seed
                                  << " " << p.name << " " << p.max_rel_error;
            }
          }
  std::cout << "worst " << worst << "\n";
}
