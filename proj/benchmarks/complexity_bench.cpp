// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "ska/complexity.hpp"

namespace {

void closed_form_curves(benchmark::State& state) {
  for (auto _ : state) {
    auto rows = ska::emit_curves(ska::CurveMode::vary_n, 256, 1, 1024);
    benchmark::DoNotOptimize(rows.data());
  }
}
BENCHMARK(closed_form_curves);

void instrumented_count(benchmark::State& state) {
  ska::MixerConfig c;
  c.kind = ska::MixerKind::cska;
  c.tokens = static_cast<std::size_t>(state.range(0));
  c.dim = 64;
  c.bias_free();
  for (auto _ : state) benchmark::DoNotOptimize(ska::count_ops(c));
}
BENCHMARK(instrumented_count)->Arg(16)->Arg(64);

}  // namespace

BENCHMARK_MAIN();
