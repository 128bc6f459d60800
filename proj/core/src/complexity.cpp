// SPDX-License-Identifier: Apache-2.0
#include "ska/complexity.hpp"

#include <cctype>
#include <numeric>

#include <fmt/format.h>

namespace ska {

Rational Rational::of(std::uint64_t num, std::uint64_t den) {
  if (den == 0) throw ConfigError("rational with zero denominator");
  const std::uint64_t g = std::gcd(num, den);
  return g == 0 ? Rational{0, 1} : Rational{num / g, den / g};
}

std::string to_string(const Rational& r) {
  return r.den == 1 ? std::to_string(r.num) : std::to_string(r.num) + "/" + std::to_string(r.den);
}

namespace {

Rational add(Rational a, Rational b) {
  const std::uint64_t l = std::lcm(a.den, b.den);
  return Rational::of(a.num * (l / a.den) + b.num * (l / b.den), l);
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

ClosedForm closed_form(MixerKind kind, std::uint64_t n, std::uint64_t d, std::uint64_t kernel) {
  if (n == 0 || d == 0) throw ConfigError("closed form needs N >= 1 and D >= 1");
  if (kernel != 3 && (kind == MixerKind::cska || kind == MixerKind::sepconv)) {
    throw ConfigError("closed form for " + std::string(to_string(kind)) + " is only defined for kernel 3 (got " +
                      std::to_string(kernel) + "); use the instrumented count");
  }
  ClosedForm f{};
  switch (kind) {
    case MixerKind::sepconv:
      f.flops = n * (9 * d + 2 * d * d);
      f.params = 9 * d + 2 * d * d;
      break;
    case MixerKind::mhsa:
      f.flops = n * (2 * n * d + 4 * d * d);
      f.params = 4 * d * d;
      break;
    case MixerKind::ska:
      f.flops = n * (2 * n * d + 3 * d * d);
      f.params = n * d + 3 * d * d;
      break;
    case MixerKind::cska:
      f.flops = n * (10 * n * d + 3 * d * d);
      f.params = 9 * n * d + 3 * d * d;
      break;
  }
  f.ratio = Rational::of(f.flops, f.params);
  return f;
}

Rational ratio_expression(MixerKind kind, std::uint64_t n, std::uint64_t d) {
  const Rational base{n, 1};
  switch (kind) {
    case MixerKind::sepconv:
      return base;
    case MixerKind::mhsa:
      return add(base, Rational::of(n * n, 2 * d));
    case MixerKind::ska:
      return add(base, Rational::of(n * n, n + 3 * d));
    case MixerKind::cska:
      return add(base, Rational::of(n * n, 9 * n + 3 * d));
  }
  return base;
}

ComplexityReport count_ops(const MixerConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (cfg.tokens == 0) throw ConfigError("operation counting needs a token count N >= 1");
  ComplexityReport r;
  r.kind = cfg.kind;
  r.tokens = cfg.tokens;
  r.dim = cfg.dim;
  r.heads = cfg.heads;
  r.kernel = cfg.kernel;
  r.cls_token = cfg.cls_token;
  r.bias_free = !cfg.qkv_bias && !cfg.proj_bias;

  ParameterStore store;
  Rng rng(seed);
  Mixer mixer(cfg, store, "mixer", rng);
  const std::size_t n = cfg.total_tokens();
  Tape tape;
  Var x = tape.constant(rng_normal(rng, {1, n, cfg.dim}));
  mixer.forward(tape, x);
  r.flops_counted = tape.macs();
  r.params_counted = store.trainable_elements();

  const bool kernel_ok = cfg.kernel == 3 || cfg.kind == MixerKind::mhsa || cfg.kind == MixerKind::ska;
  // StarReLU adds two scalars that the formulas do not cover.
  if (r.bias_free && !cfg.cls_token && kernel_ok && cfg.activation != Activation::starrelu) {
    const ClosedForm f = closed_form(cfg.kind, cfg.tokens, cfg.dim);
    r.flops_closed = f.flops;
    r.params_closed = f.params;
    r.ratio_closed = f.ratio;
  }
  return r;
}

FlopsConvention parse_flops_convention(std::string_view name) {
  const std::string s = lower(name);
  if (s == "macs" || s == "mac" || s == "1x") return FlopsConvention::macs;
  if (s == "2x") return FlopsConvention::two_x;
  throw ConfigError("unknown flops convention '" + std::string(name) + "' (valid: macs, 2x)");
}

ComplexityReport apply_convention(ComplexityReport r, FlopsConvention convention) {
  if (convention == FlopsConvention::macs) return r;
  r.flops_counted *= 2;
  if (r.flops_closed) {
    *r.flops_closed *= 2;
    r.ratio_closed = Rational::of(*r.flops_closed, *r.params_closed);
  }
  return r;
}

CurveMode parse_curve_mode(std::string_view name) {
  const std::string s = lower(name);
  if (s == "vary_n" || s == "n") return CurveMode::vary_n;
  if (s == "vary_d" || s == "d") return CurveMode::vary_d;
  throw ConfigError("unknown curve mode '" + std::string(name) + "' (valid: vary_N, vary_D)");
}

std::vector<CurveRow> emit_curves(CurveMode mode, std::uint64_t fixed, std::uint64_t min, std::uint64_t max,
                                  std::uint64_t step) {
  if (fixed == 0) throw ConfigError("fixed extent must be >= 1");
  if (min == 0 || min > max) throw ConfigError("curve range must satisfy 1 <= min <= max");
  if (step == 0) throw ConfigError("curve step must be >= 1");
  std::vector<CurveRow> rows;
  for (std::uint64_t x = min; x <= max; x += step) {
    const std::uint64_t n = mode == CurveMode::vary_n ? x : fixed;
    const std::uint64_t d = mode == CurveMode::vary_n ? fixed : x;
    rows.push_back({x, closed_form(MixerKind::sepconv, n, d).ratio.value(),
                    closed_form(MixerKind::mhsa, n, d).ratio.value(), closed_form(MixerKind::ska, n, d).ratio.value(),
                    closed_form(MixerKind::cska, n, d).ratio.value()});
  }
  return rows;
}

std::string curves_csv(const std::vector<CurveRow>& rows) {
  std::string out = "x,sepconv,selfattn,ska,cska\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{:.6g},{:.6g},{:.6g},{:.6g}\n", r.x, r.sepconv, r.selfattn, r.ska, r.cska);
  }
  return out;
}

}  // namespace ska
