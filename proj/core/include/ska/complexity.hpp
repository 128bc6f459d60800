// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ska/mixers.hpp"

namespace ska {

/// Non-negative rational kept in lowest terms.
struct Rational {
  std::uint64_t num = 0;
  std::uint64_t den = 1;

  static Rational of(std::uint64_t num, std::uint64_t den);
  double value() const noexcept { return static_cast<double>(num) / static_cast<double>(den); }
  friend bool operator==(const Rational&, const Rational&) = default;
};

std::string to_string(const Rational& r);

/// Costs are multiply-accumulates. Softmax, activations and norms are free.
struct ComplexityReport {
  MixerKind kind = MixerKind::mhsa;
  std::size_t tokens = 0;
  std::size_t dim = 0;
  std::size_t heads = 1;
  std::size_t kernel = 3;
  bool cls_token = false;
  bool bias_free = true;

  /// Empty when no closed form applies (kernel != 3 for cska/sepconv, CLS, or biases).
  std::optional<std::uint64_t> flops_closed;
  std::optional<std::uint64_t> params_closed;
  std::optional<Rational> ratio_closed;

  std::uint64_t flops_counted = 0;
  std::uint64_t params_counted = 0;

  bool comparable() const noexcept { return flops_closed.has_value(); }
  bool matches() const noexcept {
    return comparable() && *flops_closed == flops_counted && *params_closed == params_counted;
  }
};

struct ClosedForm {
  std::uint64_t flops;
  std::uint64_t params;
  Rational ratio;
};

/// Per-mixer formulas for N tokens of width D:
///   sepconv  N(9D + 2D^2)    9D + 2D^2
///   mhsa     N(2ND + 4D^2)   4D^2
///   ska      N(2ND + 3D^2)   ND + 3D^2
///   cska     N(10ND + 3D^2)  9ND + 3D^2
/// Throws ConfigError for k != 3 with cska or sepconv.
ClosedForm closed_form(MixerKind kind, std::uint64_t tokens, std::uint64_t dim, std::uint64_t kernel = 3);

/// The ratio expressions N, N + N^2/(2D), N + N^2/(N + 3D), N + N^2/(9N + 3D)
/// evaluated independently of `closed_form`.
Rational ratio_expression(MixerKind kind, std::uint64_t tokens, std::uint64_t dim);

/// Builds the mixer, runs one instrumented forward pass on a single sample
/// and enumerates its trainable parameters. Closed forms are attached when
/// the configuration is comparable to them.
ComplexityReport count_ops(const MixerConfig& cfg, std::uint64_t seed = 0);

enum class FlopsConvention { macs, two_x };
FlopsConvention parse_flops_convention(std::string_view name);
/// Doubles every FLOP field (and thus the ratio) for `two_x`.
ComplexityReport apply_convention(ComplexityReport report, FlopsConvention convention);

enum class CurveMode { vary_n, vary_d };
CurveMode parse_curve_mode(std::string_view name);

struct CurveRow {
  std::uint64_t x;
  double sepconv;
  double selfattn;
  double ska;
  double cska;
};

/// F/P ratios of every mixer along N (D fixed) or along D (N fixed) for
/// x = min, min + step, ..., <= max. Throws ConfigError unless 1 <= min <= max
/// and step >= 1.
std::vector<CurveRow> emit_curves(CurveMode mode, std::uint64_t fixed, std::uint64_t min, std::uint64_t max,
                                  std::uint64_t step = 1);

/// CSV with header `x,sepconv,selfattn,ska,cska` and 6 significant digits.
std::string curves_csv(const std::vector<CurveRow>& rows);

}  // namespace ska
