// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ska/autodiff.hpp"

namespace ska {

/// Builds the scalar loss on the given tape from the current parameter values.
using LossFn = std::function<Var(Tape&)>;

enum class Stencil {
  /// (f(p + e) - f(p - e)) / (2 e).
  central,
  /// Richardson extrapolation of two central differences:
  /// (8 (f(p + e) - f(p - e)) - (f(p + 2e) - f(p - 2e))) / (12 e).
  /// Truncation error is O(e^4), so a larger e keeps rounding noise low.
  richardson,
};

struct GradCheckOptions {
  Stencil stencil = Stencil::central;
  double epsilon = 1e-5;
  double tolerance = 1e-5;
  /// Parameters with more elements are sub-sampled to this many coordinates.
  std::size_t samples_per_param = 64;
};

struct ParamGradCheck {
  std::string name;
  std::size_t coordinates = 0;
  double max_rel_error = 0.0;
  bool pass = true;
};

struct GradCheckReport {
  std::vector<ParamGradCheck> params;

  bool pass() const noexcept;
  double max_rel_error() const noexcept;
};

/// |a - b| / max(|a|, |b|, 1e-8).
double relative_error(double a, double b) noexcept;

/// Compares reverse-mode gradients of `loss` against finite differences
/// (see Stencil) for every trainable parameter in `params`. Coordinates of large parameters are sampled with an Rng keyed
/// by the parameter name. Parameter values are restored exactly afterwards.
///
/// Throws OracleInvalidError if two evaluations at the same point differ.
/// Options for checks of full mixers and models, whose losses sum many terms:
/// the Richardson stencil at e = 1e-3 keeps the estimate's absolute error
/// near 1e-12 where the two-point rule at 1e-5 sits near 1e-10.
GradCheckOptions precise_grad_check_options(double tolerance = 1e-5);

GradCheckReport grad_check(const LossFn& loss, ParameterStore& params, const GradCheckOptions& opts = {});

}  // namespace ska
