// SPDX-License-Identifier: Apache-2.0
#include "ska/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ska {

bool GradCheckReport::pass() const noexcept {
  return std::all_of(params.begin(), params.end(), [](const auto& p) { return p.pass; });
}

double GradCheckReport::max_rel_error() const noexcept {
  double m = 0.0;
  for (const auto& p : params) m = std::max(m, p.max_rel_error);
  return m;
}

double relative_error(double a, double b) noexcept {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

namespace {

double evaluate(const LossFn& loss) {
  Tape tape;
  return loss(tape).value().item();
}

std::vector<std::size_t> sample_coordinates(const Parameter& p, std::size_t samples) {
  const std::size_t n = p.value.numel();
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  if (n <= samples) return all;
  // Partial Fisher-Yates keyed by the parameter name.
  Rng rng(hash_name(p.name));
  for (std::size_t i = 0; i < samples; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(all[i], all[j]);
  }
  all.resize(samples);
  std::sort(all.begin(), all.end());
  return all;
}

double numeric_derivative(const LossFn& loss, Parameter& p, std::size_t coord, const GradCheckOptions& opts) {
  const double original = p.value[coord];
  const double e = opts.epsilon;
  auto at = [&](double offset) {
    p.value[coord] = original + offset;
    try {
      const double v = evaluate(loss);
      p.value[coord] = original;
      return v;
    } catch (...) {
      p.value[coord] = original;
      throw;
    }
  };
  const double d1 = at(e) - at(-e);
  if (opts.stencil == Stencil::central) return d1 / (2.0 * e);
  const double d2 = at(2.0 * e) - at(-2.0 * e);
  return (8.0 * d1 - d2) / (12.0 * e);
}

}  // namespace

GradCheckOptions precise_grad_check_options(double tolerance) {
  GradCheckOptions o;
  o.stencil = Stencil::richardson;
  o.epsilon = 1e-3;
  o.tolerance = tolerance;
  return o;
}

GradCheckReport grad_check(const LossFn& loss, ParameterStore& params, const GradCheckOptions& opts) {
  if (!(opts.epsilon > 0.0) || !(opts.tolerance > 0.0)) throw ConfigError("grad_check needs epsilon, tolerance > 0");
  GradientMap analytic;
  double base = 0.0;
  {
    Tape tape;
    Var l = loss(tape);
    base = l.value().item();
    analytic = tape.backward(l);
  }
  if (const double again = evaluate(loss); again != base) {
    throw OracleInvalidError("loss is not deterministic: " + std::to_string(base) + " vs " + std::to_string(again));
  }

  GradCheckReport report;
  for (auto& holder : params) {
    Parameter& p = *holder;
    if (!p.trainable) continue;
    ParamGradCheck check;
    check.name = p.name;
    const auto it = analytic.find(p.name);
    const Tensor* grad = it == analytic.end() ? nullptr : &it->second;
    for (std::size_t coord : sample_coordinates(p, opts.samples_per_param)) {
      const double numeric = numeric_derivative(loss, p, coord, opts);
      const double exact = grad ? (*grad)[coord] : 0.0;
      check.max_rel_error = std::max(check.max_rel_error, relative_error(exact, numeric));
      ++check.coordinates;
    }
    check.pass = check.max_rel_error < opts.tolerance;
    report.params.push_back(std::move(check));
  }
  return report;
}

}  // namespace ska
