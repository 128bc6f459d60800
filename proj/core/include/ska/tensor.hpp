// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ska/errors.hpp"

namespace ska {

class Rng;

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major float64 array. A default-constructed tensor is "null"
/// (rank 0, no elements); every constructed tensor has positive extents.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0); }
  static Tensor scalar(double value) { return Tensor({1}, value); }
  /// 2-D tensor from nested rows, e.g. `Tensor::matrix({{1, 2}, {3, 4}})`.
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor identity(std::size_t n);

  bool empty() const noexcept { return data_.empty(); }
  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t numel() const noexcept { return data_.size(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::vector<double>& storage() noexcept { return data_; }
  const std::vector<double>& storage() const noexcept { return data_; }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }
  double& at(std::initializer_list<std::size_t> index);
  double at(std::initializer_list<std::size_t> index) const;
  /// Value of a single-element tensor.
  double item() const;

  Tensor reshaped(Shape shape) const;

  bool has_grad() const noexcept { return grad_.has_value(); }
  /// Gradient slot; created (zero-filled) on first access.
  std::vector<double>& grad();
  const std::vector<double>& grad() const;
  void zero_grad();
  void drop_grad() noexcept { grad_.reset(); }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  std::size_t offset(std::initializer_list<std::size_t> index) const;

  Shape shape_;
  std::vector<double> data_;
  std::optional<std::vector<double>> grad_;
};

// ---------------------------------------------------------------------------
// Finite-value checking. On by default; training loops switch it off and
// check the loss instead.

bool finite_checks_enabled() noexcept;
void set_finite_checks(bool enabled) noexcept;

class FiniteCheckScope {
 public:
  explicit FiniteCheckScope(bool enabled) noexcept;
  ~FiniteCheckScope();
  FiniteCheckScope(const FiniteCheckScope&) = delete;
  FiniteCheckScope& operator=(const FiniteCheckScope&) = delete;

 private:
  bool previous_;
};

/// Throws NumericalError naming `what` if any element is NaN or Inf.
void require_finite(const Tensor& t, const char* what);

// ---------------------------------------------------------------------------
// Primitive operations. All return fresh tensors.

/// Batched contraction over the last axis of `a` and the second-to-last of
/// `b`. Leading (batch) extents are right-aligned and must be equal or 1.
Tensor matmul(const Tensor& a, const Tensor& b);

/// Softmax over the last axis with max subtraction.
Tensor softmax_rows(const Tensor& x);

struct Conv2dParams {
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t groups = 1;
};

/// x: [B, C_in, H, W], weight: [C_out, C_in/G, kh, kw], bias: [C_out] or null.
Tensor conv2d_grouped(const Tensor& x, const Tensor& weight, const Tensor* bias,
                      const Conv2dParams& p);
/// Gradient of conv2d_grouped w.r.t. its input.
Tensor conv2d_grouped_grad_input(const Tensor& grad_out, const Tensor& weight,
                                 const Shape& input_shape, const Conv2dParams& p);
/// Gradient of conv2d_grouped w.r.t. its weight.
Tensor conv2d_grouped_grad_weight(const Tensor& grad_out, const Tensor& x,
                                  const Shape& weight_shape, const Conv2dParams& p);
std::size_t conv_output_extent(std::size_t in, std::size_t kernel, const Conv2dParams& p);

Tensor reshape(const Tensor& a, Shape shape);
/// General axis permutation: out.shape[i] = a.shape[perm[i]].
Tensor permute(const Tensor& a, std::span<const std::size_t> perm);
Tensor permute(const Tensor& a, std::initializer_list<std::size_t> perm);
/// Swap the last two axes.
Tensor transpose(const Tensor& a);
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor concat_last(std::span<const Tensor> parts);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
/// a + bias broadcast along the last axis.
Tensor add_last(const Tensor& a, const Tensor& bias);

double sum(const Tensor& a);
double mean(const Tensor& a);
/// Mean along `axis`; the axis is removed (a rank-1 input gives shape {1}).
Tensor mean(const Tensor& a, std::size_t axis);
/// Sum `a` down to `shape` by reducing right-aligned broadcast axes.
Tensor sum_to_shape(const Tensor& a, const Shape& shape);

double max_abs_diff(const Tensor& a, const Tensor& b);

/// I.i.d. standard normal samples.
Tensor rng_normal(Rng& rng, Shape shape);
/// Uniform samples in [lo, hi).
Tensor rng_uniform(Rng& rng, Shape shape, double lo, double hi);

}  // namespace ska
