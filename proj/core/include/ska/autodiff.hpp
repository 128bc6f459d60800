// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ska/rng.hpp"
#include "ska/tensor.hpp"

namespace ska {

/// A named, optionally trainable tensor owned by a model or mixer.
struct Parameter {
  std::string name;
  Tensor value;
  bool trainable = true;
};

/// Insertion-ordered parameter table with unique names. Parameter addresses
/// are stable for the lifetime of the store.
class ParameterStore {
 public:
  Parameter& add(std::string name, Tensor value, bool trainable = true);
  Parameter* find(std::string_view name) noexcept;
  const Parameter* find(std::string_view name) const noexcept;
  Parameter& get(std::string_view name);
  const Parameter& get(std::string_view name) const;

  std::size_t size() const noexcept { return items_.size(); }
  bool empty() const noexcept { return items_.empty(); }
  /// Sum of element counts over trainable parameters.
  std::size_t trainable_elements() const noexcept;

  auto begin() noexcept { return items_.begin(); }
  auto end() noexcept { return items_.end(); }
  auto begin() const noexcept { return items_.begin(); }
  auto end() const noexcept { return items_.end(); }

 private:
  std::vector<std::unique_ptr<Parameter>> items_;
  std::unordered_map<std::string, Parameter*> index_;
};

using GradientMap = std::map<std::string, Tensor>;

class Tape;

/// Handle to a value recorded on a tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t dim(std::size_t axis) const { return value().dim(axis); }
  std::size_t rank() const { return value().rank(); }
};

/// Dynamic reverse-mode record. Nodes are appended in execution order, so
/// node ids are a topological order by construction.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  explicit Tape(bool training = false, std::uint64_t seed = 0);
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Leaf whose gradient is tracked but which is not a named parameter.
  Var leaf(Tensor value);
  /// Leaf bound to `p`; repeated calls with the same parameter return the
  /// same node so fan-out gradients accumulate.
  Var param(Parameter& p);

  /// Seeds d(loss)/d(loss) = 1 and propagates to every node. Gradients are
  /// recomputed from scratch on each call.
  GradientMap backward(Var loss);
  /// Gradient of the last backward pass; null tensor if none reached `v`.
  const Tensor& grad(Var v) const;

  bool training() const noexcept { return training_; }
  Rng& rng() noexcept { return rng_; }

  /// Multiply-accumulate count of everything recorded so far.
  std::uint64_t macs() const noexcept { return macs_; }
  void add_macs(std::uint64_t n) noexcept { macs_ += n; }

  std::size_t size() const noexcept { return nodes_.size(); }

  // Op-author interface.
  Var record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward);
  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  const Tensor& grad_at(std::size_t id) const { return grads_.at(id); }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  void accumulate(std::size_t id, const Tensor& g);
  void accumulate(std::size_t id, Tensor&& g);

 private:
  struct Node {
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
  static const Tensor kNull;
  bool training_;
  Rng rng_;
  std::uint64_t macs_ = 0;
};

/// Differentiable operations. Each records a node on the operands' tape.
namespace ad {

Var matmul(Var a, Var b);
/// x W (+ bias): x [..., in], weight [in, out], bias [out].
Var linear(Var x, Var weight, std::optional<Var> bias = std::nullopt);
Var add(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_last(Var a, Var bias);

Var softmax_rows(Var x);
Var relu(Var x);
Var gelu(Var x);
/// scale * relu(x)^2 + bias with one-element `scale` and `bias`.
Var star_relu(Var x, Var scale, Var bias);

Var reshape(Var a, Shape shape);
Var permute(Var a, std::vector<std::size_t> perm);
Var transpose(Var a);
Var concat(std::span<const Var> parts, std::size_t axis);
Var slice(Var a, std::size_t axis, std::size_t start, std::size_t length);
/// Repeat a [1, ...] tensor `count` times along the leading axis.
Var expand_leading(Var a, std::size_t count);

Var conv2d(Var x, Var weight, std::optional<Var> bias, const Conv2dParams& p);
/// Normalizes over the last axis; gamma and beta have the last extent.
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);

Var mean(Var a, std::size_t axis);
/// Sum of all elements as a one-element tensor.
Var sum(Var a);
/// Mean softmax cross-entropy of logits [B, C] against integer labels.
Var cross_entropy(Var logits, std::span<const std::size_t> labels);
/// Inverted dropout; identity unless the tape is in training mode.
Var dropout(Var x, double rate);

}  // namespace ad

/// Hooks used by negative-control tests to break a backward rule on purpose.
namespace testing_hooks {
void set_corrupt_softmax_backward(bool enabled) noexcept;
bool corrupt_softmax_backward() noexcept;
}  // namespace testing_hooks

}  // namespace ska
