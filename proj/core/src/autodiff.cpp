// SPDX-License-Identifier: Apache-2.0
#include "ska/autodiff.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <numeric>

namespace ska {

// ---------------------------------------------------------------------------
// ParameterStore

Parameter& ParameterStore::add(std::string name, Tensor value, bool trainable) {
  if (index_.count(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  auto p = std::make_unique<Parameter>(Parameter{std::move(name), std::move(value), trainable});
  Parameter& ref = *p;
  index_.emplace(ref.name, &ref);
  items_.push_back(std::move(p));
  return ref;
}

Parameter* ParameterStore::find(std::string_view name) noexcept {
  auto it = index_.find(std::string(name));
  return it == index_.end() ? nullptr : it->second;
}

const Parameter* ParameterStore::find(std::string_view name) const noexcept {
  auto it = index_.find(std::string(name));
  return it == index_.end() ? nullptr : it->second;
}

Parameter& ParameterStore::get(std::string_view name) {
  if (auto* p = find(name)) return *p;
  throw ConfigError("unknown parameter '" + std::string(name) + "'");
}

const Parameter& ParameterStore::get(std::string_view name) const {
  if (const auto* p = find(name)) return *p;
  throw ConfigError("unknown parameter '" + std::string(name) + "'");
}

std::size_t ParameterStore::trainable_elements() const noexcept {
  std::size_t n = 0;
  for (const auto& p : items_) {
    if (p->trainable) n += p->value.numel();
  }
  return n;
}

// ---------------------------------------------------------------------------
// Tape

const Tensor Tape::kNull{};

const Tensor& Var::value() const {
  if (!tape) throw Error("value() on an unbound Var");
  return tape->value(id);
}

Tape::Tape(bool training, std::uint64_t seed) : training_(training), rng_(seed) {}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, false});
  return Var{this, nodes_.size() - 1};
}

Var Tape::leaf(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, true});
  return Var{this, nodes_.size() - 1};
}

Var Tape::param(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var{this, it->second};
  nodes_.push_back(Node{p.value, {}, {}, &p, p.trainable});
  param_nodes_.emplace(&p, nodes_.size() - 1);
  return Var{this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward) {
  bool needs = false;
  for (auto i : inputs) needs = needs || nodes_.at(i).requires_grad;
  nodes_.push_back(Node{std::move(value), std::move(inputs), needs ? std::move(backward) : BackwardFn{},
                        nullptr, needs});
  return Var{this, nodes_.size() - 1};
}

void Tape::accumulate(std::size_t id, const Tensor& g) {
  if (!nodes_[id].requires_grad) return;
  Tensor& dst = grads_[id];
  if (dst.empty()) {
    dst = g;
    return;
  }
  if (dst.shape() != g.shape()) {
    throw DimensionError("gradient shape " + shape_string(g.shape()) + " does not match node shape " +
                         shape_string(dst.shape()));
  }
  for (std::size_t i = 0; i < g.numel(); ++i) dst[i] += g[i];
}

void Tape::accumulate(std::size_t id, Tensor&& g) {
  if (!nodes_[id].requires_grad) return;
  if (grads_[id].empty()) {
    grads_[id] = std::move(g);
    return;
  }
  accumulate(id, static_cast<const Tensor&>(g));
}

GradientMap Tape::backward(Var loss) {
  if (loss.tape != this || loss.id >= nodes_.size()) {
    throw Error("backward: loss node is detached from this tape");
  }
  if (nodes_[loss.id].value.numel() != 1) {
    throw DimensionError("backward: loss must be a scalar, got shape " +
                         shape_string(nodes_[loss.id].value.shape()));
  }
  grads_.assign(nodes_.size(), Tensor{});
  grads_[loss.id] = Tensor(nodes_[loss.id].value.shape(), 1.0);
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    if (grads_[id].empty() || !nodes_[id].backward) continue;
    nodes_[id].backward(*this, id);
  }
  GradientMap out;
  for (const auto& [param, id] : param_nodes_) {
    if (!param->trainable || grads_[id].empty()) continue;
    out.emplace(param->name, grads_[id]);
  }
  return out;
}

const Tensor& Tape::grad(Var v) const {
  if (v.tape != this) throw Error("grad: node is detached from this tape");
  if (v.id >= grads_.size()) return kNull;
  return grads_[v.id];
}

// ---------------------------------------------------------------------------

namespace testing_hooks {
namespace {
std::atomic<bool> g_corrupt_softmax{false};
}
void set_corrupt_softmax_backward(bool enabled) noexcept { g_corrupt_softmax.store(enabled); }
bool corrupt_softmax_backward() noexcept { return g_corrupt_softmax.load(); }
}  // namespace testing_hooks

namespace ad {

namespace {

Tape& same_tape(Var a, Var b) {
  if (!a.tape || a.tape != b.tape) throw Error("operands recorded on different tapes");
  return *a.tape;
}

Tape& tape_of(Var a) {
  if (!a.tape) throw Error("operand is not bound to a tape");
  return *a.tape;
}

std::vector<std::size_t> inverse_perm(const std::vector<std::size_t>& perm) {
  std::vector<std::size_t> inv(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) inv[perm[i]] = i;
  return inv;
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  Tensor out = ska::matmul(a.value(), b.value());
  const std::size_t k = a.value().dim(a.rank() - 1);
  t.add_macs(static_cast<std::uint64_t>(out.numel()) * k);
  const std::size_t ia = a.id, ib = b.id;
  return t.record(std::move(out), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_at(self);
    const Tensor& av = tp.value(ia);
    const Tensor& bv = tp.value(ib);
    if (tp.requires_grad(ia)) tp.accumulate(ia, sum_to_shape(ska::matmul(g, ska::transpose(bv)), av.shape()));
    if (tp.requires_grad(ib)) tp.accumulate(ib, sum_to_shape(ska::matmul(ska::transpose(av), g), bv.shape()));
  });
}

Var linear(Var x, Var weight, std::optional<Var> bias) {
  if (weight.rank() != 2) throw DimensionError("linear weight must be [in, out], got " + shape_string(weight.shape()));
  Var y = matmul(x, weight);
  return bias ? add_last(y, *bias) : y;
}

Var add(Var a, Var b) {
  Tape& t = same_tape(a, b);
  const std::size_t ia = a.id, ib = b.id;
  return t.record(ska::add(a.value(), b.value()), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
    tp.accumulate(ia, tp.grad_at(self));
    tp.accumulate(ib, tp.grad_at(self));
  });
}

Var mul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  const std::size_t ia = a.id, ib = b.id;
  return t.record(ska::mul(a.value(), b.value()), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_at(self);
    if (tp.requires_grad(ia)) tp.accumulate(ia, ska::mul(g, tp.value(ib)));
    if (tp.requires_grad(ib)) tp.accumulate(ib, ska::mul(g, tp.value(ia)));
  });
}

Var scale(Var a, double s) {
  Tape& t = tape_of(a);
  const std::size_t ia = a.id;
  return t.record(ska::scale(a.value(), s), {ia}, [ia, s](Tape& tp, std::size_t self) {
    tp.accumulate(ia, ska::scale(tp.grad_at(self), s));
  });
}

Var add_last(Var a, Var bias) {
  Tape& t = same_tape(a, bias);
  const std::size_t ia = a.id, ib = bias.id;
  return t.record(ska::add_last(a.value(), bias.value()), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_at(self);
    tp.accumulate(ia, g);
    if (tp.requires_grad(ib)) {
      const Tensor& bv = tp.value(ib);
      Tensor gb(bv.shape());
      const std::size_t n = bv.numel();
      for (std::size_t i = 0; i < g.numel(); ++i) gb[i % n] += g[i];
      tp.accumulate(ib, std::move(gb));
    }
  });
}

Var softmax_rows(Var x) {
  Tape& t = tape_of(x);
  const std::size_t ix = x.id;
  Tensor y = ska::softmax_rows(x.value());
  return t.record(std::move(y), {ix}, [ix](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_at(self);
    const Tensor& y = tp.value(self);
    const std::size_t n = y.dim(y.rank() - 1);
    Tensor gx(y.shape());
    const double corrupt = testing_hooks::corrupt_softmax_backward() ? 1.01 : 1.0;
    for (std::size_t r = 0; r < y.numel() / n; ++r) {
      const double* yr = y.data().data() + r * n;
      const double* gr = g.data().data() + r * n;
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += gr[j] * yr[j];
      double* o = gx.data().data() + r * n;
      for (std::size_t j = 0; j < n; ++j) o[j] = corrupt * yr[j] * (gr[j] - dot);
    }
    tp.accumulate(ix, std::move(gx));
  });
}

Var relu(Var x) {
  Tape& t = tape_of(x);
  const std::size_t ix = x.id;
  Tensor y(x.shape());
  const Tensor& xv = x.value();
  for (std::size_t i = 0; i < xv.numel(); ++i) y[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  return t.record(std::move(y), {ix}, [ix](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_at(self);
    const Tensor& xv = tp.value(ix);
    Tensor gx(xv.shape());
    for (std::size_t i = 0; i < xv.numel(); ++i) gx[i] = xv[i] > 0.0 ? g[i] : 0.0;
    tp.accumulate(ix, std::move(gx));
  });
}

Var gelu(Var x) {
  Tape& t = tape_of(x);
  const std::size_t ix = x.id;
  const Tensor& xv = x.value();
  Tensor y(xv.shape());
  for (std::size_t i = 0; i < xv.numel(); ++i) {
    y[i] = 0.5 * xv[i] * (1.0 + std::erf(xv[i] * std::numbers::sqrt2 / 2.0));
  }
  return t.record(std::move(y), {ix}, [ix](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_at(self);
    const Tensor& xv = tp.value(ix);
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    Tensor gx(xv.shape());
    for (std::size_t i = 0; i < xv.numel(); ++i) {
      const double v = xv[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
      gx[i] = g[i] * (cdf + v * pdf);
    }
    tp.accumulate(ix, std::move(gx));
  });
}

Var star_relu(Var x, Var s, Var b) {
  Tape& t = same_tape(x, s);
  same_tape(x, b);
  if (s.value().numel() != 1 || b.value().numel() != 1) {
    throw DimensionError("star_relu scale and bias must be single values");
  }
  const std::size_t ix = x.id, is = s.id, ib = b.id;
  const double sv = s.value()[0], bv = b.value()[0];
  const Tensor& xv = x.value();
  Tensor y(xv.shape());
  for (std::size_t i = 0; i < xv.numel(); ++i) {
    const double r = xv[i] > 0.0 ? xv[i] : 0.0;
    y[i] = sv * r * r + bv;
  }
  require_finite(y, "star_relu");
  return t.record(std::move(y), {ix, is, ib}, [ix, is, ib](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_at(self);
    const Tensor& xv = tp.value(ix);
    const double sv = tp.value(is)[0];
    Tensor gx(xv.shape());
    double gs = 0.0, gb = 0.0;
    for (std::size_t i = 0; i < xv.numel(); ++i) {
      const double r = xv[i] > 0.0 ? xv[i] : 0.0;
      gx[i] = g[i] * 2.0 * sv * r;
      gs += g[i] * r * r;
      gb += g[i];
    }
    tp.accumulate(ix, std::move(gx));
    tp.accumulate(is, Tensor::scalar(gs));
    tp.accumulate(ib, Tensor::scalar(gb));
  });
}

Var reshape(Var a, Shape shape) {
  Tape& t = tape_of(a);
  const std::size_t ia = a.id;
  Shape original = a.shape();
  return t.record(ska::reshape(a.value(), std::move(shape)), {ia},
                  [ia, original = std::move(original)](Tape& tp, std::size_t self) {
                    tp.accumulate(ia, ska::reshape(tp.grad_at(self), original));
                  });
}

Var permute(Var a, std::vector<std::size_t> perm) {
  Tape& t = tape_of(a);
  const std::size_t ia = a.id;
  Tensor out = ska::permute(a.value(), perm);
  return t.record(std::move(out), {ia}, [ia, inv = inverse_perm(perm)](Tape& tp, std::size_t self) {
    tp.accumulate(ia, ska::permute(tp.grad_at(self), inv));
  });
}

Var transpose(Var a) {
  if (a.rank() < 2) throw DimensionError("transpose needs rank >= 2, got " + shape_string(a.shape()));
  std::vector<std::size_t> perm(a.rank());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::swap(perm[a.rank() - 1], perm[a.rank() - 2]);
  return permute(a, std::move(perm));
}

Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat of zero tensors");
  Tape& t = tape_of(parts[0]);
  std::vector<Tensor> values;
  std::vector<std::size_t> ids;
  std::vector<std::size_t> extents;
  for (const Var& v : parts) {
    same_tape(parts[0], v);
    values.push_back(v.value());
    ids.push_back(v.id);
    extents.push_back(v.dim(axis));
  }
  Tensor out = ska::concat(values, axis);
  return t.record(std::move(out), ids, [ids, extents, axis](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_at(self);
    std::size_t start = 0;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (tp.requires_grad(ids[i])) tp.accumulate(ids[i], ska::slice(g, axis, start, extents[i]));
      start += extents[i];
    }
  });
}

Var slice(Var a, std::size_t axis, std::size_t start, std::size_t length) {
  Tape& t = tape_of(a);
  const std::size_t ia = a.id;
  return t.record(ska::slice(a.value(), axis, start, length), {ia},
                  [ia, axis, start, length](Tape& tp, std::size_t self) {
                    const Tensor& g = tp.grad_at(self);
                    const Tensor& av = tp.value(ia);
                    Tensor ga(av.shape());
                    std::size_t outer = 1;
                    for (std::size_t i = 0; i < axis; ++i) outer *= av.dim(i);
                    std::size_t inner = 1;
                    for (std::size_t i = axis + 1; i < av.rank(); ++i) inner *= av.dim(i);
                    for (std::size_t o = 0; o < outer; ++o) {
                      const double* src = g.data().data() + o * length * inner;
                      std::copy(src, src + length * inner,
                                ga.data().data() + (o * av.dim(axis) + start) * inner);
                    }
                    tp.accumulate(ia, std::move(ga));
                  });
}

Var expand_leading(Var a, std::size_t count) {
  Tape& t = tape_of(a);
  if (a.dim(0) != 1) throw DimensionError("expand_leading needs a leading extent of 1, got " + shape_string(a.shape()));
  Shape shape = a.shape();
  shape[0] = count;
  Tensor out(shape);
  const std::size_t chunk = a.value().numel();
  for (std::size_t i = 0; i < count; ++i) {
    std::copy(a.value().data().begin(), a.value().data().end(), out.data().begin() + i * chunk);
  }
  const std::size_t ia = a.id;
  return t.record(std::move(out), {ia}, [ia, count, chunk](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_at(self);
    Tensor ga(tp.value(ia).shape());
    for (std::size_t i = 0; i < count; ++i) {
      for (std::size_t j = 0; j < chunk; ++j) ga[j] += g[i * chunk + j];
    }
    tp.accumulate(ia, std::move(ga));
  });
}

Var conv2d(Var x, Var weight, std::optional<Var> bias, const Conv2dParams& p) {
  Tape& t = same_tape(x, weight);
  if (bias) same_tape(x, *bias);
  Tensor out = ska::conv2d_grouped(x.value(), weight.value(), bias ? &bias->value() : nullptr, p);
  const Shape& w = weight.shape();
  t.add_macs(static_cast<std::uint64_t>(out.numel()) * w[1] * w[2] * w[3]);
  std::vector<std::size_t> inputs{x.id, weight.id};
  if (bias) inputs.push_back(bias->id);
  const std::size_t ix = x.id, iw = weight.id;
  const std::optional<std::size_t> ib = bias ? std::optional<std::size_t>(bias->id) : std::nullopt;
  return t.record(std::move(out), std::move(inputs), [ix, iw, ib, p](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_at(self);
    const Tensor& xv = tp.value(ix);
    const Tensor& wv = tp.value(iw);
    if (tp.requires_grad(ix)) tp.accumulate(ix, conv2d_grouped_grad_input(g, wv, xv.shape(), p));
    if (tp.requires_grad(iw)) tp.accumulate(iw, conv2d_grouped_grad_weight(g, xv, wv.shape(), p));
    if (ib && tp.requires_grad(*ib)) {
      const std::size_t c = g.dim(1);
      const std::size_t plane = g.dim(2) * g.dim(3);
      Tensor gb({c});
      for (std::size_t b = 0; b < g.dim(0); ++b) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          const double* src = g.data().data() + (b * c + ch) * plane;
          double acc = 0.0;
          for (std::size_t i = 0; i < plane; ++i) acc += src[i];
          gb[ch] += acc;
        }
      }
      tp.accumulate(*ib, std::move(gb));
    }
  });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  Tape& t = same_tape(x, gamma);
  same_tape(x, beta);
  const Tensor& xv = x.value();
  const std::size_t n = xv.dim(xv.rank() - 1);
  if (gamma.value().numel() != n || beta.value().numel() != n) {
    throw DimensionError("layer_norm affine parameters do not match last extent of " + shape_string(xv.shape()));
  }
  const std::size_t rows = xv.numel() / n;
  Tensor xhat(xv.shape());
  Tensor inv_std({rows});
  Tensor y(xv.shape());
  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.data().data() + r * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += in[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (in[j] - mu) * (in[j] - mu);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (in[j] - mu) * is;
      xhat[r * n + j] = h;
      y[r * n + j] = gv[j] * h + bv[j];
    }
  }
  const std::size_t ix = x.id, ig = gamma.id, ib = beta.id;
  return t.record(std::move(y), {ix, ig, ib},
                  [ix, ig, ib, n, rows, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& tp,
                                                                                               std::size_t self) {
                    const Tensor& g = tp.grad_at(self);
                    const Tensor& gv = tp.value(ig);
                    Tensor gx(g.shape());
                    Tensor ggamma({n});
                    Tensor gbeta({n});
                    for (std::size_t r = 0; r < rows; ++r) {
                      double mean_dh = 0.0, mean_dh_h = 0.0;
                      for (std::size_t j = 0; j < n; ++j) {
                        const double gj = g[r * n + j];
                        const double h = xhat[r * n + j];
                        const double dh = gj * gv[j];
                        mean_dh += dh;
                        mean_dh_h += dh * h;
                        ggamma[j] += gj * h;
                        gbeta[j] += gj;
                      }
                      mean_dh /= static_cast<double>(n);
                      mean_dh_h /= static_cast<double>(n);
                      for (std::size_t j = 0; j < n; ++j) {
                        const double dh = g[r * n + j] * gv[j];
                        gx[r * n + j] = inv_std[r] * (dh - mean_dh - xhat[r * n + j] * mean_dh_h);
                      }
                    }
                    tp.accumulate(ix, std::move(gx));
                    tp.accumulate(ig, ska::reshape(ggamma, tp.value(ig).shape()));
                    tp.accumulate(ib, ska::reshape(gbeta, tp.value(ib).shape()));
                  });
}

Var mean(Var a, std::size_t axis) {
  Tape& t = tape_of(a);
  const std::size_t ia = a.id;
  return t.record(ska::mean(a.value(), axis), {ia}, [ia, axis](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_at(self);
    const Tensor& av = tp.value(ia);
    std::size_t outer = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= av.dim(i);
    std::size_t inner = 1;
    for (std::size_t i = axis + 1; i < av.rank(); ++i) inner *= av.dim(i);
    const std::size_t n = av.dim(axis);
    const double inv = 1.0 / static_cast<double>(n);
    Tensor ga(av.shape());
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t k = 0; k < n; ++k) {
        double* dst = ga.data().data() + (o * n + k) * inner;
        const double* src = g.data().data() + o * inner;
        for (std::size_t j = 0; j < inner; ++j) dst[j] = src[j] * inv;
      }
    }
    tp.accumulate(ia, std::move(ga));
  });
}

Var sum(Var a) {
  Tape& t = tape_of(a);
  const std::size_t ia = a.id;
  return t.record(Tensor::scalar(ska::sum(a.value())), {ia}, [ia](Tape& tp, std::size_t self) {
    tp.accumulate(ia, Tensor(tp.value(ia).shape(), tp.grad_at(self)[0]));
  });
}

Var cross_entropy(Var logits, std::span<const std::size_t> labels) {
  Tape& t = tape_of(logits);
  const Tensor& z = logits.value();
  if (z.rank() != 2) throw DimensionError("cross_entropy expects [B, C] logits, got " + shape_string(z.shape()));
  const std::size_t batch = z.dim(0), classes = z.dim(1);
  if (labels.size() != batch) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for batch of " +
                         std::to_string(batch));
  }
  Tensor probs = ska::softmax_rows(z);
  double loss = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    if (labels[b] >= classes) throw ConfigError("label " + std::to_string(labels[b]) + " out of range");
    const double* row = z.data().data() + b * classes;
    const double mx = *std::max_element(row, row + classes);
    double s = 0.0;
    for (std::size_t c = 0; c < classes; ++c) s += std::exp(row[c] - mx);
    loss += mx + std::log(s) - row[labels[b]];
  }
  loss /= static_cast<double>(batch);
  const std::size_t iz = logits.id;
  std::vector<std::size_t> lab(labels.begin(), labels.end());
  return t.record(Tensor::scalar(loss), {iz},
                  [iz, probs = std::move(probs), lab = std::move(lab)](Tape& tp, std::size_t self) {
                    const double g = tp.grad_at(self)[0];
                    const std::size_t batch = probs.dim(0), classes = probs.dim(1);
                    Tensor gz = probs;
                    for (std::size_t b = 0; b < batch; ++b) gz[b * classes + lab[b]] -= 1.0;
                    const double s = g / static_cast<double>(batch);
                    for (auto& v : gz.data()) v *= s;
                    tp.accumulate(iz, std::move(gz));
                  });
}

Var dropout(Var x, double rate) {
  if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout rate must be in [0, 1)");
  Tape& t = tape_of(x);
  if (!t.training() || rate == 0.0) return x;
  Tensor mask(x.shape());
  const double keep = 1.0 / (1.0 - rate);
  for (auto& m : mask.data()) m = t.rng().uniform() < rate ? 0.0 : keep;
  return mul(x, t.constant(std::move(mask)));
}

}  // namespace ad

}  // namespace ska
