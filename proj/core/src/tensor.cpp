// SPDX-License-Identifier: Apache-2.0
#include "ska/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <sstream>

#include "ska/rng.hpp"

namespace ska {

std::size_t shape_numel(const Shape& shape) {
  if (shape.empty()) return 0;
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

void validate_shape(const Shape& shape) {
  if (shape.empty()) throw DimensionError("tensor shape must have at least one extent");
  for (auto e : shape) {
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_string(shape));
  }
}

std::atomic<bool> g_finite_checks{true};

Tensor checked(Tensor t, const char* what) {
  if (g_finite_checks.load(std::memory_order_relaxed)) require_finite(t, what);
  return t;
}

// Row-major strides.
std::vector<std::size_t> strides_of(const Shape& shape) {
  std::vector<std::size_t> s(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) s[i - 1] = s[i] * shape[i];
  return s;
}

}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  validate_shape(shape_);
  data_.assign(shape_numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  validate_shape(shape_);
  if (shape_numel(shape_) != data_.size()) {
    throw DimensionError("shape " + shape_string(shape_) + " needs " +
                         std::to_string(shape_numel(shape_)) + " values, got " +
                         std::to_string(data_.size()));
  }
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t[i * n + i] = 1.0;
  return t;
}

std::size_t Tensor::offset(std::initializer_list<std::size_t> index) const {
  if (index.size() != shape_.size()) {
    throw DimensionError("index rank " + std::to_string(index.size()) + " != tensor rank " +
                         std::to_string(shape_.size()));
  }
  std::size_t off = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i >= shape_[axis]) throw DimensionError("index out of range for " + shape_string(shape_));
    off = off * shape_[axis] + i;
    ++axis;
  }
  return off;
}

double& Tensor::at(std::initializer_list<std::size_t> index) { return data_[offset(index)]; }
double Tensor::at(std::initializer_list<std::size_t> index) const { return data_[offset(index)]; }

double Tensor::item() const {
  if (data_.size() != 1) throw DimensionError("item() on tensor of shape " + shape_string(shape_));
  return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const { return reshape(*this, std::move(shape)); }

std::vector<double>& Tensor::grad() {
  if (!grad_) grad_.emplace(data_.size(), 0.0);
  return *grad_;
}

const std::vector<double>& Tensor::grad() const {
  if (!grad_) throw Error("tensor has no gradient slot");
  return *grad_;
}

void Tensor::zero_grad() { grad().assign(data_.size(), 0.0); }

bool finite_checks_enabled() noexcept { return g_finite_checks.load(std::memory_order_relaxed); }
void set_finite_checks(bool enabled) noexcept { g_finite_checks.store(enabled); }

FiniteCheckScope::FiniteCheckScope(bool enabled) noexcept : previous_(finite_checks_enabled()) {
  set_finite_checks(enabled);
}
FiniteCheckScope::~FiniteCheckScope() { set_finite_checks(previous_); }

void require_finite(const Tensor& t, const char* what) {
  for (std::size_t i = 0; i < t.numel(); ++i) {
    if (!std::isfinite(t[i])) {
      throw NumericalError(std::string("non-finite value ") + std::to_string(t[i]) + " at flat index " +
                           std::to_string(i) + " produced by " + what);
    }
  }
}

// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() < 2) {
    throw DimensionError("matmul needs rank >= 2 operands, got " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  }
  const std::size_t m = a.dim(a.rank() - 2);
  const std::size_t k = a.dim(a.rank() - 1);
  const std::size_t kb = b.dim(b.rank() - 2);
  const std::size_t p = b.dim(b.rank() - 1);
  if (k != kb) {
    throw DimensionError("matmul inner extents differ: " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  const std::size_t la = a.rank() - 2;
  const std::size_t lb = b.rank() - 2;
  const std::size_t lo = std::max(la, lb);
  Shape batch(lo, 1);
  std::vector<std::size_t> a_ext(lo, 1), b_ext(lo, 1);
  for (std::size_t i = 0; i < la; ++i) a_ext[lo - la + i] = a.dim(i);
  for (std::size_t i = 0; i < lb; ++i) b_ext[lo - lb + i] = b.dim(i);
  for (std::size_t i = 0; i < lo; ++i) {
    if (a_ext[i] != b_ext[i] && a_ext[i] != 1 && b_ext[i] != 1) {
      throw DimensionError("matmul batch extents not broadcastable: " + shape_string(a.shape()) + " x " +
                           shape_string(b.shape()));
    }
    batch[i] = std::max(a_ext[i], b_ext[i]);
  }
  // Batch strides in units of whole matrices; zero on broadcast axes.
  std::vector<std::size_t> a_bs(lo, 0), b_bs(lo, 0);
  {
    std::size_t sa = 1, sb = 1;
    for (std::size_t i = lo; i-- > 0;) {
      a_bs[i] = a_ext[i] == 1 ? 0 : sa;
      b_bs[i] = b_ext[i] == 1 ? 0 : sb;
      sa *= a_ext[i];
      sb *= b_ext[i];
    }
  }
  Shape out_shape = batch;
  out_shape.push_back(m);
  out_shape.push_back(p);
  Tensor out(out_shape);
  const std::size_t nbatch = lo ? shape_numel(batch) : 1;
  std::vector<std::size_t> idx(lo, 0);
  const double* A = a.data().data();
  const double* B = b.data().data();
  double* C = out.data().data();
  for (std::size_t n = 0; n < nbatch; ++n) {
    std::size_t ao = 0, bo = 0;
    for (std::size_t i = 0; i < lo; ++i) {
      ao += idx[i] * a_bs[i];
      bo += idx[i] * b_bs[i];
    }
    const double* Am = A + ao * m * k;
    const double* Bm = B + bo * k * p;
    double* Cm = C + n * m * p;
    for (std::size_t i = 0; i < m; ++i) {
      double* crow = Cm + i * p;
      for (std::size_t kk = 0; kk < k; ++kk) {
        const double av = Am[i * k + kk];
        if (av == 0.0) continue;
        const double* brow = Bm + kk * p;
        for (std::size_t j = 0; j < p; ++j) crow[j] += av * brow[j];
      }
    }
    for (std::size_t i = lo; i-- > 0;) {
      if (++idx[i] < batch[i]) break;
      idx[i] = 0;
    }
  }
  return checked(std::move(out), "matmul");
}

Tensor softmax_rows(const Tensor& x) {
  if (x.empty()) throw DimensionError("softmax_rows on empty tensor");
  const std::size_t n = x.dim(x.rank() - 1);
  Tensor out(x.shape());
  const std::size_t rows = x.numel() / n;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data().data() + r * n;
    double* o = out.data().data() + r * n;
    const double mx = *std::max_element(in, in + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      o[j] = std::exp(in[j] - mx);
      total += o[j];
    }
    const double inv = 1.0 / total;
    for (std::size_t j = 0; j < n; ++j) o[j] *= inv;
  }
  return checked(std::move(out), "softmax_rows");
}

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, const Conv2dParams& p) {
  if (p.stride == 0) throw ConfigError("convolution stride must be positive");
  if (in + 2 * p.padding < kernel) {
    throw DimensionError("convolution kernel " + std::to_string(kernel) + " larger than padded input " +
                         std::to_string(in + 2 * p.padding));
  }
  return (in + 2 * p.padding - kernel) / p.stride + 1;
}

namespace {

struct ConvGeometry {
  std::size_t batch, c_in, h, w, c_out, cin_g, cout_g, kh, kw, oh, ow;
};

ConvGeometry conv_geometry(const Shape& x, const Shape& w, const Conv2dParams& p) {
  if (x.size() != 4 || w.size() != 4) {
    throw DimensionError("conv2d_grouped needs [B,C,H,W] input and [O,C/G,kh,kw] weight, got " +
                         shape_string(x) + " and " + shape_string(w));
  }
  if (p.groups == 0) throw ConfigError("convolution groups must be positive");
  ConvGeometry g{};
  g.batch = x[0];
  g.c_in = x[1];
  g.h = x[2];
  g.w = x[3];
  g.c_out = w[0];
  g.kh = w[2];
  g.kw = w[3];
  if (g.c_in % p.groups != 0 || g.c_out % p.groups != 0) {
    throw ConfigError("channels (in " + std::to_string(g.c_in) + ", out " + std::to_string(g.c_out) +
                      ") not divisible by groups " + std::to_string(p.groups));
  }
  g.cin_g = g.c_in / p.groups;
  g.cout_g = g.c_out / p.groups;
  if (w[1] != g.cin_g) {
    throw DimensionError("conv weight " + shape_string(w) + " expects " + std::to_string(w[1]) +
                         " input channels per group, input provides " + std::to_string(g.cin_g));
  }
  g.oh = conv_output_extent(g.h, g.kh, p);
  g.ow = conv_output_extent(g.w, g.kw, p);
  return g;
}

}  // namespace

Tensor conv2d_grouped(const Tensor& x, const Tensor& weight, const Tensor* bias,
                      const Conv2dParams& p) {
  const ConvGeometry g = conv_geometry(x.shape(), weight.shape(), p);
  if (bias && (bias->rank() != 1 || bias->dim(0) != g.c_out)) {
    throw DimensionError("conv bias " + shape_string(bias->shape()) + " does not match " +
                         std::to_string(g.c_out) + " output channels");
  }
  Tensor out({g.batch, g.c_out, g.oh, g.ow});
  const double* X = x.data().data();
  const double* W = weight.data().data();
  double* O = out.data().data();
  const long pad = static_cast<long>(p.padding);
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t oc = 0; oc < g.c_out; ++oc) {
      const std::size_t grp = oc / g.cout_g;
      double* oplane = O + (b * g.c_out + oc) * g.oh * g.ow;
      if (bias) std::fill(oplane, oplane + g.oh * g.ow, (*bias)[oc]);
      for (std::size_t ic = 0; ic < g.cin_g; ++ic) {
        const double* iplane = X + (b * g.c_in + grp * g.cin_g + ic) * g.h * g.w;
        const double* wk = W + (oc * g.cin_g + ic) * g.kh * g.kw;
        for (std::size_t ky = 0; ky < g.kh; ++ky) {
          for (std::size_t kx = 0; kx < g.kw; ++kx) {
            const double wv = wk[ky * g.kw + kx];
            for (std::size_t oy = 0; oy < g.oh; ++oy) {
              const long iy = static_cast<long>(oy * p.stride + ky) - pad;
              if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
              const double* irow = iplane + iy * g.w;
              double* orow = oplane + oy * g.ow;
              for (std::size_t ox = 0; ox < g.ow; ++ox) {
                const long ix = static_cast<long>(ox * p.stride + kx) - pad;
                if (ix < 0 || ix >= static_cast<long>(g.w)) continue;
                orow[ox] += wv * irow[ix];
              }
            }
          }
        }
      }
    }
  }
  return checked(std::move(out), "conv2d_grouped");
}

Tensor conv2d_grouped_grad_input(const Tensor& grad_out, const Tensor& weight,
                                 const Shape& input_shape, const Conv2dParams& p) {
  const ConvGeometry g = conv_geometry(input_shape, weight.shape(), p);
  if (grad_out.shape() != Shape{g.batch, g.c_out, g.oh, g.ow}) {
    throw DimensionError("conv grad_out shape " + shape_string(grad_out.shape()) + " mismatch");
  }
  Tensor gx(input_shape);
  const double* GO = grad_out.data().data();
  const double* W = weight.data().data();
  double* GX = gx.data().data();
  const long pad = static_cast<long>(p.padding);
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t oc = 0; oc < g.c_out; ++oc) {
      const std::size_t grp = oc / g.cout_g;
      const double* gplane = GO + (b * g.c_out + oc) * g.oh * g.ow;
      for (std::size_t ic = 0; ic < g.cin_g; ++ic) {
        double* iplane = GX + (b * g.c_in + grp * g.cin_g + ic) * g.h * g.w;
        const double* wk = W + (oc * g.cin_g + ic) * g.kh * g.kw;
        for (std::size_t ky = 0; ky < g.kh; ++ky) {
          for (std::size_t kx = 0; kx < g.kw; ++kx) {
            const double wv = wk[ky * g.kw + kx];
            for (std::size_t oy = 0; oy < g.oh; ++oy) {
              const long iy = static_cast<long>(oy * p.stride + ky) - pad;
              if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
              double* irow = iplane + iy * g.w;
              const double* grow = gplane + oy * g.ow;
              for (std::size_t ox = 0; ox < g.ow; ++ox) {
                const long ix = static_cast<long>(ox * p.stride + kx) - pad;
                if (ix < 0 || ix >= static_cast<long>(g.w)) continue;
                irow[ix] += wv * grow[ox];
              }
            }
          }
        }
      }
    }
  }
  return gx;
}

Tensor conv2d_grouped_grad_weight(const Tensor& grad_out, const Tensor& x,
                                  const Shape& weight_shape, const Conv2dParams& p) {
  const ConvGeometry g = conv_geometry(x.shape(), weight_shape, p);
  if (grad_out.shape() != Shape{g.batch, g.c_out, g.oh, g.ow}) {
    throw DimensionError("conv grad_out shape " + shape_string(grad_out.shape()) + " mismatch");
  }
  Tensor gw(weight_shape);
  const double* GO = grad_out.data().data();
  const double* X = x.data().data();
  double* GW = gw.data().data();
  const long pad = static_cast<long>(p.padding);
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t oc = 0; oc < g.c_out; ++oc) {
      const std::size_t grp = oc / g.cout_g;
      const double* gplane = GO + (b * g.c_out + oc) * g.oh * g.ow;
      for (std::size_t ic = 0; ic < g.cin_g; ++ic) {
        const double* iplane = X + (b * g.c_in + grp * g.cin_g + ic) * g.h * g.w;
        double* wk = GW + (oc * g.cin_g + ic) * g.kh * g.kw;
        for (std::size_t ky = 0; ky < g.kh; ++ky) {
          for (std::size_t kx = 0; kx < g.kw; ++kx) {
            double acc = 0.0;
            for (std::size_t oy = 0; oy < g.oh; ++oy) {
              const long iy = static_cast<long>(oy * p.stride + ky) - pad;
              if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
              const double* irow = iplane + iy * g.w;
              const double* grow = gplane + oy * g.ow;
              for (std::size_t ox = 0; ox < g.ow; ++ox) {
                const long ix = static_cast<long>(ox * p.stride + kx) - pad;
                if (ix < 0 || ix >= static_cast<long>(g.w)) continue;
                acc += grow[ox] * irow[ix];
              }
            }
            wk[ky * g.kw + kx] += acc;
          }
        }
      }
    }
  }
  return gw;
}

// ---------------------------------------------------------------------------

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("cannot reshape " + shape_string(a.shape()) + " to " + shape_string(shape));
  }
  return Tensor(std::move(shape), a.storage());
}

Tensor permute(const Tensor& a, std::span<const std::size_t> perm) {
  const std::size_t r = a.rank();
  if (perm.size() != r) {
    throw DimensionError("permutation of length " + std::to_string(perm.size()) + " for rank " +
                         std::to_string(r));
  }
  std::vector<bool> seen(r, false);
  Shape out_shape(r);
  for (std::size_t i = 0; i < r; ++i) {
    if (perm[i] >= r || seen[perm[i]]) throw DimensionError("invalid axis permutation");
    seen[perm[i]] = true;
    out_shape[i] = a.dim(perm[i]);
  }
  const auto in_strides = strides_of(a.shape());
  std::vector<std::size_t> src_stride(r);
  for (std::size_t i = 0; i < r; ++i) src_stride[i] = in_strides[perm[i]];
  Tensor out(out_shape);
  std::vector<std::size_t> idx(r, 0);
  const double* src = a.data().data();
  double* dst = out.data().data();
  const std::size_t n = out.numel();
  const std::size_t inner = out_shape[r - 1];
  const std::size_t inner_stride = src_stride[r - 1];
  for (std::size_t o = 0; o < n; o += inner) {
    std::size_t so = 0;
    for (std::size_t i = 0; i + 1 < r; ++i) so += idx[i] * src_stride[i];
    for (std::size_t j = 0; j < inner; ++j) dst[o + j] = src[so + j * inner_stride];
    for (std::size_t i = r - 1; i-- > 0;) {
      if (++idx[i] < out_shape[i]) break;
      idx[i] = 0;
    }
  }
  return out;
}

Tensor permute(const Tensor& a, std::initializer_list<std::size_t> perm) {
  return permute(a, std::span<const std::size_t>(perm.begin(), perm.size()));
}

Tensor transpose(const Tensor& a) {
  if (a.rank() < 2) throw DimensionError("transpose needs rank >= 2, got " + shape_string(a.shape()));
  std::vector<std::size_t> perm(a.rank());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::swap(perm[a.rank() - 1], perm[a.rank() - 2]);
  return permute(a, perm);
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat of zero tensors");
  const Shape& ref = parts[0].shape();
  if (axis >= ref.size()) throw DimensionError("concat axis out of range for " + shape_string(ref));
  Shape out_shape = ref;
  out_shape[axis] = 0;
  for (const auto& t : parts) {
    if (t.rank() != ref.size()) throw DimensionError("concat rank mismatch");
    for (std::size_t i = 0; i < ref.size(); ++i) {
      if (i != axis && t.dim(i) != ref[i]) {
        throw DimensionError("concat extents differ: " + shape_string(ref) + " vs " + shape_string(t.shape()));
      }
    }
    out_shape[axis] += t.dim(axis);
  }
  std::size_t outer = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= ref[i];
  std::size_t inner = 1;
  for (std::size_t i = axis + 1; i < ref.size(); ++i) inner *= ref[i];
  Tensor out(out_shape);
  double* dst = out.data().data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (const auto& t : parts) {
      const std::size_t chunk = t.dim(axis) * inner;
      const double* src = t.data().data() + o * chunk;
      dst = std::copy(src, src + chunk, dst);
    }
  }
  return out;
}

Tensor concat_last(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat of zero tensors");
  return concat(parts, parts[0].rank() - 1);
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length) {
  if (axis >= a.rank()) throw DimensionError("slice axis out of range for " + shape_string(a.shape()));
  if (length == 0 || start + length > a.dim(axis)) {
    throw DimensionError("slice [" + std::to_string(start) + ", " + std::to_string(start + length) +
                         ") out of range on axis " + std::to_string(axis) + " of " + shape_string(a.shape()));
  }
  Shape out_shape = a.shape();
  out_shape[axis] = length;
  std::size_t outer = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= a.dim(i);
  std::size_t inner = 1;
  for (std::size_t i = axis + 1; i < a.rank(); ++i) inner *= a.dim(i);
  Tensor out(out_shape);
  for (std::size_t o = 0; o < outer; ++o) {
    const double* src = a.data().data() + (o * a.dim(axis) + start) * inner;
    std::copy(src, src + length * inner, out.data().data() + o * length * inner);
  }
  return out;
}

namespace {

template <typename F>
Tensor zip(const Tensor& a, const Tensor& b, const char* what, F f) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + " shape mismatch: " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out[i] = f(a[i], b[i]);
  return checked(std::move(out), what);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return zip(a, b, "add", [](double x, double y) { return x + y; });
}
Tensor sub(const Tensor& a, const Tensor& b) {
  return zip(a, b, "sub", [](double x, double y) { return x - y; });
}
Tensor mul(const Tensor& a, const Tensor& b) {
  return zip(a, b, "mul", [](double x, double y) { return x * y; });
}

Tensor scale(const Tensor& a, double s) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i] * s;
  return checked(std::move(out), "scale");
}

Tensor add_last(const Tensor& a, const Tensor& bias) {
  const std::size_t n = a.dim(a.rank() - 1);
  if (bias.numel() != n) {
    throw DimensionError("bias " + shape_string(bias.shape()) + " does not match last extent of " +
                         shape_string(a.shape()));
  }
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i] + bias[i % n];
  return checked(std::move(out), "add_last");
}

double sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return s;
}

double mean(const Tensor& a) {
  if (a.empty()) throw DimensionError("mean of empty tensor");
  return sum(a) / static_cast<double>(a.numel());
}

Tensor mean(const Tensor& a, std::size_t axis) {
  if (axis >= a.rank()) throw DimensionError("mean axis out of range for " + shape_string(a.shape()));
  Shape out_shape;
  for (std::size_t i = 0; i < a.rank(); ++i) {
    if (i != axis) out_shape.push_back(a.dim(i));
  }
  if (out_shape.empty()) out_shape.push_back(1);
  std::size_t outer = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= a.dim(i);
  std::size_t inner = 1;
  for (std::size_t i = axis + 1; i < a.rank(); ++i) inner *= a.dim(i);
  const std::size_t n = a.dim(axis);
  Tensor out(out_shape);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t k = 0; k < n; ++k) {
      const double* src = a.data().data() + (o * n + k) * inner;
      double* dst = out.data().data() + o * inner;
      for (std::size_t j = 0; j < inner; ++j) dst[j] += src[j];
    }
  }
  const double inv = 1.0 / static_cast<double>(n);
  for (auto& v : out.data()) v *= inv;
  return out;
}

Tensor sum_to_shape(const Tensor& a, const Shape& shape) {
  if (a.shape() == shape) return a;
  if (shape.size() > a.rank()) {
    throw DimensionError("cannot sum " + shape_string(a.shape()) + " to larger rank " + shape_string(shape));
  }
  const std::size_t lead = a.rank() - shape.size();
  std::vector<std::size_t> target(a.rank(), 1);
  for (std::size_t i = 0; i < shape.size(); ++i) {
    target[lead + i] = shape[i];
    if (shape[i] != a.dim(lead + i) && shape[i] != 1) {
      throw DimensionError("cannot sum " + shape_string(a.shape()) + " to " + shape_string(shape));
    }
  }
  const auto out_strides = strides_of(Shape(target.begin(), target.end()));
  Tensor out(shape);
  std::vector<std::size_t> idx(a.rank(), 0);
  for (std::size_t n = 0; n < a.numel(); ++n) {
    std::size_t o = 0;
    for (std::size_t i = 0; i < a.rank(); ++i) {
      if (target[i] != 1) o += idx[i] * out_strides[i];
    }
    out[o] += a[n];
    for (std::size_t i = a.rank(); i-- > 0;) {
      if (++idx[i] < a.dim(i)) break;
      idx[i] = 0;
    }
  }
  return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("max_abs_diff shape mismatch: " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

Tensor rng_normal(Rng& rng, Shape shape) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.normal();
  return t;
}

Tensor rng_uniform(Rng& rng, Shape shape, double lo, double hi) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace ska
