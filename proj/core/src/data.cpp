// SPDX-License-Identifier: Apache-2.0
#include "ska/data.hpp"

#include <algorithm>
#include <cctype>
#include <cstring>

namespace ska {

void Dataset::validate() const {
  if (images.rank() != 4) throw DimensionError("dataset images must be [M, C, H, W], got " + shape_string(images.shape()));
  if (images.dim(0) != labels.size()) {
    throw DimensionError("dataset has " + std::to_string(images.dim(0)) + " images but " +
                         std::to_string(labels.size()) + " labels");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes) {
      throw ConfigError("label " + std::to_string(labels[i]) + " at row " + std::to_string(i) + " is outside [0, " +
                        std::to_string(num_classes) + ")");
    }
  }
}

Tensor Dataset::gather(std::span<const std::size_t> indices) const {
  if (indices.empty()) throw DimensionError("cannot gather an empty batch");
  Shape shape = images.shape();
  const std::size_t stride = images.numel() / shape[0];
  shape[0] = indices.size();
  Tensor out = Tensor::zeros(shape);
  const double* src = images.data().data();
  double* dst = out.data().data();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= size()) throw DimensionError("row " + std::to_string(indices[i]) + " out of range");
    std::memcpy(dst + i * stride, src + indices[i] * stride, stride * sizeof(double));
  }
  return out;
}

std::vector<std::size_t> Dataset::gather_labels(std::span<const std::size_t> indices) const {
  std::vector<std::size_t> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(labels.at(i));
  return out;
}

Dataset Dataset::subset(std::size_t start, std::size_t count) const {
  if (count == 0 || start + count > size()) throw DimensionError("subset out of range");
  std::vector<std::size_t> idx(count);
  for (std::size_t i = 0; i < count; ++i) idx[i] = start + i;
  Dataset d;
  d.images = gather(idx);
  d.labels = gather_labels(idx);
  d.num_classes = num_classes;
  d.split = split;
  return d;
}

SynthKind parse_synth_kind(std::string_view name) {
  std::string s(name);
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (s == "two_gaussians_patches") return SynthKind::two_gaussians_patches;
  if (s == "stripe_orientation") return SynthKind::stripe_orientation;
  throw ConfigError("unknown synthetic dataset '" + std::string(name) +
                    "' (valid: two_gaussians_patches, stripe_orientation)");
}

std::string_view to_string(SynthKind kind) noexcept {
  return kind == SynthKind::two_gaussians_patches ? "two_gaussians_patches" : "stripe_orientation";
}

Dataset synth_dataset(SynthKind kind, std::size_t n, std::size_t grid, std::uint64_t seed) {
  if (n < 2) throw ConfigError("synthetic dataset needs n >= 2");
  if (grid == 0) throw ConfigError("synthetic grid must be positive");
  if (kind == SynthKind::stripe_orientation && grid % 4 != 0) {
    throw ConfigError("stripe_orientation grid must be a multiple of 4, got " + std::to_string(grid));
  }
  Rng rng(seed);
  Dataset d;
  d.images = Tensor::zeros({n, 1, grid, grid});
  d.labels.resize(n);
  d.num_classes = 2;
  d.split = "synthetic";
  auto px = d.images.data();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t label = i % 2;
    d.labels[i] = label;
    double* img = px.data() + i * grid * grid;
    if (kind == SynthKind::two_gaussians_patches) {
      const double mu = label == 0 ? -0.5 : 0.5;
      for (std::size_t j = 0; j < grid * grid; ++j) img[j] = mu + rng.normal();
      continue;
    }
    const std::size_t thickness = 1 + rng.below(2);
    const std::size_t phase = rng.below(2 * thickness);
    const double amplitude = rng.uniform(0.5, 1.0);
    const double offset = rng.uniform(-0.5, 0.5);
    for (std::size_t r = 0; r < grid; ++r) {
      for (std::size_t c = 0; c < grid; ++c) {
        const std::size_t t = label == 0 ? r : c;
        const double sign = ((t + phase) / thickness) % 2 == 0 ? 1.0 : -1.0;
        img[r * grid + c] = offset + amplitude * sign + 0.1 * rng.normal();
      }
    }
  }
  return d;
}

std::vector<double> pooled_means(const Dataset& d) {
  const std::size_t m = d.size(), stride = d.images.numel() / std::max<std::size_t>(m, 1);
  std::vector<double> out(m, 0.0);
  const auto px = d.images.data();
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < stride; ++j) s += px[i * stride + j];
    out[i] = s / static_cast<double>(stride);
  }
  return out;
}

}  // namespace ska
