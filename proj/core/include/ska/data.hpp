// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ska/rng.hpp"
#include "ska/tensor.hpp"

namespace ska {

struct Dataset {
  Tensor images;  ///< [M, C, H, W]
  std::vector<std::size_t> labels;
  std::size_t num_classes = 2;
  std::string split;

  std::size_t size() const noexcept { return labels.size(); }
  /// Checks M == label count and every label < num_classes.
  void validate() const;
  /// Images [len(indices), C, H, W] and labels for the given rows.
  Tensor gather(std::span<const std::size_t> indices) const;
  std::vector<std::size_t> gather_labels(std::span<const std::size_t> indices) const;
  /// Rows [start, start + count) as a new dataset.
  Dataset subset(std::size_t start, std::size_t count) const;
};

enum class SynthKind { two_gaussians_patches, stripe_orientation };
SynthKind parse_synth_kind(std::string_view name);
std::string_view to_string(SynthKind kind) noexcept;

/// Balanced two-class image sets of size grid x grid with one channel.
///
/// two_gaussians_patches: every pixel ~ N(-0.5, 1) for class 0 and
///   N(+0.5, 1) for class 1.
/// stripe_orientation: class 0 horizontal, class 1 vertical stripes with a
///   random thickness (1 or 2 pixels), phase, amplitude and offset plus
///   N(0, 0.1^2) noise. Every stripe pattern covers the same number of high
///   and low pixels, so the global mean is class-independent. `grid` must be
///   a multiple of 4.
///
/// Labels alternate 0, 1, 0, ... so any prefix is balanced.
Dataset synth_dataset(SynthKind kind, std::size_t n, std::size_t grid, std::uint64_t seed);

/// Per-image global mean, [M].
std::vector<double> pooled_means(const Dataset& d);

}  // namespace ska
