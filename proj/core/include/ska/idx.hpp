// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ska/data.hpp"

namespace ska {

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

/// Unsigned-byte IDX image file -> [M, 1, rows, cols] scaled to [0, 1].
Tensor read_idx_images(const std::string& path);
std::vector<std::size_t> read_idx_labels(const std::string& path);

/// Pairs an image file with a label file. `num_classes` of 0 means
/// max(label) + 1.
Dataset load_idx(const std::string& images_path, const std::string& labels_path, std::string split = "idx",
                 std::size_t num_classes = 0);

/// Writes pixels [M, rows, cols] (or [M, 1, rows, cols]) in [0, 1] as bytes.
void write_idx_images(const std::string& path, const Tensor& images);
void write_idx_labels(const std::string& path, std::span<const std::size_t> labels);

}  // namespace ska
