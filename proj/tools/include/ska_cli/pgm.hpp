// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "ska/tensor.hpp"

namespace ska::cli {

/// Reads a binary (P5) or plain (P2) PGM as [1, 1, H, W] scaled to [0, 1].
Tensor read_pgm(const std::string& path);

/// Writes a 2-D tensor as an 8-bit P5 PGM, min-max normalised. A constant
/// map becomes a single gray level (0).
void write_pgm(const std::string& path, const Tensor& map);

}  // namespace ska::cli
