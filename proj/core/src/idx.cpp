// SPDX-License-Identifier: Apache-2.0
#include "ska/idx.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>

#include <fmt/format.h>

namespace ska {

namespace {

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open IDX file '" + path + "'");
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::string& bytes, std::size_t at, const std::string& path) {
  if (bytes.size() < at + 4) {
    throw FormatError("IDX file '" + path + "' is truncated: header needs " + std::to_string(at + 4) +
                      " bytes, file has " + std::to_string(bytes.size()));
  }
  std::uint32_t v = 0;
  for (std::size_t i = 0; i < 4; ++i) v = (v << 8) | static_cast<unsigned char>(bytes[at + i]);
  return v;
}

void put_be32(std::string& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<char>((v >> s) & 0xFF));
}

struct Header {
  std::vector<std::size_t> dims;
  std::size_t payload_offset;
};

Header header(const std::string& bytes, const std::string& path, std::uint32_t expected, std::size_t rank) {
  const std::uint32_t magic = be32(bytes, 0, path);
  if (magic != expected) {
    throw FormatError(fmt::format("IDX file '{}' has magic 0x{:08x}, expected 0x{:08x}", path, magic, expected));
  }
  Header h{{}, 4 + 4 * rank};
  for (std::size_t i = 0; i < rank; ++i) h.dims.push_back(be32(bytes, 4 + 4 * i, path));
  std::size_t payload = 1;
  for (std::size_t d : h.dims) payload *= d;
  if (bytes.size() < h.payload_offset + payload) {
    throw FormatError("IDX file '" + path + "' is truncated: payload needs " + std::to_string(payload) +
                      " bytes, found " + std::to_string(bytes.size() - h.payload_offset));
  }
  return h;
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError("cannot open '" + path + "' for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw FormatError("failed writing '" + path + "'");
}

}  // namespace

Tensor read_idx_images(const std::string& path) {
  const std::string bytes = slurp(path);
  const Header h = header(bytes, path, kIdxImagesMagic, 3);
  if (h.dims[0] == 0 || h.dims[1] == 0 || h.dims[2] == 0) {
    throw FormatError("IDX file '" + path + "' has a zero extent");
  }
  Tensor t = Tensor::zeros({h.dims[0], 1, h.dims[1], h.dims[2]});
  auto px = t.data();
  for (std::size_t i = 0; i < px.size(); ++i) {
    px[i] = static_cast<unsigned char>(bytes[h.payload_offset + i]) / 255.0;
  }
  return t;
}

std::vector<std::size_t> read_idx_labels(const std::string& path) {
  const std::string bytes = slurp(path);
  const Header h = header(bytes, path, kIdxLabelsMagic, 1);
  std::vector<std::size_t> labels(h.dims[0]);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    labels[i] = static_cast<unsigned char>(bytes[h.payload_offset + i]);
  }
  return labels;
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path, std::string split,
                 std::size_t num_classes) {
  Dataset d;
  d.images = read_idx_images(images_path);
  d.labels = read_idx_labels(labels_path);
  if (d.images.dim(0) != d.labels.size()) {
    throw FormatError("IDX image/label count mismatch: '" + images_path + "' has " +
                      std::to_string(d.images.dim(0)) + " images, '" + labels_path + "' has " +
                      std::to_string(d.labels.size()) + " labels");
  }
  if (d.labels.empty()) throw FormatError("IDX label file '" + labels_path + "' has no entries");
  d.num_classes = num_classes ? num_classes : *std::max_element(d.labels.begin(), d.labels.end()) + 1;
  d.split = std::move(split);
  d.validate();
  return d;
}

void write_idx_images(const std::string& path, const Tensor& images) {
  Shape s = images.shape();
  if (s.size() == 4 && s[1] == 1) s = {s[0], s[2], s[3]};
  if (s.size() != 3) throw DimensionError("IDX images must be [M, rows, cols], got " + shape_string(images.shape()));
  std::string out;
  put_be32(out, kIdxImagesMagic);
  for (std::size_t d : s) put_be32(out, static_cast<std::uint32_t>(d));
  for (double v : images.data()) {
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0))));
  }
  write_file(path, out);
}

void write_idx_labels(const std::string& path, std::span<const std::size_t> labels) {
  std::string out;
  put_be32(out, kIdxLabelsMagic);
  put_be32(out, static_cast<std::uint32_t>(labels.size()));
  for (std::size_t l : labels) {
    if (l > 255) throw ConfigError("IDX labels must fit in a byte, got " + std::to_string(l));
    out.push_back(static_cast<char>(l));
  }
  write_file(path, out);
}

}  // namespace ska
