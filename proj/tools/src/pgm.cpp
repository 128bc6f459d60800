// SPDX-License-Identifier: Apache-2.0
#include "ska_cli/pgm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <vector>

namespace ska::cli {

namespace {

class PgmReader {
 public:
  PgmReader(std::vector<unsigned char> bytes, std::string path) : bytes_(std::move(bytes)), path_(std::move(path)) {}

  std::size_t number() {
    skip_space();
    std::size_t v = 0;
    bool any = false;
    while (pos_ < bytes_.size() && bytes_[pos_] >= '0' && bytes_[pos_] <= '9') {
      v = v * 10 + (bytes_[pos_++] - '0');
      any = true;
    }
    if (!any) throw FormatError("PGM '" + path_ + "' has a malformed header or pixel value");
    return v;
  }

  std::string magic() {
    if (bytes_.size() < 2) throw FormatError("PGM '" + path_ + "' is truncated");
    pos_ = 2;
    return {bytes_.begin(), bytes_.begin() + 2};
  }

  unsigned byte_at_payload(std::size_t i, std::size_t width) const {
    const std::size_t at = pos_ + i * width;
    if (at + width > bytes_.size()) throw FormatError("PGM '" + path_ + "' is truncated");
    return width == 1 ? bytes_[at] : (bytes_[at] << 8 | bytes_[at + 1]);
  }

  void single_whitespace() { ++pos_; }

 private:
  void skip_space() {
    while (pos_ < bytes_.size()) {
      if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::vector<unsigned char> bytes_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace

Tensor read_pgm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open image '" + path + "'");
  PgmReader r({std::istreambuf_iterator<char>(f), {}}, path);
  const std::string magic = r.magic();
  if (magic != "P5" && magic != "P2") throw FormatError("'" + path + "' is not a PGM (magic " + magic + ")");
  const std::size_t w = r.number(), h = r.number(), maxval = r.number();
  if (w == 0 || h == 0 || maxval == 0 || maxval > 65535) throw FormatError("PGM '" + path + "' has a bad header");
  Tensor img({1, 1, h, w});
  if (magic == "P5") {
    r.single_whitespace();
    const std::size_t width = maxval > 255 ? 2 : 1;
    for (std::size_t i = 0; i < w * h; ++i) img[i] = r.byte_at_payload(i, width) / static_cast<double>(maxval);
  } else {
    for (std::size_t i = 0; i < w * h; ++i) img[i] = static_cast<double>(r.number()) / static_cast<double>(maxval);
  }
  for (double v : img.data()) {
    if (v > 1.0) throw FormatError("PGM '" + path + "' has a pixel above maxval");
  }
  return img;
}

void write_pgm(const std::string& path, const Tensor& map) {
  if (map.rank() != 2) throw DimensionError("PGM output needs a 2-D map, got " + shape_string(map.shape()));
  const auto v = map.data();
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const double span = *hi - *lo;
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open '" + path + "' for writing");
  f << "P5\n" << map.dim(1) << ' ' << map.dim(0) << "\n255\n";
  for (double x : v) {
    const double t = span > 0.0 ? (x - *lo) / span : 0.0;
    f.put(static_cast<char>(static_cast<unsigned char>(std::lround(t * 255.0))));
  }
  if (!f) throw FormatError("failed writing '" + path + "'");
}

}  // namespace ska::cli
