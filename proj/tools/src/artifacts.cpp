// SPDX-License-Identifier: Apache-2.0
#include "ska_cli/artifacts.hpp"

#include <algorithm>
#include <fstream>

#include "ska/errors.hpp"

namespace ska::cli {

Artifacts::Artifacts(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  if (ec || !std::filesystem::is_directory(dir_)) {
    throw ConfigError("cannot create output directory '" + dir_.string() + "'");
  }
}

std::string Artifacts::path(const std::string& name) {
  if (std::find(names_.begin(), names_.end(), name) == names_.end()) names_.push_back(name);
  return (dir_ / name).string();
}

void Artifacts::write_text(const std::string& name, const std::string& text) {
  const std::string p = path(name);
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw ConfigError("cannot open '" + p + "' for writing");
  f << text;
  if (!f) throw ConfigError("failed writing '" + p + "'");
}

void Artifacts::finish() const {
  std::ofstream f(dir_ / "manifest.txt", std::ios::binary | std::ios::trunc);
  if (!f) throw ConfigError("cannot write manifest in '" + dir_.string() + "'");
  for (const auto& name : names_) {
    std::error_code ec;
    const auto bytes = std::filesystem::file_size(dir_ / name, ec);
    f << name << '\t' << (ec ? 0 : bytes) << '\n';
  }
}

}  // namespace ska::cli
