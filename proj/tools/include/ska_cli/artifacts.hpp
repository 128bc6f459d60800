// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace ska::cli {

/// Output directory that records every file written into manifest.txt.
class Artifacts {
 public:
  explicit Artifacts(std::filesystem::path dir);

  const std::filesystem::path& dir() const noexcept { return dir_; }
  /// Full path for `name`, registered in the manifest.
  std::string path(const std::string& name);
  void write_text(const std::string& name, const std::string& text);
  /// Writes manifest.txt: one `name<TAB>bytes` line per artifact.
  void finish() const;

 private:
  std::filesystem::path dir_;
  std::vector<std::string> names_;
};

}  // namespace ska::cli
