// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <unistd.h>

#include "ska/autodiff.hpp"
#include "ska/gradcheck.hpp"
#include "ska/mixers.hpp"

namespace ska_test {

inline ska::Tensor randn(ska::Shape shape, std::uint64_t seed, double scale = 1.0) {
  ska::Rng rng(seed);
  return ska::scale(ska::rng_normal(rng, std::move(shape)), scale);
}

/// sum(out * weights): a scalar whose gradient w.r.t. `out` is `weights`.
inline ska::Var weighted_sum(ska::Var out, const ska::Tensor& weights) {
  return ska::ad::sum(ska::ad::mul(out, out.tape->constant(weights)));
}

inline ska::MixerConfig mixer_cfg(ska::MixerKind kind, std::size_t n, std::size_t d, std::size_t h) {
  ska::MixerConfig c;
  c.kind = kind;
  c.tokens = n;
  c.dim = d;
  c.heads = h;
  return c;
}

/// A mixer together with the store that owns its parameters.
struct MixerFixture {
  ska::ParameterStore store;
  std::unique_ptr<ska::Mixer> mixer;

  MixerFixture(const ska::MixerConfig& cfg, std::uint64_t seed, std::string prefix = "m") {
    ska::Rng rng(seed);
    mixer = std::make_unique<ska::Mixer>(cfg, store, std::move(prefix), rng);
  }
  ska::Tensor& value(const std::string& local) { return mixer->param(local).value; }
};

/// grad_check on sum(mixer(x) * R) for fixed random x and R.
inline ska::GradCheckReport check_mixer(MixerFixture& f, std::size_t batch, std::uint64_t seed,
                                        const ska::GradCheckOptions& opts = {}) {
  const auto& cfg = f.mixer->config();
  const ska::Tensor x = randn({batch, cfg.total_tokens(), cfg.dim}, seed + 101);
  const ska::Tensor r = randn({batch, cfg.total_tokens(), cfg.dim}, seed + 202);
  return ska::grad_check(
      [&](ska::Tape& t) { return weighted_sum(f.mixer->forward(t, t.constant(x)), r); }, f.store, opts);
}

/// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("ska_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace ska_test
