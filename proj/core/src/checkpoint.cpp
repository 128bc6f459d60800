// SPDX-License-Identifier: Apache-2.0
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "ska/former.hpp"

namespace ska {

namespace {

constexpr char kMagic[4] = {'S', 'K', 'A', 'F'};

template <typename T>
void put(std::string& out, T value) {
  static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  out.append(bytes, sizeof(T));
}

class Reader {
 public:
  Reader(const std::string& bytes, const std::string& path) : bytes_(bytes), path_(path) {}

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string text(std::size_t n, const char* what) {
    need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  void doubles(std::span<double> out, const char* what) {
    need(out.size() * sizeof(double), what);
    std::memcpy(out.data(), bytes_.data() + pos_, out.size() * sizeof(double));
    pos_ += out.size() * sizeof(double);
  }

  bool done() const noexcept { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw CheckpointError("corrupt checkpoint '" + path_ + "': truncated while reading " + what + " at byte " +
                            std::to_string(pos_) + " of " + std::to_string(bytes_.size()));
    }
  }

  const std::string& bytes_;
  const std::string& path_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::string& path, const Model& model, std::uint64_t step) {
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  const std::string config = model.config().to_json();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(config.size()));
  out += config;
  put<std::uint64_t>(out, model.seed());
  put<std::uint64_t>(out, step);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(model.parameters().size()));
  for (const auto& p : model.parameters()) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p->name.size()));
    out += p->name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p->value.rank()));
    for (std::size_t d : p->value.shape()) put<std::uint64_t>(out, d);
    for (double v : p->value.data()) put<double>(out, v);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw CheckpointError("cannot open '" + path + "' for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw CheckpointError("failed writing checkpoint '" + path + "'");
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open checkpoint '" + path + "'");
  const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  Reader r(bytes, path);
  if (r.text(4, "magic") != std::string(kMagic, 4)) {
    throw CheckpointError("'" + path + "' is not a checkpoint (bad magic)");
  }
  Checkpoint ck;
  ck.version = r.get<std::uint32_t>("version");
  if (ck.version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(ck.version) + " in '" + path +
                          "' (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  ck.config_text = r.text(r.get<std::uint32_t>("config length"), "config");
  ck.seed = r.get<std::uint64_t>("seed");
  ck.step = r.get<std::uint64_t>("step");
  const auto count = r.get<std::uint32_t>("parameter count");
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.text(r.get<std::uint32_t>("name length"), "parameter name");
    const auto rank = r.get<std::uint32_t>("rank");
    Shape shape(rank);
    for (auto& d : shape) {
      d = r.get<std::uint64_t>("shape");
      if (d == 0) throw CheckpointError("corrupt checkpoint '" + path + "': zero extent in '" + name + "'");
    }
    Tensor t = Tensor::zeros(shape);
    r.doubles(t.data(), "parameter data");
    ck.parameters.emplace_back(std::move(name), std::move(t));
  }
  if (!r.done()) throw CheckpointError("corrupt checkpoint '" + path + "': trailing bytes");
  return ck;
}

Checkpoint load_checkpoint(const std::string& path, Model& model) {
  Checkpoint ck = read_checkpoint(path);
  ModelConfig stored;
  try {
    stored = ModelConfig::from_json(ck.config_text);
  } catch (const ConfigError& e) {
    throw CheckpointError("corrupt checkpoint '" + path + "': " + e.what());
  }
  const auto fields = model.config().diff(stored);
  if (!fields.empty()) {
    std::string list;
    for (const auto& f : fields) list += (list.empty() ? "" : ", ") + f;
    throw CheckpointError("checkpoint '" + path + "' config mismatch in: " + list);
  }
  ParameterStore& store = model.parameters();
  std::size_t matched = 0;
  for (auto& [name, value] : ck.parameters) {
    Parameter* p = store.find(name);
    if (!p) throw CheckpointError("checkpoint '" + path + "' has unknown parameter '" + name + "'");
    if (p->value.shape() != value.shape()) {
      throw CheckpointError("checkpoint '" + path + "' parameter '" + name + "' has shape " +
                            shape_string(value.shape()) + ", model expects " + shape_string(p->value.shape()));
    }
    ++matched;
  }
  if (matched != store.size()) {
    for (const auto& p : store) {
      bool found = false;
      for (const auto& entry : ck.parameters) found = found || entry.first == p->name;
      if (!found) throw CheckpointError("checkpoint '" + path + "' is missing parameter '" + p->name + "'");
    }
  }
  for (auto& [name, value] : ck.parameters) store.get(name).value = value;
  return ck;
}

std::unique_ptr<Model> model_from_checkpoint(const std::string& path) {
  Checkpoint ck = read_checkpoint(path);
  ModelConfig cfg;
  try {
    cfg = ModelConfig::from_json(ck.config_text);
  } catch (const ConfigError& e) {
    throw CheckpointError("corrupt checkpoint '" + path + "': " + e.what());
  }
  auto model = std::make_unique<Model>(cfg, ck.seed);
  load_checkpoint(path, *model);
  return model;
}

}  // namespace ska
