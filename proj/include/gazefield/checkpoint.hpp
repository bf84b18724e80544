#pragma once

// Versioned binary checkpoint: config snapshot, all named parameters,
// optimizer moments and RNG states. Serialization is fully deterministic
// so save -> load -> save round-trips bitwise.

#include <cstring>
#include <fstream>
#include <map>

#include "gazefield/model.hpp"

namespace gazefield {

struct CheckpointExtras {
  int64_t step = 0;
  int64_t adam_step = 0;
  std::vector<Tensor<double>> adam_m, adam_v;  // parallel to trainable params
  std::map<std::string, std::string> rng_states;
};

namespace detail {

inline void write_u64(std::ostream& os, uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }
inline uint64_t read_u64(std::istream& is) {
  uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 8);
  return v;
}
inline void write_str(std::ostream& os, const std::string& s) {
  write_u64(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}
inline std::string read_str(std::istream& is) {
  std::string s(read_u64(is), '\0');
  is.read(s.data(), static_cast<std::streamsize>(s.size()));
  return s;
}

template <class T>
void write_tensor(std::ostream& os, const Tensor<T>& t) {
  write_u64(os, static_cast<uint64_t>(t.rank()));
  for (int i = 0; i < t.rank(); ++i) write_u64(os, static_cast<uint64_t>(t.dim(i)));
  os.write(reinterpret_cast<const char*>(t.data()),
           static_cast<std::streamsize>(t.size() * sizeof(T)));
}

template <class T>
Tensor<T> read_tensor(std::istream& is) {
  std::vector<int64_t> shape(read_u64(is));
  for (auto& d : shape) d = static_cast<int64_t>(read_u64(is));
  Tensor<T> t(shape);
  is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(T)));
  return t;
}

}  // namespace detail

inline constexpr char kCheckpointMagic[4] = {'G', 'F', 'C', 'K'};
inline constexpr uint32_t kCheckpointVersion = 1;

template <class T>
void save_checkpoint(const std::string& path, const GazeModel<T>& model,
                     const CheckpointExtras& extras) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write checkpoint: " + path);
  f.write(kCheckpointMagic, 4);
  f.write(reinterpret_cast<const char*>(&kCheckpointVersion), 4);
  uint32_t scalar_size = sizeof(T);
  f.write(reinterpret_cast<const char*>(&scalar_size), 4);
  detail::write_str(f, model.config().serialize());
  detail::write_u64(f, static_cast<uint64_t>(extras.step));
  detail::write_u64(f, static_cast<uint64_t>(extras.adam_step));
  detail::write_u64(f, model.params().items.size());
  for (const auto& [name, v] : model.params().items) {
    detail::write_str(f, name);
    detail::write_tensor(f, v.val());
  }
  detail::write_u64(f, extras.adam_m.size());
  for (size_t i = 0; i < extras.adam_m.size(); ++i) {
    detail::write_tensor(f, extras.adam_m[i]);
    detail::write_tensor(f, extras.adam_v[i]);
  }
  detail::write_u64(f, extras.rng_states.size());
  for (const auto& [k, v] : extras.rng_states) {
    detail::write_str(f, k);
    detail::write_str(f, v);
  }
}

template <class T>
GazeModel<T> load_checkpoint(const std::string& path, CheckpointExtras* extras = nullptr) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read checkpoint: " + path);
  char magic[4];
  uint32_t version = 0, scalar_size = 0;
  f.read(magic, 4);
  f.read(reinterpret_cast<char*>(&version), 4);
  f.read(reinterpret_cast<char*>(&scalar_size), 4);
  if (!f || std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw std::runtime_error("not a checkpoint file: " + path);
  if (version != kCheckpointVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  if (scalar_size != sizeof(T))
    throw std::runtime_error("checkpoint scalar width mismatch");
  Config cfg = Config::from_string(detail::read_str(f));
  GazeModel<T> model(cfg);
  int64_t step = static_cast<int64_t>(detail::read_u64(f));
  int64_t adam_step = static_cast<int64_t>(detail::read_u64(f));
  uint64_t n_params = detail::read_u64(f);
  if (n_params != model.params().items.size())
    throw std::runtime_error("checkpoint parameter count mismatch");
  for (auto& [name, v] : model.params().items) {
    std::string stored = detail::read_str(f);
    if (stored != name) throw std::runtime_error("checkpoint parameter order mismatch: " + stored);
    Tensor<T> t = detail::read_tensor<T>(f);
    if (!t.same_shape(v.val())) throw std::runtime_error("checkpoint shape mismatch: " + name);
    v.val() = std::move(t);
  }
  CheckpointExtras ex;
  ex.step = step;
  ex.adam_step = adam_step;
  uint64_t n_moments = detail::read_u64(f);
  for (uint64_t i = 0; i < n_moments; ++i) {
    ex.adam_m.push_back(detail::read_tensor<double>(f));
    ex.adam_v.push_back(detail::read_tensor<double>(f));
  }
  uint64_t n_rng = detail::read_u64(f);
  for (uint64_t i = 0; i < n_rng; ++i) {
    std::string k = detail::read_str(f);
    ex.rng_states[k] = detail::read_str(f);
  }
  if (!f) throw std::runtime_error("truncated checkpoint: " + path);
  if (extras) *extras = std::move(ex);
  return model;
}

}  // namespace gazefield
