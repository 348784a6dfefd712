#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>

#include "grpo.hpp"
#include "net.hpp"

namespace editgrpo {

// Versioned binary checkpoint; doubles are written raw so round-trips are
// bit-exact.
struct Checkpoint {
  NetParams params;
  bool has_ema = false;
  NetParams ema;
  bool has_optimizer = false;
  NetParams opt_m, opt_v;
  long opt_step = 0;
  uint64_t rng_seed = 0;
  uint64_t rng_counter = 0;
  uint64_t training_step = 0;
};

namespace detail {

constexpr uint32_t kCheckpointMagic = 0x45475231;  // "EGR1"
constexpr uint32_t kCheckpointVersion = 1;

template <typename T>
void write_scalar(std::ostream& f, T v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_scalar(std::istream& f) {
  T v{};
  f.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!f) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

inline void write_doubles(std::ostream& f, const std::vector<double>& v) {
  write_scalar<uint64_t>(f, v.size());
  f.write(reinterpret_cast<const char*>(v.data()),
          static_cast<std::streamsize>(v.size() * sizeof(double)));
}

inline std::vector<double> read_doubles(std::istream& f) {
  auto n = read_scalar<uint64_t>(f);
  std::vector<double> v(n);
  f.read(reinterpret_cast<char*>(v.data()),
         static_cast<std::streamsize>(n * sizeof(double)));
  if (!f) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

inline void write_arch(std::ostream& f, const Arch& a) {
  write_scalar<int32_t>(f, a.image_h);
  write_scalar<int32_t>(f, a.image_w);
  write_scalar<int32_t>(f, a.image_c);
  write_scalar<int32_t>(f, a.time_embed_k);
  write_scalar<int32_t>(f, a.condition_dim);
  write_scalar<int32_t>(f, static_cast<int32_t>(a.hidden.size()));
  for (int h : a.hidden) write_scalar<int32_t>(f, h);
  write_scalar<int32_t>(f, a.spatial_maps);
  write_scalar<int32_t>(f, a.paint_hidden);
  write_scalar<int32_t>(f, static_cast<int32_t>(a.cond_rbf.size()));
  for (const auto& r : a.cond_rbf) {
    write_scalar<int32_t>(f, r.index);
    write_scalar<int32_t>(f, r.centers);
    write_scalar<double>(f, r.lo);
    write_scalar<double>(f, r.hi);
  }
}

inline Arch read_arch(std::istream& f) {
  Arch a;
  a.image_h = read_scalar<int32_t>(f);
  a.image_w = read_scalar<int32_t>(f);
  a.image_c = read_scalar<int32_t>(f);
  a.time_embed_k = read_scalar<int32_t>(f);
  a.condition_dim = read_scalar<int32_t>(f);
  int n = read_scalar<int32_t>(f);
  a.hidden.resize(n);
  for (int i = 0; i < n; ++i) a.hidden[i] = read_scalar<int32_t>(f);
  a.spatial_maps = read_scalar<int32_t>(f);
  a.paint_hidden = read_scalar<int32_t>(f);
  int nr = read_scalar<int32_t>(f);
  a.cond_rbf.resize(nr);
  for (auto& r : a.cond_rbf) {
    r.index = read_scalar<int32_t>(f);
    r.centers = read_scalar<int32_t>(f);
    r.lo = read_scalar<double>(f);
    r.hi = read_scalar<double>(f);
  }
  a.validate();
  return a;
}

inline void write_params(std::ostream& f, const NetParams& p) {
  write_doubles(f, p.flatten());
}

inline NetParams read_params(std::istream& f, const Arch& arch) {
  RngState dummy(0, 0);
  NetParams p = init_params(dummy, arch);
  p.unflatten(read_doubles(f));
  return p;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_checkpoint: cannot open " + path);
  detail::write_scalar(f, detail::kCheckpointMagic);
  detail::write_scalar(f, detail::kCheckpointVersion);
  detail::write_arch(f, ck.params.arch);
  detail::write_params(f, ck.params);
  detail::write_scalar<uint8_t>(f, ck.has_ema ? 1 : 0);
  if (ck.has_ema) detail::write_params(f, ck.ema);
  detail::write_scalar<uint8_t>(f, ck.has_optimizer ? 1 : 0);
  if (ck.has_optimizer) {
    detail::write_params(f, ck.opt_m);
    detail::write_params(f, ck.opt_v);
    detail::write_scalar<int64_t>(f, ck.opt_step);
  }
  detail::write_scalar<uint64_t>(f, ck.rng_seed);
  detail::write_scalar<uint64_t>(f, ck.rng_counter);
  detail::write_scalar<uint64_t>(f, ck.training_step);
  if (!f) throw std::runtime_error("save_checkpoint: write failed " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_checkpoint: cannot open " + path);
  if (detail::read_scalar<uint32_t>(f) != detail::kCheckpointMagic)
    throw std::runtime_error("load_checkpoint: bad magic in " + path);
  if (detail::read_scalar<uint32_t>(f) != detail::kCheckpointVersion)
    throw std::runtime_error("load_checkpoint: unsupported version in " + path);
  Checkpoint ck;
  Arch arch = detail::read_arch(f);
  ck.params = detail::read_params(f, arch);
  ck.has_ema = detail::read_scalar<uint8_t>(f) != 0;
  if (ck.has_ema) ck.ema = detail::read_params(f, arch);
  ck.has_optimizer = detail::read_scalar<uint8_t>(f) != 0;
  if (ck.has_optimizer) {
    ck.opt_m = detail::read_params(f, arch);
    ck.opt_v = detail::read_params(f, arch);
    ck.opt_step = detail::read_scalar<int64_t>(f);
  }
  ck.rng_seed = detail::read_scalar<uint64_t>(f);
  ck.rng_counter = detail::read_scalar<uint64_t>(f);
  ck.training_step = detail::read_scalar<uint64_t>(f);
  return ck;
}

}  // namespace editgrpo
