#include "ocnopt/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "ocnopt/errors.hpp"

namespace ocnopt {

namespace {

constexpr char kMagic[4] = {'O', 'C', 'N', 'O'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& os, double v) {
  std::uint64_t bits;
  static_assert(sizeof(bits) == sizeof(v));
  std::memcpy(&bits, &v, sizeof(bits));
  put_u64(os, bits);
}

void put_str(std::ostream& os, const std::string& s) {
  put_u64(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw parse_error("checkpoint: truncated file");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(b[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8))
    throw parse_error("checkpoint: truncated file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& is) {
  const std::uint64_t bits = get_u64(is);
  double v;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

std::string get_str(std::istream& is) {
  const std::uint64_t len = get_u64(is);
  if (len > (std::uint64_t(1) << 32))
    throw parse_error("checkpoint: implausible string length");
  std::string s(static_cast<size_t>(len), '\0');
  if (len > 0 && !is.read(s.data(), static_cast<std::streamsize>(len)))
    throw parse_error("checkpoint: truncated file");
  return s;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw parse_error("checkpoint: cannot open '" + path + "'");
  os.write(kMagic, 4);
  put_u32(os, kVersion);
  put_u64(os, ck.step);
  put_u64(os, ck.epoch);
  put_f64(os, ck.ode_horizon);
  put_u32(os, static_cast<std::uint32_t>(ck.params.size()));
  for (const Vec& p : ck.params) put_u64(os, static_cast<std::uint64_t>(p.size()));
  for (const Vec& p : ck.params)
    for (Index i = 0; i < p.size(); ++i) put_f64(os, p[i]);
  put_str(os, ck.rng_state);
  put_str(os, ck.optimizer_state);
  put_str(os, ck.extra);
  if (!os) throw parse_error("checkpoint: write failed for '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw parse_error("checkpoint: cannot open '" + path + "'");
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw parse_error("checkpoint: bad magic in '" + path + "'");
  Checkpoint ck;
  ck.version = get_u32(is);
  if (ck.version != kVersion)
    throw parse_error("checkpoint: unsupported version " +
                      std::to_string(ck.version));
  ck.step = get_u64(is);
  ck.epoch = get_u64(is);
  ck.ode_horizon = get_f64(is);
  const std::uint32_t n_layers = get_u32(is);
  std::vector<std::uint64_t> sizes(n_layers);
  for (auto& s : sizes) s = get_u64(is);
  ck.params.resize(n_layers);
  for (std::uint32_t k = 0; k < n_layers; ++k) {
    ck.params[k].resize(static_cast<Index>(sizes[k]));
    for (Index i = 0; i < ck.params[k].size(); ++i)
      ck.params[k][i] = get_f64(is);
  }
  ck.rng_state = get_str(is);
  ck.optimizer_state = get_str(is);
  ck.extra = get_str(is);
  return ck;
}

}  // namespace ocnopt
