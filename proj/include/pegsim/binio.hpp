#pragma once

// Little-endian binary IO helpers for the PGT1/PGD1 file formats.

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace pegsim::binio {

inline void write_bytes(std::ostream& os, const void* p, std::size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <typename T>
void write_le(std::ostream& os, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  // Host is little-endian on every platform we target; keep the copy explicit
  // so the format is pinned regardless.
  write_bytes(os, buf, sizeof(T));
}

inline void write_u32(std::ostream& os, std::uint32_t v) { write_le(os, v); }
inline void write_u64(std::ostream& os, std::uint64_t v) { write_le(os, v); }
inline void write_f64(std::ostream& os, double v) { write_le(os, v); }

template <typename T>
bool read_le(std::istream& is, T& v) {
  unsigned char buf[sizeof(T)];
  is.read(reinterpret_cast<char*>(buf), sizeof(T));
  if (!is) return false;
  std::memcpy(&v, buf, sizeof(T));
  return true;
}

template <typename T>
T read_le_or_throw(std::istream& is, const std::string& what) {
  T v;
  if (!read_le(is, v)) throw std::runtime_error("truncated read: " + what);
  return v;
}

inline void write_magic(std::ostream& os, const char magic[4]) {
  write_bytes(os, magic, 4);
}

inline void expect_magic(std::istream& is, const char magic[4],
                         const std::string& what) {
  char buf[4];
  is.read(buf, 4);
  if (!is || std::memcmp(buf, magic, 4) != 0)
    throw std::runtime_error("bad magic in " + what);
}

template <typename T>
void write_array(std::ostream& os, const T* data, std::size_t count) {
  for (std::size_t i = 0; i < count; ++i) write_le(os, data[i]);
}

template <typename T>
void read_array(std::istream& is, T* data, std::size_t count,
                const std::string& what) {
  for (std::size_t i = 0; i < count; ++i)
    data[i] = read_le_or_throw<T>(is, what);
}

}  // namespace pegsim::binio
