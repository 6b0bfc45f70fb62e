#include "pqlab/io_util.hpp"

#include <cstring>
#include <stdexcept>

namespace pqlab::io {

namespace {

void write_bytes(std::ostream& os, const unsigned char* p, std::size_t n) {
  os.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void read_bytes(std::istream& is, unsigned char* p, std::size_t n,
                const std::string& what) {
  is.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n) {
    throw std::runtime_error(what + ": truncated file");
  }
}

}  // namespace

void write_u8(std::ostream& os, std::uint8_t v) { write_bytes(os, &v, 1); }

void write_u16(std::ostream& os, std::uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v & 0xFF),
                        static_cast<unsigned char>(v >> 8)};
  write_bytes(os, b, 2);
}

void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  write_bytes(os, b, 4);
}

void write_i32(std::ostream& os, std::int32_t v) {
  write_u32(os, static_cast<std::uint32_t>(v));
}

void write_f32(std::ostream& os, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  write_u32(os, bits);
}

void write_magic(std::ostream& os, const char magic[4]) {
  os.write(magic, 4);
}

std::uint8_t read_u8(std::istream& is, const std::string& what) {
  unsigned char b;
  read_bytes(is, &b, 1, what);
  return b;
}

std::uint16_t read_u16(std::istream& is, const std::string& what) {
  unsigned char b[2];
  read_bytes(is, b, 2, what);
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint32_t read_u32(std::istream& is, const std::string& what) {
  unsigned char b[4];
  read_bytes(is, b, 4, what);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::int32_t read_i32(std::istream& is, const std::string& what) {
  return static_cast<std::int32_t>(read_u32(is, what));
}

float read_f32(std::istream& is, const std::string& what) {
  const std::uint32_t bits = read_u32(is, what);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

void expect_magic(std::istream& is, const char magic[4],
                  const std::string& what) {
  char got[4];
  is.read(got, 4);
  if (is.gcount() != 4 || std::memcmp(got, magic, 4) != 0) {
    throw std::runtime_error(what + ": bad magic, expected '" +
                             std::string(magic, 4) + "'");
  }
}

}  // namespace pqlab::io
