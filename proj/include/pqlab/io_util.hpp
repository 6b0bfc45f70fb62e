#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

namespace pqlab::io {

// Little-endian primitive readers/writers shared by the binary file formats.
// Streams are opened in binary mode by the callers.

void write_u8(std::ostream& os, std::uint8_t v);
void write_u16(std::ostream& os, std::uint16_t v);
void write_u32(std::ostream& os, std::uint32_t v);
void write_i32(std::ostream& os, std::int32_t v);
void write_f32(std::ostream& os, float v);
void write_magic(std::ostream& os, const char magic[4]);

// Readers throw std::runtime_error mentioning `what` on truncation.
std::uint8_t read_u8(std::istream& is, const std::string& what);
std::uint16_t read_u16(std::istream& is, const std::string& what);
std::uint32_t read_u32(std::istream& is, const std::string& what);
std::int32_t read_i32(std::istream& is, const std::string& what);
float read_f32(std::istream& is, const std::string& what);
void expect_magic(std::istream& is, const char magic[4], const std::string& what);

}  // namespace pqlab::io
