#pragma once

// Reader/writer for the NPY v1.0 subset used by the pipeline: little-endian
// f4/u1/u2 arrays in C order, rank <= 3.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

namespace geovocab::npy {

enum class Dtype { F4, U1, U2 };

std::size_t dtype_size(Dtype dtype);
std::string_view dtype_descr(Dtype dtype);

struct Header {
  Dtype dtype = Dtype::F4;
  bool fortran_order = false;
  std::vector<std::size_t> shape;

  std::size_t element_count() const;
  bool operator==(const Header&) const = default;
};

/// Decoded array: header plus little-endian payload bytes.
struct Array {
  Header header;
  std::vector<std::uint8_t> payload;

  std::vector<float> as_f4() const;
  std::vector<std::uint8_t> as_u1() const;
  std::vector<std::uint16_t> as_u2() const;

  bool operator==(const Array&) const = default;
};

/// Parses a complete file image. Errors: BadMagic, UnsupportedVersion,
/// UnsupportedDtype, FortranOrderUnsupported, TruncatedPayload.
Array parse(std::span<const std::uint8_t> file_bytes);
Array read(const std::filesystem::path& path);

/// Serializes header + payload; the preamble is padded so the data starts on a
/// 64-byte boundary. Throws ShapeMismatch when the payload size disagrees with the shape.
std::vector<std::uint8_t> encode(const Header& header, std::span<const std::uint8_t> payload);
std::vector<std::uint8_t> encode_f4(std::vector<std::size_t> shape, std::span<const float> values);
std::vector<std::uint8_t> encode_u1(std::vector<std::size_t> shape, std::span<const std::uint8_t> values);
std::vector<std::uint8_t> encode_u2(std::vector<std::size_t> shape, std::span<const std::uint16_t> values);

void write(const std::filesystem::path& path, const Header& header, std::span<const std::uint8_t> payload);

/// Size in bytes of magic + version + length field + header text.
std::size_t preamble_size(std::span<const std::uint8_t> file_bytes);

}  // namespace geovocab::npy
