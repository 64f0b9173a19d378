#include "geovocab/npy.hpp"

#include <bit>
#include <cctype>
#include <cstring>
#include <optional>
#include <string>

#include "geovocab/error.hpp"
#include "geovocab/file_util.hpp"

namespace geovocab::npy {

namespace {

constexpr std::uint8_t kMagic[] = {0x93, 'N', 'U', 'M', 'P', 'Y'};
constexpr std::size_t kMagicSize = sizeof(kMagic);
constexpr std::size_t kV1PrefixSize = kMagicSize + 2 + 2;
constexpr std::size_t kAlignment = 64;
// Extra spaces reserved after the dict so the leading axis can grow in place;
// matches the layout NumPy emits.
constexpr std::size_t kGrowthAxisMaxDigits = 21;

// Minimal parser for the Python dict literal stored in the header.
class DictParser {
 public:
  explicit DictParser(std::string_view text) : text_(text) {}

  Header parse() {
    std::optional<std::string> descr;
    std::optional<bool> fortran;
    std::optional<std::vector<std::size_t>> shape;
    expect('{');
    while (true) {
      skip_ws();
      if (peek() == '}') {
        ++pos_;
        break;
      }
      const auto key = parse_string();
      expect(':');
      if (key == "descr") {
        descr = parse_string();
      } else if (key == "fortran_order") {
        fortran = parse_bool();
      } else if (key == "shape") {
        shape = parse_tuple();
      } else {
        malformed("unexpected key '" + key + "'");
      }
      skip_ws();
      if (peek() == ',') {
        ++pos_;
      } else if (peek() != '}') {
        malformed("expected ',' or '}'");
      }
    }
    if (!descr || !fortran || !shape) malformed("header dict lacks descr, fortran_order or shape");

    Header h;
    h.fortran_order = *fortran;
    h.shape = std::move(*shape);
    if (*descr == "<f4") {
      h.dtype = Dtype::F4;
    } else if (*descr == "|u1" || *descr == "<u1") {
      h.dtype = Dtype::U1;
    } else if (*descr == "<u2") {
      h.dtype = Dtype::U2;
    } else {
      fail(ErrorCode::UnsupportedDtype, "descr '" + *descr + "' (supported: <f4, |u1, <u2)");
    }
    if (h.fortran_order) fail(ErrorCode::FortranOrderUnsupported, "fortran_order is True");
    return h;
  }

 private:
  [[noreturn]] void malformed(const std::string& what) const {
    fail(ErrorCode::InvalidDocument, "malformed NPY header: " + what);
  }
  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }
  char peek() {
    skip_ws();
    return pos_ < text_.size() ? text_[pos_] : '\0';
  }
  void expect(char c) {
    if (peek() != c) malformed(std::string("expected '") + c + "'");
    ++pos_;
  }
  std::string parse_string() {
    const char quote = peek();
    if (quote != '\'' && quote != '"') malformed("expected string");
    ++pos_;
    const auto end = text_.find(quote, pos_);
    if (end == std::string_view::npos) malformed("unterminated string");
    std::string out(text_.substr(pos_, end - pos_));
    pos_ = end + 1;
    return out;
  }
  bool parse_bool() {
    skip_ws();
    if (text_.substr(pos_, 4) == "True") {
      pos_ += 4;
      return true;
    }
    if (text_.substr(pos_, 5) == "False") {
      pos_ += 5;
      return false;
    }
    malformed("expected True or False");
  }
  std::vector<std::size_t> parse_tuple() {
    expect('(');
    std::vector<std::size_t> dims;
    while (true) {
      if (peek() == ')') {
        ++pos_;
        return dims;
      }
      if (!std::isdigit(static_cast<unsigned char>(peek()))) malformed("expected dimension");
      std::size_t v = 0;
      while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
        v = v * 10 + static_cast<std::size_t>(text_[pos_] - '0');
        ++pos_;
      }
      dims.push_back(v);
      if (peek() == ',') {
        ++pos_;
      } else if (peek() != ')') {
        malformed("expected ',' or ')' in shape");
      }
    }
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

std::string shape_repr(const std::vector<std::size_t>& shape) {
  std::string out = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) out += ", ";
    out += std::to_string(shape[i]);
  }
  if (shape.size() == 1) out += ",";
  out += ")";
  return out;
}

template <typename T>
std::vector<T> decode_le(const std::vector<std::uint8_t>& payload) {
  std::vector<T> out(payload.size() / sizeof(T));
  std::memcpy(out.data(), payload.data(), out.size() * sizeof(T));
  if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) {
    for (auto& v : out) {
      auto* b = reinterpret_cast<std::uint8_t*>(&v);
      for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    }
  }
  return out;
}

template <typename T>
std::vector<std::uint8_t> encode_le(std::span<const T> values) {
  std::vector<std::uint8_t> out(values.size() * sizeof(T));
  std::memcpy(out.data(), values.data(), out.size());
  if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) {
    for (std::size_t k = 0; k < values.size(); ++k) {
      auto* b = out.data() + k * sizeof(T);
      for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    }
  }
  return out;
}

}  // namespace

std::size_t dtype_size(Dtype dtype) {
  switch (dtype) {
    case Dtype::F4: return 4;
    case Dtype::U1: return 1;
    case Dtype::U2: return 2;
  }
  return 0;
}

std::string_view dtype_descr(Dtype dtype) {
  switch (dtype) {
    case Dtype::F4: return "<f4";
    case Dtype::U1: return "|u1";
    case Dtype::U2: return "<u2";
  }
  return "";
}

std::size_t Header::element_count() const {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::vector<float> Array::as_f4() const {
  if (header.dtype != Dtype::F4) fail(ErrorCode::UnsupportedDtype, "expected <f4 array");
  return decode_le<float>(payload);
}

std::vector<std::uint8_t> Array::as_u1() const {
  if (header.dtype != Dtype::U1) fail(ErrorCode::UnsupportedDtype, "expected |u1 array");
  return payload;
}

std::vector<std::uint16_t> Array::as_u2() const {
  if (header.dtype != Dtype::U2) fail(ErrorCode::UnsupportedDtype, "expected <u2 array");
  return decode_le<std::uint16_t>(payload);
}

std::size_t preamble_size(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kV1PrefixSize || std::memcmp(bytes.data(), kMagic, kMagicSize) != 0) {
    fail(ErrorCode::BadMagic, "missing \\x93NUMPY magic");
  }
  return kV1PrefixSize + (static_cast<std::size_t>(bytes[8]) | (static_cast<std::size_t>(bytes[9]) << 8));
}

Array parse(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kMagicSize || std::memcmp(bytes.data(), kMagic, kMagicSize) != 0) {
    fail(ErrorCode::BadMagic, "missing \\x93NUMPY magic");
  }
  if (bytes.size() < kMagicSize + 2) fail(ErrorCode::TruncatedPayload, "file ends inside the version field");
  if (bytes[6] != 1 || bytes[7] != 0) {
    fail(ErrorCode::UnsupportedVersion,
         "version " + std::to_string(bytes[6]) + "." + std::to_string(bytes[7]) + " (only 1.0 is supported)");
  }
  if (bytes.size() < kV1PrefixSize) fail(ErrorCode::TruncatedPayload, "file ends inside the header length field");
  const auto data_offset = preamble_size(bytes);
  if (bytes.size() < data_offset) fail(ErrorCode::TruncatedPayload, "file ends inside the header");

  const std::string_view dict(reinterpret_cast<const char*>(bytes.data()) + kV1PrefixSize,
                              data_offset - kV1PrefixSize);
  Array array;
  array.header = DictParser(dict).parse();
  if (array.header.shape.size() > 3) fail(ErrorCode::RankMismatch, "rank > 3 is not supported");

  const auto expected = array.header.element_count() * dtype_size(array.header.dtype);
  const auto available = bytes.size() - data_offset;
  if (available < expected) {
    fail(ErrorCode::TruncatedPayload,
         "payload has " + std::to_string(available) + " bytes, shape needs " + std::to_string(expected));
  }
  if (available > expected) {
    fail(ErrorCode::ShapeMismatch,
         "payload has " + std::to_string(available - expected) + " trailing bytes beyond the declared shape");
  }
  array.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(data_offset), bytes.end());
  return array;
}

Array read(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return parse(bytes);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.detail());
  }
}

std::vector<std::uint8_t> encode(const Header& header, std::span<const std::uint8_t> payload) {
  if (header.fortran_order) fail(ErrorCode::FortranOrderUnsupported, "cannot write fortran_order arrays");
  if (header.shape.size() > 3) fail(ErrorCode::RankMismatch, "rank > 3 is not supported");
  const auto expected = header.element_count() * dtype_size(header.dtype);
  if (payload.size() != expected) {
    fail(ErrorCode::ShapeMismatch, "payload has " + std::to_string(payload.size()) + " bytes, shape " +
                                       shape_repr(header.shape) + " needs " + std::to_string(expected));
  }

  std::string dict = "{'descr': '" + std::string(dtype_descr(header.dtype)) +
                     "', 'fortran_order': False, 'shape': " + shape_repr(header.shape) + ", }";
  if (!header.shape.empty()) {
    dict.append(kGrowthAxisMaxDigits - std::to_string(header.shape.front()).size(), ' ');
  }
  const auto unpadded = kV1PrefixSize + dict.size() + 1;
  dict.append((kAlignment - unpadded % kAlignment) % kAlignment, ' ');
  dict.push_back('\n');
  if (dict.size() > 0xffff) fail(ErrorCode::ShapeMismatch, "header too long for NPY v1.0");

  std::vector<std::uint8_t> out;
  out.reserve(kV1PrefixSize + dict.size() + payload.size());
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  out.push_back(1);
  out.push_back(0);
  out.push_back(static_cast<std::uint8_t>(dict.size() & 0xff));
  out.push_back(static_cast<std::uint8_t>(dict.size() >> 8));
  out.insert(out.end(), dict.begin(), dict.end());
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

std::vector<std::uint8_t> encode_f4(std::vector<std::size_t> shape, std::span<const float> values) {
  return encode(Header{Dtype::F4, false, std::move(shape)}, encode_le(values));
}

std::vector<std::uint8_t> encode_u1(std::vector<std::size_t> shape, std::span<const std::uint8_t> values) {
  return encode(Header{Dtype::U1, false, std::move(shape)}, values);
}

std::vector<std::uint8_t> encode_u2(std::vector<std::size_t> shape, std::span<const std::uint16_t> values) {
  return encode(Header{Dtype::U2, false, std::move(shape)}, encode_le(values));
}

void write(const std::filesystem::path& path, const Header& header, std::span<const std::uint8_t> payload) {
  write_file_atomic(path, encode(header, payload));
}

}  // namespace geovocab::npy
