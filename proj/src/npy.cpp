#include <algorithm>
#include <cctype>
#include <cstring>
#include <numeric>

#include "mcd/error.hpp"
#include "mcd/tensor_store.hpp"

namespace mcd {
namespace {

constexpr std::uint8_t kMagic[] = {0x93, 'N', 'U', 'M', 'P', 'Y'};

bool is_supported_descr(const std::string& d) {
  if (d.size() < 3) return false;
  const char order = d[0];
  const char kind = d[1];
  const std::string width = d.substr(2);
  if (!std::all_of(width.begin(), width.end(), [](unsigned char c) { return std::isdigit(c); }))
    return false;
  switch (kind) {
    case 'f':
      return order == '<' && (width == "4" || width == "8");
    case 'i':
    case 'u':
      return (order == '<' || order == '|') &&
             (width == "1" || width == "2" || width == "4" || width == "8");
    case 'b':
      return order == '|' && width == "1";
    case 'U':
      return order == '<';
    case 'S':
      return order == '|';
    default:
      return false;
  }
}

// Minimal reader for the python-literal header dict numpy writes.
class HeaderParser {
 public:
  HeaderParser(std::string_view text, std::uint64_t base) : text_(text), base_(base) {}

  void parse(NpyArray& out, bool& fortran) {
    skip_ws();
    expect('{');
    bool have_descr = false, have_order = false, have_shape = false;
    while (true) {
      skip_ws();
      if (peek() == '}') {
        ++pos_;
        break;
      }
      const std::string key = parse_string();
      skip_ws();
      expect(':');
      skip_ws();
      if (key == "descr") {
        out.descr = parse_string();
        have_descr = true;
      } else if (key == "fortran_order") {
        fortran = parse_bool();
        have_order = true;
      } else if (key == "shape") {
        out.shape = parse_tuple();
        have_shape = true;
      } else {
        fail("unexpected header key '" + key + "'");
      }
      skip_ws();
      if (peek() == ',') ++pos_;
    }
    if (!have_descr || !have_order || !have_shape) fail("header is missing a required key");
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const { throw ParseError("npy header: " + msg, base_ + pos_); }

  char peek() const {
    if (pos_ >= text_.size()) fail("unexpected end of header");
    return text_[pos_];
  }
  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }
  void expect(char c) {
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }
  std::string parse_string() {
    const char quote = peek();
    if (quote != '\'' && quote != '"') fail("expected string");
    ++pos_;
    const auto end = text_.find(quote, pos_);
    if (end == std::string_view::npos) fail("unterminated string");
    std::string s(text_.substr(pos_, end - pos_));
    pos_ = end + 1;
    return s;
  }
  bool parse_bool() {
    if (text_.substr(pos_, 4) == "True") {
      pos_ += 4;
      return true;
    }
    if (text_.substr(pos_, 5) == "False") {
      pos_ += 5;
      return false;
    }
    fail("expected True or False");
  }
  std::vector<std::int64_t> parse_tuple() {
    expect('(');
    std::vector<std::int64_t> dims;
    while (true) {
      skip_ws();
      if (peek() == ')') {
        ++pos_;
        return dims;
      }
      if (!std::isdigit(static_cast<unsigned char>(peek()))) fail("expected dimension");
      std::int64_t v = 0;
      while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
        v = v * 10 + (text_[pos_] - '0');
        ++pos_;
      }
      if (pos_ < text_.size() && text_[pos_] == 'L') ++pos_;
      dims.push_back(v);
      skip_ws();
      if (peek() == ',') ++pos_;
    }
  }

  std::string_view text_;
  std::uint64_t base_;
  std::size_t pos_ = 0;
};

std::uint32_t read_le32(const std::uint8_t* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
         (std::uint32_t(p[3]) << 24);
}

void append_utf8(std::string& out, std::uint32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

std::vector<std::uint32_t> decode_utf8(const std::string& s) {
  std::vector<std::uint32_t> cps;
  for (std::size_t i = 0; i < s.size();) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::uint32_t cp = c;
    std::size_t extra = 0;
    if (c >= 0xF0) {
      cp = c & 0x07;
      extra = 3;
    } else if (c >= 0xE0) {
      cp = c & 0x0F;
      extra = 2;
    } else if (c >= 0xC0) {
      cp = c & 0x1F;
      extra = 1;
    }
    if (i + extra >= s.size() && extra > 0)
      throw Error(ErrorCode::InvalidValue, "truncated UTF-8 sequence");
    for (std::size_t k = 1; k <= extra; ++k) cp = (cp << 6) | (static_cast<unsigned char>(s[i + k]) & 0x3F);
    cps.push_back(cp);
    i += extra + 1;
  }
  return cps;
}

}  // namespace

std::int64_t NpyArray::element_count() const {
  return std::accumulate(shape.begin(), shape.end(), std::int64_t{1}, std::multiplies<>());
}

std::size_t NpyArray::item_size() const {
  const std::size_t width = std::stoul(descr.substr(2));
  return descr[1] == 'U' ? 4 * width : width;
}

bool NpyArray::is_text() const { return descr.size() > 1 && (descr[1] == 'U' || descr[1] == 'S'); }

std::vector<double> NpyArray::to_doubles() const {
  const auto n = static_cast<std::size_t>(element_count());
  std::vector<double> out(n);
  if (descr == "<f8") {
    std::memcpy(out.data(), payload.data(), n * sizeof(double));
  } else if (descr == "<f4") {
    std::vector<float> tmp(n);
    std::memcpy(tmp.data(), payload.data(), n * sizeof(float));
    std::copy(tmp.begin(), tmp.end(), out.begin());
  } else {
    throw Error(ErrorCode::UnsupportedDtype, "expected float32 or float64 array, got '" + descr + "'");
  }
  return out;
}

std::vector<std::string> NpyArray::to_strings() const {
  if (!is_text()) throw Error(ErrorCode::UnsupportedDtype, "expected a string array, got '" + descr + "'");
  const auto n = static_cast<std::size_t>(element_count());
  const std::size_t width = std::stoul(descr.substr(2));
  std::vector<std::string> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (descr[1] == 'U') {
      const std::uint8_t* p = payload.data() + i * width * 4;
      for (std::size_t k = 0; k < width; ++k) {
        const std::uint32_t cp = read_le32(p + 4 * k);
        if (cp == 0) break;
        append_utf8(out[i], cp);
      }
    } else {
      const char* p = reinterpret_cast<const char*>(payload.data() + i * width);
      out[i].assign(p, strnlen(p, width));
    }
  }
  return out;
}

NpyArray NpyArray::from_doubles(std::vector<std::int64_t> shape, std::span<const double> values) {
  NpyArray a{"<f8", std::move(shape), {}};
  if (a.element_count() != static_cast<std::int64_t>(values.size()))
    throw Error(ErrorCode::DimensionMismatch, "shape does not match value count");
  a.payload.resize(values.size_bytes());
  std::memcpy(a.payload.data(), values.data(), values.size_bytes());
  return a;
}

NpyArray NpyArray::from_floats(std::vector<std::int64_t> shape, std::span<const float> values) {
  NpyArray a{"<f4", std::move(shape), {}};
  if (a.element_count() != static_cast<std::int64_t>(values.size()))
    throw Error(ErrorCode::DimensionMismatch, "shape does not match value count");
  a.payload.resize(values.size_bytes());
  std::memcpy(a.payload.data(), values.data(), values.size_bytes());
  return a;
}

NpyArray NpyArray::from_strings(std::span<const std::string> values) {
  std::vector<std::vector<std::uint32_t>> decoded;
  std::size_t width = 1;
  for (const auto& s : values) {
    decoded.push_back(decode_utf8(s));
    width = std::max(width, decoded.back().size());
  }
  NpyArray a{"<U" + std::to_string(width), {static_cast<std::int64_t>(values.size())}, {}};
  a.payload.assign(values.size() * width * 4, 0);
  for (std::size_t i = 0; i < decoded.size(); ++i) {
    for (std::size_t k = 0; k < decoded[i].size(); ++k) {
      const std::uint32_t cp = decoded[i][k];
      std::uint8_t* p = a.payload.data() + (i * width + k) * 4;
      p[0] = cp & 0xFF;
      p[1] = (cp >> 8) & 0xFF;
      p[2] = (cp >> 16) & 0xFF;
      p[3] = (cp >> 24) & 0xFF;
    }
  }
  return a;
}

NpyArray parse_npy(std::span<const std::uint8_t> bytes, std::uint64_t base_offset) {
  if (bytes.size() < 10 || !std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin()))
    throw ParseError("missing npy magic", base_offset);
  const std::uint8_t major = bytes[6];
  std::size_t header_len = 0;
  std::size_t header_start = 0;
  if (major == 1) {
    header_len = bytes[8] | (std::size_t(bytes[9]) << 8);
    header_start = 10;
  } else if (major == 2 || major == 3) {
    if (bytes.size() < 12) throw ParseError("truncated npy preamble", base_offset + bytes.size());
    header_len = read_le32(bytes.data() + 8);
    header_start = 12;
  } else {
    throw ParseError("unsupported npy version " + std::to_string(major), base_offset + 6);
  }
  if (header_start + header_len > bytes.size())
    throw ParseError("npy header runs past end of data", base_offset + header_start);

  NpyArray out;
  bool fortran = false;
  const std::string_view header(reinterpret_cast<const char*>(bytes.data() + header_start), header_len);
  HeaderParser(header, base_offset + header_start).parse(out, fortran);
  if (fortran) throw ParseError("fortran_order arrays are not supported", base_offset + header_start);
  if (!is_supported_descr(out.descr))
    throw Error(ErrorCode::UnsupportedDtype, "dtype '" + out.descr + "' is not supported");

  const std::size_t data_start = header_start + header_len;
  const auto expected = static_cast<std::size_t>(out.element_count()) * out.item_size();
  if (bytes.size() - data_start < expected)
    throw ParseError("npy payload truncated: need " + std::to_string(expected) + " bytes",
                     base_offset + bytes.size());
  out.payload.assign(bytes.begin() + data_start, bytes.begin() + data_start + expected);
  return out;
}

std::vector<std::uint8_t> serialize_npy(const NpyArray& array) {
  std::string header = "{'descr': '" + array.descr + "', 'fortran_order': False, 'shape': (";
  for (std::size_t i = 0; i < array.shape.size(); ++i) {
    header += std::to_string(array.shape[i]);
    if (array.shape.size() == 1 || i + 1 < array.shape.size()) header += ", ";
  }
  if (array.shape.size() == 1) header.pop_back();
  header += "), }";

  // Pad so the payload starts on a 64-byte boundary, terminated by '\n'.
  bool v2 = false;
  std::size_t preamble = 10;
  std::size_t total = preamble + header.size() + 1;
  std::size_t padded = (total + 63) / 64 * 64;
  if (padded - preamble > 0xFFFF) {
    v2 = true;
    preamble = 12;
    total = preamble + header.size() + 1;
    padded = (total + 63) / 64 * 64;
  }
  header.append(padded - total, ' ');
  header.push_back('\n');

  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  out.push_back(v2 ? 2 : 1);
  out.push_back(0);
  const std::size_t hlen = header.size();
  out.push_back(hlen & 0xFF);
  out.push_back((hlen >> 8) & 0xFF);
  if (v2) {
    out.push_back((hlen >> 16) & 0xFF);
    out.push_back((hlen >> 24) & 0xFF);
  }
  out.insert(out.end(), header.begin(), header.end());
  out.insert(out.end(), array.payload.begin(), array.payload.end());
  return out;
}

}  // namespace mcd
