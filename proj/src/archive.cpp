#include <algorithm>
#include <fstream>
#include <iterator>

#include <zlib.h>

#include "mcd/error.hpp"
#include "mcd/tensor_store.hpp"

namespace mcd {
namespace {

constexpr std::uint32_t kLocalHeaderSig = 0x04034b50;
constexpr std::uint32_t kCentralHeaderSig = 0x02014b50;
constexpr std::uint32_t kEndOfDirSig = 0x06054b50;
constexpr std::uint32_t kZip64EndOfDirSig = 0x06064b50;
constexpr std::uint32_t kZip64LocatorSig = 0x07064b50;
// 1980-01-01 00:00:00 in DOS format
constexpr std::uint16_t kDosDate = (0 << 9) | (1 << 5) | 1;
constexpr std::uint16_t kDosTime = 0;

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  void need(std::uint64_t offset, std::uint64_t count, const char* what) const {
    if (offset > bytes_.size() || count > bytes_.size() - offset)
      throw ParseError(std::string("zip: truncated ") + what, offset);
  }
  std::uint16_t u16(std::uint64_t off) const {
    need(off, 2, "field");
    return std::uint16_t(bytes_[off] | (bytes_[off + 1] << 8));
  }
  std::uint32_t u32(std::uint64_t off) const {
    need(off, 4, "field");
    return std::uint32_t(bytes_[off]) | (std::uint32_t(bytes_[off + 1]) << 8) |
           (std::uint32_t(bytes_[off + 2]) << 16) | (std::uint32_t(bytes_[off + 3]) << 24);
  }
  std::uint64_t u64(std::uint64_t off) const { return u32(off) | (std::uint64_t(u32(off + 4)) << 32); }
  std::span<const std::uint8_t> slice(std::uint64_t off, std::uint64_t count, const char* what) const {
    need(off, count, what);
    return bytes_.subspan(off, count);
  }
  std::size_t size() const { return bytes_.size(); }

 private:
  std::span<const std::uint8_t> bytes_;
};

struct Member {
  std::string name;
  std::uint16_t method = 0;
  std::uint32_t crc = 0;
  std::uint64_t compressed = 0;
  std::uint64_t uncompressed = 0;
  std::uint64_t local_offset = 0;
};

std::vector<std::uint8_t> inflate_raw(std::span<const std::uint8_t> in, std::uint64_t expected,
                                      std::uint64_t offset) {
  std::vector<std::uint8_t> out(expected);
  z_stream zs{};
  if (inflateInit2(&zs, -MAX_WBITS) != Z_OK) throw ParseError("zip: inflateInit failed", offset);
  zs.next_in = const_cast<Bytef*>(in.data());
  zs.avail_in = static_cast<uInt>(in.size());
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(out.size());
  const int rc = inflate(&zs, Z_FINISH);
  const auto produced = zs.total_out;
  inflateEnd(&zs);
  if (rc != Z_STREAM_END || produced != expected) throw ParseError("zip: corrupt deflate stream", offset);
  return out;
}

std::vector<Member> read_central_directory(const Reader& r) {
  if (r.size() < 22) throw ParseError("zip: file too small for end-of-directory record", r.size());
  std::int64_t eocd = -1;
  const std::int64_t lowest = std::max<std::int64_t>(0, std::int64_t(r.size()) - 22 - 0xFFFF);
  for (std::int64_t pos = std::int64_t(r.size()) - 22; pos >= lowest; --pos) {
    if (r.u32(pos) == kEndOfDirSig) {
      eocd = pos;
      break;
    }
  }
  if (eocd < 0) throw ParseError("zip: end-of-directory record not found", r.size());

  std::uint64_t entries = r.u16(eocd + 10);
  std::uint64_t dir_size = r.u32(eocd + 12);
  std::uint64_t dir_offset = r.u32(eocd + 16);
  if (entries == 0xFFFF || dir_size == 0xFFFFFFFF || dir_offset == 0xFFFFFFFF) {
    if (eocd < 20 || r.u32(eocd - 20) != kZip64LocatorSig)
      throw ParseError("zip: zip64 locator missing", eocd);
    const std::uint64_t z64 = r.u64(eocd - 20 + 8);
    if (r.u32(z64) != kZip64EndOfDirSig) throw ParseError("zip: bad zip64 end-of-directory", z64);
    entries = r.u64(z64 + 32);
    dir_size = r.u64(z64 + 40);
    dir_offset = r.u64(z64 + 48);
  }

  std::vector<Member> members;
  std::uint64_t pos = dir_offset;
  for (std::uint64_t i = 0; i < entries; ++i) {
    if (r.u32(pos) != kCentralHeaderSig) throw ParseError("zip: bad central directory entry", pos);
    Member m;
    const std::uint16_t flags = r.u16(pos + 8);
    if (flags & 0x1) throw ParseError("zip: encrypted members are not supported", pos);
    m.method = r.u16(pos + 10);
    m.crc = r.u32(pos + 16);
    m.compressed = r.u32(pos + 20);
    m.uncompressed = r.u32(pos + 24);
    const std::uint16_t name_len = r.u16(pos + 28);
    const std::uint16_t extra_len = r.u16(pos + 30);
    const std::uint16_t comment_len = r.u16(pos + 32);
    m.local_offset = r.u32(pos + 42);
    const auto name = r.slice(pos + 46, name_len, "member name");
    m.name.assign(name.begin(), name.end());

    std::uint64_t extra = pos + 46 + name_len;
    const std::uint64_t extra_end = extra + extra_len;
    while (extra + 4 <= extra_end) {
      const std::uint16_t id = r.u16(extra);
      const std::uint16_t len = r.u16(extra + 2);
      if (id == 0x0001) {
        std::uint64_t f = extra + 4;
        if (m.uncompressed == 0xFFFFFFFF) { m.uncompressed = r.u64(f); f += 8; }
        if (m.compressed == 0xFFFFFFFF) { m.compressed = r.u64(f); f += 8; }
        if (m.local_offset == 0xFFFFFFFF) { m.local_offset = r.u64(f); }
      }
      extra += 4 + len;
    }
    members.push_back(std::move(m));
    pos = extra_end + comment_len;
  }
  if (pos > dir_offset + dir_size) throw ParseError("zip: central directory overruns its size", pos);
  return members;
}

std::vector<std::uint8_t> member_bytes(const Reader& r, const Member& m) {
  const std::uint64_t lh = m.local_offset;
  if (r.u32(lh) != kLocalHeaderSig) throw ParseError("zip: bad local header for '" + m.name + "'", lh);
  const std::uint64_t data = lh + 30 + r.u16(lh + 26) + r.u16(lh + 28);
  const auto raw = r.slice(data, m.compressed, "member data");
  std::vector<std::uint8_t> out;
  if (m.method == 0) {
    if (m.compressed != m.uncompressed) throw ParseError("zip: stored member size mismatch", lh);
    out.assign(raw.begin(), raw.end());
  } else if (m.method == 8) {
    out = inflate_raw(raw, m.uncompressed, data);
  } else {
    throw ParseError("zip: unsupported compression method " + std::to_string(m.method), lh + 8);
  }
  const auto crc = crc32(0L, out.data(), static_cast<uInt>(out.size()));
  if (crc != m.crc) throw ParseError("zip: CRC mismatch for '" + m.name + "'", data);
  return out;
}

void put16(std::vector<std::uint8_t>& o, std::uint16_t v) {
  o.push_back(v & 0xFF);
  o.push_back(v >> 8);
}
void put32(std::vector<std::uint8_t>& o, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) o.push_back((v >> (8 * i)) & 0xFF);
}

}  // namespace

void Archive::set(const std::string& key, NpyArray array) {
  for (auto& [k, v] : entries_) {
    if (k == key) {
      v = std::move(array);
      return;
    }
  }
  entries_.emplace_back(key, std::move(array));
}

const NpyArray* Archive::find(const std::string& key) const {
  for (const auto& [k, v] : entries_)
    if (k == key) return &v;
  return nullptr;
}

const NpyArray& Archive::at(const std::string& key) const {
  if (const auto* a = find(key)) return *a;
  throw Error(ErrorCode::InvalidValue, "archive has no array named '" + key + "'");
}

Archive read_archive_bytes(std::span<const std::uint8_t> bytes, const std::string& single_key) {
  Archive archive;
  if (bytes.size() >= 6 && bytes[0] == 0x93 && bytes[1] == 'N') {
    archive.set(single_key, parse_npy(bytes, 0));
  } else {
    const Reader reader(bytes);
    if (bytes.size() < 4 || reader.u32(0) != kLocalHeaderSig)
      throw ParseError("not an npy file or zip archive", 0);
    for (const auto& m : read_central_directory(reader)) {
      if (m.name.size() < 4 || m.name.substr(m.name.size() - 4) != ".npy") continue;
      const auto data = member_bytes(reader, m);
      archive.set(m.name.substr(0, m.name.size() - 4), parse_npy(data, m.local_offset));
    }
  }
  for (const char* key : {"features", "weights", "bias"}) {
    if (const auto* a = archive.find(key); a && !a->is_float())
      throw Error(ErrorCode::UnsupportedDtype,
                  std::string("'") + key + "' must be float32 or float64, got '" + a->descr + "'");
  }
  return archive;
}

Archive read_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "'");
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return read_archive_bytes(bytes, path.stem().string());
}

std::vector<std::uint8_t> archive_to_zip_bytes(const Archive& archive) {
  std::vector<std::uint8_t> out;
  std::vector<std::uint8_t> central;
  for (const auto& [key, array] : archive.entries()) {
    const std::string name = key + ".npy";
    const auto data = serialize_npy(array);
    if (data.size() >= 0xFFFFFFFFull || out.size() >= 0xFFFFFFFFull)
      throw Error(ErrorCode::Unsupported, "archives larger than 4 GiB are not supported for writing");
    const auto crc = static_cast<std::uint32_t>(crc32(0L, data.data(), static_cast<uInt>(data.size())));
    const auto offset = static_cast<std::uint32_t>(out.size());
    const auto size = static_cast<std::uint32_t>(data.size());

    put32(out, kLocalHeaderSig);
    put16(out, 20);
    put16(out, 0);
    put16(out, 0);
    put16(out, kDosTime);
    put16(out, kDosDate);
    put32(out, crc);
    put32(out, size);
    put32(out, size);
    put16(out, static_cast<std::uint16_t>(name.size()));
    put16(out, 0);
    out.insert(out.end(), name.begin(), name.end());
    out.insert(out.end(), data.begin(), data.end());

    put32(central, kCentralHeaderSig);
    put16(central, 20);
    put16(central, 20);
    put16(central, 0);
    put16(central, 0);
    put16(central, kDosTime);
    put16(central, kDosDate);
    put32(central, crc);
    put32(central, size);
    put32(central, size);
    put16(central, static_cast<std::uint16_t>(name.size()));
    put16(central, 0);
    put16(central, 0);
    put16(central, 0);
    put16(central, 0);
    put32(central, 0);
    put32(central, offset);
    central.insert(central.end(), name.begin(), name.end());
  }
  const auto dir_offset = static_cast<std::uint32_t>(out.size());
  out.insert(out.end(), central.begin(), central.end());
  put32(out, kEndOfDirSig);
  put16(out, 0);
  put16(out, 0);
  put16(out, static_cast<std::uint16_t>(archive.size()));
  put16(out, static_cast<std::uint16_t>(archive.size()));
  put32(out, static_cast<std::uint32_t>(central.size()));
  put32(out, dir_offset);
  put16(out, 0);
  return out;
}

void write_archive(const std::filesystem::path& path, const Archive& archive) {
  std::vector<std::uint8_t> bytes;
  if (path.extension() == ".npy") {
    if (archive.size() != 1) throw Error(ErrorCode::InvalidValue, "a .npy file holds exactly one array");
    bytes = serialize_npy(archive.entries().front().second);
  } else {
    bytes = archive_to_zip_bytes(archive);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoError, "short write to '" + path.string() + "'");
}

}  // namespace mcd
