#include "bpi/zipfile.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>

#include "bpi/errors.hpp"

namespace bpi::zip {

namespace {

constexpr std::uint32_t kLocalSig = 0x04034b50;
constexpr std::uint32_t kCentralSig = 0x02014b50;
constexpr std::uint32_t kEndSig = 0x06054b50;

constexpr std::uint32_t kIfmtMask = 0xf000;
constexpr std::uint32_t kIfLnk = 0xa000;
constexpr std::uint32_t kIfDir = 0x4000;
constexpr std::uint32_t kIfReg = 0x8000;

// Fixed DOS date 1980-01-01 keeps archives byte-reproducible.
constexpr std::uint16_t kDosTime = 0;
constexpr std::uint16_t kDosDate = 0x21;

void put16(Bytes& b, std::uint16_t v) {
  b.push_back(v & 0xff);
  b.push_back((v >> 8) & 0xff);
}

void put32(Bytes& b, std::uint32_t v) {
  put16(b, v & 0xffff);
  put16(b, (v >> 16) & 0xffff);
}

std::uint16_t get16(const Bytes& b, std::size_t off) {
  return static_cast<std::uint16_t>(b.at(off) | (b.at(off + 1) << 8));
}

std::uint32_t get32(const Bytes& b, std::size_t off) {
  return static_cast<std::uint32_t>(get16(b, off)) |
         (static_cast<std::uint32_t>(get16(b, off + 2)) << 16);
}

std::uint32_t crc_of(const Bytes& data) {
  return static_cast<std::uint32_t>(
      crc32(0L, data.empty() ? Z_NULL : data.data(), static_cast<uInt>(data.size())));
}

Bytes inflate_raw(const Bytes& in, std::size_t expected) {
  Bytes out(expected);
  z_stream zs{};
  if (inflateInit2(&zs, -15) != Z_OK) throw FormatError("inflate init failed");
  zs.next_in = const_cast<Bytef*>(in.data());
  zs.avail_in = static_cast<uInt>(in.size());
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(out.size());
  int rc = inflate(&zs, Z_FINISH);
  inflateEnd(&zs);
  if (rc != Z_STREAM_END && !(rc == Z_OK && zs.avail_out == 0))
    throw FormatError("corrupt deflate stream in archive");
  out.resize(out.size() - zs.avail_out);
  return out;
}

}  // namespace

Writer::Writer(std::filesystem::path out) : out_(std::move(out)) {}

void Writer::add_raw(const std::string& name, const Bytes& payload,
                     std::uint32_t external_attrs) {
  Record rec;
  rec.name = name;
  rec.crc = crc_of(payload);
  rec.size = static_cast<std::uint32_t>(payload.size());
  rec.external_attrs = external_attrs;
  rec.offset = static_cast<std::uint32_t>(buf_.size());

  put32(buf_, kLocalSig);
  put16(buf_, 20);  // version needed
  put16(buf_, 0);   // flags
  put16(buf_, 0);   // method: STORE
  put16(buf_, kDosTime);
  put16(buf_, kDosDate);
  put32(buf_, rec.crc);
  put32(buf_, rec.size);
  put32(buf_, rec.size);
  put16(buf_, static_cast<std::uint16_t>(name.size()));
  put16(buf_, 0);  // extra length
  buf_.insert(buf_.end(), name.begin(), name.end());
  buf_.insert(buf_.end(), payload.begin(), payload.end());

  records_.push_back(std::move(rec));
}

void Writer::add_file(const std::string& name, const Bytes& content, std::uint32_t mode) {
  add_raw(name, content, (kIfReg | (mode & 07777)) << 16);
}

void Writer::add_dir(const std::string& name) {
  std::string dirname = name;
  if (dirname.empty() || dirname.back() != '/') dirname += '/';
  add_raw(dirname, {}, ((kIfDir | 0755) << 16) | 0x10);
}

void Writer::add_symlink(const std::string& name, const std::string& target) {
  add_raw(name, to_bytes(target), (kIfLnk | 0777) << 16);
}

std::uint64_t Writer::finish() {
  if (finished_) throw Error("zip writer already finished");
  finished_ = true;

  const auto cd_offset = static_cast<std::uint32_t>(buf_.size());
  for (const auto& rec : records_) {
    put32(buf_, kCentralSig);
    put16(buf_, (3 << 8) | 20);  // made by: unix, 2.0
    put16(buf_, 20);
    put16(buf_, 0);
    put16(buf_, 0);
    put16(buf_, kDosTime);
    put16(buf_, kDosDate);
    put32(buf_, rec.crc);
    put32(buf_, rec.size);
    put32(buf_, rec.size);
    put16(buf_, static_cast<std::uint16_t>(rec.name.size()));
    put16(buf_, 0);  // extra
    put16(buf_, 0);  // comment
    put16(buf_, 0);  // disk start
    put16(buf_, 0);  // internal attrs
    put32(buf_, rec.external_attrs);
    put32(buf_, rec.offset);
    buf_.insert(buf_.end(), rec.name.begin(), rec.name.end());
  }
  const auto cd_size = static_cast<std::uint32_t>(buf_.size()) - cd_offset;

  put32(buf_, kEndSig);
  put16(buf_, 0);
  put16(buf_, 0);
  put16(buf_, static_cast<std::uint16_t>(records_.size()));
  put16(buf_, static_cast<std::uint16_t>(records_.size()));
  put32(buf_, cd_size);
  put32(buf_, cd_offset);
  put16(buf_, 0);  // comment length

  std::ofstream out(out_, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + out_.string());
  out.write(reinterpret_cast<const char*>(buf_.data()),
            static_cast<std::streamsize>(buf_.size()));
  if (!out) throw IoError("short write to " + out_.string());
  return buf_.size();
}

std::vector<Entry> read_entries(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open " + file.string());
  Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (data.size() < 22) throw FormatError("too small to be a zip archive");
  // EOCD: scan backwards across a possible trailing comment.
  std::size_t eocd = std::string::npos;
  const std::size_t lowest = data.size() >= 22 + 0xffff ? data.size() - 22 - 0xffff : 0;
  for (std::size_t i = data.size() - 22; ; --i) {
    if (get32(data, i) == kEndSig) {
      eocd = i;
      break;
    }
    if (i == lowest) break;
  }
  if (eocd == std::string::npos) throw FormatError("no end-of-central-directory record");

  const std::uint16_t count = get16(data, eocd + 10);
  std::size_t pos = get32(data, eocd + 16);

  std::vector<Entry> entries;
  entries.reserve(count);
  for (std::uint16_t i = 0; i < count; ++i) {
    if (pos + 46 > data.size() || get32(data, pos) != kCentralSig)
      throw FormatError("corrupt central directory");
    const std::uint16_t method = get16(data, pos + 10);
    const std::uint32_t comp_size = get32(data, pos + 20);
    const std::uint32_t uncomp_size = get32(data, pos + 24);
    const std::uint16_t name_len = get16(data, pos + 28);
    const std::uint16_t extra_len = get16(data, pos + 30);
    const std::uint16_t comment_len = get16(data, pos + 32);
    const std::uint32_t external = get32(data, pos + 38);
    const std::uint32_t local_off = get32(data, pos + 42);
    if (pos + 46 + name_len > data.size()) throw FormatError("truncated central directory");
    std::string name(data.begin() + pos + 46, data.begin() + pos + 46 + name_len);
    pos += 46 + name_len + extra_len + comment_len;

    // Payload sits after the local header, whose name/extra lengths may
    // differ from the central ones.
    if (local_off + 30 > data.size() || get32(data, local_off) != kLocalSig)
      throw FormatError("bad local header for " + name);
    const std::uint16_t lname = get16(data, local_off + 26);
    const std::uint16_t lextra = get16(data, local_off + 28);
    const std::size_t payload_off = local_off + 30 + lname + lextra;
    if (payload_off + comp_size > data.size()) throw FormatError("truncated entry " + name);
    Bytes payload(data.begin() + payload_off, data.begin() + payload_off + comp_size);
    if (method == 8) {
      payload = inflate_raw(payload, uncomp_size);
    } else if (method != 0) {
      throw FormatError("unsupported compression method in " + name);
    }

    Entry e;
    e.name = name;
    const std::uint32_t unix_mode = external >> 16;
    if ((unix_mode & kIfmtMask) == kIfLnk) {
      e.kind = EntryKind::symlink;
      e.link_target = to_string(payload);
    } else if ((unix_mode & kIfmtMask) == kIfDir || (external & 0x10) ||
               (!name.empty() && name.back() == '/')) {
      e.kind = EntryKind::dir;
    } else {
      e.kind = EntryKind::file;
      e.content = std::move(payload);
    }
    e.mode = unix_mode & 07777;
    entries.push_back(std::move(e));
  }
  return entries;
}

}  // namespace bpi::zip
