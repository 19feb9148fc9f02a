#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "bpi/hash.hpp"

namespace bpi::zip {

enum class EntryKind { file, dir, symlink };

struct Entry {
  std::string name;
  EntryKind kind = EntryKind::file;
  std::string link_target;  // symlink entries only
  Bytes content;            // file entries only
  std::uint32_t mode = 0644;
};

/// Minimal zip writer: STORE method only, fixed DOS timestamps, unix mode
/// bits in the external attributes (version-made-by host 3). Symlinks are
/// encoded the way Info-ZIP does: S_IFLNK in the mode, target string as the
/// entry payload.
class Writer {
 public:
  explicit Writer(std::filesystem::path out);

  void add_file(const std::string& name, const Bytes& content, std::uint32_t mode = 0644);
  void add_dir(const std::string& name);
  void add_symlink(const std::string& name, const std::string& target);

  /// Writes the central directory and end record; returns total archive size.
  std::uint64_t finish();

 private:
  struct Record {
    std::string name;
    std::uint32_t crc;
    std::uint32_t size;
    std::uint32_t external_attrs;
    std::uint32_t offset;
  };
  void add_raw(const std::string& name, const Bytes& payload, std::uint32_t external_attrs);

  std::filesystem::path out_;
  Bytes buf_;
  std::vector<Record> records_;
  bool finished_ = false;
};

/// Parses the central directory and loads every entry (inflating DEFLATE
/// payloads). Throws FormatError on a structurally broken archive; odd entry
/// *names* are preserved verbatim — judging them is the policy layer's job.
std::vector<Entry> read_entries(const std::filesystem::path& file);

}  // namespace bpi::zip
