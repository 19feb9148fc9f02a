#pragma once

#include <sqlite3.h>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>

#include "bpi/errors.hpp"
#include "bpi/hash.hpp"

namespace bpi::sqlite {

class Stmt {
 public:
  Stmt(sqlite3* db, const std::string& sql);
  ~Stmt();
  Stmt(Stmt&& other) noexcept : stmt_(other.stmt_) { other.stmt_ = nullptr; }
  Stmt(const Stmt&) = delete;
  Stmt& operator=(const Stmt&) = delete;

  Stmt& bind_text(int idx, std::string_view v);
  Stmt& bind_int64(int idx, std::int64_t v);
  Stmt& bind_blob(int idx, const Bytes& v);

  bool step();  // true while a row is available
  void run();   // step to completion, expect no rows

  std::int64_t col_int64(int idx) const;
  std::string col_text(int idx) const;
  Bytes col_blob(int idx) const;
  bool col_is_null(int idx) const;

 private:
  sqlite3_stmt* stmt_ = nullptr;
};

class Db {
 public:
  /// Opens an existing database. Throws IoError when the file is missing and
  /// FormatError when it is not an SQLite3-format file.
  static Db open(const std::filesystem::path& file, bool writable);
  /// Creates (or opens) a database for writing.
  static Db create(const std::filesystem::path& file);

  ~Db();
  Db(Db&& other) noexcept : db_(other.db_) { other.db_ = nullptr; }
  Db(const Db&) = delete;
  Db& operator=(const Db&) = delete;

  void exec(const std::string& sql);
  Stmt prepare(const std::string& sql) { return Stmt(db_, sql); }
  bool table_exists(const std::string& name);
  void require_table(const std::string& name);

  sqlite3* raw() { return db_; }

 private:
  explicit Db(sqlite3* db) : db_(db) {}
  sqlite3* db_ = nullptr;
};

}  // namespace bpi::sqlite
