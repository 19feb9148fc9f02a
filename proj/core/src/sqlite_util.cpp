#include "sqlite_util.hpp"

#include <cstring>
#include <fstream>

namespace bpi::sqlite {

namespace {

constexpr char kMagic[] = "SQLite format 3";

void check_magic(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open " + file.string());
  char head[16] = {};
  in.read(head, sizeof head);
  if (in.gcount() < 16 || std::memcmp(head, kMagic, 16) != 0)
    throw FormatError(file.string() + " is not an SQLite3 database");
}

[[noreturn]] void raise(sqlite3* db, const std::string& context) {
  throw FormatError(context + ": " + (db ? sqlite3_errmsg(db) : "unknown sqlite error"));
}

}  // namespace

Stmt::Stmt(sqlite3* db, const std::string& sql) {
  if (sqlite3_prepare_v2(db, sql.c_str(), -1, &stmt_, nullptr) != SQLITE_OK)
    raise(db, "prepare failed");
}

Stmt::~Stmt() {
  if (stmt_) sqlite3_finalize(stmt_);
}

Stmt& Stmt::bind_text(int idx, std::string_view v) {
  sqlite3_bind_text(stmt_, idx, v.data(), static_cast<int>(v.size()), SQLITE_TRANSIENT);
  return *this;
}

Stmt& Stmt::bind_int64(int idx, std::int64_t v) {
  sqlite3_bind_int64(stmt_, idx, v);
  return *this;
}

Stmt& Stmt::bind_blob(int idx, const Bytes& v) {
  sqlite3_bind_blob(stmt_, idx, v.data(), static_cast<int>(v.size()), SQLITE_TRANSIENT);
  return *this;
}

bool Stmt::step() {
  int rc = sqlite3_step(stmt_);
  if (rc == SQLITE_ROW) return true;
  if (rc == SQLITE_DONE) return false;
  raise(sqlite3_db_handle(stmt_), "step failed");
}

void Stmt::run() {
  while (step()) {
  }
}

std::int64_t Stmt::col_int64(int idx) const {
  return sqlite3_column_int64(stmt_, idx);
}

std::string Stmt::col_text(int idx) const {
  const auto* p = sqlite3_column_text(stmt_, idx);
  int n = sqlite3_column_bytes(stmt_, idx);
  return p ? std::string(reinterpret_cast<const char*>(p), n) : std::string();
}

Bytes Stmt::col_blob(int idx) const {
  const auto* p = static_cast<const std::uint8_t*>(sqlite3_column_blob(stmt_, idx));
  int n = sqlite3_column_bytes(stmt_, idx);
  return p ? Bytes(p, p + n) : Bytes();
}

bool Stmt::col_is_null(int idx) const {
  return sqlite3_column_type(stmt_, idx) == SQLITE_NULL;
}

Db Db::open(const std::filesystem::path& file, bool writable) {
  if (!std::filesystem::exists(file)) throw IoError("no such file: " + file.string());
  check_magic(file);
  sqlite3* db = nullptr;
  int flags = writable ? SQLITE_OPEN_READWRITE : SQLITE_OPEN_READONLY;
  if (sqlite3_open_v2(file.string().c_str(), &db, flags, nullptr) != SQLITE_OK) {
    std::string msg = db ? sqlite3_errmsg(db) : "open failed";
    sqlite3_close(db);
    throw IoError("open " + file.string() + ": " + msg);
  }
  return Db(db);
}

Db Db::create(const std::filesystem::path& file) {
  sqlite3* db = nullptr;
  if (sqlite3_open_v2(file.string().c_str(), &db,
                      SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE, nullptr) != SQLITE_OK) {
    std::string msg = db ? sqlite3_errmsg(db) : "open failed";
    sqlite3_close(db);
    throw IoError("create " + file.string() + ": " + msg);
  }
  return Db(db);
}

Db::~Db() {
  if (db_) sqlite3_close(db_);
}

void Db::exec(const std::string& sql) {
  char* err = nullptr;
  if (sqlite3_exec(db_, sql.c_str(), nullptr, nullptr, &err) != SQLITE_OK) {
    std::string msg = err ? err : "exec failed";
    sqlite3_free(err);
    throw FormatError(msg);
  }
}

bool Db::table_exists(const std::string& name) {
  auto stmt = prepare("SELECT 1 FROM sqlite_master WHERE type='table' AND name=?1");
  stmt.bind_text(1, name);
  return stmt.step();
}

void Db::require_table(const std::string& name) {
  if (!table_exists(name)) throw FormatError("missing table: " + name);
}

}  // namespace bpi::sqlite
