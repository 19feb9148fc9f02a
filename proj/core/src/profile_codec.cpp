#include "bpi/profile_codec.hpp"

#include <algorithm>
#include <fstream>
#include <span>

#include <nlohmann/json.hpp>

#include "bpi/errors.hpp"
#include "bpi/zipfile.hpp"
#include "sqlite_util.hpp"

namespace bpi::codec {

namespace stdfs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kFixtureMarker[] = ".sentinel-fixture";

std::string slurp(const stdfs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open " + file.string());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void spew(const stdfs::path& file, std::string_view text) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + file.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("short write to " + file.string());
}

void require_fixture(const stdfs::path& store) {
  if (!in_fixture(store.parent_path()))
    throw GuardError("refusing to modify " + store.string() +
                     ": no " + kFixtureMarker + " marker in scope");
}

bool looks_like_sqlite(const stdfs::path& file) {
  std::ifstream in(file, std::ios::binary);
  char head[16] = {};
  in.read(head, sizeof head);
  return in.gcount() == 16 && std::string_view(head, 15) == "SQLite format 3";
}

json parse_json_or_throw(std::string_view text, const std::string& what) {
  json doc = json::parse(text, nullptr, false);
  if (doc.is_discarded()) throw FormatError("malformed JSON in " + what);
  return doc;
}

std::string ensure_trailing_slash(std::string s) {
  if (s.empty() || s.back() != '/') s += '/';
  return s;
}

std::vector<std::string> split_dotted(const std::string& dotted) {
  std::vector<std::string> keys;
  if (dotted.empty()) return keys;
  std::size_t pos = 0;
  while (true) {
    auto dot = dotted.find('.', pos);
    if (dot == std::string::npos) {
      keys.push_back(dotted.substr(pos));
      break;
    }
    keys.push_back(dotted.substr(pos, dot - pos));
    pos = dot + 1;
  }
  return keys;
}

}  // namespace

bool in_fixture(const stdfs::path& path) {
  stdfs::path p = path;
  for (int i = 0; i < 3 && !p.empty(); ++i) {
    if (stdfs::exists(p / kFixtureMarker)) return true;
    auto parent = p.parent_path();
    if (parent == p) break;
    p = parent;
  }
  return false;
}

// --------------------------- cookie stores ---------------------------------

namespace {

constexpr char kChromiumCookieCols[] =
    "host_key,top_frame_site_key,value,is_httponly,creation_utc,name,encrypted_value,path,"
    "expires_utc,is_secure,last_access_utc,has_expires,is_persistent,priority,samesite,"
    "source_scheme,source_port,is_same_party,last_update_utc";

CookieRecord row_to_cookie(sqlite::Stmt& s) {
  CookieRecord r;
  r.host_key = s.col_text(0);
  r.top_frame_site_key = s.col_text(1);
  r.value = s.col_text(2);
  r.is_httponly = static_cast<int>(s.col_int64(3));
  r.creation_utc = s.col_int64(4);
  r.name = s.col_text(5);
  r.encrypted_value = s.col_blob(6);
  r.path = s.col_text(7);
  r.expires_utc = s.col_int64(8);
  r.is_secure = static_cast<int>(s.col_int64(9));
  r.last_access_utc = s.col_int64(10);
  r.has_expires = static_cast<int>(s.col_int64(11));
  r.is_persistent = static_cast<int>(s.col_int64(12));
  r.priority = static_cast<int>(s.col_int64(13));
  r.samesite = static_cast<int>(s.col_int64(14));
  r.source_scheme = static_cast<int>(s.col_int64(15));
  r.source_port = static_cast<int>(s.col_int64(16));
  r.is_same_party = static_cast<int>(s.col_int64(17));
  r.last_update_utc = s.col_int64(18);
  return r;
}

void bind_cookie(sqlite::Stmt& s, const CookieRecord& r) {
  s.bind_text(1, r.host_key)
      .bind_text(2, r.top_frame_site_key)
      .bind_text(3, r.value)
      .bind_int64(4, r.is_httponly)
      .bind_int64(5, r.creation_utc)
      .bind_text(6, r.name)
      .bind_blob(7, r.encrypted_value)
      .bind_text(8, r.path)
      .bind_int64(9, r.expires_utc)
      .bind_int64(10, r.is_secure)
      .bind_int64(11, r.last_access_utc)
      .bind_int64(12, r.has_expires)
      .bind_int64(13, r.is_persistent)
      .bind_int64(14, r.priority)
      .bind_int64(15, r.samesite)
      .bind_int64(16, r.source_scheme)
      .bind_int64(17, r.source_port)
      .bind_int64(18, r.is_same_party)
      .bind_int64(19, r.last_update_utc);
}

}  // namespace

std::vector<CookieRecord> read_chromium_cookies(const stdfs::path& store) {
  auto db = sqlite::Db::open(store, /*writable=*/false);
  db.require_table("cookies");
  auto stmt = db.prepare(std::string("SELECT ") + kChromiumCookieCols +
                         " FROM cookies ORDER BY rowid");
  std::vector<CookieRecord> rows;
  while (stmt.step()) rows.push_back(row_to_cookie(stmt));
  return rows;
}

std::vector<GeckoCookieRecord> read_gecko_cookies(const stdfs::path& store) {
  auto db = sqlite::Db::open(store, /*writable=*/false);
  db.require_table("moz_cookies");
  auto stmt = db.prepare(
      "SELECT host,name,value,path,expiry,isSecure,isHttpOnly,sameSite FROM moz_cookies "
      "ORDER BY rowid");
  std::vector<GeckoCookieRecord> rows;
  while (stmt.step()) {
    GeckoCookieRecord r;
    r.host = stmt.col_text(0);
    r.name = stmt.col_text(1);
    r.value = stmt.col_text(2);
    r.path = stmt.col_text(3);
    r.expiry = stmt.col_int64(4);
    r.is_secure = static_cast<int>(stmt.col_int64(5));
    r.is_httponly = static_cast<int>(stmt.col_int64(6));
    r.samesite = static_cast<int>(stmt.col_int64(7));
    rows.push_back(std::move(r));
  }
  return rows;
}

CookieStore read_cookie_store(const stdfs::path& store, Engine engine) {
  CookieStore out;
  out.engine = engine;
  if (engine == Engine::chromium)
    out.chromium = read_chromium_cookies(store);
  else
    out.gecko = read_gecko_cookies(store);
  return out;
}

std::size_t insert_cookie_copy(const stdfs::path& store, const std::string& source_host,
                               const std::string& dest_host, bool clear_httponly) {
  require_fixture(store);
  auto db = sqlite::Db::open(store, /*writable=*/true);
  db.require_table("cookies");
  // Mirrors the copy-and-rehome query shape: host_key replaced,
  // top_frame_site_key and value blanked, every other column carried over.
  std::string httponly_expr = clear_httponly ? "0" : "is_httponly";
  auto stmt = db.prepare(
      std::string("INSERT INTO cookies (") + kChromiumCookieCols + ") SELECT ?1,\"\",\"\"," +
      httponly_expr +
      ",creation_utc,name,encrypted_value,path,expires_utc,is_secure,last_access_utc,"
      "has_expires,is_persistent,priority,samesite,source_scheme,source_port,is_same_party,"
      "last_update_utc FROM cookies WHERE host_key = ?2");
  stmt.bind_text(1, dest_host).bind_text(2, source_host);
  stmt.run();
  return static_cast<std::size_t>(sqlite3_changes(db.raw()));
}

// ---------------------------- login stores ---------------------------------

namespace {

constexpr char kLoginCols[] =
    "origin_url,action_url,username_element,username_value,password_element,password_value,"
    "signon_realm,date_created,blacklisted_by_user,scheme,password_type,times_used,form_data,"
    "skip_zero_click,generation_upload_status,date_last_used,date_password_modified,"
    "date_received,sharing_notification_displayed";

std::vector<LoginRecord> read_chromium_logins(const stdfs::path& store) {
  auto db = sqlite::Db::open(store, /*writable=*/false);
  db.require_table("logins");
  auto stmt =
      db.prepare(std::string("SELECT ") + kLoginCols + " FROM logins ORDER BY rowid");
  std::vector<LoginRecord> rows;
  while (stmt.step()) {
    LoginRecord r;
    r.origin_url = stmt.col_text(0);
    r.action_url = stmt.col_text(1);
    r.username_element = stmt.col_text(2);
    r.username_value = stmt.col_text(3);
    r.password_element = stmt.col_text(4);
    r.password_value = stmt.col_blob(5);
    r.signon_realm = stmt.col_text(6);
    r.date_created = stmt.col_int64(7);
    r.blacklisted_by_user = static_cast<int>(stmt.col_int64(8));
    r.scheme = static_cast<int>(stmt.col_int64(9));
    r.password_type = static_cast<int>(stmt.col_int64(10));
    r.times_used = static_cast<int>(stmt.col_int64(11));
    r.form_data = stmt.col_blob(12);
    r.skip_zero_click = static_cast<int>(stmt.col_int64(13));
    r.generation_upload_status = static_cast<int>(stmt.col_int64(14));
    r.date_last_used = stmt.col_int64(15);
    r.date_password_modified = stmt.col_int64(16);
    r.date_received = stmt.col_int64(17);
    r.sharing_notification_displayed = static_cast<int>(stmt.col_int64(18));
    rows.push_back(std::move(r));
  }
  return rows;
}

LoginRecord login_from_gecko_entry(const json& e) {
  LoginRecord r;
  r.origin_url = e.value("hostname", "");
  if (e.contains("formSubmitURL") && e["formSubmitURL"].is_string())
    r.action_url = e["formSubmitURL"].get<std::string>();
  r.username_element = e.value("usernameField", "");
  r.username_value = e.value("encryptedUsername", "");
  r.password_element = e.value("passwordField", "");
  r.password_value = to_bytes(e.value("encryptedPassword", ""));
  r.signon_realm = r.origin_url;
  r.date_created = e.value("timeCreated", std::int64_t{0});
  r.date_last_used = e.value("timeLastUsed", std::int64_t{0});
  r.date_password_modified = e.value("timePasswordChanged", std::int64_t{0});
  r.times_used = e.value("timesUsed", 0);
  return r;
}

json gecko_entry_from_login(const LoginRecord& r, int id) {
  json e;
  e["id"] = id;
  e["hostname"] = r.origin_url;
  e["httpRealm"] = nullptr;
  e["formSubmitURL"] = r.action_url;
  e["usernameField"] = r.username_element;
  e["passwordField"] = r.password_element;
  e["encryptedUsername"] = r.username_value;
  e["encryptedPassword"] = to_string(r.password_value);
  e["guid"] = "{fixture-login-" + std::to_string(id) + "}";
  e["encType"] = 1;
  e["timeCreated"] = r.date_created;
  e["timeLastUsed"] = r.date_last_used;
  e["timePasswordChanged"] = r.date_password_modified;
  e["timesUsed"] = r.times_used;
  return e;
}

}  // namespace

std::vector<LoginRecord> read_login_store(const stdfs::path& store, Engine engine) {
  if (engine == Engine::chromium) return read_chromium_logins(store);
  auto doc = parse_json_or_throw(slurp(store), store.string());
  if (!doc.contains("logins") || !doc["logins"].is_array())
    throw FormatError(store.string() + ": no logins array");
  std::vector<LoginRecord> rows;
  for (const auto& e : doc["logins"]) rows.push_back(login_from_gecko_entry(e));
  return rows;
}

std::size_t insert_login_copy(const stdfs::path& store, const std::string& source_origin,
                              const std::string& dest_origin) {
  require_fixture(store);
  const std::string dest_slash = ensure_trailing_slash(dest_origin);

  if (looks_like_sqlite(store)) {
    auto db = sqlite::Db::open(store, /*writable=*/true);
    db.require_table("logins");
    auto stmt = db.prepare(
        std::string("INSERT INTO logins (") + kLoginCols +
        ") SELECT ?1, ?2, \"email\", username_value, \"pass\", password_value, ?2, "
        "date_created,blacklisted_by_user,scheme,password_type,times_used,form_data,"
        "skip_zero_click,generation_upload_status,date_last_used,date_password_modified,"
        "date_received,sharing_notification_displayed FROM logins WHERE origin_url = ?3");
    stmt.bind_text(1, dest_origin).bind_text(2, dest_slash).bind_text(3, source_origin);
    stmt.run();
    return static_cast<std::size_t>(sqlite3_changes(db.raw()));
  }

  // logins.json route: same rewrite applied to the document entries.
  auto doc = parse_json_or_throw(slurp(store), store.string());
  if (!doc.contains("logins") || !doc["logins"].is_array())
    throw FormatError(store.string() + ": no logins array");
  int next_id = doc.value("nextId", static_cast<int>(doc["logins"].size()) + 1);
  std::vector<json> copies;
  for (const auto& e : doc["logins"]) {
    if (e.value("hostname", "") != source_origin) continue;
    json copy = e;
    copy["id"] = next_id;
    copy["hostname"] = dest_origin;
    copy["formSubmitURL"] = dest_slash;
    copy["usernameField"] = "email";
    copy["passwordField"] = "pass";
    copy["guid"] = "{rehomed-" + std::to_string(next_id) + "}";
    ++next_id;
    copies.push_back(std::move(copy));
  }
  for (auto& c : copies) doc["logins"].push_back(std::move(c));
  doc["nextId"] = next_id;
  spew(store, doc.dump());
  return copies.size();
}

// ---------------------------- permissions ----------------------------------

namespace {

const std::pair<const char*, const char*> kPermissionKeyMap[] = {
    {"camera", "media_stream_camera"},
    {"microphone", "media_stream_mic"},
    {"geo", "geolocation"},
    {"desktop-notification", "notifications"},
};

std::string chromium_settings_key(const std::string& type) {
  for (const auto& [t, key] : kPermissionKeyMap)
    if (type == t) return key;
  return type;  // pass through unmapped types
}

std::string type_from_settings_key(const std::string& key) {
  for (const auto& [t, k] : kPermissionKeyMap)
    if (key == k) return t;
  return key;
}

std::vector<PermissionRecord> read_gecko_permissions(const stdfs::path& store) {
  auto db = sqlite::Db::open(store, /*writable=*/false);
  db.require_table("moz_perms");
  auto stmt = db.prepare(
      "SELECT origin,type,permission,expireType,expireTime,modificationTime FROM moz_perms "
      "ORDER BY rowid");
  std::vector<PermissionRecord> rows;
  while (stmt.step()) {
    PermissionRecord r;
    r.origin = stmt.col_text(0);
    r.type = stmt.col_text(1);
    r.permission = static_cast<int>(stmt.col_int64(2));
    r.expire_type = static_cast<int>(stmt.col_int64(3));
    r.expire_time = stmt.col_int64(4);
    r.modification_time = stmt.col_int64(5);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<PermissionRecord> read_chromium_permissions(const stdfs::path& prefs_file) {
  auto tree = read_preferences(prefs_file);
  std::vector<PermissionRecord> rows;
  auto exceptions = get_path(tree, "profile.content_settings.exceptions");
  if (!exceptions || !exceptions->is_object()) return rows;
  for (const auto& [settings_key, entries] : exceptions->items()) {
    if (!entries.is_object()) continue;
    for (const auto& [pattern, body] : entries.items()) {
      PermissionRecord r;
      r.origin = pattern.substr(0, pattern.find(','));
      r.type = type_from_settings_key(settings_key);
      if (body.is_object()) {
        r.permission = body.value("setting", 0);
        r.modification_time = body.value("last_modified", std::int64_t{0});
      }
      rows.push_back(std::move(r));
    }
  }
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    return std::tie(a.type, a.origin) < std::tie(b.type, b.origin);
  });
  return rows;
}

}  // namespace

std::vector<PermissionRecord> read_permissions(const ProfileDescriptor& profile) {
  const stdfs::path root = profile.profile_path;
  if (profile.engine == Engine::gecko) return read_gecko_permissions(root / "permissions.sqlite");
  return read_chromium_permissions(root / "Preferences");
}

std::size_t grant_permission(const std::string& profile_path, Engine engine,
                             const PermissionRecord& rec) {
  const stdfs::path root = profile_path;
  if (engine == Engine::gecko) {
    const auto store = root / "permissions.sqlite";
    auto db = stdfs::exists(store) ? sqlite::Db::open(store, /*writable=*/true)
                                   : sqlite::Db::create(store);
    if (!db.table_exists("moz_perms"))
      db.exec(
          "CREATE TABLE moz_perms (id INTEGER PRIMARY KEY, origin TEXT, type TEXT, "
          "permission INTEGER, expireType INTEGER, expireTime INTEGER, "
          "modificationTime INTEGER)");
    auto probe = db.prepare("SELECT 1 FROM moz_perms WHERE origin=?1 AND type=?2");
    probe.bind_text(1, rec.origin).bind_text(2, rec.type);
    if (probe.step()) return 0;
    auto ins = db.prepare(
        "INSERT INTO moz_perms (origin, type, permission, expireType, expireTime, "
        "modificationTime) VALUES (?1, ?2, ?3, ?4, ?5, ?6)");
    ins.bind_text(1, rec.origin)
        .bind_text(2, rec.type)
        .bind_int64(3, rec.permission)
        .bind_int64(4, rec.expire_type)
        .bind_int64(5, rec.expire_time)
        .bind_int64(6, rec.modification_time);
    ins.run();
    return 1;
  }

  const auto prefs_file = root / "Preferences";
  auto tree = stdfs::exists(prefs_file) ? read_preferences(prefs_file)
                                        : parse_preferences("{}");
  const std::string dotted = "profile.content_settings.exceptions." +
                             chromium_settings_key(rec.type);
  auto existing = get_path(tree, dotted);
  const std::string pattern = rec.origin + ",*";
  if (existing && existing->is_object() && existing->contains(pattern) &&
      (*existing)[pattern].value("setting", 0) == rec.permission)
    return 0;
  json body;
  body["setting"] = rec.permission;
  body["last_modified"] = rec.modification_time;
  json bucket = existing && existing->is_object() ? *existing : json::object();
  bucket[pattern] = body;
  set_path(tree, dotted, bucket);
  write_preferences(prefs_file, tree);
  return 1;
}

// ------------------------------ prefs.js -----------------------------------

namespace {

struct Cursor {
  std::string_view s;
  std::size_t i = 0;

  void skip_ws() {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
  }
  bool eat(char c) {
    if (i < s.size() && s[i] == c) {
      ++i;
      return true;
    }
    return false;
  }
  bool eat_word(std::string_view w) {
    if (s.compare(i, w.size(), w) == 0) {
      i += w.size();
      return true;
    }
    return false;
  }
  bool done() const { return i >= s.size(); }
};

std::string parse_quoted(Cursor& c) {
  char delim = c.s[c.i];
  ++c.i;
  std::string out;
  while (true) {
    if (c.done()) throw Error("unterminated string");
    char ch = c.s[c.i++];
    if (ch == delim) return out;
    if (ch != '\\') {
      out.push_back(ch);
      continue;
    }
    if (c.done()) throw Error("dangling escape");
    char esc = c.s[c.i++];
    switch (esc) {
      case '\\': out.push_back('\\'); break;
      case '"': out.push_back('"'); break;
      case '\'': out.push_back('\''); break;
      case 'n': out.push_back('\n'); break;
      case 'r': out.push_back('\r'); break;
      case 't': out.push_back('\t'); break;
      default: throw Error(std::string("unknown escape \\") + esc);
    }
  }
}

PrefValue parse_value(Cursor& c) {
  if (c.done()) throw Error("missing value");
  char ch = c.s[c.i];
  if (ch == '"' || ch == '\'') return parse_quoted(c);
  if (c.eat_word("true")) return true;
  if (c.eat_word("false")) return false;
  std::size_t start = c.i;
  if (ch == '-') ++c.i;
  while (!c.done() && c.s[c.i] >= '0' && c.s[c.i] <= '9') ++c.i;
  if (c.i == start || (c.s[start] == '-' && c.i == start + 1))
    throw Error("expected boolean, integer or quoted string");
  return static_cast<std::int64_t>(std::stoll(std::string(c.s.substr(start, c.i - start))));
}

std::optional<PrefEntry> parse_line(std::string_view line) {
  Cursor c{line};
  c.skip_ws();
  if (c.done()) return std::nullopt;
  if (c.s.compare(c.i, 2, "//") == 0) return std::nullopt;
  if (!c.eat_word("user_pref")) throw Error("expected user_pref");
  c.skip_ws();
  if (!c.eat('(')) throw Error("expected '('");
  c.skip_ws();
  if (c.done() || (c.s[c.i] != '"' && c.s[c.i] != '\'')) throw Error("expected quoted name");
  PrefEntry entry;
  entry.name = parse_quoted(c);
  if (entry.name.empty()) throw Error("empty pref name");
  c.skip_ws();
  if (!c.eat(',')) throw Error("expected ','");
  c.skip_ws();
  entry.value = parse_value(c);
  c.skip_ws();
  if (!c.eat(')')) throw Error("expected ')'");
  c.skip_ws();
  if (!c.eat(';')) throw Error("expected ';'");
  c.skip_ws();
  if (!c.done() && c.s.compare(c.i, 2, "//") != 0) throw Error("trailing characters");
  return entry;
}

void escape_into(std::string& out, std::string_view s) {
  for (char ch : s) {
    switch (ch) {
      case '\\': out += "\\\\"; break;
      case '"': out += "\\\""; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default: out.push_back(ch);
    }
  }
}

}  // namespace

PrefsParse parse_prefs_js(std::string_view text, bool strict) {
  PrefsParse out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    std::string_view line =
        text.substr(pos, eol == std::string_view::npos ? text.size() - pos : eol - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    ++line_no;
    try {
      if (auto entry = parse_line(line)) out.entries.push_back(std::move(*entry));
    } catch (const Error& e) {
      if (strict) throw ParseError(line_no, e.what());
      out.warnings.push_back("line " + std::to_string(line_no) + " skipped: " + e.what());
    }
    if (eol == std::string_view::npos) break;
    pos = eol + 1;
  }
  return out;
}

std::string serialize_prefs_js(const std::vector<PrefEntry>& entries) {
  std::string out;
  for (const auto& e : entries) {
    out += "user_pref(\"";
    escape_into(out, e.name);
    out += "\", ";
    if (std::holds_alternative<bool>(e.value)) {
      out += std::get<bool>(e.value) ? "true" : "false";
    } else if (std::holds_alternative<std::int64_t>(e.value)) {
      out += std::to_string(std::get<std::int64_t>(e.value));
    } else {
      out += '"';
      escape_into(out, std::get<std::string>(e.value));
      out += '"';
    }
    out += ");\n";
  }
  return out;
}

std::vector<PrefEntry> read_prefs_js(const stdfs::path& file, bool strict) {
  return parse_prefs_js(slurp(file), strict).entries;
}

void write_prefs_js(const stdfs::path& file, const std::vector<PrefEntry>& entries) {
  spew(file, serialize_prefs_js(entries));
}

void upsert_prefs(std::vector<PrefEntry>& entries, const std::vector<PrefEntry>& updates) {
  for (const auto& u : updates) {
    auto it = std::find_if(entries.begin(), entries.end(),
                           [&](const PrefEntry& e) { return e.name == u.name; });
    if (it != entries.end())
      it->value = u.value;
    else
      entries.push_back(u);
  }
}

// ----------------------------- Preferences ---------------------------------

PreferenceTree::PreferenceTree() : root_(std::make_unique<json>(json::object())) {}
PreferenceTree::PreferenceTree(json root) : root_(std::make_unique<json>(std::move(root))) {}
PreferenceTree::PreferenceTree(const PreferenceTree& other)
    : root_(std::make_unique<json>(*other.root_)) {}
PreferenceTree::PreferenceTree(PreferenceTree&&) noexcept = default;
PreferenceTree& PreferenceTree::operator=(const PreferenceTree& other) {
  root_ = std::make_unique<json>(*other.root_);
  return *this;
}
PreferenceTree& PreferenceTree::operator=(PreferenceTree&&) noexcept = default;
PreferenceTree::~PreferenceTree() = default;

json& PreferenceTree::root() { return *root_; }
const json& PreferenceTree::root() const { return *root_; }

PreferenceTree parse_preferences(std::string_view text) {
  auto doc = parse_json_or_throw(text, "Preferences document");
  if (!doc.is_object()) throw FormatError("Preferences root must be an object");
  return PreferenceTree(std::move(doc));
}

PreferenceTree read_preferences(const stdfs::path& file) {
  return parse_preferences(slurp(file));
}

std::string serialize_preferences(const PreferenceTree& tree) {
  return tree.root().dump();  // nlohmann objects keep keys sorted
}

void write_preferences(const stdfs::path& file, const PreferenceTree& tree) {
  spew(file, serialize_preferences(tree));
}

std::optional<json> get_path(const PreferenceTree& tree, const std::string& dotted) {
  const json* node = &tree.root();
  for (const auto& key : split_dotted(dotted)) {
    if (!node->is_object()) throw PathTypeError("scalar in path at '" + key + "'");
    auto it = node->find(key);
    if (it == node->end()) return std::nullopt;
    node = &*it;
  }
  return std::optional<json>(std::in_place, *node);
}

void set_path(PreferenceTree& tree, const std::string& dotted, const json& value) {
  auto keys = split_dotted(dotted);
  if (keys.empty()) throw PathTypeError("empty path");
  json* node = &tree.root();
  for (std::size_t i = 0; i + 1 < keys.size(); ++i) {
    if (!node->is_object()) throw PathTypeError("scalar in path at '" + keys[i] + "'");
    json& next = (*node)[keys[i]];
    if (next.is_null()) next = json::object();
    node = &next;
  }
  if (!node->is_object()) throw PathTypeError("scalar in path at '" + keys.back() + "'");
  (*node)[keys.back()] = value;
}

namespace {

void flatten_macs(const json& node, const std::string& prefix,
                  std::map<std::string, std::string>& out) {
  if (node.is_object()) {
    for (const auto& [key, child] : node.items()) {
      flatten_macs(child, prefix.empty() ? key : prefix + "." + key, out);
    }
  } else if (node.is_string()) {
    out[prefix] = node.get<std::string>();
  }
}

}  // namespace

std::map<std::string, std::string> list_macs(const PreferenceTree& tree) {
  std::map<std::string, std::string> out;
  auto macs = get_path(tree, "protection.macs");
  if (macs) flatten_macs(*macs, "", out);
  return out;
}

// ------------------------------ extensions ---------------------------------

namespace {

bool owner_writable(const stdfs::path& p) {
  std::error_code ec;
  auto st = stdfs::status(p, ec);
  if (ec) return false;
  return (st.permissions() & stdfs::perms::owner_write) != stdfs::perms::none;
}

void inspect_metadata(ExtensionRecord& rec) {
  const stdfs::path meta = stdfs::path(rec.install_path) / "_metadata";
  std::error_code ec;
  rec.has_metadata_dir = stdfs::is_directory(meta, ec);
  if (rec.has_metadata_dir) rec.metadata_writable = owner_writable(meta);
}

ExtensionsRead read_chromium_extensions(const ProfileDescriptor& profile) {
  ExtensionsRead out;
  const stdfs::path root = profile.profile_path;
  const stdfs::path ext_root = root / "Extensions";

  std::map<std::string, ExtensionRecord> by_id;

  // Preferences settings entries are authoritative for provenance and state.
  std::map<std::string, std::string> macs;
  if (stdfs::exists(root / "Preferences")) {
    try {
      auto tree = read_preferences(root / "Preferences");
      macs = list_macs(tree);
      if (auto settings = get_path(tree, "extensions.settings");
          settings && settings->is_object()) {
        for (const auto& [id, body] : settings->items()) {
          ExtensionRecord rec;
          rec.id = id;
          if (body.is_object()) {
            rec.from_webstore = body.value("from_webstore", false);
            rec.state = body.value("state", 0);
            std::string path = body.value("path", "");
            rec.install_path = (!path.empty() && path.front() == '/')
                                   ? path
                                   : (ext_root / path).string();
            if (body.contains("manifest") && body["manifest"].is_object())
              rec.version = body["manifest"].value("version", "");
            if (body.contains("granted_permissions") &&
                body["granted_permissions"].is_object()) {
              const auto& gp = body["granted_permissions"];
              for (const char* bucket : {"api", "explicit_host"}) {
                if (gp.contains(bucket) && gp[bucket].is_array())
                  for (const auto& p : gp[bucket])
                    if (p.is_string()) rec.granted_permissions.push_back(p.get<std::string>());
              }
            }
          }
          if (auto it = macs.find("extensions.settings." + id); it != macs.end())
            rec.mac = it->second;
          inspect_metadata(rec);
          by_id.emplace(id, std::move(rec));
        }
      }
    } catch (const Error& e) {
      out.warnings.push_back(std::string("Preferences: ") + e.what());
    }
  }

  // Directories with no settings entry still yield records, with unknown
  // provenance.
  std::error_code ec;
  for (stdfs::directory_iterator it(ext_root, ec), end; !ec && it != end; it.increment(ec)) {
    if (!it->is_directory()) continue;
    const std::string id = it->path().filename().string();
    if (by_id.contains(id)) continue;
    ExtensionRecord rec;
    rec.id = id;
    std::vector<stdfs::path> versions;
    for (const auto& v : stdfs::directory_iterator(it->path()))
      if (v.is_directory()) versions.push_back(v.path());
    std::sort(versions.begin(), versions.end());
    rec.install_path = versions.empty() ? it->path().string() : versions.back().string();
    if (!versions.empty()) rec.version = versions.back().filename().string();
    inspect_metadata(rec);
    by_id.emplace(id, std::move(rec));
  }

  for (auto& [_, rec] : by_id) out.records.push_back(std::move(rec));
  return out;
}

ExtensionsRead read_gecko_extensions(const ProfileDescriptor& profile) {
  ExtensionsRead out;
  const stdfs::path root = profile.profile_path;
  const auto manifest = root / "extensions.json";
  if (!stdfs::exists(manifest)) return out;

  json doc;
  try {
    doc = parse_json_or_throw(slurp(manifest), manifest.string());
  } catch (const Error& e) {
    out.warnings.push_back(e.what());
    return out;
  }
  if (!doc.contains("addons") || !doc["addons"].is_array()) return out;

  for (const auto& addon : doc["addons"]) {
    ExtensionRecord rec;
    rec.id = addon.value("id", "");
    rec.version = addon.value("version", "");
    rec.install_path = addon.value("path", "");
    if (!rec.install_path.empty() && rec.install_path.front() != '/')
      rec.install_path = (root / rec.install_path).string();
    rec.from_webstore = addon.value("signedState", 0) >= 2;
    rec.state = addon.value("active", false) ? 1 : 0;
    if (addon.contains("userPermissions") && addon["userPermissions"].is_object()) {
      const auto& perms = addon["userPermissions"];
      if (perms.contains("permissions") && perms["permissions"].is_array())
        for (const auto& p : perms["permissions"])
          if (p.is_string()) rec.granted_permissions.push_back(p.get<std::string>());
    }
    // XPI bundles carry their signing metadata in META-INF/.
    if (!rec.install_path.empty() && stdfs::exists(rec.install_path)) {
      try {
        for (const auto& entry : zip::read_entries(rec.install_path)) {
          if (entry.name.rfind("META-INF/", 0) == 0) {
            rec.has_metadata_dir = true;
            break;
          }
        }
      } catch (const Error& e) {
        out.warnings.push_back(rec.id + ": " + e.what());
      }
    }
    out.records.push_back(std::move(rec));
  }
  return out;
}

}  // namespace

ExtensionsRead read_extensions(const ProfileDescriptor& profile) {
  return profile.engine == Engine::chromium ? read_chromium_extensions(profile)
                                            : read_gecko_extensions(profile);
}

// ---------------------------- cert stores ----------------------------------

namespace {

// Definite-length DER TLV at `off`; returns {header size, payload length}.
std::optional<std::pair<std::size_t, std::size_t>> der_tlv(std::span<const std::uint8_t> buf,
                                                           std::size_t off) {
  if (off + 2 > buf.size()) return std::nullopt;
  const std::uint8_t len_byte = buf[off + 1];
  std::size_t header = 0, length = 0;
  if (len_byte < 0x80) {
    header = 2;
    length = len_byte;
  } else if (len_byte == 0x81) {
    if (off + 3 > buf.size()) return std::nullopt;
    header = 3;
    length = buf[off + 2];
  } else if (len_byte == 0x82) {
    if (off + 4 > buf.size()) return std::nullopt;
    header = 4;
    length = (static_cast<std::size_t>(buf[off + 2]) << 8) | buf[off + 3];
  } else {
    return std::nullopt;
  }
  if (off + header + length > buf.size()) return std::nullopt;
  return std::make_pair(header, length);
}

// Certificate shape: SEQUENCE { SEQUENCE tbs, SEQUENCE sigAlg, BIT STRING sig }.
std::optional<std::size_t> certificate_at(std::span<const std::uint8_t> buf, std::size_t off) {
  if (buf[off] != 0x30) return std::nullopt;
  auto outer = der_tlv(buf, off);
  if (!outer) return std::nullopt;
  const std::size_t body = off + outer->first;
  const std::size_t end = body + outer->second;

  std::size_t pos = body;
  const std::uint8_t expect_tags[] = {0x30, 0x30, 0x03};
  for (std::uint8_t tag : expect_tags) {
    if (pos >= end || buf[pos] != tag) return std::nullopt;
    auto tlv = der_tlv(buf, pos);
    if (!tlv) return std::nullopt;
    pos += tlv->first + tlv->second;
    if (pos > end) return std::nullopt;
  }
  if (pos != end) return std::nullopt;
  return outer->first + outer->second;  // total certificate size
}

}  // namespace

std::vector<CertRecord> read_cert_store(const stdfs::path& store, CertMode mode) {
  if (mode == CertMode::synthetic) {
    auto db = sqlite::Db::open(store, /*writable=*/false);
    db.require_table("cert_records");
    auto stmt = db.prepare("SELECT label,der,trust_flags FROM cert_records ORDER BY rowid");
    std::vector<CertRecord> rows;
    while (stmt.step()) {
      CertRecord r;
      r.label = stmt.col_text(0);
      r.der = stmt.col_blob(1);
      r.trust_flags = stmt.col_text(2);
      rows.push_back(std::move(r));
    }
    return rows;
  }

  // Heuristic carve: walk the raw bytes and lift every certificate-shaped
  // DER SEQUENCE, whatever container it sits in.
  std::vector<CertRecord> rows;
  std::string raw;
  try {
    raw = slurp(store);
  } catch (const Error&) {
    return rows;
  }
  std::span<const std::uint8_t> buf(reinterpret_cast<const std::uint8_t*>(raw.data()),
                                    raw.size());
  std::size_t n = 0;
  for (std::size_t off = 0; off < buf.size();) {
    if (buf[off] == 0x30) {
      if (auto total = certificate_at(buf, off)) {
        CertRecord r;
        r.label = "recovered-" + std::to_string(n++);
        r.der.assign(buf.begin() + off, buf.begin() + off + *total);
        r.trust_flags = "";
        rows.push_back(std::move(r));
        off += *total;
        continue;
      }
    }
    ++off;
  }
  return rows;
}

void append_cert_record(const stdfs::path& store, const CertRecord& rec) {
  if (rec.der.empty() || rec.der.front() != 0x30)
    throw FormatError("certificate bytes do not start with a DER SEQUENCE");
  auto db = stdfs::exists(store) ? sqlite::Db::open(store, /*writable=*/true)
                                 : sqlite::Db::create(store);
  if (!db.table_exists("cert_records"))
    db.exec("CREATE TABLE cert_records (label TEXT, der BLOB, trust_flags TEXT)");
  auto stmt =
      db.prepare("INSERT INTO cert_records (label, der, trust_flags) VALUES (?1, ?2, ?3)");
  stmt.bind_text(1, rec.label).bind_blob(2, rec.der).bind_text(3, rec.trust_flags);
  stmt.run();
}

std::string cert_fingerprint(const CertRecord& rec) {
  return hex_encode(sha256(rec.der));
}

stdfs::path cert_store_path(const stdfs::path& profile_dir, Engine engine) {
  return engine == Engine::gecko ? profile_dir / "cert9.db"
                                 : profile_dir / ".pki" / "nssdb" / "cert9.db";
}

// --------------------------- fixture writers -------------------------------

void write_chromium_cookies(const stdfs::path& store, const std::vector<CookieRecord>& rows) {
  auto db = sqlite::Db::create(store);
  db.exec(
      "CREATE TABLE cookies (host_key TEXT NOT NULL, top_frame_site_key TEXT, value TEXT, "
      "is_httponly INTEGER, creation_utc INTEGER, name TEXT, encrypted_value BLOB, path TEXT, "
      "expires_utc INTEGER, is_secure INTEGER, last_access_utc INTEGER, has_expires INTEGER, "
      "is_persistent INTEGER, priority INTEGER, samesite INTEGER, source_scheme INTEGER, "
      "source_port INTEGER, is_same_party INTEGER, last_update_utc INTEGER)");
  for (const auto& r : rows) {
    auto stmt = db.prepare(
        std::string("INSERT INTO cookies (") + kChromiumCookieCols +
        ") VALUES (?1,?2,?3,?4,?5,?6,?7,?8,?9,?10,?11,?12,?13,?14,?15,?16,?17,?18,?19)");
    bind_cookie(stmt, r);
    stmt.run();
  }
}

void write_gecko_cookies(const stdfs::path& store,
                         const std::vector<GeckoCookieRecord>& rows) {
  auto db = sqlite::Db::create(store);
  db.exec(
      "CREATE TABLE moz_cookies (host TEXT, name TEXT, value TEXT, path TEXT, "
      "expiry INTEGER, isSecure INTEGER, isHttpOnly INTEGER, sameSite INTEGER)");
  for (const auto& r : rows) {
    auto stmt = db.prepare(
        "INSERT INTO moz_cookies (host,name,value,path,expiry,isSecure,isHttpOnly,sameSite) "
        "VALUES (?1,?2,?3,?4,?5,?6,?7,?8)");
    stmt.bind_text(1, r.host)
        .bind_text(2, r.name)
        .bind_text(3, r.value)
        .bind_text(4, r.path)
        .bind_int64(5, r.expiry)
        .bind_int64(6, r.is_secure)
        .bind_int64(7, r.is_httponly)
        .bind_int64(8, r.samesite);
    stmt.run();
  }
}

void write_chromium_logins(const stdfs::path& store, const std::vector<LoginRecord>& rows) {
  auto db = sqlite::Db::create(store);
  db.exec(
      "CREATE TABLE logins (origin_url TEXT NOT NULL, action_url TEXT, "
      "username_element TEXT, username_value TEXT, password_element TEXT, "
      "password_value BLOB, signon_realm TEXT NOT NULL, date_created INTEGER, "
      "blacklisted_by_user INTEGER, scheme INTEGER, password_type INTEGER, "
      "times_used INTEGER, form_data BLOB, skip_zero_click INTEGER, "
      "generation_upload_status INTEGER, date_last_used INTEGER, "
      "date_password_modified INTEGER, date_received INTEGER, "
      "sharing_notification_displayed INTEGER)");
  for (const auto& r : rows) {
    auto stmt = db.prepare(
        std::string("INSERT INTO logins (") + kLoginCols +
        ") VALUES (?1,?2,?3,?4,?5,?6,?7,?8,?9,?10,?11,?12,?13,?14,?15,?16,?17,?18,?19)");
    stmt.bind_text(1, r.origin_url)
        .bind_text(2, r.action_url)
        .bind_text(3, r.username_element)
        .bind_text(4, r.username_value)
        .bind_text(5, r.password_element)
        .bind_blob(6, r.password_value)
        .bind_text(7, r.signon_realm)
        .bind_int64(8, r.date_created)
        .bind_int64(9, r.blacklisted_by_user)
        .bind_int64(10, r.scheme)
        .bind_int64(11, r.password_type)
        .bind_int64(12, r.times_used)
        .bind_blob(13, r.form_data)
        .bind_int64(14, r.skip_zero_click)
        .bind_int64(15, r.generation_upload_status)
        .bind_int64(16, r.date_last_used)
        .bind_int64(17, r.date_password_modified)
        .bind_int64(18, r.date_received)
        .bind_int64(19, r.sharing_notification_displayed);
    stmt.run();
  }
}

void write_gecko_logins(const stdfs::path& store, const std::vector<LoginRecord>& rows) {
  json doc;
  doc["nextId"] = static_cast<int>(rows.size()) + 1;
  doc["logins"] = json::array();
  int id = 1;
  for (const auto& r : rows) doc["logins"].push_back(gecko_entry_from_login(r, id++));
  doc["potentiallyVulnerablePasswords"] = json::array();
  doc["dismissedBreachAlertsByLoginGUID"] = json::object();
  doc["version"] = 3;
  spew(store, doc.dump());
}

void write_gecko_permissions(const stdfs::path& store,
                             const std::vector<PermissionRecord>& rows) {
  auto db = sqlite::Db::create(store);
  db.exec(
      "CREATE TABLE moz_perms (id INTEGER PRIMARY KEY, origin TEXT, type TEXT, "
      "permission INTEGER, expireType INTEGER, expireTime INTEGER, modificationTime INTEGER)");
  for (const auto& r : rows) {
    auto stmt = db.prepare(
        "INSERT INTO moz_perms (origin, type, permission, expireType, expireTime, "
        "modificationTime) VALUES (?1,?2,?3,?4,?5,?6)");
    stmt.bind_text(1, r.origin)
        .bind_text(2, r.type)
        .bind_int64(3, r.permission)
        .bind_int64(4, r.expire_type)
        .bind_int64(5, r.expire_time)
        .bind_int64(6, r.modification_time);
    stmt.run();
  }
}

}  // namespace bpi::codec
