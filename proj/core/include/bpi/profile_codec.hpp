#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "bpi/hash.hpp"
#include "bpi/profile_atlas.hpp"

namespace bpi::codec {

using atlas::Engine;
using atlas::ProfileDescriptor;

// ---------------------------------------------------------------------------
// Record shapes. Column sets mirror the on-disk stores verbatim; ciphertext
// columns stay opaque byte strings end to end — this library never decrypts
// anything.
// ---------------------------------------------------------------------------

struct CookieRecord {
  std::string host_key;
  std::string top_frame_site_key;
  std::string value;
  int is_httponly = 0;
  std::int64_t creation_utc = 0;
  std::string name;
  Bytes encrypted_value;
  std::string path;
  std::int64_t expires_utc = 0;
  int is_secure = 0;
  std::int64_t last_access_utc = 0;
  int has_expires = 0;
  int is_persistent = 0;
  int priority = 0;
  int samesite = 0;
  int source_scheme = 0;
  int source_port = 0;
  int is_same_party = 0;
  std::int64_t last_update_utc = 0;
};

struct GeckoCookieRecord {
  std::string host;
  std::string name;
  std::string value;  // stored in clear
  std::string path;
  std::int64_t expiry = 0;
  int is_secure = 0;
  int is_httponly = 0;
  int samesite = 0;
};

struct LoginRecord {
  std::string origin_url;
  std::string action_url;
  std::string username_element;
  std::string username_value;
  std::string password_element;
  Bytes password_value;  // vendor ciphertext, opaque
  std::string signon_realm;
  std::int64_t date_created = 0;
  int blacklisted_by_user = 0;
  int scheme = 0;
  int password_type = 0;
  int times_used = 0;
  Bytes form_data;
  int skip_zero_click = 0;
  int generation_upload_status = 0;
  std::int64_t date_last_used = 0;
  std::int64_t date_password_modified = 0;
  std::int64_t date_received = 0;
  int sharing_notification_displayed = 0;
};

struct PermissionRecord {
  std::string origin;  // scheme://host[:port]
  std::string type;    // camera, microphone, geo, desktop-notification, ...
  int permission = 0;  // 1 = allow
  int expire_type = 0;
  std::int64_t expire_time = 0;
  std::int64_t modification_time = 0;  // milliseconds

  bool operator==(const PermissionRecord&) const = default;
};

using PrefValue = std::variant<bool, std::int64_t, std::string>;

struct PrefEntry {
  std::string name;
  PrefValue value;

  bool operator==(const PrefEntry&) const = default;
};

struct ExtensionRecord {
  std::string id;
  std::string version;
  std::string install_path;
  bool from_webstore = false;
  std::vector<std::string> granted_permissions;
  int state = 0;
  bool has_metadata_dir = false;
  bool metadata_writable = true;
  std::optional<std::string> mac;  // uppercase hex, when listed under protection.macs
};

struct CertRecord {
  std::string label;
  Bytes der;  // starts with a DER SEQUENCE header
  std::string trust_flags;
};

// ---------------------------------------------------------------------------
// Cookie stores: `Cookies` (chromium, table cookies) and cookies.sqlite
// (gecko, table moz_cookies).
// ---------------------------------------------------------------------------

std::vector<CookieRecord> read_chromium_cookies(const std::filesystem::path& store);
std::vector<GeckoCookieRecord> read_gecko_cookies(const std::filesystem::path& store);

struct CookieStore {
  Engine engine;
  std::vector<CookieRecord> chromium;
  std::vector<GeckoCookieRecord> gecko;
};
CookieStore read_cookie_store(const std::filesystem::path& store, Engine engine);

/// Duplicates every row with host_key == source_host under dest_host,
/// ciphertext byte-identical, top_frame_site_key and value blanked, and
/// is_httponly forced to 0 when clear_httponly. Existing rows are untouched.
/// Refuses stores that do not live inside a fixture-marked directory.
std::size_t insert_cookie_copy(const std::filesystem::path& store,
                               const std::string& source_host, const std::string& dest_host,
                               bool clear_httponly);

// ---------------------------------------------------------------------------
// Login stores: `Login Data` (chromium, table logins) and logins.json
// (gecko). The gecko document is folded into the same record shape; fields
// without a counterpart stay zero/empty.
// ---------------------------------------------------------------------------

std::vector<LoginRecord> read_login_store(const std::filesystem::path& store, Engine engine);

/// Duplicates every row with origin_url == source_origin, rewriting
/// origin_url to dest_origin, action_url/signon_realm to dest_origin + "/",
/// username_element to "email" and password_element to "pass"; ciphertext is
/// copied byte for byte. Dispatches on the store's format (SQLite vs JSON).
/// Fixture guard applies.
std::size_t insert_login_copy(const std::filesystem::path& store,
                              const std::string& source_origin,
                              const std::string& dest_origin);

// ---------------------------------------------------------------------------
// Permissions: permissions.sqlite moz_perms rows (gecko) or the Preferences
// content-settings exceptions (chromium), both normalized to
// PermissionRecord. The chromium mapping is
//   profile.content_settings.exceptions.<settings-key>["<origin>,*"] =
//     {"last_modified": <ms>, "setting": <permission>}
// with settings-key media_stream_camera / media_stream_mic / geolocation /
// notifications for camera / microphone / geo / desktop-notification.
// ---------------------------------------------------------------------------

std::vector<PermissionRecord> read_permissions(const ProfileDescriptor& profile);

/// Inserts one grant; set semantics on (origin, type) — a duplicate grant is
/// a no-op. Returns the number of rows added (0 or 1).
std::size_t grant_permission(const std::string& profile_path, Engine engine,
                             const PermissionRecord& rec);

// ---------------------------------------------------------------------------
// prefs.js: one `user_pref(<quoted-name>, <value>);` statement per line,
// single or double quotes, boolean / integer / string values, `//` comments
// and blank lines. Escapes \\ \" \' \n \r \t round-trip. Lenient mode skips
// malformed lines with a warning; strict mode throws ParseError.
// ---------------------------------------------------------------------------

struct PrefsParse {
  std::vector<PrefEntry> entries;
  std::vector<std::string> warnings;
};

PrefsParse parse_prefs_js(std::string_view text, bool strict = false);
std::string serialize_prefs_js(const std::vector<PrefEntry>& entries);

std::vector<PrefEntry> read_prefs_js(const std::filesystem::path& file, bool strict = false);
void write_prefs_js(const std::filesystem::path& file, const std::vector<PrefEntry>& entries);

/// Updates entries in place (matching on name) or appends missing ones;
/// preserves the order of untouched entries.
void upsert_prefs(std::vector<PrefEntry>& entries, const std::vector<PrefEntry>& updates);

// ---------------------------------------------------------------------------
// Preferences (chromium JSON document) with the protection.macs table.
// ---------------------------------------------------------------------------

class PreferenceTree {
 public:
  PreferenceTree();
  explicit PreferenceTree(nlohmann::json root);
  PreferenceTree(const PreferenceTree&);
  PreferenceTree(PreferenceTree&&) noexcept;
  PreferenceTree& operator=(const PreferenceTree&);
  PreferenceTree& operator=(PreferenceTree&&) noexcept;
  ~PreferenceTree();

  nlohmann::json& root();
  const nlohmann::json& root() const;

 private:
  std::unique_ptr<nlohmann::json> root_;
};

PreferenceTree parse_preferences(std::string_view text);
PreferenceTree read_preferences(const std::filesystem::path& file);
std::string serialize_preferences(const PreferenceTree& tree);  // canonical: sorted keys, minified
void write_preferences(const std::filesystem::path& file, const PreferenceTree& tree);

/// Dotted-path navigation (keys must not contain '.'). get returns nullopt
/// when the path is absent; both throw PathTypeError when an intermediate
/// node is a scalar.
std::optional<nlohmann::json> get_path(const PreferenceTree& tree, const std::string& dotted);
void set_path(PreferenceTree& tree, const std::string& dotted, const nlohmann::json& value);

/// Flattens protection.macs into pref path -> uppercase-hex MAC.
std::map<std::string, std::string> list_macs(const PreferenceTree& tree);

// ---------------------------------------------------------------------------
// Extensions.
// ---------------------------------------------------------------------------

struct ExtensionsRead {
  std::vector<ExtensionRecord> records;
  std::vector<std::string> warnings;
};

/// chromium: merges the Extensions/ directory listing with the Preferences
/// extensions.settings entries and per-extension _metadata/ state.
/// gecko: parses extensions.json and inspects the .xpi bundles.
ExtensionsRead read_extensions(const ProfileDescriptor& profile);

// ---------------------------------------------------------------------------
// Certificate stores. Synthetic mode reads this toolkit's fixture schema
// (table cert_records(label, der, trust_flags)); heuristic mode carves
// certificate-shaped DER SEQUENCEs out of the raw file bytes and never
// errors.
// ---------------------------------------------------------------------------

enum class CertMode { synthetic, heuristic };

std::vector<CertRecord> read_cert_store(const std::filesystem::path& store, CertMode mode);

/// Appends to (or creates) a fixture-schema store. Throws FormatError unless
/// der starts with a DER SEQUENCE header.
void append_cert_record(const std::filesystem::path& store, const CertRecord& rec);

std::string cert_fingerprint(const CertRecord& rec);  // lowercase hex SHA-256 of the DER

/// Fixture cert-store location: cert9.db at the profile root for gecko,
/// under .pki/nssdb/ for chromium (the flatpak-style per-profile placement).
std::filesystem::path cert_store_path(const std::filesystem::path& profile_dir, Engine engine);

// ---------------------------------------------------------------------------
// Fixture-store writers (fresh files, generator use).
// ---------------------------------------------------------------------------

void write_chromium_cookies(const std::filesystem::path& store,
                            const std::vector<CookieRecord>& rows);
void write_gecko_cookies(const std::filesystem::path& store,
                         const std::vector<GeckoCookieRecord>& rows);
void write_chromium_logins(const std::filesystem::path& store,
                           const std::vector<LoginRecord>& rows);
void write_gecko_logins(const std::filesystem::path& store,
                        const std::vector<LoginRecord>& rows);
void write_gecko_permissions(const std::filesystem::path& store,
                             const std::vector<PermissionRecord>& rows);

/// True when `path` or one of its two nearest ancestors carries the
/// `.sentinel-fixture` marker.
bool in_fixture(const std::filesystem::path& path);

}  // namespace bpi::codec
