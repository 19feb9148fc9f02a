#include "bpi/attack_forge.hpp"

#include <chrono>
#include <fstream>

#include <nlohmann/json.hpp>

#include "bpi/errors.hpp"
#include "bpi/sentinel.hpp"
#include "bpi/zipfile.hpp"

namespace bpi::forge {

namespace stdfs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kFixtureMarker[] = ".sentinel-fixture";

std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

void write_text(const stdfs::path& file, std::string_view text) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + file.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

std::string read_text(const stdfs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open " + file.string());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void require_fixture_dir(const stdfs::path& profile_dir) {
  if (!stdfs::exists(profile_dir / kFixtureMarker))
    throw GuardError("refusing to touch " + profile_dir.string() + ": no " + kFixtureMarker);
}

// 32-char a..p id, the chromium extension id alphabet.
std::string chromium_ext_id(SeededRng& rng) {
  std::string id;
  for (int i = 0; i < 32; ++i) id.push_back(static_cast<char>('a' + rng.below(16)));
  return id;
}

std::string chromium_ext_id_for(const std::string& hint) {
  auto digest = sha256(to_bytes(hint));
  std::string id;
  for (int i = 0; i < 32; ++i) id.push_back(static_cast<char>('a' + (digest[i % 32] % 16)));
  return id;
}

// --- manifest (de)serialization ---

json tag_to_json(const AttackTag& tag) {
  json j;
  j["kind"] = to_string(tag.kind);
  j["subject"] = tag.subject;
  j["params"] = tag.params;
  return j;
}

AttackTag tag_from_json(const json& j) {
  AttackTag tag;
  tag.kind = attack_kind_from_string(j.value("kind", ""));
  tag.subject = j.value("subject", "");
  if (j.contains("params"))
    tag.params = j["params"].get<std::map<std::string, std::string>>();
  return tag;
}

json manifest_to_json(const FixtureManifest& m) {
  json j;
  j["seed"] = m.seed;
  j["engine"] = atlas::to_string(m.engine);
  j["profile_path"] = m.profile_path;
  j["marker_files"] = m.marker_files;
  json planted;
  planted["cookie_hosts"] = m.planted.cookie_hosts;
  planted["login_origins"] = m.planted.login_origins;
  planted["permissions"] = json::array();
  for (const auto& p : m.planted.permissions)
    planted["permissions"].push_back({{"origin", p.origin}, {"type", p.type}});
  planted["extension_ids"] = m.planted.extension_ids;
  planted["certs"] = json::array();
  for (const auto& [label, fp] : m.planted.certs)
    planted["certs"].push_back({{"label", label}, {"fingerprint", fp}});
  planted["homepage"] = m.planted.homepage;
  planted["mac_seed"] = m.planted.mac_seed_hex;
  planted["machine_id"] = m.planted.machine_id;
  j["planted"] = planted;
  j["applied_attacks"] = json::array();
  for (const auto& tag : m.applied_attacks) j["applied_attacks"].push_back(tag_to_json(tag));
  return j;
}

FixtureManifest manifest_from_json(const json& j) {
  FixtureManifest m;
  m.seed = j.value("seed", std::uint64_t{0});
  m.engine = j.value("engine", "chromium") == "gecko" ? Engine::gecko : Engine::chromium;
  m.profile_path = j.value("profile_path", "");
  m.marker_files = j.value("marker_files", std::vector<std::string>{});
  if (j.contains("planted")) {
    const auto& p = j["planted"];
    m.planted.cookie_hosts = p.value("cookie_hosts", std::vector<std::string>{});
    m.planted.login_origins = p.value("login_origins", std::vector<std::string>{});
    if (p.contains("permissions"))
      for (const auto& e : p["permissions"]) {
        codec::PermissionRecord rec;
        rec.origin = e.value("origin", "");
        rec.type = e.value("type", "");
        rec.permission = 1;
        m.planted.permissions.push_back(std::move(rec));
      }
    m.planted.extension_ids = p.value("extension_ids", std::vector<std::string>{});
    if (p.contains("certs"))
      for (const auto& e : p["certs"])
        m.planted.certs.emplace_back(e.value("label", ""), e.value("fingerprint", ""));
    m.planted.homepage = p.value("homepage", "");
    m.planted.mac_seed_hex = p.value("mac_seed", "");
    m.planted.machine_id = p.value("machine_id", "");
  }
  if (j.contains("applied_attacks"))
    for (const auto& t : j["applied_attacks"]) m.applied_attacks.push_back(tag_from_json(t));
  return m;
}

AttackTag record_attack(const stdfs::path& profile_dir, AttackTag tag) {
  FixtureManifest m;
  try {
    m = load_manifest(profile_dir);
  } catch (const IoError&) {
    m.profile_path = stdfs::absolute(profile_dir).lexically_normal().string();
    m.engine = detect_engine(profile_dir);
  }
  m.applied_attacks.push_back(tag);
  save_manifest(m);
  return tag;
}

}  // namespace

std::string to_string(AttackKind k) {
  switch (k) {
    case AttackKind::cookie_rehome: return "cookie_rehome";
    case AttackKind::login_rehome: return "login_rehome";
    case AttackKind::permission_grant: return "permission_grant";
    case AttackKind::rogue_ca: return "rogue_ca";
    case AttackKind::proxy_hijack: return "proxy_hijack";
    case AttackKind::sideload_extension: return "sideload_extension";
    case AttackKind::strip_metadata: return "strip_metadata";
    case AttackKind::homepage_hijack: return "homepage_hijack";
  }
  return "?";
}

AttackKind attack_kind_from_string(const std::string& s) {
  for (auto k : {AttackKind::cookie_rehome, AttackKind::login_rehome,
                 AttackKind::permission_grant, AttackKind::rogue_ca, AttackKind::proxy_hijack,
                 AttackKind::sideload_extension, AttackKind::strip_metadata,
                 AttackKind::homepage_hijack}) {
    if (to_string(k) == s) return k;
  }
  throw Error("unknown attack kind: " + s);
}

stdfs::path manifest_path(const stdfs::path& profile_dir) {
  auto dir = stdfs::absolute(profile_dir).lexically_normal();
  return dir.parent_path() / (dir.filename().string() + ".manifest.json");
}

void save_manifest(const FixtureManifest& manifest) {
  const auto file = manifest_path(manifest.profile_path);
  const std::string body = manifest_to_json(manifest).dump(2);
  write_text(file, body);
  write_text(file.string() + ".digest", hex_encode(sha256(to_bytes(body))));
}

FixtureManifest load_manifest(const stdfs::path& profile_dir) {
  const auto file = manifest_path(profile_dir);
  auto doc = json::parse(read_text(file), nullptr, false);
  if (doc.is_discarded()) throw FormatError("corrupt manifest " + file.string());
  return manifest_from_json(doc);
}

Engine detect_engine(const stdfs::path& profile_dir) {
  if (stdfs::exists(profile_dir / "prefs.js")) return Engine::gecko;
  if (stdfs::exists(profile_dir / "Preferences")) return Engine::chromium;
  throw FormatError(profile_dir.string() + " has neither prefs.js nor Preferences");
}

Bytes synth_certificate(const std::string& common_name, SeededRng& rng) {
  // SEQUENCE { SEQUENCE tbs, SEQUENCE sigAlg, BIT STRING sig } with the
  // common name and seeded filler inside the tbs body.
  auto tlv = [](std::uint8_t tag, const Bytes& payload) {
    Bytes out;
    out.push_back(tag);
    if (payload.size() < 0x80) {
      out.push_back(static_cast<std::uint8_t>(payload.size()));
    } else if (payload.size() <= 0xff) {
      out.push_back(0x81);
      out.push_back(static_cast<std::uint8_t>(payload.size()));
    } else {
      out.push_back(0x82);
      out.push_back(static_cast<std::uint8_t>(payload.size() >> 8));
      out.push_back(static_cast<std::uint8_t>(payload.size() & 0xff));
    }
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
  };

  Bytes serial = rng.blob(8);
  serial[0] &= 0x7f;  // keep the INTEGER positive
  Bytes name_bytes = to_bytes(common_name);
  Bytes filler = rng.blob(48 + rng.below(64));

  Bytes tbs_body;
  auto append = [&tbs_body](const Bytes& b) { tbs_body.insert(tbs_body.end(), b.begin(), b.end()); };
  append(tlv(0x02, serial));           // serial number
  append(tlv(0x0c, name_bytes));       // subject name as UTF8String
  append(tlv(0x04, filler));           // opaque body filler
  Bytes tbs = tlv(0x30, tbs_body);

  Bytes alg = tlv(0x30, tlv(0x06, {0x2a, 0x86, 0x48, 0xce, 0x3d, 0x04, 0x03, 0x02}));

  Bytes sig_body = rng.blob(64);
  sig_body.insert(sig_body.begin(), 0x00);  // leading unused-bits octet
  Bytes sig = tlv(0x03, sig_body);

  Bytes cert_body;
  cert_body.insert(cert_body.end(), tbs.begin(), tbs.end());
  cert_body.insert(cert_body.end(), alg.begin(), alg.end());
  cert_body.insert(cert_body.end(), sig.begin(), sig.end());
  return tlv(0x30, cert_body);
}

void make_unpacked_extension(const stdfs::path& dir, const std::string& name) {
  stdfs::create_directories(dir);
  json manifest;
  manifest["name"] = name;
  manifest["version"] = "1.0";
  manifest["manifest_version"] = 3;
  write_text(dir / "manifest.json", manifest.dump(2));
}

// ------------------------- fixture generation ------------------------------

namespace {

const char* kExtraCookieHosts[] = {".example.org", "mail.example.com", "shop.example.net",
                                   "news.example.io"};
const char* kExtraLoginOrigins[] = {"https://forum.example.org/", "https://bank.example.net/"};
const char* kBaselinePermOrigins[] = {"https://meet.example.com", "https://maps.example.org"};
const char* kHomepages[] = {"https://start.example.com", "https://news.example.org",
                            "https://intranet.example.net"};

codec::CookieRecord make_chromium_cookie(SeededRng& rng, const std::string& host, int index,
                                         bool httponly) {
  codec::CookieRecord c;
  c.host_key = host;
  c.name = "c" + std::to_string(index) + "_" + rng.token(6);
  Bytes ct = to_bytes("v10");
  auto body = rng.blob(24);
  ct.insert(ct.end(), body.begin(), body.end());
  c.encrypted_value = std::move(ct);
  c.path = "/";
  c.is_httponly = httponly ? 1 : 0;
  c.is_secure = 1;
  c.creation_utc = 13340000000000000 + static_cast<std::int64_t>(rng.below(1000000000));
  c.expires_utc = c.creation_utc + 31536000000000;
  c.last_access_utc = c.creation_utc;
  c.last_update_utc = c.creation_utc;
  c.has_expires = 1;
  c.is_persistent = 1;
  c.priority = 1;
  c.samesite = static_cast<int>(rng.below(3));
  c.source_scheme = 2;
  c.source_port = 443;
  return c;
}

codec::LoginRecord make_chromium_login(SeededRng& rng, const std::string& origin, int index) {
  codec::LoginRecord r;
  r.origin_url = origin;
  r.action_url = origin;
  r.username_element = "login_email";
  r.username_value = "user" + std::to_string(index) + "@example.com";
  r.password_element = "login_pass";
  Bytes ct = to_bytes("v10");
  auto body = rng.blob(20);
  ct.insert(ct.end(), body.begin(), body.end());
  r.password_value = std::move(ct);
  r.signon_realm = origin;
  r.date_created = 13340000000000000 + static_cast<std::int64_t>(rng.below(1000000000));
  r.scheme = 0;
  r.times_used = static_cast<int>(rng.below(20));
  r.date_last_used = r.date_created;
  r.date_password_modified = r.date_created;
  return r;
}

codec::LoginRecord make_gecko_login(SeededRng& rng, const std::string& origin, int index) {
  codec::LoginRecord r;
  r.origin_url = origin;
  r.action_url = origin + "/";
  r.username_element = "username";
  r.username_value = "MDoEEP" + rng.token(26) + "==";  // opaque ciphertext stand-in
  r.password_element = "password";
  r.password_value = to_bytes("MDIEEP" + rng.token(26) + "==");
  r.signon_realm = origin;
  r.date_created = 1700000000000 + static_cast<std::int64_t>(rng.below(100000000));
  r.times_used = static_cast<int>(index + 1);
  r.date_last_used = r.date_created;
  r.date_password_modified = r.date_created;
  return r;
}

void plant_cert(const stdfs::path& store, const std::string& label, SeededRng& rng,
                PlantedTruth& planted) {
  codec::CertRecord rec;
  rec.label = label;
  rec.der = synth_certificate(label, rng);
  rec.trust_flags = "C";
  codec::append_cert_record(store, rec);
  planted.certs.emplace_back(rec.label, codec::cert_fingerprint(rec));
}

FixtureManifest generate_chromium_fixture(std::uint64_t seed, const stdfs::path& dir) {
  SeededRng rng(seed * 2 + 1);
  FixtureManifest m;
  m.seed = seed;
  m.engine = Engine::chromium;
  m.profile_path = stdfs::absolute(dir).lexically_normal().string();

  write_text(dir / kFixtureMarker, "fixture seed=" + std::to_string(seed) + "\n");

  // Cookies: the canonical target host plus a seeded assortment. One target
  // row is always HttpOnly so the downgrade rule has something to lose.
  std::vector<codec::CookieRecord> cookies;
  int cookie_idx = 0;
  cookies.push_back(make_chromium_cookie(rng, "youtube.com", cookie_idx++, true));
  cookies.push_back(make_chromium_cookie(rng, "youtube.com", cookie_idx++, false));
  cookies.push_back(make_chromium_cookie(rng, "youtube.com", cookie_idx++, false));
  std::vector<std::string> hosts = {"youtube.com"};
  const std::size_t extra_hosts = 1 + rng.below(3);
  for (std::size_t i = 0; i < extra_hosts; ++i) {
    std::string host = kExtraCookieHosts[rng.below(std::size(kExtraCookieHosts))];
    if (std::find(hosts.begin(), hosts.end(), host) != hosts.end()) continue;
    hosts.push_back(host);
    const std::size_t n = 1 + rng.below(3);
    for (std::size_t k = 0; k < n; ++k)
      cookies.push_back(make_chromium_cookie(rng, host, cookie_idx++, rng.below(2) == 0));
  }
  codec::write_chromium_cookies(dir / "Cookies", cookies);
  std::sort(hosts.begin(), hosts.end());
  m.planted.cookie_hosts = hosts;

  // Logins: two rows for the canonical origin plus seeded extras.
  std::vector<codec::LoginRecord> logins;
  logins.push_back(make_chromium_login(rng, "https://www.facebook.com/", 0));
  logins.push_back(make_chromium_login(rng, "https://www.facebook.com/", 1));
  std::vector<std::string> origins = {"https://www.facebook.com/"};
  const std::size_t extra_origins = rng.below(3);
  for (std::size_t i = 0; i < extra_origins; ++i) {
    std::string origin = kExtraLoginOrigins[rng.below(std::size(kExtraLoginOrigins))];
    if (std::find(origins.begin(), origins.end(), origin) != origins.end()) continue;
    origins.push_back(origin);
    logins.push_back(make_chromium_login(rng, origin, static_cast<int>(2 + i)));
  }
  codec::write_chromium_logins(dir / "Login Data", logins);
  std::sort(origins.begin(), origins.end());
  m.planted.login_origins = origins;

  // One store-installed extension, unpacked on disk with its _metadata.
  const std::string ext_id = chromium_ext_id(rng);
  const std::string ext_version = "1.4.2";
  const auto ext_dir = dir / "Extensions" / ext_id / ext_version;
  stdfs::create_directories(ext_dir / "_metadata");
  json ext_manifest;
  ext_manifest["name"] = "Fixture Notes";
  ext_manifest["version"] = ext_version;
  ext_manifest["manifest_version"] = 3;
  write_text(ext_dir / "manifest.json", ext_manifest.dump(2));
  write_text(ext_dir / "background.js", "// fixture extension\n");
  write_text(ext_dir / "_metadata" / "verified_contents.json", "[{\"description\":\"fixture\"}]");
  m.planted.extension_ids.push_back(ext_id);

  // Preferences: homepage, a couple of baseline grants, the extension entry
  // and its integrity MAC.
  const Bytes mac_seed = to_bytes("fixture-mac-seed-" + std::to_string(seed));
  const std::string machine_id = "fixture-machine-" + std::to_string(seed);
  m.planted.mac_seed_hex = hex_encode(mac_seed);
  m.planted.machine_id = machine_id;
  m.planted.homepage = kHomepages[rng.below(std::size(kHomepages))];

  codec::PreferenceTree prefs;
  codec::set_path(prefs, "homepage", m.planted.homepage);
  codec::set_path(prefs, "browser.show_home_button", true);
  codec::set_path(prefs, "profile.name", "Fixture");

  const std::size_t n_grants = 1 + rng.below(2);
  for (std::size_t i = 0; i < n_grants; ++i) {
    codec::PermissionRecord grant;
    grant.origin = kBaselinePermOrigins[i % std::size(kBaselinePermOrigins)];
    grant.type = i == 0 ? "desktop-notification" : "geo";
    grant.permission = 1;
    grant.modification_time = 1700000000000 + static_cast<std::int64_t>(rng.below(10000000));
    if (std::find(m.planted.permissions.begin(), m.planted.permissions.end(), grant) ==
        m.planted.permissions.end())
      m.planted.permissions.push_back(grant);
  }

  json settings;
  settings["from_webstore"] = true;
  settings["state"] = 1;
  settings["path"] = ext_id + "/" + ext_version;
  settings["manifest"] = {{"name", "Fixture Notes"}, {"version", ext_version}};
  settings["granted_permissions"] = {{"api", json::array({"storage"})},
                                     {"explicit_host", json::array()}};
  codec::set_path(prefs, "extensions.settings." + ext_id, settings);
  const std::string mac = sentinel::compute_pref_mac(mac_seed, machine_id,
                                                     "extensions.settings." + ext_id, settings);
  codec::set_path(prefs, "protection.macs.extensions.settings." + ext_id, mac);
  codec::write_preferences(dir / "Preferences", prefs);

  for (const auto& grant : m.planted.permissions)
    codec::grant_permission(m.profile_path, Engine::chromium, grant);

  // Per-profile NSS store (the flatpak-style placement).
  stdfs::create_directories(dir / ".pki" / "nssdb");
  plant_cert(codec::cert_store_path(dir, Engine::chromium), "Fixture Root CA", rng, m.planted);

  m.marker_files = {"Preferences", "Cookies", "Login Data", "Extensions"};
  return m;
}

FixtureManifest generate_gecko_fixture(std::uint64_t seed, const stdfs::path& dir) {
  SeededRng rng(seed * 2);
  FixtureManifest m;
  m.seed = seed;
  m.engine = Engine::gecko;
  m.profile_path = stdfs::absolute(dir).lexically_normal().string();

  write_text(dir / kFixtureMarker, "fixture seed=" + std::to_string(seed) + "\n");

  m.planted.homepage = kHomepages[rng.below(std::size(kHomepages))];
  std::vector<codec::PrefEntry> prefs = {
      {"browser.startup.homepage", m.planted.homepage},
      {"browser.shell.checkDefaultBrowser", false},
      {"app.normandy.first_run", false},
      {"browser.safebrowsing.malware.enabled", true},
  };
  const std::size_t n_prefs = 3 + rng.below(5);
  for (std::size_t i = 0; i < n_prefs; ++i)
    prefs.push_back({"fixture.pref." + rng.token(8), static_cast<std::int64_t>(rng.below(1000))});
  codec::write_prefs_js(dir / "prefs.js", prefs);

  std::vector<codec::GeckoCookieRecord> cookies;
  std::vector<std::string> hosts;
  const std::size_t n_hosts = 2 + rng.below(3);
  for (std::size_t i = 0; i < n_hosts; ++i) {
    std::string host = kExtraCookieHosts[rng.below(std::size(kExtraCookieHosts))];
    if (std::find(hosts.begin(), hosts.end(), host) != hosts.end()) continue;
    hosts.push_back(host);
    const std::size_t n = 1 + rng.below(3);
    for (std::size_t k = 0; k < n; ++k) {
      codec::GeckoCookieRecord c;
      c.host = host;
      c.name = "g" + std::to_string(cookies.size()) + "_" + rng.token(6);
      c.value = rng.token(22);
      c.path = "/";
      c.expiry = 1800000000 + static_cast<std::int64_t>(rng.below(10000000));
      c.is_secure = 1;
      c.is_httponly = rng.below(2) == 0 ? 1 : 0;
      c.samesite = static_cast<int>(rng.below(3));
      cookies.push_back(std::move(c));
    }
  }
  codec::write_gecko_cookies(dir / "cookies.sqlite", cookies);
  std::sort(hosts.begin(), hosts.end());
  m.planted.cookie_hosts = hosts;

  std::vector<codec::LoginRecord> logins;
  logins.push_back(make_gecko_login(rng, "https://www.facebook.com", 0));
  logins.push_back(make_gecko_login(rng, "https://www.facebook.com", 1));
  std::vector<std::string> origins = {"https://www.facebook.com"};
  if (rng.below(2) == 0) {
    std::string extra = "https://forum.example.org";
    origins.push_back(extra);
    logins.push_back(make_gecko_login(rng, extra, 2));
  }
  codec::write_gecko_logins(dir / "logins.json", logins);
  std::sort(origins.begin(), origins.end());
  m.planted.login_origins = origins;

  std::vector<codec::PermissionRecord> grants;
  const std::size_t n_grants = 1 + rng.below(2);
  for (std::size_t i = 0; i < n_grants; ++i) {
    codec::PermissionRecord g;
    g.origin = kBaselinePermOrigins[i % std::size(kBaselinePermOrigins)];
    g.type = i == 0 ? "desktop-notification" : "geo";
    g.permission = 1;
    g.modification_time = 1700000000000 + static_cast<std::int64_t>(rng.below(10000000));
    grants.push_back(g);
  }
  codec::write_gecko_permissions(dir / "permissions.sqlite", grants);
  m.planted.permissions = grants;

  // One nominally signed XPI plus its registry entry.
  const std::string ext_id = "fixture-" + rng.token(8) + "@example.org";
  stdfs::create_directories(dir / "extensions");
  const auto xpi = dir / "extensions" / (ext_id + ".xpi");
  {
    zip::Writer w(xpi);
    json ext_manifest;
    ext_manifest["name"] = "Fixture Helper";
    ext_manifest["version"] = "2.1";
    ext_manifest["manifest_version"] = 2;
    w.add_file("manifest.json", to_bytes(ext_manifest.dump(2)));
    w.add_dir("META-INF");
    w.add_file("META-INF/mozilla.rsa", rng.blob(64));
    w.add_file("META-INF/manifest.mf", to_bytes("Manifest-Version: 1.0\n"));
    w.finish();
  }
  json addons;
  addons["schemaVersion"] = 35;
  json addon;
  addon["id"] = ext_id;
  addon["version"] = "2.1";
  addon["path"] = "extensions/" + ext_id + ".xpi";
  addon["location"] = "app-profile";
  addon["signedState"] = 2;  // nominally store-signed; fixtures cannot carry real signatures
  addon["active"] = true;
  addon["userPermissions"] = {{"permissions", json::array({"storage"})},
                              {"origins", json::array()}};
  addons["addons"] = json::array({addon});
  write_text(dir / "extensions.json", addons.dump(2));
  m.planted.extension_ids.push_back(ext_id);

  plant_cert(codec::cert_store_path(dir, Engine::gecko), "Fixture Root CA", rng, m.planted);

  m.marker_files = {"prefs.js", "cookies.sqlite", "permissions.sqlite", "logins.json",
                    "extensions.json", "cert9.db"};
  return m;
}

}  // namespace

FixtureManifest generate_fixture_profile(std::uint64_t seed, Engine engine,
                                         const stdfs::path& out_dir) {
  if (stdfs::exists(out_dir) && !stdfs::is_empty(out_dir))
    throw IoError("fixture target not empty: " + out_dir.string());
  stdfs::create_directories(out_dir);

  FixtureManifest m = engine == Engine::chromium ? generate_chromium_fixture(seed, out_dir)
                                                 : generate_gecko_fixture(seed, out_dir);
  save_manifest(m);
  return m;
}

HomeManifest generate_fixture_home(std::uint64_t seed, const stdfs::path& home_dir) {
  SeededRng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  stdfs::create_directories(home_dir);
  HomeManifest home;
  home.seed = seed;
  home.home_dir = stdfs::absolute(home_dir).lexically_normal().string();

  struct Placement {
    const char* rel_root;
    const char* browser;
    Engine engine;
    atlas::Channel channel;
    bool random_profile_name;  // gecko RANDOM.default-release style
  };
  const Placement placements[] = {
      {".config/google-chrome", "Google Chrome", Engine::chromium, atlas::Channel::native,
       false},
      {".mozilla/firefox", "Firefox", Engine::gecko, atlas::Channel::native, true},
      {"snap/firefox/common/.mozilla/firefox", "Firefox", Engine::gecko, atlas::Channel::snap,
       true},
      {".var/app/com.google.Chrome/config/google-chrome", "Google Chrome", Engine::chromium,
       atlas::Channel::flatpak, false},
      {".librewolf", "LibreWolf", Engine::gecko, atlas::Channel::native, true},
      {"snap/chromium/common/chromium", "Chromium", Engine::chromium, atlas::Channel::snap,
       false},
  };

  // Pick a non-empty subset, always including at least one gecko placement.
  std::vector<std::size_t> chosen;
  for (std::size_t i = 0; i < std::size(placements); ++i)
    if (rng.below(2) == 0) chosen.push_back(i);
  if (chosen.empty()) chosen.push_back(1 + rng.below(std::size(placements) - 1));

  for (std::size_t idx : chosen) {
    const auto& pl = placements[idx];
    const stdfs::path root = stdfs::path(home.home_dir) / pl.rel_root;
    const std::string profile_name = pl.random_profile_name
                                         ? rng.token(8) + ".default-release"
                                         : std::string("Default");
    const stdfs::path profile_dir = root / profile_name;
    auto manifest = generate_fixture_profile(rng.next(), pl.engine, profile_dir);

    ProfileDescriptor desc;
    desc.engine = pl.engine;
    desc.browser_name = pl.browser;
    desc.channel = pl.channel;
    desc.root_path = root.generic_string();
    desc.profile_path = profile_dir.generic_string();
    desc.marker_files = manifest.marker_files;
    home.profiles.push_back(std::move(desc));
  }

  std::sort(home.profiles.begin(), home.profiles.end(),
            [](const auto& a, const auto& b) { return a.profile_path < b.profile_path; });
  return home;
}

// ------------------------------ simulators ---------------------------------

AttackTag sim_cookie_rehome(const stdfs::path& profile_dir, const std::string& target_host,
                            const std::string& attacker_host) {
  require_fixture_dir(profile_dir);
  if (detect_engine(profile_dir) != Engine::chromium)
    throw GuardError("cookie_rehome targets chromium cookie stores");
  auto count = codec::insert_cookie_copy(profile_dir / "Cookies", target_host, attacker_host,
                                         /*clear_httponly=*/true);
  AttackTag tag{AttackKind::cookie_rehome, attacker_host,
                {{"target_host", target_host}, {"inserted", std::to_string(count)}}};
  return record_attack(profile_dir, std::move(tag));
}

AttackTag sim_login_rehome(const stdfs::path& profile_dir, const std::string& target_origin,
                           const std::string& attacker_origin) {
  require_fixture_dir(profile_dir);
  const auto engine = detect_engine(profile_dir);
  const auto store =
      profile_dir / (engine == Engine::chromium ? "Login Data" : "logins.json");
  auto count = codec::insert_login_copy(store, target_origin, attacker_origin);
  AttackTag tag{AttackKind::login_rehome, attacker_origin,
                {{"target_origin", target_origin}, {"inserted", std::to_string(count)}}};
  return record_attack(profile_dir, std::move(tag));
}

AttackTag sim_grant_permission(const stdfs::path& profile_dir, const std::string& origin,
                               const std::string& perm_type) {
  require_fixture_dir(profile_dir);
  codec::PermissionRecord rec;
  rec.origin = origin;
  rec.type = perm_type;
  rec.permission = 1;
  rec.expire_type = 0;
  rec.expire_time = 0;
  rec.modification_time = now_ms();
  auto inserted = codec::grant_permission(profile_dir.string(), detect_engine(profile_dir), rec);
  AttackTag tag{AttackKind::permission_grant, origin,
                {{"type", perm_type}, {"inserted", std::to_string(inserted)}}};
  return record_attack(profile_dir, std::move(tag));
}

AttackTag sim_add_root_ca(const stdfs::path& profile_dir, const Bytes& der,
                          const std::string& label, const std::string& trust_flags) {
  require_fixture_dir(profile_dir);
  codec::CertRecord rec{label, der, trust_flags};
  const auto store = codec::cert_store_path(profile_dir, detect_engine(profile_dir));
  stdfs::create_directories(store.parent_path());
  codec::append_cert_record(store, rec);
  AttackTag tag{AttackKind::rogue_ca, label,
                {{"trust_flags", trust_flags},
                 {"fingerprint", codec::cert_fingerprint(rec)}}};
  return record_attack(profile_dir, std::move(tag));
}

AttackTag sim_set_proxy(const stdfs::path& profile_dir, const std::string& host, int port) {
  require_fixture_dir(profile_dir);
  if (detect_engine(profile_dir) != Engine::gecko)
    throw GuardError("proxy prefs live in gecko profiles; chromium needs a proxy extension");
  auto entries = codec::read_prefs_js(profile_dir / "prefs.js");
  codec::upsert_prefs(entries, {
                                   {"network.proxy.http", host},
                                   {"network.proxy.http_port", std::int64_t{port}},
                                   {"network.proxy.ssl", host},
                                   {"network.proxy.ssl_port", std::int64_t{port}},
                                   {"network.proxy.type", std::int64_t{1}},
                               });
  codec::write_prefs_js(profile_dir / "prefs.js", entries);
  AttackTag tag{AttackKind::proxy_hijack, host, {{"port", std::to_string(port)}}};
  return record_attack(profile_dir, std::move(tag));
}

AttackTag sim_sideload_extension(const stdfs::path& profile_dir, const stdfs::path& ext_dir,
                                 const std::vector<std::string>& permissions,
                                 const Bytes& mac_seed, const std::string& machine_id) {
  require_fixture_dir(profile_dir);
  if (detect_engine(profile_dir) != Engine::chromium)
    throw GuardError("sideload targets chromium profiles");
  if (mac_seed.empty()) throw MacSeedMissing("sideload needs a MAC seed to forge the entry");
  if (!stdfs::exists(ext_dir / "manifest.json"))
    throw FormatError(ext_dir.string() + " has no manifest.json");

  const std::string id = chromium_ext_id_for(ext_dir.string());
  auto tree = codec::read_preferences(profile_dir / "Preferences");

  json api = json::array();
  for (const auto& p : permissions) api.push_back(p);
  json settings;
  settings["from_webstore"] = false;
  settings["state"] = 1;
  settings["path"] = stdfs::absolute(ext_dir).lexically_normal().string();
  settings["manifest"] = {{"version", "1.0"}};
  settings["granted_permissions"] = {{"api", api}, {"explicit_host", json::array()}};
  codec::set_path(tree, "extensions.settings." + id, settings);
  const std::string mac =
      sentinel::compute_pref_mac(mac_seed, machine_id, "extensions.settings." + id, settings);
  codec::set_path(tree, "protection.macs.extensions.settings." + id, mac);
  codec::write_preferences(profile_dir / "Preferences", tree);

  AttackTag tag{AttackKind::sideload_extension, id,
                {{"path", settings["path"].get<std::string>()}}};
  return record_attack(profile_dir, std::move(tag));
}

AttackTag sim_strip_metadata(const stdfs::path& ext_install_dir) {
  // The extension lives inside the fixture profile; walk up to it.
  stdfs::path profile_dir = ext_install_dir;
  while (!profile_dir.empty() && !stdfs::exists(profile_dir / kFixtureMarker)) {
    auto parent = profile_dir.parent_path();
    if (parent == profile_dir) {
      profile_dir.clear();
      break;
    }
    profile_dir = parent;
  }
  if (profile_dir.empty())
    throw GuardError("extension dir is not inside a fixture profile: " +
                     ext_install_dir.string());

  const std::string ext_id =
      ext_install_dir.parent_path().filename().string();  // Extensions/<id>/<version>
  const auto meta = ext_install_dir / "_metadata";
  AttackTag tag{AttackKind::strip_metadata, ext_id, {}};
  if (!stdfs::exists(meta)) {
    tag.params["note"] = "no _metadata directory; nothing stripped";
    return record_attack(profile_dir, std::move(tag));
  }
  // rm _metadata/* ; chmod a-w _metadata
  for (const auto& e : stdfs::directory_iterator(meta)) stdfs::remove_all(e.path());
  stdfs::permissions(meta,
                     stdfs::perms::owner_write | stdfs::perms::group_write |
                         stdfs::perms::others_write,
                     stdfs::perm_options::remove);
  tag.params["path"] = meta.string();
  return record_attack(profile_dir, std::move(tag));
}

AttackTag sim_homepage_hijack(const stdfs::path& profile_dir, const std::string& url) {
  require_fixture_dir(profile_dir);
  if (detect_engine(profile_dir) == Engine::chromium) {
    auto tree = codec::read_preferences(profile_dir / "Preferences");
    codec::set_path(tree, "homepage", url);
    codec::write_preferences(profile_dir / "Preferences", tree);
  } else {
    auto entries = codec::read_prefs_js(profile_dir / "prefs.js");
    codec::upsert_prefs(entries, {{"browser.startup.homepage", url}});
    codec::write_prefs_js(profile_dir / "prefs.js", entries);
  }
  AttackTag tag{AttackKind::homepage_hijack, url, {}};
  return record_attack(profile_dir, std::move(tag));
}

std::uint64_t make_symlink_archive(const stdfs::path& out_path) {
  zip::Writer w(out_path);
  w.add_symlink("fsroot", "/");
  return w.finish();
}

std::size_t make_zip_slip_archive(const stdfs::path& out_path,
                                  const std::vector<std::string>& entries) {
  zip::Writer w(out_path);
  for (const auto& name : entries) w.add_file(name, to_bytes("slip\n"));
  w.finish();
  return entries.size();
}

}  // namespace bpi::forge
