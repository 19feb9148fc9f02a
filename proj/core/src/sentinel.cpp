#include "bpi/sentinel.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

#include "bpi/errors.hpp"

namespace bpi::sentinel {

namespace stdfs = std::filesystem;
using atlas::Engine;
using nlohmann::json;

namespace {

std::string read_file(const stdfs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open " + file.string());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_file(const stdfs::path& file, std::string_view text) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + file.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

// Everything a profile contains, parsed once per scan. Unreadable artifacts
// degrade to warnings so one bad store never aborts a scan.
struct ProfileImage {
  std::vector<codec::CookieRecord> chromium_cookies;
  std::vector<codec::GeckoCookieRecord> gecko_cookies;
  std::vector<codec::LoginRecord> logins;
  std::vector<codec::PermissionRecord> permissions;
  std::vector<codec::ExtensionRecord> extensions;
  std::vector<codec::CertRecord> certs;
  std::optional<codec::PreferenceTree> preferences;
  std::vector<codec::PrefEntry> pref_entries;
  std::string homepage;
  std::map<std::string, std::string> proxy_prefs;
  std::vector<std::string> warnings;
};

std::string pref_value_string(const codec::PrefValue& v) {
  if (std::holds_alternative<bool>(v)) return std::get<bool>(v) ? "true" : "false";
  if (std::holds_alternative<std::int64_t>(v))
    return std::to_string(std::get<std::int64_t>(v));
  return std::get<std::string>(v);
}

ProfileImage load_image(const ProfileDescriptor& profile) {
  ProfileImage img;
  const stdfs::path root = profile.profile_path;
  auto attempt = [&](const char* what, auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      img.warnings.push_back(std::string(what) + ": " + e.what());
    }
  };

  if (profile.engine == Engine::chromium) {
    if (stdfs::exists(root / "Cookies"))
      attempt("Cookies", [&] { img.chromium_cookies = codec::read_chromium_cookies(root / "Cookies"); });
    if (stdfs::exists(root / "Login Data"))
      attempt("Login Data",
              [&] { img.logins = codec::read_login_store(root / "Login Data", Engine::chromium); });
    if (stdfs::exists(root / "Preferences")) {
      attempt("Preferences", [&] {
        img.preferences = codec::read_preferences(root / "Preferences");
        if (auto hp = codec::get_path(*img.preferences, "homepage"); hp && hp->is_string())
          img.homepage = hp->get<std::string>();
      });
      attempt("permissions", [&] { img.permissions = codec::read_permissions(profile); });
    }
    attempt("extensions", [&] {
      auto read = codec::read_extensions(profile);
      img.extensions = std::move(read.records);
      img.warnings.insert(img.warnings.end(), read.warnings.begin(), read.warnings.end());
    });
  } else {
    if (stdfs::exists(root / "prefs.js")) {
      attempt("prefs.js", [&] {
        auto parsed = codec::parse_prefs_js(read_file(root / "prefs.js"));
        img.pref_entries = std::move(parsed.entries);
        img.warnings.insert(img.warnings.end(), parsed.warnings.begin(), parsed.warnings.end());
        for (const auto& e : img.pref_entries) {
          if (e.name == "browser.startup.homepage")
            img.homepage = pref_value_string(e.value);
          else if (e.name.rfind("network.proxy.", 0) == 0)
            img.proxy_prefs[e.name] = pref_value_string(e.value);
        }
      });
    }
    if (stdfs::exists(root / "cookies.sqlite"))
      attempt("cookies.sqlite",
              [&] { img.gecko_cookies = codec::read_gecko_cookies(root / "cookies.sqlite"); });
    if (stdfs::exists(root / "logins.json"))
      attempt("logins.json",
              [&] { img.logins = codec::read_login_store(root / "logins.json", Engine::gecko); });
    if (stdfs::exists(root / "permissions.sqlite"))
      attempt("permissions.sqlite",
              [&] { img.permissions = codec::read_permissions(profile); });
    attempt("extensions", [&] {
      auto read = codec::read_extensions(profile);
      img.extensions = std::move(read.records);
      img.warnings.insert(img.warnings.end(), read.warnings.begin(), read.warnings.end());
    });
  }

  const auto cert_store = codec::cert_store_path(root, profile.engine);
  if (stdfs::exists(cert_store))
    attempt("cert store",
            [&] { img.certs = codec::read_cert_store(cert_store, codec::CertMode::synthetic); });
  return img;
}

template <typename T>
std::vector<T> sorted_unique(std::vector<T> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

}  // namespace

std::string to_string(Category c) {
  switch (c) {
    case Category::cookie_rehome: return "cookie_rehome";
    case Category::login_rehome: return "login_rehome";
    case Category::permission_grant: return "permission_grant";
    case Category::rogue_ca: return "rogue_ca";
    case Category::proxy_hijack: return "proxy_hijack";
    case Category::sideload_extension: return "sideload_extension";
    case Category::strip_metadata: return "strip_metadata";
    case Category::homepage_hijack: return "homepage_hijack";
    case Category::secure_prefs_mac_mismatch: return "secure_prefs_mac_mismatch";
    case Category::httponly_downgrade: return "httponly_downgrade";
  }
  return "?";
}

std::string to_string(Severity s) {
  switch (s) {
    case Severity::info: return "info";
    case Severity::warn: return "warn";
    case Severity::critical: return "critical";
  }
  return "?";
}

// ------------------------------- baseline ----------------------------------

Baseline snapshot(const ProfileDescriptor& profile, const Bytes& key,
                  std::int64_t created_at) {
  auto img = load_image(profile);
  Baseline b;
  b.created_at = created_at;

  std::vector<std::string> hosts;
  for (const auto& c : img.chromium_cookies) hosts.push_back(c.host_key);
  for (const auto& c : img.gecko_cookies) hosts.push_back(c.host);
  b.cookie_hosts = sorted_unique(std::move(hosts));

  std::vector<std::string> origins;
  for (const auto& l : img.logins) origins.push_back(l.origin_url);
  b.login_origins = sorted_unique(std::move(origins));

  b.permission_set = img.permissions;
  std::sort(b.permission_set.begin(), b.permission_set.end(),
            [](const auto& a, const auto& c) {
              return std::tie(a.origin, a.type) < std::tie(c.origin, c.type);
            });

  std::vector<std::string> fps;
  for (const auto& cert : img.certs) fps.push_back(codec::cert_fingerprint(cert));
  b.cert_fingerprints = sorted_unique(std::move(fps));

  std::vector<std::string> ids;
  for (const auto& ext : img.extensions) ids.push_back(ext.id);
  b.extension_ids = sorted_unique(std::move(ids));

  b.homepage = img.homepage;
  b.proxy_prefs = img.proxy_prefs;

  const stdfs::path root = profile.profile_path;
  const char* artifacts[] = {"Cookies",          "Login Data",       "Preferences",
                             "prefs.js",         "cookies.sqlite",   "permissions.sqlite",
                             "logins.json",      "extensions.json"};
  for (const char* name : artifacts) {
    if (stdfs::is_regular_file(root / name))
      b.record_digests[name] = hex_encode(sha256_file(root / name));
  }
  const auto cert_store = codec::cert_store_path(root, profile.engine);
  if (stdfs::is_regular_file(cert_store))
    b.record_digests["cert9.db"] = hex_encode(sha256_file(cert_store));
  if (!key.empty()) b.mac = baseline_mac(b, key);
  return b;
}

std::string baseline_canonical_json(const Baseline& b) {
  json j;
  j["created_at"] = b.created_at;
  j["record_digests"] = b.record_digests;
  j["cookie_hosts"] = b.cookie_hosts;
  j["login_origins"] = b.login_origins;
  j["permission_set"] = json::array();
  for (const auto& p : b.permission_set)
    j["permission_set"].push_back(
        {{"origin", p.origin}, {"type", p.type}, {"permission", p.permission}});
  j["cert_fingerprints"] = b.cert_fingerprints;
  j["extension_ids"] = b.extension_ids;
  j["homepage"] = b.homepage;
  j["proxy_prefs"] = b.proxy_prefs;
  return j.dump();
}

Digest baseline_mac(const Baseline& baseline, const Bytes& key) {
  return hmac_sha256(key, to_bytes(baseline_canonical_json(baseline)));
}

bool verify_baseline(const Baseline& baseline, const Bytes& key) {
  return baseline_mac(baseline, key) == baseline.mac;
}

void save_baseline(const Baseline& baseline, const stdfs::path& file, const Bytes& key) {
  const std::string body = baseline_canonical_json(baseline);
  const auto mac = hmac_sha256(key, to_bytes(body));
  write_file(file, body);
  write_file(file.string() + ".mac", hex_encode(mac));
}

Baseline load_baseline(const stdfs::path& file, const Bytes& key) {
  const std::string body = read_file(file);
  std::string mac_hex;
  try {
    mac_hex = read_file(file.string() + ".mac");
  } catch (const IoError&) {
    throw MacError("baseline has no detached .mac file: " + file.string());
  }
  while (!mac_hex.empty() && (mac_hex.back() == '\n' || mac_hex.back() == '\r'))
    mac_hex.pop_back();
  const auto expected = hmac_sha256(key, to_bytes(body));
  if (hex_encode(expected) != mac_hex)
    throw MacError("baseline MAC mismatch for " + file.string());

  json j = json::parse(body, nullptr, false);
  if (j.is_discarded()) throw FormatError("corrupt baseline " + file.string());
  Baseline b;
  b.created_at = j.value("created_at", std::int64_t{0});
  if (j.contains("record_digests"))
    b.record_digests = j["record_digests"].get<std::map<std::string, std::string>>();
  b.cookie_hosts = j.value("cookie_hosts", std::vector<std::string>{});
  b.login_origins = j.value("login_origins", std::vector<std::string>{});
  if (j.contains("permission_set"))
    for (const auto& e : j["permission_set"]) {
      codec::PermissionRecord p;
      p.origin = e.value("origin", "");
      p.type = e.value("type", "");
      p.permission = e.value("permission", 0);
      b.permission_set.push_back(std::move(p));
    }
  b.cert_fingerprints = j.value("cert_fingerprints", std::vector<std::string>{});
  b.extension_ids = j.value("extension_ids", std::vector<std::string>{});
  b.homepage = j.value("homepage", "");
  if (j.contains("proxy_prefs"))
    b.proxy_prefs = j["proxy_prefs"].get<std::map<std::string, std::string>>();
  b.mac = expected;
  return b;
}

// --------------------------------- rules -----------------------------------

namespace {

void rule_cookie_rehome(const ProfileImage& img, const std::string& profile_path,
                        std::vector<Finding>& findings) {
  std::map<Bytes, std::vector<std::pair<std::string, std::string>>> groups;  // ct -> (host,name)
  for (const auto& c : img.chromium_cookies)
    if (!c.encrypted_value.empty()) groups[c.encrypted_value].emplace_back(c.host_key, c.name);

  std::map<std::string, std::vector<std::string>> per_host;
  for (const auto& [ct, members] : groups) {
    std::set<std::string> hosts;
    for (const auto& [host, _] : members) hosts.insert(host);
    if (hosts.size() < 2) continue;
    for (const auto& [host, name] : members) {
      for (const auto& other : hosts) {
        if (other == host) continue;
        per_host[host].push_back("cookie '" + name + "' carries a ciphertext also stored for '" +
                                 other + "'");
      }
    }
  }
  for (auto& [host, evidence] : per_host) {
    std::sort(evidence.begin(), evidence.end());
    evidence.erase(std::unique(evidence.begin(), evidence.end()), evidence.end());
    findings.push_back(
        {Category::cookie_rehome, Severity::critical, profile_path, host, evidence, false});
  }
}

void rule_httponly_downgrade(const ProfileImage& img, const std::string& profile_path,
                             std::vector<Finding>& findings) {
  // (name) -> hosts that still carry the HttpOnly bit
  std::map<std::string, std::set<std::string>> protected_names;
  auto collect = [&](const std::string& name, const std::string& host, int httponly) {
    if (httponly == 1) protected_names[name].insert(host);
  };
  for (const auto& c : img.chromium_cookies) collect(c.name, c.host_key, c.is_httponly);
  for (const auto& c : img.gecko_cookies) collect(c.name, c.host, c.is_httponly);

  std::map<std::string, std::vector<std::string>> per_host;
  auto check = [&](const std::string& name, const std::string& host, int httponly) {
    auto it = protected_names.find(name);
    if (httponly != 0 || it == protected_names.end()) return;
    for (const auto& origin_host : it->second) {
      if (origin_host == host) continue;
      per_host[host].push_back("cookie '" + name + "' readable by script here while '" +
                               origin_host + "' keeps it HttpOnly");
    }
  };
  for (const auto& c : img.chromium_cookies) check(c.name, c.host_key, c.is_httponly);
  for (const auto& c : img.gecko_cookies) check(c.name, c.host, c.is_httponly);

  for (auto& [host, evidence] : per_host) {
    std::sort(evidence.begin(), evidence.end());
    findings.push_back(
        {Category::httponly_downgrade, Severity::warn, profile_path, host, evidence, false});
  }
}

void rule_login_rehome(const ProfileImage& img, const std::string& profile_path,
                       std::vector<Finding>& findings) {
  std::map<Bytes, std::vector<const codec::LoginRecord*>> groups;
  for (const auto& l : img.logins)
    if (!l.password_value.empty()) groups[l.password_value].push_back(&l);

  std::map<std::string, std::vector<std::string>> per_origin;
  for (const auto& [ct, members] : groups) {
    std::set<std::string> realms;
    for (const auto* l : members) realms.insert(l->signon_realm);
    if (realms.size() < 2) continue;
    for (const auto* l : members) {
      for (const auto& other : realms) {
        if (other == l->signon_realm) continue;
        per_origin[l->origin_url].push_back("password ciphertext also stored under realm '" +
                                           other + "'");
      }
    }
  }
  for (auto& [origin, evidence] : per_origin) {
    std::sort(evidence.begin(), evidence.end());
    evidence.erase(std::unique(evidence.begin(), evidence.end()), evidence.end());
    findings.push_back(
        {Category::login_rehome, Severity::critical, profile_path, origin, evidence, false});
  }
}

void rule_permission_anomaly(const ProfileImage& img, const std::string& profile_path,
                             const std::optional<Baseline>& baseline, const ScanConfig& config,
                             std::vector<Finding>& findings) {
  if (baseline) {
    std::set<std::pair<std::string, std::string>> known;
    for (const auto& p : baseline->permission_set) known.emplace(p.origin, p.type);
    for (const auto& p : img.permissions) {
      if (known.contains({p.origin, p.type})) continue;
      findings.push_back({Category::permission_grant, Severity::warn, profile_path, p.origin,
                          {"grant '" + p.type + "' is absent from the baseline"},
                          false});
    }
    return;
  }
  const bool have_allowlist = !config.permission_allowlist.empty();
  for (const auto& p : img.permissions) {
    const bool allowed =
        std::find(config.permission_allowlist.begin(), config.permission_allowlist.end(),
                  p.origin) != config.permission_allowlist.end();
    if (have_allowlist && allowed) continue;
    findings.push_back({Category::permission_grant,
                        have_allowlist ? Severity::warn : Severity::info, profile_path,
                        p.origin,
                        {have_allowlist
                             ? "grant '" + p.type + "' to an origin outside the allowlist"
                             : "grant '" + p.type + "' cannot be vetted without a baseline"},
                        !have_allowlist});
  }
}

void rule_rogue_ca(const ProfileImage& img, const std::string& profile_path,
                   const Baseline& baseline, std::vector<Finding>& findings) {
  std::set<std::string> known(baseline.cert_fingerprints.begin(),
                              baseline.cert_fingerprints.end());
  for (const auto& cert : img.certs) {
    const auto fp = codec::cert_fingerprint(cert);
    if (known.contains(fp)) continue;
    findings.push_back({Category::rogue_ca, Severity::critical, profile_path, cert.label,
                        {"certificate " + fp + " (trust '" + cert.trust_flags +
                         "') is not in the baseline store"},
                        true});
  }
}

void rule_proxy_hijack(const ProfileImage& img, const std::string& profile_path,
                       std::vector<Finding>& findings) {
  auto type_it = img.proxy_prefs.find("network.proxy.type");
  if (type_it != img.proxy_prefs.end() && type_it->second == "1") {
    std::string host;
    if (auto it = img.proxy_prefs.find("network.proxy.ssl"); it != img.proxy_prefs.end())
      host = it->second;
    if (host.empty())
      if (auto it = img.proxy_prefs.find("network.proxy.http"); it != img.proxy_prefs.end())
        host = it->second;
    if (!host.empty()) {
      std::vector<std::string> evidence;
      for (const auto& [name, value] : img.proxy_prefs)
        evidence.push_back(name + " = " + value);
      findings.push_back(
          {Category::proxy_hijack, Severity::critical, profile_path, host, evidence, false});
    }
  }

  for (const auto& ext : img.extensions) {
    if (ext.from_webstore) continue;
    if (std::find(ext.granted_permissions.begin(), ext.granted_permissions.end(), "proxy") ==
        ext.granted_permissions.end())
      continue;
    findings.push_back({Category::proxy_hijack, Severity::critical, profile_path, ext.id,
                        {"non-store extension holds the proxy permission (path " +
                         ext.install_path + ")"},
                        false});
  }
}

void rule_extension_tamper(const ProfileImage& img, const ProfileDescriptor& profile,
                           std::vector<Finding>& findings) {
  for (const auto& ext : img.extensions) {
    std::vector<std::string> sideload_evidence;
    if (!ext.from_webstore) sideload_evidence.push_back("not installed from a store");
    const std::string normalized = lexical_normalize(ext.install_path);
    if (!ext.install_path.empty() &&
        !path_under(lexical_normalize(profile.profile_path), normalized))
      sideload_evidence.push_back("installed from outside the profile: " + ext.install_path);
    if (!sideload_evidence.empty())
      findings.push_back({Category::sideload_extension, Severity::critical,
                          profile.profile_path, ext.id, sideload_evidence, false});

    if (ext.has_metadata_dir) {
      std::vector<std::string> strip_evidence;
      std::error_code ec;
      if (profile.engine == Engine::chromium &&
          stdfs::is_empty(stdfs::path(ext.install_path) / "_metadata", ec) && !ec)
        strip_evidence.push_back("_metadata directory has been emptied");
      if (!ext.metadata_writable)
        strip_evidence.push_back("_metadata directory is no longer writable");
      if (!strip_evidence.empty())
        findings.push_back({Category::strip_metadata, Severity::critical, profile.profile_path,
                            ext.id, strip_evidence, false});
    }
  }
}

void rule_secure_prefs(const ProfileImage& img, const ProfileDescriptor& profile,
                       const ScanConfig& config, std::vector<Finding>& findings) {
  if (!img.preferences || !config.mac_seed) return;
  for (const auto& path :
       verify_secure_prefs_macs(*img.preferences, *config.mac_seed, config.machine_id)) {
    findings.push_back({Category::secure_prefs_mac_mismatch, Severity::critical,
                        profile.profile_path, path,
                        {"stored MAC does not match the recomputed value"},
                        false});
  }
}

void rule_homepage_hijack(const ProfileImage& img, const std::string& profile_path,
                          const Baseline& baseline, std::vector<Finding>& findings) {
  if (img.homepage == baseline.homepage) return;
  findings.push_back({Category::homepage_hijack, Severity::warn, profile_path, img.homepage,
                      {"baseline homepage was '" + baseline.homepage + "'"},
                      true});
}

}  // namespace

ScanReport scan(const ProfileDescriptor& profile, const std::optional<Baseline>& baseline,
                const ScanConfig& config) {
  ScanReport report;
  auto img = load_image(profile);
  report.warnings = img.warnings;

  rule_cookie_rehome(img, profile.profile_path, report.findings);
  rule_httponly_downgrade(img, profile.profile_path, report.findings);
  rule_login_rehome(img, profile.profile_path, report.findings);
  rule_permission_anomaly(img, profile.profile_path, baseline, config, report.findings);
  rule_proxy_hijack(img, profile.profile_path, report.findings);
  rule_extension_tamper(img, profile, report.findings);
  rule_secure_prefs(img, profile, config, report.findings);
  if (baseline) {
    rule_rogue_ca(img, profile.profile_path, *baseline, report.findings);
    rule_homepage_hijack(img, profile.profile_path, *baseline, report.findings);
  } else {
    report.rules_needing_baseline = {"homepage_hijack", "rogue_ca"};
  }

  std::sort(report.findings.begin(), report.findings.end(),
            [](const Finding& a, const Finding& b) {
              return std::tie(a.category, a.subject, a.profile_path) <
                     std::tie(b.category, b.subject, b.profile_path);
            });
  return report;
}

// --------------------------- secure prefs MACs ------------------------------

std::string compute_pref_mac(const Bytes& seed, const std::string& machine_id,
                             const std::string& pref_path, const json& value) {
  std::string msg = machine_id;
  msg += pref_path;
  msg += value.dump();
  return hex_encode(hmac_sha256(seed, to_bytes(msg)), /*uppercase=*/true);
}

std::vector<std::string> verify_secure_prefs_macs(const codec::PreferenceTree& tree,
                                                  const Bytes& seed,
                                                  const std::string& machine_id) {
  std::vector<std::string> mismatched;
  const auto mac_table = codec::list_macs(tree);
  for (const auto& [path, stored] : mac_table) {
    auto value = codec::get_path(tree, path);
    if (!value) {
      mismatched.push_back(path);
      continue;
    }
    if (compute_pref_mac(seed, machine_id, path, *value) != stored) mismatched.push_back(path);
  }
  // Guarded subtree: every registered extension must carry a MAC.
  if (auto settings = codec::get_path(tree, "extensions.settings");
      settings && settings->is_object()) {
    for (const auto& [id, _] : settings->items()) {
      const std::string path = "extensions.settings." + id;
      if (!mac_table.contains(path)) mismatched.push_back(path);
    }
  }
  std::sort(mismatched.begin(), mismatched.end());
  mismatched.erase(std::unique(mismatched.begin(), mismatched.end()), mismatched.end());
  return mismatched;
}

}  // namespace bpi::sentinel
