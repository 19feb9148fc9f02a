#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "bpi/hash.hpp"
#include "bpi/profile_atlas.hpp"
#include "bpi/profile_codec.hpp"

namespace bpi::sentinel {

using atlas::ProfileDescriptor;

enum class Category {
  cookie_rehome,
  login_rehome,
  permission_grant,
  rogue_ca,
  proxy_hijack,
  sideload_extension,
  strip_metadata,
  homepage_hijack,
  secure_prefs_mac_mismatch,
  httponly_downgrade,
};

enum class Severity { info, warn, critical };

std::string to_string(Category c);
std::string to_string(Severity s);

struct Finding {
  Category category;
  Severity severity = Severity::warn;
  std::string profile_path;
  std::string subject;  // host / origin / extension id / cert label / pref name
  std::vector<std::string> evidence;
  bool baseline_required = false;
};

/// Normalized view of everything a profile contained when it was known-good.
/// created_at defaults to 0 so snapshots of identical content serialize to
/// identical canonical bytes; callers wanting wall-clock stamps pass one in.
struct Baseline {
  std::int64_t created_at = 0;
  std::map<std::string, std::string> record_digests;  // artifact -> sha256 hex
  std::vector<std::string> cookie_hosts;
  std::vector<std::string> login_origins;
  std::vector<codec::PermissionRecord> permission_set;
  std::vector<std::string> cert_fingerprints;
  std::vector<std::string> extension_ids;
  std::string homepage;
  std::map<std::string, std::string> proxy_prefs;
  Digest mac{};  // keyed MAC over the canonical serialization (excludes itself)
};

Baseline snapshot(const ProfileDescriptor& profile, const Bytes& key = {},
                  std::int64_t created_at = 0);

std::string baseline_canonical_json(const Baseline& baseline);
Digest baseline_mac(const Baseline& baseline, const Bytes& key);
bool verify_baseline(const Baseline& baseline, const Bytes& key);

/// Canonical JSON next to a detached <file>.mac (hex). Loading verifies the
/// MAC and throws MacError on any mismatch or corruption.
void save_baseline(const Baseline& baseline, const std::filesystem::path& file,
                   const Bytes& key);
Baseline load_baseline(const std::filesystem::path& file, const Bytes& key);

struct ScanConfig {
  std::vector<std::string> permission_allowlist;  // used only without a baseline
  std::optional<Bytes> mac_seed;                  // enables Secure-Preferences checks
  std::string machine_id;
};

struct ScanReport {
  std::vector<Finding> findings;  // deterministic order
  std::vector<std::string> warnings;
  std::vector<std::string> rules_needing_baseline;  // skipped for lack of one
};

ScanReport scan(const ProfileDescriptor& profile, const std::optional<Baseline>& baseline,
                const ScanConfig& config);

/// Secure-Preferences MAC: uppercase-hex HMAC-SHA256 keyed by `seed` over
/// machine_id || pref path || canonical minified value serialization.
std::string compute_pref_mac(const Bytes& seed, const std::string& machine_id,
                             const std::string& pref_path, const nlohmann::json& value);

/// Recomputes every protection.macs entry and reports mismatching pref
/// paths; guarded extensions.settings children missing a MAC entirely are
/// reported too.
std::vector<std::string> verify_secure_prefs_macs(const codec::PreferenceTree& tree,
                                                  const Bytes& seed,
                                                  const std::string& machine_id);

}  // namespace bpi::sentinel
