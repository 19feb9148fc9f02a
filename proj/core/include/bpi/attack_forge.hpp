#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "bpi/hash.hpp"
#include "bpi/profile_atlas.hpp"
#include "bpi/profile_codec.hpp"

namespace bpi::forge {

using atlas::Engine;
using atlas::OsLayout;
using atlas::ProfileDescriptor;

enum class AttackKind {
  cookie_rehome,
  login_rehome,
  permission_grant,
  rogue_ca,
  proxy_hijack,
  sideload_extension,
  strip_metadata,
  homepage_hijack,
};

std::string to_string(AttackKind k);
AttackKind attack_kind_from_string(const std::string& s);

struct AttackTag {
  AttackKind kind;
  std::string subject;  // host / origin / extension id / cert label / url
  std::map<std::string, std::string> params;
};

/// Ground truth recorded while a fixture is synthesized. Detection tests
/// treat this as the oracle: anything not listed here is attacker-planted.
struct PlantedTruth {
  std::vector<std::string> cookie_hosts;
  std::vector<std::string> login_origins;
  std::vector<codec::PermissionRecord> permissions;
  std::vector<std::string> extension_ids;
  std::vector<std::pair<std::string, std::string>> certs;  // label, fingerprint
  std::string homepage;
  std::string mac_seed_hex;  // chromium fixtures: seed the MACs were written with
  std::string machine_id;
};

struct FixtureManifest {
  std::uint64_t seed = 0;
  Engine engine = Engine::chromium;
  std::string profile_path;
  std::vector<std::string> marker_files;
  PlantedTruth planted;
  std::vector<AttackTag> applied_attacks;
};

std::filesystem::path manifest_path(const std::filesystem::path& profile_dir);
void save_manifest(const FixtureManifest& manifest);
FixtureManifest load_manifest(const std::filesystem::path& profile_dir);

/// Synthesizes a structurally valid profile with content derived only from
/// `seed` (same seed, byte-identical tree) and drops the `.sentinel-fixture`
/// marker at its root. The manifest is persisted beside the directory.
FixtureManifest generate_fixture_profile(std::uint64_t seed, Engine engine,
                                         const std::filesystem::path& out_dir);

struct HomeManifest {
  std::uint64_t seed = 0;
  std::string home_dir;
  std::vector<ProfileDescriptor> profiles;  // sorted by profile_path
};

/// Plants 1..4 profiles across the native/snap/flatpak placements of a linux
/// home, recording the exact descriptor set a scanner must report.
HomeManifest generate_fixture_home(std::uint64_t seed, const std::filesystem::path& home_dir);

Engine detect_engine(const std::filesystem::path& profile_dir);

// Attack simulators. Every one refuses a directory without the fixture
// marker, appends its tag to the sibling manifest, and leaves unrelated
// artifacts byte-identical.

AttackTag sim_cookie_rehome(const std::filesystem::path& profile_dir,
                            const std::string& target_host,
                            const std::string& attacker_host);

AttackTag sim_login_rehome(const std::filesystem::path& profile_dir,
                           const std::string& target_origin,
                           const std::string& attacker_origin);

AttackTag sim_grant_permission(const std::filesystem::path& profile_dir,
                               const std::string& origin, const std::string& perm_type);

AttackTag sim_add_root_ca(const std::filesystem::path& profile_dir, const Bytes& der,
                          const std::string& label, const std::string& trust_flags = "C");

/// gecko only: writes the five network.proxy.* prefs (http, http_port, ssl,
/// ssl_port, type=1). Re-running overwrites in place.
AttackTag sim_set_proxy(const std::filesystem::path& profile_dir, const std::string& host,
                        int port);

/// chromium only: registers an unpacked extension under extensions.settings
/// with from_webstore=false and a matching protection.macs entry so the
/// integrity check still passes.
AttackTag sim_sideload_extension(const std::filesystem::path& profile_dir,
                                 const std::filesystem::path& ext_dir,
                                 const std::vector<std::string>& permissions,
                                 const Bytes& mac_seed, const std::string& machine_id);

/// Empties the extension's _metadata/ directory and drops its write bits
/// (`rm _metadata/*; chmod a-w _metadata`).
AttackTag sim_strip_metadata(const std::filesystem::path& ext_install_dir);

AttackTag sim_homepage_hijack(const std::filesystem::path& profile_dir,
                              const std::string& url);

/// Writes a zip holding exactly one symlink entry targeting "/" and nothing
/// else; returns the archive size in bytes (a few hundred).
std::uint64_t make_symlink_archive(const std::filesystem::path& out_path);

/// Writes a zip whose entry names are the given '..'-bearing relative paths.
std::size_t make_zip_slip_archive(const std::filesystem::path& out_path,
                                  const std::vector<std::string>& entries);

/// Minimal unpacked-extension directory (manifest.json) for sideload runs.
void make_unpacked_extension(const std::filesystem::path& dir,
                             const std::string& name = "Helper");

/// Structurally certificate-shaped DER bytes (not a real signature chain).
Bytes synth_certificate(const std::string& common_name, SeededRng& rng);

}  // namespace bpi::forge
