#pragma once

#include <optional>
#include <string>
#include <vector>

#include "bpi/fs.hpp"

namespace bpi::atlas {

enum class Engine { gecko, chromium, webkit };
enum class Channel { native, snap, flatpak, custom };
enum class OsKind { linux_os, windows_os, macos_os };

std::string to_string(Engine e);
std::string to_string(Channel c);
std::string to_string(OsKind o);
OsKind os_from_string(const std::string& s);

struct OsLayout {
  OsKind os = OsKind::linux_os;
  std::string home_dir;  // absolute, '/'-separated
};

struct RootCandidate {
  std::string root_path;
  std::string browser_name;
  Engine engine;
  Channel channel;
};

/// A located profile directory. Only emitted on positive marker evidence:
/// gecko profiles always list prefs.js, chromium ones always list
/// Preferences.
struct ProfileDescriptor {
  Engine engine = Engine::gecko;
  std::string browser_name;
  Channel channel = Channel::custom;
  std::string root_path;
  std::string profile_path;
  std::vector<std::string> marker_files;

  bool operator==(const ProfileDescriptor&) const = default;
};

/// The static catalog of default profile-root locations for the layout's OS,
/// each joined onto home_dir. Linux includes native, snap and flatpak
/// placements; Windows/macOS list the stock vendor directories.
std::vector<RootCandidate> known_roots(const OsLayout& layout);

/// Recognizes a single directory as a profile from its marker files.
/// browser_name/channel come from the nearest enclosing catalog root when
/// one matches, otherwise "unknown"/custom with root_path = profile_path.
std::optional<ProfileDescriptor> classify_dir(const std::string& path, const FsView& fs,
                                              const OsLayout& layout,
                                              const std::vector<std::string>& extra_roots = {});

struct EnumerationResult {
  std::vector<ProfileDescriptor> profiles;  // sorted by profile_path
  std::vector<std::string> warnings;        // per-root scan failures, non-fatal
};

/// Walks every existing known root (plus extra_roots) at most 4 levels deep
/// and collects every directory classify_dir recognizes. Purely read-only.
EnumerationResult enumerate_profiles(const OsLayout& layout, const FsView& fs,
                                     const std::vector<std::string>& extra_roots = {});

}  // namespace bpi::atlas
