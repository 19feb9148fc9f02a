#include "bpi/profile_atlas.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <span>

#include "bpi/errors.hpp"

namespace bpi::atlas {

namespace {

struct CatalogRow {
  const char* rel_root;
  const char* browser;
  Engine engine;
  Channel channel;
};

const CatalogRow kLinuxRows[] = {
    {".config/google-chrome", "Google Chrome", Engine::chromium, Channel::native},
    {".config/chromium", "Chromium", Engine::chromium, Channel::native},
    {".config/microsoft-edge", "Microsoft Edge", Engine::chromium, Channel::native},
    {".config/vivaldi", "Vivaldi", Engine::chromium, Channel::native},
    {".config/opera", "Opera", Engine::chromium, Channel::native},
    {".config/yandex", "Yandex", Engine::chromium, Channel::native},
    {".config/brave", "Brave", Engine::chromium, Channel::native},
    {".mozilla/firefox", "Firefox", Engine::gecko, Channel::native},
    {".librewolf", "LibreWolf", Engine::gecko, Channel::native},
    {".waterfox", "Waterfox", Engine::gecko, Channel::native},
    {".moonchild productions", "Pale Moon", Engine::gecko, Channel::native},
    {"snap/firefox/common/.mozilla/firefox", "Firefox", Engine::gecko, Channel::snap},
    {"snap/chromium/common/chromium", "Chromium", Engine::chromium, Channel::snap},
    {".var/app/org.mozilla.firefox/.mozilla/firefox", "Firefox", Engine::gecko,
     Channel::flatpak},
    {".var/app/com.google.Chrome/config/google-chrome", "Google Chrome", Engine::chromium,
     Channel::flatpak},
};

const CatalogRow kMacosRows[] = {
    {"Library/Application Support/Google/Chrome", "Google Chrome", Engine::chromium,
     Channel::native},
    {"Library/Application Support/Chromium", "Chromium", Engine::chromium, Channel::native},
    {"Library/Application Support/Microsoft Edge", "Microsoft Edge", Engine::chromium,
     Channel::native},
    {"Library/Application Support/Vivaldi", "Vivaldi", Engine::chromium, Channel::native},
    {"Library/Application Support/com.operasoftware", "Opera", Engine::chromium,
     Channel::native},
    {"Library/Application Support/Yandex/YandexBrowser", "Yandex", Engine::chromium,
     Channel::native},
    {"Library/Application Support/BraveSoftware/Brave-Browser", "Brave", Engine::chromium,
     Channel::native},
    {"Library/Application Support/AVAST Software/Browser", "Avast Secure", Engine::chromium,
     Channel::native},
    {"Library/Application Support/Firefox/Profiles", "Firefox", Engine::gecko,
     Channel::native},
    {"Library/Application Support/librewolf/Profiles", "LibreWolf", Engine::gecko,
     Channel::native},
    {"Library/Application Support/Waterfox/Profiles", "Waterfox", Engine::gecko,
     Channel::native},
    {"Library/Safari", "Safari", Engine::webkit, Channel::native},
};

const CatalogRow kWindowsRows[] = {
    {"AppData/Local/Google/Chrome/User Data", "Google Chrome", Engine::chromium,
     Channel::native},
    {"AppData/Local/Chromium/User Data", "Chromium", Engine::chromium, Channel::native},
    {"AppData/Local/Microsoft/Edge/User Data", "Microsoft Edge", Engine::chromium,
     Channel::native},
    {"AppData/Local/Vivaldi/User Data", "Vivaldi", Engine::chromium, Channel::native},
    {"AppData/Local/Opera Stable", "Opera", Engine::chromium, Channel::native},
    {"AppData/Local/Yandex/YandexBrowser/User Data", "Yandex", Engine::chromium,
     Channel::native},
    {"AppData/Local/BraveSoftware/Brave-Browser/User Data", "Brave", Engine::chromium,
     Channel::native},
    {"AppData/Local/AVAST Software/Browser/User Data", "Avast Secure", Engine::chromium,
     Channel::native},
    {"AppData/Roaming/Mozilla/Firefox/Profiles", "Firefox", Engine::gecko, Channel::native},
    {"AppData/Local/librewolf/Profiles", "LibreWolf", Engine::gecko, Channel::native},
    {"AppData/Roaming/Waterfox/Profiles", "Waterfox", Engine::gecko, Channel::native},
};

// Secondary gecko artifacts recorded as extra markers when present.
const char* kGeckoExtras[] = {"cookies.sqlite", "permissions.sqlite", "logins.json",
                              "extensions.json", "cert9.db", "key4.db"};
const char* kChromiumExtras[] = {"Cookies", "Login Data", "Extensions", "Secure Preferences"};

constexpr int kMaxDepth = 4;

void walk(const FsView& fs, const std::string& dir, int depth,
          const std::function<void(const std::string&)>& visit) {
  visit(dir);
  if (depth >= kMaxDepth) return;
  for (const auto& name : fs.list_dir(dir)) {
    auto child = path_join(dir, name);
    // Never follow links while scanning; the pathguard module deals with those.
    if (fs.kind(child) == NodeKind::dir) walk(fs, child, depth + 1, visit);
  }
}

}  // namespace

std::string to_string(Engine e) {
  switch (e) {
    case Engine::gecko: return "gecko";
    case Engine::chromium: return "chromium";
    case Engine::webkit: return "webkit";
  }
  return "?";
}

std::string to_string(Channel c) {
  switch (c) {
    case Channel::native: return "native";
    case Channel::snap: return "snap";
    case Channel::flatpak: return "flatpak";
    case Channel::custom: return "custom";
  }
  return "?";
}

std::string to_string(OsKind o) {
  switch (o) {
    case OsKind::linux_os: return "linux";
    case OsKind::windows_os: return "windows";
    case OsKind::macos_os: return "macos";
  }
  return "?";
}

OsKind os_from_string(const std::string& s) {
  if (s == "linux") return OsKind::linux_os;
  if (s == "windows") return OsKind::windows_os;
  if (s == "macos") return OsKind::macos_os;
  throw Error("unknown os: " + s);
}

std::vector<RootCandidate> known_roots(const OsLayout& layout) {
  std::span<const CatalogRow> rows;
  switch (layout.os) {
    case OsKind::linux_os: rows = kLinuxRows; break;
    case OsKind::macos_os: rows = kMacosRows; break;
    case OsKind::windows_os: rows = kWindowsRows; break;
  }
  std::vector<RootCandidate> out;
  out.reserve(rows.size());
  for (const auto& row : rows) {
    out.push_back({path_join(layout.home_dir, row.rel_root), row.browser, row.engine,
                   row.channel});
  }
  return out;
}

std::optional<ProfileDescriptor> classify_dir(const std::string& path, const FsView& fs,
                                              const OsLayout& layout,
                                              const std::vector<std::string>& extra_roots) {
  const auto dir = lexical_normalize(path);
  if (!fs.is_dir(dir)) throw IoError("not a directory: " + dir);

  ProfileDescriptor desc;
  if (fs.is_file(path_join(dir, "prefs.js"))) {
    desc.engine = Engine::gecko;
    desc.marker_files.emplace_back("prefs.js");
    for (const char* extra : kGeckoExtras)
      if (fs.exists(path_join(dir, extra))) desc.marker_files.emplace_back(extra);
  } else if (fs.is_file(path_join(dir, "Preferences")) &&
             (fs.is_file(path_join(dir, "Cookies")) ||
              fs.is_file(path_join(dir, "Login Data")))) {
    desc.engine = Engine::chromium;
    desc.marker_files.emplace_back("Preferences");
    for (const char* extra : kChromiumExtras)
      if (fs.exists(path_join(dir, extra))) desc.marker_files.emplace_back(extra);
  } else {
    return std::nullopt;
  }

  desc.profile_path = dir;
  desc.browser_name = "unknown";
  desc.channel = Channel::custom;
  desc.root_path = dir;
  for (const auto& cand : known_roots(layout)) {
    if (path_under(cand.root_path, dir)) {
      desc.browser_name = cand.browser_name;
      desc.channel = cand.channel;
      desc.root_path = cand.root_path;
      break;
    }
  }
  if (desc.browser_name == "unknown") {
    for (const auto& extra : extra_roots) {
      if (path_under(extra, dir)) {
        desc.root_path = lexical_normalize(extra);
        break;
      }
    }
  }
  return desc;
}

EnumerationResult enumerate_profiles(const OsLayout& layout, const FsView& fs,
                                     const std::vector<std::string>& extra_roots) {
  EnumerationResult result;
  std::map<std::string, ProfileDescriptor> found;

  std::vector<std::string> roots;
  for (const auto& cand : known_roots(layout)) roots.push_back(cand.root_path);
  for (const auto& extra : extra_roots) roots.push_back(lexical_normalize(extra));

  for (const auto& root : roots) {
    if (!fs.is_dir(root)) continue;
    try {
      walk(fs, root, 0, [&](const std::string& dir) {
        if (found.contains(dir)) return;
        try {
          if (auto desc = classify_dir(dir, fs, layout, extra_roots))
            found.emplace(dir, std::move(*desc));
        } catch (const IoError& e) {
          result.warnings.push_back(e.what());
        }
      });
    } catch (const IoError& e) {
      result.warnings.push_back(std::string("root ") + root + ": " + e.what());
    }
  }

  for (auto& [_, desc] : found) result.profiles.push_back(std::move(desc));
  // map iteration is sorted by profile_path already
  return result;
}

}  // namespace bpi::atlas
