#include "bpi/pathguard.hpp"

#include <algorithm>
#include <cctype>
#include <deque>

#include <nlohmann/json.hpp>

#include "bpi/errors.hpp"

namespace bpi::pathguard {

using nlohmann::json;

namespace {

constexpr int kMaxLinkExpansions = 40;

std::string fold_case(std::string s, OsKind os) {
  if (os == OsKind::linux_os) return s;
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string parent_of(const std::string& path) {
  if (path == "/" || path.empty()) return "/";
  auto slash = path.rfind('/');
  if (slash == std::string::npos) return path;  // bare drive root
  return slash == 0 ? "/" : path.substr(0, slash);
}

std::string kind_to_string(RuleKind k) {
  switch (k) {
    case RuleKind::exact: return "exact";
    case RuleKind::subtree: return "subtree";
    case RuleKind::basename_anywhere: return "basename_anywhere";
  }
  return "?";
}

RuleKind kind_from_string(const std::string& s) {
  if (s == "exact") return RuleKind::exact;
  if (s == "subtree") return RuleKind::subtree;
  if (s == "basename_anywhere") return RuleKind::basename_anywhere;
  throw FormatError("unknown rule kind: " + s);
}

}  // namespace

std::vector<PathRule> default_blocklist(OsKind os, const std::string& home) {
  const std::string h = lexical_normalize(home);
  std::vector<PathRule> rules;
  auto subtree = [&](const std::string& p, const std::string& why) {
    rules.push_back({RuleKind::subtree, lexical_normalize(p), why});
  };
  auto exact = [&](const std::string& p, const std::string& why) {
    rules.push_back({RuleKind::exact, lexical_normalize(p), why});
  };
  auto name = [&](const std::string& n, const std::string& why) {
    rules.push_back({RuleKind::basename_anywhere, n, why});
  };

  switch (os) {
    case OsKind::linux_os:
      subtree("/etc", "system configuration");
      subtree("/boot", "boot images");
      subtree("/dev", "device nodes");
      subtree("/proc", "kernel state");
      subtree("/sys", "kernel state");
      exact(h, "home directory root");
      subtree(h + "/.config", "application configuration (browser profiles)");
      subtree(h + "/.mozilla", "gecko profile folders");
      subtree(h + "/.pki", "shared NSS certificate store");
      subtree(h + "/snap", "snap-managed application data");
      subtree(h + "/.var", "flatpak-managed application data");
      // Per-name clauses; these are the only names the list carries.
      name(".ssh", "ssh keys");
      name(".dbus", "session bus credentials");
      break;

    case OsKind::macos_os: {
      subtree("/etc", "system configuration");
      subtree("/dev", "device nodes");
      subtree("/var", "system state");
      subtree("/private", "system state");
      subtree("/System", "system software");
      subtree("/Library", "system library");
      exact(h, "home directory root");
      subtree(h + "/Library", "application support (browser profiles)");
      name(".ssh", "ssh keys");
      break;
    }

    case OsKind::windows_os: {
      // Derive the system drive from the home path (e.g. "C:/Users/u").
      std::string drive;
      if (auto colon = h.find(':'); colon != std::string::npos) drive = h.substr(0, colon + 1);
      subtree(drive + "/Windows", "operating system");
      subtree(drive + "/Program Files", "installed software");
      subtree(drive + "/Program Files (x86)", "installed software");
      exact(h, "home directory root");
      subtree(h + "/AppData", "application data (browser profiles)");
      name(".ssh", "ssh keys");
      break;
    }
  }
  return rules;
}

namespace {

bool is_drive(const std::string& part) {
  return part.size() == 2 && part[1] == ':' &&
         ((part[0] >= 'A' && part[0] <= 'Z') || (part[0] >= 'a' && part[0] <= 'z'));
}

}  // namespace

Resolution resolve_real(const std::string& path, const FsView& fs) {
  Resolution res;
  res.path = "/";
  std::deque<std::string> pending;
  for (auto& part : path_components(lexical_normalize(path))) pending.push_back(std::move(part));
  // Windows-style drive prefixes act as the root component.
  if (!pending.empty() && is_drive(pending.front())) {
    res.path = pending.front();
    pending.pop_front();
  }

  int budget = kMaxLinkExpansions;
  bool below_missing = false;

  while (!pending.empty()) {
    std::string part = std::move(pending.front());
    pending.pop_front();
    if (part == ".") continue;
    if (part == "..") {
      res.path = parent_of(res.path);
      continue;
    }
    const std::string candidate = res.path == "/" ? "/" + part : res.path + "/" + part;

    if (below_missing) {
      res.path = candidate;
      continue;
    }
    auto node = fs.kind(candidate);
    if (!node) {
      // Nothing below a missing component can be a link; keep the remainder
      // lexically and report the dangling prefix.
      res.dangling = true;
      below_missing = true;
      res.path = candidate;
      continue;
    }
    if (*node == NodeKind::symlink) {
      if (budget == 0) throw LoopError("symlink expansion budget exhausted at " + candidate);
      --budget;
      std::string target = fs.read_link(candidate);
      auto target_parts = path_components(target);
      for (auto it = target_parts.rbegin(); it != target_parts.rend(); ++it)
        pending.push_front(std::move(*it));
      if (!target.empty() && target.front() == '/') res.path = "/";
      continue;
    }
    res.path = candidate;
  }
  return res;
}

Verdict verdict(const std::string& path, const std::vector<PathRule>& rules, const FsView& fs,
                OsKind os) {
  Verdict v;
  try {
    auto res = resolve_real(path, fs);
    v.resolved_path = res.path;
  } catch (const LoopError& e) {
    v.decision = Decision::deny;
    v.matched_rule = PathRule{RuleKind::exact, lexical_normalize(path), "unresolvable"};
    v.resolved_path = lexical_normalize(path);
    return v;
  }

  const std::string folded = fold_case(v.resolved_path, os);
  auto folded_components = path_components(folded);
  for (const auto& rule : rules) {
    const std::string pattern = fold_case(rule.pattern, os);
    bool hit = false;
    switch (rule.kind) {
      case RuleKind::exact: hit = folded == pattern; break;
      case RuleKind::subtree: hit = path_under(pattern, folded); break;
      case RuleKind::basename_anywhere:
        hit = std::find(folded_components.begin(), folded_components.end(), pattern) !=
              folded_components.end();
        break;
    }
    if (hit) {
      v.decision = Decision::deny;
      v.matched_rule = rule;
      return v;
    }
  }
  return v;
}

std::string to_string(ArchiveIssue issue) {
  switch (issue) {
    case ArchiveIssue::absolute_path: return "absolute_path";
    case ArchiveIssue::traversal: return "traversal";
    case ArchiveIssue::symlink_escape: return "symlink_escape";
    case ArchiveIssue::symlink_denied_target: return "symlink_denied_target";
  }
  return "?";
}

std::vector<ArchiveFinding> scan_archive(const std::vector<zip::Entry>& entries,
                                         const std::string& extract_root,
                                         const std::vector<PathRule>& rules, const FsView* fs,
                                         OsKind os) {
  const std::string root = lexical_normalize(extract_root);
  MemFs empty;
  const FsView& view = fs ? *fs : static_cast<const FsView&>(empty);

  std::vector<ArchiveFinding> findings;
  for (const auto& entry : entries) {
    std::string name = entry.name;
    std::replace(name.begin(), name.end(), '\\', '/');

    if (!name.empty() && (name.front() == '/' || (name.size() > 1 && name[1] == ':'))) {
      findings.push_back({entry.name, ArchiveIssue::absolute_path,
                          "entry extracts to an absolute location"});
      continue;
    }
    const std::string dest = path_join(root, name);
    if (!path_under(root, dest)) {
      findings.push_back({entry.name, ArchiveIssue::traversal,
                          "entry escapes the extraction root: " + dest});
      continue;
    }
    if (entry.kind != zip::EntryKind::symlink) continue;

    const std::string target = entry.link_target;
    const std::string resolved_target =
        (!target.empty() && target.front() == '/')
            ? lexical_normalize(target)
            : path_join(parent_of(dest), target);
    if (!path_under(root, resolved_target)) {
      findings.push_back({entry.name, ArchiveIssue::symlink_escape,
                          "symlink target leaves the extraction root: " + resolved_target});
      continue;
    }
    auto v = verdict(resolved_target, rules, view, os);
    if (v.decision == Decision::deny) {
      findings.push_back({entry.name, ArchiveIssue::symlink_denied_target,
                          "symlink target is deny-listed: " + v.resolved_path +
                              " (" + v.matched_rule->reason + ")"});
    }
  }
  return findings;
}

std::vector<PathRule> rules_from_json(std::string_view text) {
  json doc = json::parse(text, nullptr, false);
  if (doc.is_discarded() || !doc.is_array()) throw FormatError("rules document must be a JSON array");
  std::vector<PathRule> rules;
  for (const auto& item : doc) {
    PathRule r;
    r.kind = kind_from_string(item.value("kind", ""));
    r.pattern = item.value("pattern", "");
    if (r.kind != RuleKind::basename_anywhere) r.pattern = lexical_normalize(r.pattern);
    r.reason = item.value("reason", "");
    if (r.pattern.empty()) throw FormatError("rule with empty pattern");
    rules.push_back(std::move(r));
  }
  return rules;
}

std::string rules_to_json(const std::vector<PathRule>& rules) {
  json doc = json::array();
  for (const auto& r : rules) {
    doc.push_back({{"kind", kind_to_string(r.kind)},
                   {"pattern", r.pattern},
                   {"reason", r.reason}});
  }
  return doc.dump(2);
}

}  // namespace bpi::pathguard
