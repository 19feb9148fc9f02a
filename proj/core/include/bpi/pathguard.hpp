#pragma once

#include <optional>
#include <string>
#include <vector>

#include "bpi/fs.hpp"
#include "bpi/profile_atlas.hpp"
#include "bpi/zipfile.hpp"

namespace bpi::pathguard {

using atlas::OsKind;

enum class RuleKind { exact, subtree, basename_anywhere };

struct PathRule {
  RuleKind kind = RuleKind::subtree;
  std::string pattern;  // normalized path, or a bare name for basename_anywhere
  std::string reason;

  bool operator==(const PathRule&) const = default;
};

enum class Decision { allow, deny };

struct Verdict {
  Decision decision = Decision::allow;
  std::optional<PathRule> matched_rule;  // present iff deny
  std::string resolved_path;
};

/// The stock deny list for an OS/home pair: system subtrees, the home root
/// itself (exact — children stay reachable), the sensitive home dot-dirs and
/// the package-manager profile parents. Default-accessible folders
/// (Desktop, Downloads, Documents, Music, Pictures, Videos) carry no rule.
std::vector<PathRule> default_blocklist(OsKind os, const std::string& home);

struct Resolution {
  std::string path;       // canonical
  bool dangling = false;  // a component did not exist; remainder kept lexically
};

/// Canonicalizes '.' / '..' / duplicate separators and expands every symlink
/// component against the snapshot. Throws LoopError after 40 expansions.
Resolution resolve_real(const std::string& path, const FsView& fs);

/// Policy decision over the *resolved* path. Resolution failure denies with
/// the synthetic rule "unresolvable". Comparison is case-insensitive on
/// windows/macos.
Verdict verdict(const std::string& path, const std::vector<PathRule>& rules, const FsView& fs,
                OsKind os = OsKind::linux_os);

enum class ArchiveIssue { absolute_path, traversal, symlink_escape, symlink_denied_target };

struct ArchiveFinding {
  std::string entry_name;
  ArchiveIssue issue;
  std::string detail;
};

std::string to_string(ArchiveIssue issue);

/// Flags entries that would land outside extract_root (absolute names or
/// '..' traversal), symlinks whose target escapes it, and symlinks whose
/// resolved target the rule set denies. At most one finding per entry,
/// checked in that order. Malformed names are findings, never errors.
std::vector<ArchiveFinding> scan_archive(const std::vector<zip::Entry>& entries,
                                         const std::string& extract_root,
                                         const std::vector<PathRule>& rules,
                                         const FsView* fs = nullptr,
                                         OsKind os = OsKind::linux_os);

std::vector<PathRule> rules_from_json(std::string_view text);
std::string rules_to_json(const std::vector<PathRule>& rules);

}  // namespace bpi::pathguard
