#include <doctest.h>

#include <algorithm>

#include "bpi/attack_forge.hpp"
#include "bpi/errors.hpp"
#include "bpi/pathguard.hpp"
#include "support/oracles.hpp"

using namespace bpi;
using pathguard::ArchiveIssue;
using pathguard::Decision;
using pathguard::PathRule;
using pathguard::RuleKind;
using atlas::OsKind;

namespace {

const std::string kHome = "/home/u";

std::vector<PathRule> linux_rules() {
  return pathguard::default_blocklist(OsKind::linux_os, kHome);
}

bool denied(const std::string& path, const FsView& fs) {
  return pathguard::verdict(path, linux_rules(), fs).decision == Decision::deny;
}

}  // namespace

TEST_SUITE("pathguard.blocklist") {
  TEST_CASE("the stock linux list carries the system and disclosure subtrees") {
    auto rules = linux_rules();
    auto has_subtree = [&](const std::string& p) {
      return std::any_of(rules.begin(), rules.end(), [&](const PathRule& r) {
        return r.kind == RuleKind::subtree && r.pattern == p;
      });
    };
    CHECK(has_subtree("/etc"));
    CHECK(has_subtree("/boot"));
    CHECK(has_subtree(kHome + "/.mozilla"));
    CHECK(has_subtree(kHome + "/.pki"));
    CHECK(has_subtree(kHome + "/snap"));
    CHECK(has_subtree(kHome + "/.var"));
    // Downloads and friends are reachable: no rule mentions them.
    CHECK(std::none_of(rules.begin(), rules.end(), [&](const PathRule& r) {
      return r.pattern.find("Downloads") != std::string::npos;
    }));
  }
}

TEST_SUITE("pathguard.resolve") {
  TEST_CASE("a Downloads symlink to the filesystem root relocates everything under it") {
    MemFs fs;
    fs.add_dir(kHome + "/Downloads");
    fs.add_symlink(kHome + "/Downloads/link", "/");
    auto res = pathguard::resolve_real(kHome + "/Downloads/link/etc", fs);
    CHECK(res.path == "/etc");
  }

  TEST_CASE("pure syntax noise resolves lexically") {
    MemFs fs;
    CHECK(pathguard::resolve_real("/a/./b//c", fs).path == "/a/b/c");
    CHECK(pathguard::resolve_real("/a/b/../c", fs).path == "/a/c");
  }

  TEST_CASE("link chains resolve; 41 expansions trip the loop guard") {
    MemFs fs;
    fs.add_dir("/dir");
    fs.add_symlink("/link1", "/link2");
    fs.add_symlink("/link2", "/dir");
    CHECK(pathguard::resolve_real("/link1", fs).path == "/dir");

    MemFs chain;
    chain.add_dir("/end");
    for (int i = 0; i < 41; ++i)
      chain.add_symlink("/l" + std::to_string(i),
                        i == 40 ? "/end" : "/l" + std::to_string(i + 1));
    CHECK_THROWS_AS(pathguard::resolve_real("/l0", chain), LoopError);

    MemFs ok_chain;
    ok_chain.add_dir("/end");
    for (int i = 0; i < 40; ++i)
      ok_chain.add_symlink("/k" + std::to_string(i),
                           i == 39 ? "/end" : "/k" + std::to_string(i + 1));
    CHECK(pathguard::resolve_real("/k0", ok_chain).path == "/end");
  }

  TEST_CASE("missing components are kept lexically and reported dangling") {
    MemFs fs;
    fs.add_dir("/srv");
    auto res = pathguard::resolve_real("/srv/ghost/sub", fs);
    CHECK(res.path == "/srv/ghost/sub");
    CHECK(res.dangling);
  }

  TEST_CASE("self-loop trips the guard") {
    MemFs fs;
    fs.add_symlink("/self", "/self");
    CHECK_THROWS_AS(pathguard::resolve_real("/self/x", fs), LoopError);
  }
}

TEST_SUITE("pathguard.verdict") {
  TEST_CASE("home root denied exactly, its children reachable") {
    MemFs fs;
    fs.add_dir(kHome + "/Downloads");
    CHECK(denied(kHome, fs));
    CHECK_FALSE(denied(kHome + "/Downloads", fs));
    CHECK_FALSE(denied(kHome + "/Documents", fs));
  }

  TEST_CASE("system and dot-dir paths are denied") {
    MemFs fs;
    const std::vector<std::string> probes = {
        "/etc", "/boot", "/dev", "/proc", "/sys",
        kHome + "/.ssh", kHome + "/.mozilla", kHome + "/.pki", kHome + "/.mozilla/firefox/x"};
    for (const auto& p : probes)
      CHECK_MESSAGE(denied(p, fs), p);
  }

  TEST_CASE("symlink traversal is judged on the resolved path") {
    MemFs fs;
    fs.add_dir(kHome + "/Downloads");
    fs.add_symlink(kHome + "/Downloads/link", "/");
    auto v = pathguard::verdict(kHome + "/Downloads/link/etc", linux_rules(), fs);
    CHECK(v.decision == Decision::deny);
    CHECK(v.resolved_path == "/etc");
    REQUIRE(v.matched_rule.has_value());
    CHECK(v.matched_rule->pattern == "/etc");
  }

  TEST_CASE("resolution failure fails closed") {
    MemFs fs;
    fs.add_symlink("/spin", "/spin");
    auto v = pathguard::verdict("/spin/x", linux_rules(), fs);
    CHECK(v.decision == Decision::deny);
    REQUIRE(v.matched_rule.has_value());
    CHECK(v.matched_rule->reason == "unresolvable");
  }

  TEST_CASE("syntactic noise never changes the verdict") {
    MemFs fs;
    fs.add_dir(kHome + "/Downloads/sub");
    SeededRng rng(3);
    const std::string paths[] = {"/etc/ssl", kHome, kHome + "/Downloads/sub", "/var/tmp/x",
                                 kHome + "/.ssh/id_rsa"};
    for (const auto& base : paths) {
      const auto want = pathguard::verdict(base, linux_rules(), fs).decision;
      for (int round = 0; round < 50; ++round) {
        std::string noisy;
        for (char c : base) {
          noisy.push_back(c);
          if (c == '/' && rng.below(3) == 0) noisy += rng.below(2) == 0 ? "./" : "/";
        }
        CHECK(pathguard::verdict(noisy, linux_rules(), fs).decision == want);
      }
    }
  }

  TEST_CASE("subtree denial is monotonic on link-free trees") {
    MemFs fs;
    SeededRng rng(9);
    for (int round = 0; round < 100; ++round) {
      std::string base = rng.below(2) == 0 ? "/etc" : kHome + "/.mozilla";
      std::string deeper = base;
      const std::size_t n = 1 + rng.below(4);
      for (std::size_t i = 0; i < n; ++i) deeper += "/" + rng.token(4);
      REQUIRE(denied(base, fs));
      CHECK(denied(deeper, fs));
    }
  }

  TEST_CASE("windows and macos comparisons fold case") {
    MemFs fs;
    auto rules = pathguard::default_blocklist(OsKind::windows_os, "C:/Users/u");
    CHECK(pathguard::verdict("C:/WINDOWS/system32", rules, fs, OsKind::windows_os).decision ==
          Decision::deny);
    CHECK(pathguard::verdict("c:/users/u/appdata/Local", rules, fs, OsKind::windows_os)
              .decision == Decision::deny);
    auto mac_rules = pathguard::default_blocklist(OsKind::macos_os, "/Users/u");
    CHECK(pathguard::verdict("/users/U/library/Safari", mac_rules, fs, OsKind::macos_os)
              .decision == Decision::deny);
  }
}

TEST_SUITE("pathguard.archive") {
  TEST_CASE("traversal names, absolute names and escaping symlinks are all flagged") {
    std::vector<zip::Entry> entries;
    entries.push_back({"../.mozilla/firefox/x", zip::EntryKind::file, "", to_bytes("p"), 0644});
    entries.push_back({"../.config/google-chrome/y", zip::EntryKind::file, "", to_bytes("p"), 0644});
    entries.push_back({"/etc/shadow", zip::EntryKind::file, "", to_bytes("p"), 0644});
    entries.push_back({"docs/readme.txt", zip::EntryKind::file, "", to_bytes("p"), 0644});
    zip::Entry link;
    link.name = "escape";
    link.kind = zip::EntryKind::symlink;
    link.link_target = "/";
    entries.push_back(link);

    auto findings =
        pathguard::scan_archive(entries, kHome + "/Downloads", linux_rules());
    REQUIRE(findings.size() == 4);
    CHECK(findings[0].issue == ArchiveIssue::traversal);
    CHECK(findings[1].issue == ArchiveIssue::traversal);
    CHECK(findings[2].issue == ArchiveIssue::absolute_path);
    CHECK(findings[3].entry_name == "escape");
    CHECK(findings[3].issue == ArchiveIssue::symlink_escape);
  }

  TEST_CASE("an in-tree symlink pointing at a deny-listed target is flagged") {
    std::vector<zip::Entry> entries;
    zip::Entry link;
    link.name = "inner/shortcut";
    link.kind = zip::EntryKind::symlink;
    link.link_target = "../.ssh";  // stays under $HOME but lands on a denied name
    entries.push_back(link);
    auto findings = pathguard::scan_archive(entries, kHome, linux_rules());
    REQUIRE(findings.size() == 1);
    CHECK(findings[0].issue == ArchiveIssue::symlink_denied_target);
  }

  TEST_CASE("forged archives produce exactly the planted finding set") {
    oracle::TempDir tmp;
    const auto symlink_zip = tmp / "symlink.zip";
    const auto size = forge::make_symlink_archive(symlink_zip);
    CHECK(size <= 512);

    auto entries = zip::read_entries(symlink_zip);
    REQUIRE(entries.size() == 1);
    CHECK(entries[0].kind == zip::EntryKind::symlink);
    CHECK(entries[0].link_target == "/");
    auto findings =
        pathguard::scan_archive(entries, kHome + "/Downloads", linux_rules());
    REQUIRE(findings.size() == 1);
    CHECK(findings[0].issue == ArchiveIssue::symlink_escape);

    const std::vector<std::string> slips = {"../.mozilla/firefox/user.js",
                                            "../.config/google-chrome/Default/Preferences"};
    const auto slip_zip = tmp / "slip.zip";
    CHECK(forge::make_zip_slip_archive(slip_zip, slips) == slips.size());
    auto slip_entries = zip::read_entries(slip_zip);
    auto slip_findings =
        pathguard::scan_archive(slip_entries, kHome + "/Downloads", linux_rules());
    REQUIRE(slip_findings.size() == slips.size());
    for (std::size_t i = 0; i < slips.size(); ++i) {
      CHECK(slip_findings[i].entry_name == slips[i]);
      CHECK(slip_findings[i].issue == ArchiveIssue::traversal);
    }
  }

  TEST_CASE("benign entries yield no findings") {
    SeededRng rng(17);
    std::vector<zip::Entry> entries;
    for (int i = 0; i < 200; ++i) {
      zip::Entry e;
      e.name = rng.token(5) + "/" + rng.token(5) + ".txt";
      e.kind = zip::EntryKind::file;
      entries.push_back(std::move(e));
    }
    CHECK(pathguard::scan_archive(entries, kHome + "/Downloads", linux_rules()).empty());
  }
}

TEST_SUITE("pathguard.rules_io") {
  TEST_CASE("rules survive a JSON round trip and normalize patterns") {
    auto rules = linux_rules();
    auto reparsed = pathguard::rules_from_json(pathguard::rules_to_json(rules));
    CHECK(reparsed == rules);

    auto custom = pathguard::rules_from_json(
        R"([{"kind":"subtree","pattern":"/a/./b//c","reason":"r"}])");
    REQUIRE(custom.size() == 1);
    CHECK(custom[0].pattern == "/a/b/c");
    CHECK_THROWS_AS(pathguard::rules_from_json("{}"), FormatError);
    CHECK_THROWS_AS(pathguard::rules_from_json(R"([{"kind":"nope","pattern":"/x"}])"),
                    FormatError);
  }
}
