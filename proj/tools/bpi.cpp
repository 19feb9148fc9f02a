// bpi — browser-profile integrity toolkit.
//
// Exit codes: 0 clean/success, 2 findings or denials present, 1 operational
// error.

#include <CLI11.hpp>

#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <nlohmann/json.hpp>
#include <termios.h>
#include <unistd.h>

#include "bpi/attack_forge.hpp"
#include "bpi/config.hpp"
#include "bpi/errors.hpp"
#include "bpi/pathguard.hpp"
#include "bpi/profile_atlas.hpp"
#include "bpi/sentinel.hpp"
#include "bpi/vault.hpp"
#include "bpi/zipfile.hpp"

namespace stdfs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitClean = 0;
constexpr int kExitError = 1;
constexpr int kExitFindings = 2;

std::string read_text_file(const stdfs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw bpi::IoError("cannot open " + p.string());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

std::string rstrip(std::string s) {
  while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
  return s;
}

// Passphrases come from --key-file or an interactive no-echo prompt, never
// from argv.
std::string obtain_passphrase(const std::string& key_file, const char* prompt) {
  if (!key_file.empty()) return rstrip(read_text_file(key_file));
  if (!isatty(STDIN_FILENO)) throw bpi::Error("no --key-file and stdin is not a terminal");
  std::cerr << prompt << std::flush;
  termios before{};
  tcgetattr(STDIN_FILENO, &before);
  termios silent = before;
  silent.c_lflag &= ~static_cast<tcflag_t>(ECHO);
  tcsetattr(STDIN_FILENO, TCSANOW, &silent);
  std::string pass;
  std::getline(std::cin, pass);
  tcsetattr(STDIN_FILENO, TCSANOW, &before);
  std::cerr << "\n";
  return pass;
}

struct CommonOpts {
  std::string config_file;
  std::string format;  // "", "human", "jsonl"
  std::string os = "linux";
  std::string home;
};

bpi::Config effective_config(const CommonOpts& opts) {
  bpi::Config cfg;
  stdfs::path file = opts.config_file;
  if (file.empty()) {
    if (const char* env_home = std::getenv("HOME"))
      file = stdfs::path(env_home) / ".config" / "bpi" / "config.json";
  }
  if (!file.empty() && stdfs::exists(file)) cfg = bpi::load_config(file);
  if (const char* env = std::getenv("BPI_REPORT_FORMAT")) {
    if (std::string(env) == "jsonl") cfg.report_format = bpi::ReportFormat::jsonl;
    if (std::string(env) == "human") cfg.report_format = bpi::ReportFormat::human;
  }
  if (opts.format == "jsonl") cfg.report_format = bpi::ReportFormat::jsonl;
  if (opts.format == "human") cfg.report_format = bpi::ReportFormat::human;
  return cfg;
}

bpi::atlas::OsLayout layout_from(const CommonOpts& opts) {
  bpi::atlas::OsLayout layout;
  layout.os = bpi::atlas::os_from_string(opts.os);
  if (!opts.home.empty()) {
    layout.home_dir = opts.home;
  } else if (const char* env_home = std::getenv("HOME")) {
    layout.home_dir = env_home;
  } else {
    throw bpi::Error("no --home and HOME is unset");
  }
  return layout;
}

json finding_to_json(const bpi::sentinel::Finding& f) {
  json j;
  j["category"] = bpi::sentinel::to_string(f.category);
  j["severity"] = bpi::sentinel::to_string(f.severity);
  j["profile"] = f.profile_path;
  j["subject"] = f.subject;
  j["evidence"] = f.evidence;
  j["baseline_required"] = f.baseline_required;
  return j;
}

void print_findings(const std::vector<bpi::sentinel::Finding>& findings,
                    bpi::ReportFormat format) {
  if (format == bpi::ReportFormat::jsonl) {
    for (const auto& f : findings) std::cout << finding_to_json(f).dump() << "\n";
    return;
  }
  if (findings.empty()) {
    std::cout << "no findings\n";
    return;
  }
  std::printf("%-26s %-8s %-40s %s\n", "CATEGORY", "SEVERITY", "SUBJECT", "PROFILE");
  for (const auto& f : findings) {
    std::printf("%-26s %-8s %-40s %s\n", bpi::sentinel::to_string(f.category).c_str(),
                bpi::sentinel::to_string(f.severity).c_str(), f.subject.c_str(),
                f.profile_path.c_str());
    for (const auto& e : f.evidence) std::printf("    - %s\n", e.c_str());
  }
}

bpi::atlas::ProfileDescriptor descriptor_for(const stdfs::path& profile_dir,
                                             const CommonOpts& opts,
                                             const bpi::Config& cfg) {
  bpi::RealFs fs;
  auto layout = layout_from(opts);
  auto desc = bpi::atlas::classify_dir(stdfs::absolute(profile_dir).lexically_normal().string(),
                                       fs, layout, cfg.extra_profile_roots);
  if (!desc) throw bpi::Error(profile_dir.string() + " is not a recognizable profile");
  return *desc;
}

bpi::Bytes baseline_key(const std::string& key_file) {
  return bpi::to_bytes(obtain_passphrase(key_file, "baseline key: "));
}

int run(int argc, char** argv) {
  CLI::App app{"browser-profile integrity toolkit"};
  app.require_subcommand(1);
  app.fallthrough();  // --config/--format may follow the subcommand
  CommonOpts opts;
  app.add_option("--config", opts.config_file, "config file (JSON)");
  app.add_option("--format", opts.format, "report format: human|jsonl")
      ->check(CLI::IsMember({"human", "jsonl"}));

  // ---- atlas ----
  auto* atlas_cmd = app.add_subcommand("atlas", "locate browser profiles");
  auto* atlas_list = atlas_cmd->add_subcommand("list", "enumerate profiles under a home");
  atlas_list->add_option("--os", opts.os, "layout os: linux|windows|macos");
  atlas_list->add_option("--home", opts.home, "home directory to scan");

  // ---- fixture ----
  auto* fixture_cmd = app.add_subcommand("fixture", "generate synthetic fixtures");
  auto* fx_gen = fixture_cmd->add_subcommand("generate", "one profile directory");
  std::uint64_t fx_seed = 1;
  std::string fx_engine = "chromium", fx_out;
  fx_gen->add_option("--seed", fx_seed, "prng seed");
  fx_gen->add_option("--engine", fx_engine, "gecko|chromium")
      ->check(CLI::IsMember({"gecko", "chromium"}));
  fx_gen->add_option("--out", fx_out, "output directory")->required();
  auto* fx_home = fixture_cmd->add_subcommand("home", "whole home layout");
  fx_home->add_option("--seed", fx_seed, "prng seed");
  fx_home->add_option("--out", fx_out, "output directory")->required();

  // ---- snapshot ----
  auto* snap_cmd = app.add_subcommand("snapshot", "record a signed baseline");
  std::string snap_profile, snap_out, snap_key_file;
  snap_cmd->add_option("profile", snap_profile, "profile directory")->required();
  snap_cmd->add_option("--out", snap_out, "baseline file")->required();
  snap_cmd->add_option("--key-file", snap_key_file, "file holding the baseline key");
  snap_cmd->add_option("--os", opts.os, "layout os");
  snap_cmd->add_option("--home", opts.home, "home directory");

  // ---- scan ----
  auto* scan_cmd = app.add_subcommand("scan", "detect profile compromises");
  std::string scan_profile, scan_baseline, scan_key_file;
  bool scan_all = false;
  scan_cmd->add_option("profile", scan_profile, "profile directory");
  scan_cmd->add_flag("--all", scan_all, "scan every profile the atlas finds");
  scan_cmd->add_option("--baseline", scan_baseline, "baseline file to diff against");
  scan_cmd->add_option("--key-file", scan_key_file, "file holding the baseline key");
  scan_cmd->add_option("--os", opts.os, "layout os");
  scan_cmd->add_option("--home", opts.home, "home directory");

  // ---- simulate ----
  auto* sim_cmd = app.add_subcommand("simulate", "apply an attack to a fixture profile");
  std::string sim_attack, sim_fixture;
  std::string sim_source = "youtube.com", sim_dest = ".attacker.com";
  std::string sim_origin = "https://attacker.com", sim_type = "camera";
  std::string sim_label = "mitmproxy", sim_trust = "C", sim_der_file;
  std::string sim_host = "127.0.0.1";
  int sim_port = 8080;
  std::string sim_ext_dir, sim_url = "https://attacker.com", sim_machine_id, sim_mac_seed_hex;
  std::vector<std::string> sim_perms;
  sim_cmd->add_option("attack", sim_attack,
                      "cookie_rehome|login_rehome|permission_grant|rogue_ca|proxy_hijack|"
                      "sideload_extension|strip_metadata|homepage_hijack")
      ->required();
  sim_cmd->add_option("fixture", sim_fixture, "fixture profile directory")->required();
  sim_cmd->add_option("--source", sim_source, "source host/origin to copy from");
  sim_cmd->add_option("--dest", sim_dest, "destination host/origin");
  sim_cmd->add_option("--origin", sim_origin, "origin to grant");
  sim_cmd->add_option("--type", sim_type, "permission type");
  sim_cmd->add_option("--label", sim_label, "certificate label");
  sim_cmd->add_option("--trust", sim_trust, "certificate trust flags");
  sim_cmd->add_option("--der-file", sim_der_file, "certificate DER file (default: synthesized)");
  sim_cmd->add_option("--host", sim_host, "proxy host");
  sim_cmd->add_option("--port", sim_port, "proxy port");
  sim_cmd->add_option("--ext-dir", sim_ext_dir, "extension directory");
  sim_cmd->add_option("--perm", sim_perms, "extension permission (repeatable)");
  sim_cmd->add_option("--url", sim_url, "homepage url");
  sim_cmd->add_option("--machine-id", sim_machine_id, "machine id for MAC forging");
  sim_cmd->add_option("--mac-seed", sim_mac_seed_hex, "MAC seed (hex)");

  // ---- vault ----
  auto* vault_cmd = app.add_subcommand("vault", "encrypted profile container");
  std::string v_profile, v_vault, v_out, v_key_file, v_machine_id, v_command, v_workdir;
  bool v_bind = false, v_fast_kdf = false;
  auto* v_init = vault_cmd->add_subcommand("init", "encrypt a profile directory");
  v_init->add_option("profile", v_profile, "profile directory")->required();
  v_init->add_option("vault", v_vault, "vault file to create")->required();
  v_init->add_option("--key-file", v_key_file, "passphrase file");
  v_init->add_flag("--bind", v_bind, "bind to this machine");
  v_init->add_option("--machine-id", v_machine_id, "machine id (else config machine_id_source)");
  v_init->add_flag("--fast-kdf", v_fast_kdf, "minimal KDF cost (testing)");
  auto* v_open = vault_cmd->add_subcommand("open", "decrypt into a directory");
  v_open->add_option("vault", v_vault, "vault file")->required();
  v_open->add_option("out", v_out, "output directory")->required();
  v_open->add_option("--key-file", v_key_file, "passphrase file");
  v_open->add_option("--machine-id", v_machine_id, "machine id");
  auto* v_run = vault_cmd->add_subcommand("run", "decrypt, run, re-encrypt");
  v_run->add_option("vault", v_vault, "vault file")->required();
  v_run->add_option("--command", v_command, "command; {profile} expands to the workdir")
      ->required();
  v_run->add_option("--workdir", v_workdir, "scratch directory")->required();
  v_run->add_option("--key-file", v_key_file, "passphrase file");
  v_run->add_option("--machine-id", v_machine_id, "machine id");

  // ---- pathguard ----
  auto* pg_cmd = app.add_subcommand("pathguard", "path policy and archive scanning");
  std::string pg_path, pg_zip, pg_rules, pg_extract_root;
  auto* pg_check = pg_cmd->add_subcommand("check", "decide allow/deny for a path");
  pg_check->add_option("path", pg_path, "path to check")->required();
  pg_check->add_option("--os", opts.os, "policy os");
  pg_check->add_option("--home", opts.home, "home directory");
  pg_check->add_option("--rules", pg_rules, "rules JSON (default: built-in blocklist)");
  auto* pg_zip_cmd = pg_cmd->add_subcommand("scan-zip", "scan an archive for escapes");
  pg_zip_cmd->add_option("file", pg_zip, "zip file")->required();
  pg_zip_cmd->add_option("--extract-root", pg_extract_root, "assumed extraction directory");
  pg_zip_cmd->add_option("--os", opts.os, "policy os");
  pg_zip_cmd->add_option("--home", opts.home, "home directory");
  pg_zip_cmd->add_option("--rules", pg_rules, "rules JSON");
  auto* pg_dump = pg_cmd->add_subcommand("dump-rules", "print the built-in blocklist");
  pg_dump->add_option("--os", opts.os, "policy os");
  pg_dump->add_option("--home", opts.home, "home directory");

  CLI11_PARSE(app, argc, argv);
  const auto cfg = effective_config(opts);

  if (*atlas_list) {
    bpi::RealFs fs;
    auto result = bpi::atlas::enumerate_profiles(layout_from(opts), fs, cfg.extra_profile_roots);
    for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
    if (cfg.report_format == bpi::ReportFormat::jsonl) {
      for (const auto& p : result.profiles) {
        json j;
        j["engine"] = bpi::atlas::to_string(p.engine);
        j["browser"] = p.browser_name;
        j["channel"] = bpi::atlas::to_string(p.channel);
        j["profile"] = p.profile_path;
        j["markers"] = p.marker_files;
        std::cout << j.dump() << "\n";
      }
    } else {
      std::printf("%-10s %-16s %-8s %s\n", "ENGINE", "BROWSER", "CHANNEL", "PROFILE");
      for (const auto& p : result.profiles)
        std::printf("%-10s %-16s %-8s %s\n", bpi::atlas::to_string(p.engine).c_str(),
                    p.browser_name.c_str(), bpi::atlas::to_string(p.channel).c_str(),
                    p.profile_path.c_str());
    }
    return kExitClean;
  }

  if (*fx_gen) {
    auto engine = fx_engine == "gecko" ? bpi::atlas::Engine::gecko : bpi::atlas::Engine::chromium;
    auto manifest = bpi::forge::generate_fixture_profile(fx_seed, engine, fx_out);
    std::cout << "fixture: " << manifest.profile_path << "\n"
              << "manifest: " << bpi::forge::manifest_path(manifest.profile_path).string()
              << "\n";
    return kExitClean;
  }
  if (*fx_home) {
    auto home = bpi::forge::generate_fixture_home(fx_seed, fx_out);
    std::cout << "home: " << home.home_dir << " (" << home.profiles.size() << " profiles)\n";
    for (const auto& p : home.profiles) std::cout << "  " << p.profile_path << "\n";
    return kExitClean;
  }

  if (*snap_cmd) {
    auto desc = descriptor_for(snap_profile, opts, cfg);
    const auto key = baseline_key(snap_key_file);
    auto baseline = bpi::sentinel::snapshot(desc, key, static_cast<std::int64_t>(time(nullptr)));
    bpi::sentinel::save_baseline(baseline, snap_out, key);
    std::cout << "baseline written: " << snap_out << " (+.mac)\n";
    return kExitClean;
  }

  if (*scan_cmd) {
    bpi::sentinel::ScanConfig scan_config;
    scan_config.permission_allowlist = cfg.permission_allowlist;
    if (cfg.mac_seed) scan_config.mac_seed = *cfg.mac_seed;
    if (cfg.machine_id_source)
      scan_config.machine_id = bpi::resolve_machine_id(*cfg.machine_id_source);

    std::vector<bpi::atlas::ProfileDescriptor> targets;
    if (scan_all) {
      bpi::RealFs fs;
      targets = bpi::atlas::enumerate_profiles(layout_from(opts), fs, cfg.extra_profile_roots)
                    .profiles;
    } else if (!scan_profile.empty()) {
      targets.push_back(descriptor_for(scan_profile, opts, cfg));
    } else {
      std::cerr << "scan: give a profile directory or --all\n";
      return kExitError;
    }

    std::optional<bpi::sentinel::Baseline> baseline;
    if (!scan_baseline.empty())
      baseline = bpi::sentinel::load_baseline(scan_baseline, baseline_key(scan_key_file));

    std::vector<bpi::sentinel::Finding> all;
    for (const auto& target : targets) {
      auto report = bpi::sentinel::scan(target, baseline, scan_config);
      for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
      all.insert(all.end(), report.findings.begin(), report.findings.end());
    }
    print_findings(all, cfg.report_format);
    return all.empty() ? kExitClean : kExitFindings;
  }

  if (*sim_cmd) {
    const stdfs::path fixture = sim_fixture;
    bpi::forge::AttackTag tag;
    const auto kind = bpi::forge::attack_kind_from_string(sim_attack);
    switch (kind) {
      case bpi::forge::AttackKind::cookie_rehome:
        tag = bpi::forge::sim_cookie_rehome(fixture, sim_source, sim_dest);
        break;
      case bpi::forge::AttackKind::login_rehome:
        if (sim_source == "youtube.com") sim_source = "https://www.facebook.com/";
        if (sim_dest == ".attacker.com") sim_dest = "https://attacker.com";
        tag = bpi::forge::sim_login_rehome(fixture, sim_source, sim_dest);
        break;
      case bpi::forge::AttackKind::permission_grant:
        tag = bpi::forge::sim_grant_permission(fixture, sim_origin, sim_type);
        break;
      case bpi::forge::AttackKind::rogue_ca: {
        bpi::Bytes der;
        if (!sim_der_file.empty()) {
          auto text = read_text_file(sim_der_file);
          der.assign(text.begin(), text.end());
        } else {
          bpi::SeededRng rng(0xca);
          der = bpi::forge::synth_certificate(sim_label, rng);
        }
        tag = bpi::forge::sim_add_root_ca(fixture, der, sim_label, sim_trust);
        break;
      }
      case bpi::forge::AttackKind::proxy_hijack:
        tag = bpi::forge::sim_set_proxy(fixture, sim_host, sim_port);
        break;
      case bpi::forge::AttackKind::sideload_extension: {
        if (sim_ext_dir.empty()) {
          std::cerr << "simulate sideload_extension requires --ext-dir\n";
          return kExitError;
        }
        if (!stdfs::exists(stdfs::path(sim_ext_dir) / "manifest.json"))
          bpi::forge::make_unpacked_extension(sim_ext_dir);
        bpi::Bytes seed;
        if (!sim_mac_seed_hex.empty())
          seed = bpi::hex_decode(sim_mac_seed_hex);
        else if (cfg.mac_seed)
          seed = *cfg.mac_seed;
        std::string machine_id = sim_machine_id;
        if (machine_id.empty() && cfg.machine_id_source)
          machine_id = bpi::resolve_machine_id(*cfg.machine_id_source);
        tag = bpi::forge::sim_sideload_extension(fixture, sim_ext_dir, sim_perms, seed,
                                                 machine_id);
        break;
      }
      case bpi::forge::AttackKind::strip_metadata: {
        stdfs::path target = sim_ext_dir;
        if (target.empty()) {
          // Default to the first extension the fixture planted.
          auto manifest = bpi::forge::load_manifest(fixture);
          if (manifest.planted.extension_ids.empty()) {
            std::cerr << "no --ext-dir and the fixture has no extensions\n";
            return kExitError;
          }
          target = fixture / "Extensions" / manifest.planted.extension_ids[0] / "1.4.2";
        }
        tag = bpi::forge::sim_strip_metadata(target);
        break;
      }
      case bpi::forge::AttackKind::homepage_hijack:
        tag = bpi::forge::sim_homepage_hijack(fixture, sim_url);
        break;
    }
    std::cout << "applied " << bpi::forge::to_string(tag.kind) << " subject=" << tag.subject
              << "\n";
    return kExitClean;
  }

  if (*v_init) {
    auto packed = bpi::vault::pack_profile(v_profile);
    for (const auto& w : packed.warnings) std::cerr << "warning: " << w << "\n";
    bpi::vault::VaultParams params;
    if (v_fast_kdf) params.cost = bpi::vault::KdfCost::minimal();
    if (v_bind) {
      params.binding = bpi::vault::BindingMode::machine;
      params.machine_id = !v_machine_id.empty()
                              ? v_machine_id
                              : (cfg.machine_id_source
                                     ? bpi::resolve_machine_id(*cfg.machine_id_source)
                                     : throw bpi::Error("--bind needs --machine-id or config"));
    }
    auto vault_bytes = bpi::vault::vault_encrypt(
        packed.archive, obtain_passphrase(v_key_file, "vault passphrase: "), params);
    std::ofstream out(v_vault, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(vault_bytes.data()),
              static_cast<std::streamsize>(vault_bytes.size()));
    if (!out) throw bpi::IoError("cannot write " + v_vault);
    std::cout << "vault written: " << v_vault << " (" << vault_bytes.size() << " bytes)\n";
    return kExitClean;
  }
  if (*v_open) {
    auto text = read_text_file(v_vault);
    bpi::Bytes vault_bytes(text.begin(), text.end());
    auto archive = bpi::vault::vault_decrypt(
        vault_bytes, obtain_passphrase(v_key_file, "vault passphrase: "), v_machine_id);
    bpi::vault::unpack_profile(archive, v_out);
    std::cout << "profile restored to " << v_out << "\n";
    return kExitClean;
  }
  if (*v_run) {
    int status = bpi::vault::guarded_session(
        v_vault, obtain_passphrase(v_key_file, "vault passphrase: "), v_command, v_workdir,
        v_machine_id);
    std::cout << "session exit status: " << status << "\n";
    return status == 0 ? kExitClean : kExitError;
  }

  if (*pg_check || *pg_zip_cmd || *pg_dump) {
    auto layout = layout_from(opts);
    auto rules = pg_rules.empty()
                     ? bpi::pathguard::default_blocklist(layout.os, layout.home_dir)
                     : bpi::pathguard::rules_from_json(read_text_file(pg_rules));
    if (*pg_dump) {
      std::cout << bpi::pathguard::rules_to_json(rules) << "\n";
      return kExitClean;
    }
    bpi::RealFs fs;
    if (*pg_check) {
      auto v = bpi::pathguard::verdict(pg_path, rules, fs, layout.os);
      if (cfg.report_format == bpi::ReportFormat::jsonl) {
        json j;
        j["path"] = pg_path;
        j["resolved"] = v.resolved_path;
        j["decision"] = v.decision == bpi::pathguard::Decision::deny ? "deny" : "allow";
        if (v.matched_rule) j["rule"] = {{"pattern", v.matched_rule->pattern},
                                         {"reason", v.matched_rule->reason}};
        std::cout << j.dump() << "\n";
      } else {
        std::cout << (v.decision == bpi::pathguard::Decision::deny ? "deny  " : "allow ")
                  << pg_path << " -> " << v.resolved_path;
        if (v.matched_rule) std::cout << "  [" << v.matched_rule->reason << "]";
        std::cout << "\n";
      }
      return v.decision == bpi::pathguard::Decision::deny ? kExitFindings : kExitClean;
    }
    // scan-zip
    auto entries = bpi::zip::read_entries(pg_zip);
    const std::string root =
        pg_extract_root.empty() ? layout.home_dir + "/Downloads" : pg_extract_root;
    auto findings = bpi::pathguard::scan_archive(entries, root, rules, &fs, layout.os);
    if (cfg.report_format == bpi::ReportFormat::jsonl) {
      for (const auto& f : findings) {
        json j;
        j["entry"] = f.entry_name;
        j["issue"] = bpi::pathguard::to_string(f.issue);
        j["detail"] = f.detail;
        std::cout << j.dump() << "\n";
      }
    } else {
      if (findings.empty()) std::cout << "archive is clean (" << entries.size() << " entries)\n";
      for (const auto& f : findings)
        std::cout << bpi::pathguard::to_string(f.issue) << "  " << f.entry_name << "  "
                  << f.detail << "\n";
    }
    return findings.empty() ? kExitClean : kExitFindings;
  }

  std::cerr << app.help();
  return kExitError;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const bpi::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
}
