#include "bpi/config.hpp"

#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

#include "bpi/errors.hpp"

namespace bpi {

using nlohmann::json;

namespace {

std::string trim(std::string s) {
  while (!s.empty() && (s.back() == '\n' || s.back() == '\r' || s.back() == ' ')) s.pop_back();
  std::size_t start = 0;
  while (start < s.size() && (s[start] == ' ' || s[start] == '\t')) ++start;
  return s.substr(start);
}

}  // namespace

Config parse_config(std::string_view text) {
  json doc = json::parse(text, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) throw FormatError("config must be a JSON object");

  static const char* known[] = {"extra_profile_roots", "permission_allowlist", "mac_seed",
                                "machine_id_source", "report_format"};
  for (const auto& [key, _] : doc.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw FormatError("unknown config key: " + key);
  }

  Config cfg;
  cfg.extra_profile_roots = doc.value("extra_profile_roots", std::vector<std::string>{});
  cfg.permission_allowlist = doc.value("permission_allowlist", std::vector<std::string>{});
  if (doc.contains("mac_seed")) cfg.mac_seed = hex_decode(doc["mac_seed"].get<std::string>());
  if (doc.contains("machine_id_source"))
    cfg.machine_id_source = doc["machine_id_source"].get<std::string>();
  if (doc.contains("report_format")) {
    const auto fmt = doc["report_format"].get<std::string>();
    if (fmt == "human")
      cfg.report_format = ReportFormat::human;
    else if (fmt == "jsonl")
      cfg.report_format = ReportFormat::jsonl;
    else
      throw FormatError("report_format must be 'human' or 'jsonl'");
  }
  return cfg;
}

std::string serialize_config(const Config& config) {
  json doc;
  doc["extra_profile_roots"] = config.extra_profile_roots;
  doc["permission_allowlist"] = config.permission_allowlist;
  if (config.mac_seed) doc["mac_seed"] = hex_encode(*config.mac_seed);
  if (config.machine_id_source) doc["machine_id_source"] = *config.machine_id_source;
  doc["report_format"] = config.report_format == ReportFormat::human ? "human" : "jsonl";
  return doc.dump(2);
}

Config load_config(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open config " + file.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_config(text);
}

void save_config(const Config& config, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write config " + file.string());
  out << serialize_config(config);
}

std::string resolve_machine_id(const std::string& source) {
  auto read_file = [](const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read machine id from " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return trim(text);
  };

  if (source.rfind("literal:", 0) == 0) return source.substr(8);
  if (source.rfind("file:", 0) == 0) return read_file(source.substr(5));
  if (source.rfind("cmd:", 0) == 0) {
    std::string cmd = source.substr(4);
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) throw IoError("cannot run machine id command");
    std::string out;
    char buf[256];
    while (fgets(buf, sizeof buf, pipe)) out += buf;
    if (pclose(pipe) != 0) throw IoError("machine id command failed: " + cmd);
    return trim(out);
  }
  return read_file(source);
}

}  // namespace bpi
