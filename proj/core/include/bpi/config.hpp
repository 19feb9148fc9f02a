#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "bpi/hash.hpp"

namespace bpi {

enum class ReportFormat { human, jsonl };

struct Config {
  std::vector<std::string> extra_profile_roots;
  std::vector<std::string> permission_allowlist;
  std::optional<Bytes> mac_seed;                 // hex-encoded in the file
  std::optional<std::string> machine_id_source;  // file:<path>, cmd:<command> or literal:<id>
  ReportFormat report_format = ReportFormat::human;
};

/// Strict parse: unknown keys are an error, not a warning.
Config parse_config(std::string_view text);
std::string serialize_config(const Config& config);

Config load_config(const std::filesystem::path& file);
void save_config(const Config& config, const std::filesystem::path& file);

/// Resolves a machine-id source: "file:<path>" reads the file, "cmd:<cmd>"
/// captures the command's stdout, "literal:<id>" is taken verbatim, and a
/// bare string is treated as a file path. Surrounding whitespace is trimmed.
std::string resolve_machine_id(const std::string& source);

}  // namespace bpi
