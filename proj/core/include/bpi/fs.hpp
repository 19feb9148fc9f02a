#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace bpi {

enum class NodeKind { file, dir, symlink };

/// Read-only view of a filesystem tree. Production code scans the real disk;
/// tests substitute an in-memory snapshot so no live profile is ever touched.
/// Paths are absolute, '/'-separated strings regardless of the scanned
/// layout's original OS.
class FsView {
 public:
  virtual ~FsView() = default;

  /// lstat-like: reports the node itself, never follows a symlink.
  virtual std::optional<NodeKind> kind(const std::string& path) const = 0;
  virtual std::string read_link(const std::string& path) const = 0;
  /// Child names (not paths), sorted.
  virtual std::vector<std::string> list_dir(const std::string& path) const = 0;

  bool exists(const std::string& path) const { return kind(path).has_value(); }
  bool is_dir(const std::string& path) const { return kind(path) == NodeKind::dir; }
  bool is_file(const std::string& path) const { return kind(path) == NodeKind::file; }
};

class RealFs final : public FsView {
 public:
  std::optional<NodeKind> kind(const std::string& path) const override;
  std::string read_link(const std::string& path) const override;
  std::vector<std::string> list_dir(const std::string& path) const override;
};

class MemFs final : public FsView {
 public:
  void add_dir(const std::string& path);
  void add_file(const std::string& path);
  void add_symlink(const std::string& path, const std::string& target);

  std::optional<NodeKind> kind(const std::string& path) const override;
  std::string read_link(const std::string& path) const override;
  std::vector<std::string> list_dir(const std::string& path) const override;

 private:
  struct Node {
    NodeKind kind;
    std::string target;  // symlink only
  };
  void add_parents(const std::string& path);
  std::map<std::string, Node> nodes_;
};

// '/'-separated path helpers shared by the scanner and the path policy.

std::vector<std::string> path_components(std::string_view path);

/// Collapses duplicate separators and '.' segments and applies '..'
/// lexically. Leading ".." on an absolute path stays at the root.
std::string lexical_normalize(std::string_view path);

std::string path_join(std::string_view base, std::string_view rel);

/// True when `path` equals `ancestor` or lies beneath it (both normalized).
bool path_under(std::string_view ancestor, std::string_view path);

}  // namespace bpi
