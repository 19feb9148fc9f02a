#include "bpi/fs.hpp"

#include <algorithm>

#include "bpi/errors.hpp"

namespace bpi {

namespace stdfs = std::filesystem;

std::optional<NodeKind> RealFs::kind(const std::string& path) const {
  std::error_code ec;
  auto st = stdfs::symlink_status(path, ec);
  if (ec || st.type() == stdfs::file_type::not_found) return std::nullopt;
  if (st.type() == stdfs::file_type::symlink) return NodeKind::symlink;
  if (st.type() == stdfs::file_type::directory) return NodeKind::dir;
  return NodeKind::file;
}

std::string RealFs::read_link(const std::string& path) const {
  std::error_code ec;
  auto target = stdfs::read_symlink(path, ec);
  if (ec) throw IoError("read_symlink " + path + ": " + ec.message());
  return target.generic_string();
}

std::vector<std::string> RealFs::list_dir(const std::string& path) const {
  std::error_code ec;
  std::vector<std::string> names;
  for (auto it = stdfs::directory_iterator(path, ec); !ec && it != stdfs::directory_iterator();
       it.increment(ec)) {
    names.push_back(it->path().filename().string());
  }
  if (ec) throw IoError("list " + path + ": " + ec.message());
  std::sort(names.begin(), names.end());
  return names;
}

void MemFs::add_parents(const std::string& path) {
  auto norm = lexical_normalize(path);
  std::string prefix;
  auto parts = path_components(norm);
  if (parts.empty()) return;
  parts.pop_back();
  for (const auto& part : parts) {
    prefix += "/" + part;
    nodes_.try_emplace(prefix, Node{NodeKind::dir, {}});
  }
  nodes_.try_emplace("/", Node{NodeKind::dir, {}});
}

void MemFs::add_dir(const std::string& path) {
  add_parents(path);
  nodes_[lexical_normalize(path)] = Node{NodeKind::dir, {}};
}

void MemFs::add_file(const std::string& path) {
  add_parents(path);
  nodes_[lexical_normalize(path)] = Node{NodeKind::file, {}};
}

void MemFs::add_symlink(const std::string& path, const std::string& target) {
  add_parents(path);
  nodes_[lexical_normalize(path)] = Node{NodeKind::symlink, target};
}

std::optional<NodeKind> MemFs::kind(const std::string& path) const {
  auto norm = lexical_normalize(path);
  if (norm == "/") return nodes_.empty() ? std::optional<NodeKind>{} : NodeKind::dir;
  auto it = nodes_.find(norm);
  if (it == nodes_.end()) return std::nullopt;
  return it->second.kind;
}

std::string MemFs::read_link(const std::string& path) const {
  auto it = nodes_.find(lexical_normalize(path));
  if (it == nodes_.end() || it->second.kind != NodeKind::symlink)
    throw IoError("not a symlink: " + path);
  return it->second.target;
}

std::vector<std::string> MemFs::list_dir(const std::string& path) const {
  auto norm = lexical_normalize(path);
  if (!is_dir(norm)) throw IoError("not a directory: " + path);
  std::string prefix = norm == "/" ? "/" : norm + "/";
  std::vector<std::string> names;
  for (auto it = nodes_.lower_bound(prefix); it != nodes_.end(); ++it) {
    if (it->first.compare(0, prefix.size(), prefix) != 0) break;
    auto rest = it->first.substr(prefix.size());
    if (rest.find('/') == std::string::npos) names.push_back(rest);
  }
  return names;  // map order is already sorted
}

std::vector<std::string> path_components(std::string_view path) {
  std::vector<std::string> parts;
  std::size_t i = 0;
  while (i < path.size()) {
    while (i < path.size() && path[i] == '/') ++i;
    std::size_t j = i;
    while (j < path.size() && path[j] != '/') ++j;
    if (j > i) parts.emplace_back(path.substr(i, j - i));
    i = j;
  }
  return parts;
}

std::string lexical_normalize(std::string_view path) {
  const bool abs = !path.empty() && path.front() == '/';
  std::vector<std::string> out;
  for (auto& part : path_components(path)) {
    if (part == ".") continue;
    if (part == "..") {
      if (!out.empty() && out.back() != "..") {
        out.pop_back();
      } else if (!abs) {
        out.push_back("..");
      }
      // '..' at the root of an absolute path pins to '/'
      continue;
    }
    out.push_back(std::move(part));
  }
  std::string result = abs ? "/" : "";
  for (std::size_t i = 0; i < out.size(); ++i) {
    result += out[i];
    if (i + 1 < out.size()) result += "/";
  }
  if (result.empty()) result = abs ? "/" : ".";
  return result;
}

std::string path_join(std::string_view base, std::string_view rel) {
  if (rel.empty()) return lexical_normalize(base);
  if (rel.front() == '/') return lexical_normalize(rel);
  std::string joined(base);
  if (joined.empty() || joined.back() != '/') joined += '/';
  joined += rel;
  return lexical_normalize(joined);
}

bool path_under(std::string_view ancestor, std::string_view path) {
  auto a = lexical_normalize(ancestor);
  auto p = lexical_normalize(path);
  if (a == p) return true;
  if (a == "/") return p.size() > 1 && p.front() == '/';
  return p.size() > a.size() && p.compare(0, a.size(), a) == 0 && p[a.size()] == '/';
}

}  // namespace bpi
