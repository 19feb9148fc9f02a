#include "bpi/hash.hpp"

#include <sodium.h>

#include <algorithm>
#include <fstream>
#include <map>

#include "bpi/errors.hpp"

namespace bpi {

namespace {

void ensure_sodium() {
  static const int rc = sodium_init();
  if (rc < 0) throw Error("libsodium initialization failed");
}

}  // namespace

Bytes to_bytes(std::string_view s) {
  return Bytes(s.begin(), s.end());
}

std::string to_string(std::span<const std::uint8_t> b) {
  return std::string(b.begin(), b.end());
}

std::string hex_encode(std::span<const std::uint8_t> b, bool uppercase) {
  static const char* lower = "0123456789abcdef";
  static const char* upper = "0123456789ABCDEF";
  const char* digits = uppercase ? upper : lower;
  std::string out;
  out.reserve(b.size() * 2);
  for (auto byte : b) {
    out.push_back(digits[byte >> 4]);
    out.push_back(digits[byte & 0xf]);
  }
  return out;
}

Bytes hex_decode(std::string_view hex) {
  if (hex.size() % 2 != 0) throw FormatError("hex string has odd length");
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    throw FormatError("invalid hex digit");
  };
  Bytes out(hex.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<std::uint8_t>(nibble(hex[2 * i]) << 4 | nibble(hex[2 * i + 1]));
  return out;
}

Digest sha256(std::span<const std::uint8_t> data) {
  ensure_sodium();
  Digest out{};
  crypto_hash_sha256(out.data(), data.data(), data.size());
  return out;
}

Digest sha256_file(const std::filesystem::path& file) {
  ensure_sodium();
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open " + file.string());
  crypto_hash_sha256_state st;
  crypto_hash_sha256_init(&st);
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    crypto_hash_sha256_update(&st, reinterpret_cast<const unsigned char*>(buf),
                              static_cast<std::size_t>(in.gcount()));
    if (!in) break;
  }
  Digest out{};
  crypto_hash_sha256_final(&st, out.data());
  return out;
}

Digest hmac_sha256(std::span<const std::uint8_t> key, std::span<const std::uint8_t> msg) {
  ensure_sodium();
  crypto_auth_hmacsha256_state st;
  crypto_auth_hmacsha256_init(&st, key.data(), key.size());
  crypto_auth_hmacsha256_update(&st, msg.data(), msg.size());
  Digest out{};
  crypto_auth_hmacsha256_final(&st, out.data());
  return out;
}

Digest tree_digest(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  ensure_sodium();
  std::map<std::string, std::string> leaves;  // relative path -> leaf digest/marker
  if (fs::exists(root)) {
    for (auto it = fs::recursive_directory_iterator(
             root, fs::directory_options::skip_permission_denied);
         it != fs::recursive_directory_iterator(); ++it) {
      const auto rel = it->path().lexically_relative(root).generic_string();
      if (it->is_symlink()) {
        leaves[rel] = "link:" + fs::read_symlink(it->path()).generic_string();
        it.disable_recursion_pending();
      } else if (it->is_directory()) {
        leaves[rel] = "dir";
      } else if (it->is_regular_file()) {
        leaves[rel] = "file:" + hex_encode(sha256_file(it->path()));
      }
    }
  }
  crypto_hash_sha256_state st;
  crypto_hash_sha256_init(&st);
  for (const auto& [path, leaf] : leaves) {
    auto line = path + "\0" + leaf + "\n";
    crypto_hash_sha256_update(&st, reinterpret_cast<const unsigned char*>(line.data()),
                              line.size());
  }
  Digest out{};
  crypto_hash_sha256_final(&st, out.data());
  return out;
}

std::uint64_t SeededRng::next() {
  // splitmix64
  std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t SeededRng::below(std::uint64_t bound) {
  return bound == 0 ? 0 : next() % bound;
}

std::string SeededRng::token(std::size_t len) {
  static const char alphabet[] = "abcdefghijklmnopqrstuvwxyz0123456789";
  std::string out;
  out.reserve(len);
  for (std::size_t i = 0; i < len; ++i) out.push_back(alphabet[below(sizeof alphabet - 1)]);
  return out;
}

Bytes SeededRng::blob(std::size_t len) {
  Bytes out(len);
  for (auto& b : out) b = static_cast<std::uint8_t>(next() & 0xff);
  return out;
}

}  // namespace bpi
