#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace bpi {

using Bytes = std::vector<std::uint8_t>;
using Digest = std::array<std::uint8_t, 32>;

Bytes to_bytes(std::string_view s);
std::string to_string(std::span<const std::uint8_t> b);

std::string hex_encode(std::span<const std::uint8_t> b, bool uppercase = false);
Bytes hex_decode(std::string_view hex);  // throws FormatError on odd length / bad digit

Digest sha256(std::span<const std::uint8_t> data);
Digest sha256_file(const std::filesystem::path& file);

/// HMAC-SHA256 with an arbitrary-length key.
Digest hmac_sha256(std::span<const std::uint8_t> key, std::span<const std::uint8_t> msg);

/// Digest of every regular file's content under `root`, keyed by relative
/// path. Symlinks contribute their target string, directories their name.
/// Stable under traversal order; used by tests to prove operations touched
/// only the files they declared.
Digest tree_digest(const std::filesystem::path& root);

/// Deterministic PRNG stream for fixture synthesis (splitmix64 core).
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next();
  std::uint64_t below(std::uint64_t bound);  // uniform in [0, bound)
  std::string token(std::size_t len);        // lowercase alphanumeric
  Bytes blob(std::size_t len);

 private:
  std::uint64_t state_;
};

}  // namespace bpi
