#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "bpi/hash.hpp"

namespace bpi::vault {

// ---------------------------------------------------------------------------
// Canonical profile archive ("BPA1"): entries sorted by '/'-separated
// relative path, each recording kind, permission bits and either content or
// a symlink target. No timestamps, so pack . unpack . pack is a byte-level
// fixpoint.
// ---------------------------------------------------------------------------

struct PackResult {
  Bytes archive;
  std::vector<std::string> warnings;  // e.g. symlink targets leaving the tree
};

PackResult pack_profile(const std::filesystem::path& dir);
void unpack_profile(const Bytes& archive, const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Vault container ("BPV1"), little-endian:
//
//   offset  size  field
//        0     4  magic "BPV1"
//        4     4  version (1)
//        8    16  KDF salt
//       24     8  KDF opslimit
//       32     8  KDF memlimit (bytes)
//       40     4  cipher id (1 = XChaCha20-Poly1305)
//       44     1  binding mode (0 none, 1 machine)
//       45    32  machine-binding id digest (zeros when unbound)
//       77     4  chunk size (>= 4096)
//       81     8  chunk count
//       89     8  payload size
//       97    32  header MAC (HMAC-SHA256 over bytes 0..97)
//      129     *  frames: 24-byte nonce || ciphertext+tag per chunk
//
// The key is Argon2id(passphrase, salt, cost), mixed with a machine-derived
// secret when bound. Each frame's associated data is
// (header digest, chunk index, chunk count): reordering, truncating or
// splicing frames across vaults fails authentication. The header MAC is
// verified before the magic is even interpreted, so any bit flip — header
// or frame — surfaces as AuthError; FormatError is reserved for authentic
// but unsupported layouts and for inputs too short to carry a header.
// ---------------------------------------------------------------------------

enum class BindingMode : std::uint8_t { none = 0, machine = 1 };

struct KdfCost {
  std::uint64_t opslimit = 0;
  std::uint64_t memlimit = 0;  // bytes

  static KdfCost interactive();
  /// Cheapest parameters libsodium accepts; test/bulk use.
  static KdfCost minimal();
};

struct VaultParams {
  BindingMode binding = BindingMode::none;
  std::string machine_id;  // required when binding == machine
  KdfCost cost = KdfCost::interactive();
  std::uint32_t chunk_size = 1u << 20;
};

Bytes vault_encrypt(const Bytes& archive, const std::string& passphrase,
                    const VaultParams& params = {});
Bytes vault_decrypt(const Bytes& vault, const std::string& passphrase,
                    const std::string& machine_id = "");

struct VaultInfo {
  std::uint32_t version = 0;
  BindingMode binding = BindingMode::none;
  KdfCost cost;
  std::uint32_t chunk_size = 0;
  std::uint64_t chunk_count = 0;
  std::uint64_t payload_size = 0;
};

/// Structural header parse; performs no authentication.
VaultInfo vault_inspect(const Bytes& vault);

/// decrypt -> unpack -> run launch_command ("{profile}" substituted with the
/// workdir) -> repack -> re-encrypt with fresh salt and nonces -> scrub the
/// workdir. The command's failure never skips re-encryption; a re-encryption
/// failure raises ReencryptError and deliberately leaves the plaintext in
/// place rather than losing data. Returns the command's exit status.
int guarded_session(const std::filesystem::path& vault_path, const std::string& passphrase,
                    const std::string& launch_command, const std::filesystem::path& workdir,
                    const std::string& machine_id = "");

// ---------------------------------------------------------------------------
// Origin-bound records: the origin is authenticated associated data, so a
// record copied under any other origin fails to open. 12-byte nonces,
// ChaCha20-Poly1305-IETF, 32-byte keys.
// ---------------------------------------------------------------------------

struct SealedRecord {
  std::string origin;  // stored in clear
  std::array<std::uint8_t, 12> nonce{};
  Bytes ciphertext;  // includes the tag
};

SealedRecord seal_record(const Bytes& plaintext, const std::string& origin, const Bytes& key);
Bytes open_record(const SealedRecord& sealed, const std::string& origin, const Bytes& key);

Bytes random_key();  // 32 bytes

}  // namespace bpi::vault
