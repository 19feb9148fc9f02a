#include "bpi/vault.hpp"

#include <sodium.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iostream>
#include <map>

#include "bpi/errors.hpp"
#include "bpi/fs.hpp"

namespace bpi::vault {

namespace stdfs = std::filesystem;

namespace {

void ensure_sodium() {
  static const int rc = sodium_init();
  if (rc < 0) throw Error("libsodium initialization failed");
}

// ------------------------------ BPA1 pack ----------------------------------

constexpr char kPackMagic[4] = {'B', 'P', 'A', '1'};

enum class PackKind : std::uint8_t { file = 0, dir = 1, symlink = 2 };

void put16(Bytes& b, std::uint16_t v) {
  b.push_back(v & 0xff);
  b.push_back((v >> 8) & 0xff);
}
void put32(Bytes& b, std::uint32_t v) {
  put16(b, v & 0xffff);
  put16(b, v >> 16);
}
void put64(Bytes& b, std::uint64_t v) {
  put32(b, static_cast<std::uint32_t>(v));
  put32(b, static_cast<std::uint32_t>(v >> 32));
}

struct Reader {
  const Bytes& b;
  std::size_t i = 0;

  void need(std::size_t n, const char* what) {
    if (i + n > b.size()) throw FormatError(std::string("archive truncated at ") + what);
  }
  std::uint16_t get16(const char* what) {
    need(2, what);
    std::uint16_t v = static_cast<std::uint16_t>(b[i] | (b[i + 1] << 8));
    i += 2;
    return v;
  }
  std::uint32_t get32(const char* what) {
    std::uint32_t lo = get16(what), hi = get16(what);
    return lo | (hi << 16);
  }
  std::uint64_t get64(const char* what) {
    std::uint64_t lo = get32(what), hi = get32(what);
    return lo | (hi << 32);
  }
  Bytes get_bytes(std::size_t n, const char* what) {
    need(n, what);
    Bytes out(b.begin() + i, b.begin() + i + n);
    i += n;
    return out;
  }
};

std::uint32_t mode_bits(const stdfs::path& p) {
  std::error_code ec;
  auto perms = stdfs::symlink_status(p, ec).permissions();
  if (ec) return 0644;
  return static_cast<std::uint32_t>(perms) & 07777;
}

Bytes read_file_bytes(const stdfs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open " + p.string());
  return Bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

PackResult pack_profile(const stdfs::path& dir) {
  if (!stdfs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  PackResult result;

  struct Item {
    PackKind kind;
    std::uint32_t mode;
    std::string target;
    stdfs::path abs;
  };
  std::map<std::string, Item> items;  // sorted by relative path

  for (auto it = stdfs::recursive_directory_iterator(dir);
       it != stdfs::recursive_directory_iterator(); ++it) {
    const auto rel = it->path().lexically_relative(dir).generic_string();
    Item item;
    item.abs = it->path();
    item.mode = mode_bits(it->path());
    if (it->is_symlink()) {
      item.kind = PackKind::symlink;
      item.target = stdfs::read_symlink(it->path()).generic_string();
      it.disable_recursion_pending();  // recorded, never followed
      bool escapes = !item.target.empty() && item.target.front() == '/';
      if (!escapes) {
        const auto parent_rel =
            it->path().parent_path().lexically_relative(dir).generic_string();
        const auto resolved = lexical_normalize(
            (parent_rel == "." ? std::string() : parent_rel + "/") + item.target);
        escapes = resolved == ".." || resolved.rfind("../", 0) == 0;
      }
      if (escapes)
        result.warnings.push_back("symlink escapes the tree: " + rel + " -> " + item.target);
    } else if (it->is_directory()) {
      item.kind = PackKind::dir;
    } else if (it->is_regular_file()) {
      item.kind = PackKind::file;
    } else {
      result.warnings.push_back("skipping special file: " + rel);
      continue;
    }
    items.emplace(rel, std::move(item));
  }

  Bytes& out = result.archive;
  out.insert(out.end(), kPackMagic, kPackMagic + 4);
  put32(out, static_cast<std::uint32_t>(items.size()));
  for (const auto& [rel, item] : items) {
    put16(out, static_cast<std::uint16_t>(rel.size()));
    out.insert(out.end(), rel.begin(), rel.end());
    out.push_back(static_cast<std::uint8_t>(item.kind));
    put32(out, item.mode);
    if (item.kind == PackKind::symlink) {
      put32(out, static_cast<std::uint32_t>(item.target.size()));
      out.insert(out.end(), item.target.begin(), item.target.end());
    } else if (item.kind == PackKind::file) {
      Bytes content = read_file_bytes(item.abs);
      put64(out, content.size());
      out.insert(out.end(), content.begin(), content.end());
    }
  }
  return result;
}

void unpack_profile(const Bytes& archive, const stdfs::path& dir) {
  if (stdfs::exists(dir) && !stdfs::is_empty(dir))
    throw IoError("unpack target not empty: " + dir.string());
  stdfs::create_directories(dir);

  Reader r{archive};
  auto magic = r.get_bytes(4, "magic");
  if (std::memcmp(magic.data(), kPackMagic, 4) != 0)
    throw FormatError("not a profile archive");
  const std::uint32_t count = r.get32("entry count");

  struct Deferred {
    stdfs::path path;
    std::uint32_t mode;
  };
  std::vector<Deferred> dir_modes;

  for (std::uint32_t n = 0; n < count; ++n) {
    const auto path_len = r.get16("path length");
    const auto rel_bytes = r.get_bytes(path_len, "path");
    const std::string rel(rel_bytes.begin(), rel_bytes.end());
    if (rel.empty() || rel.front() == '/' || rel == ".." || rel.rfind("../", 0) == 0 ||
        lexical_normalize(rel) != rel)
      throw FormatError("archive entry with unsafe path: " + rel);
    const auto kind = static_cast<PackKind>(r.get_bytes(1, "kind")[0]);
    const auto mode = r.get32("mode");
    const stdfs::path target = dir / rel;

    switch (kind) {
      case PackKind::dir:
        stdfs::create_directories(target);
        dir_modes.push_back({target, mode});
        break;
      case PackKind::symlink: {
        const auto len = r.get32("target length");
        const auto target_bytes = r.get_bytes(len, "symlink target");
        stdfs::create_directories(target.parent_path());
        stdfs::create_symlink(std::string(target_bytes.begin(), target_bytes.end()), target);
        break;
      }
      case PackKind::file: {
        const auto size = r.get64("file size");
        const auto content = r.get_bytes(static_cast<std::size_t>(size), "file content");
        stdfs::create_directories(target.parent_path());
        std::ofstream out(target, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + target.string());
        out.write(reinterpret_cast<const char*>(content.data()),
                  static_cast<std::streamsize>(content.size()));
        stdfs::permissions(target, static_cast<stdfs::perms>(mode),
                           stdfs::perm_options::replace);
        break;
      }
      default: throw FormatError("unknown entry kind in archive");
    }
  }
  if (r.i != archive.size()) throw FormatError("trailing bytes after archive entries");

  // Directory modes last, deepest first, so read-only dirs don't block their
  // own children.
  std::sort(dir_modes.begin(), dir_modes.end(), [](const auto& a, const auto& b) {
    return a.path.string().size() > b.path.string().size();
  });
  for (const auto& d : dir_modes)
    stdfs::permissions(d.path, static_cast<stdfs::perms>(d.mode), stdfs::perm_options::replace);
}

// ------------------------------ BPV1 vault ---------------------------------

namespace {

constexpr char kVaultMagic[4] = {'B', 'P', 'V', '1'};
constexpr std::uint32_t kVaultVersion = 1;
constexpr std::uint32_t kCipherXChaCha = 1;
constexpr std::size_t kSaltLen = 16;
constexpr std::size_t kHeaderLen = 97;               // fields before the MAC
constexpr std::size_t kHeaderTotal = kHeaderLen + 32;
constexpr std::size_t kNonceLen = crypto_aead_xchacha20poly1305_ietf_NPUBBYTES;
constexpr std::size_t kTagLen = crypto_aead_xchacha20poly1305_ietf_ABYTES;
constexpr std::uint32_t kMinChunk = 4096;

// Authenticating a header first requires running its KDF; parameters beyond
// these bounds cannot be honored, which is treated as failed authentication.
constexpr std::uint64_t kMaxOpslimit = 64;
constexpr std::uint64_t kMaxMemlimit = 1ull << 30;

struct Keys {
  Bytes enc;  // 32
  Bytes mac;  // 32
};

Digest bind_secret(const std::string& machine_id) {
  auto msg = to_bytes(std::string("bpv1-bind-key\n") + machine_id);
  return sha256(msg);
}

Digest bind_id_digest(const std::string& machine_id) {
  auto msg = to_bytes(std::string("bpv1-bind-id\n") + machine_id);
  return sha256(msg);
}

Keys derive_keys(const std::string& passphrase, const std::uint8_t* salt, const KdfCost& cost,
                 BindingMode binding, const std::string& machine_id) {
  ensure_sodium();
  Bytes master(crypto_kdf_KEYBYTES);
  if (crypto_pwhash(master.data(), master.size(), passphrase.data(), passphrase.size(), salt,
                    cost.opslimit, static_cast<std::size_t>(cost.memlimit),
                    crypto_pwhash_ALG_ARGON2ID13) != 0)
    throw Error("key derivation failed (memory limit)");

  if (binding == BindingMode::machine) {
    auto secret = bind_secret(machine_id);
    Bytes mix;
    mix.insert(mix.end(), master.begin(), master.end());
    mix.insert(mix.end(), secret.begin(), secret.end());
    auto mixed = sha256(mix);
    master.assign(mixed.begin(), mixed.end());
  }

  Keys keys;
  keys.enc.resize(32);
  keys.mac.resize(32);
  crypto_kdf_derive_from_key(keys.enc.data(), keys.enc.size(), 1, "bpv1keys", master.data());
  crypto_kdf_derive_from_key(keys.mac.data(), keys.mac.size(), 2, "bpv1keys", master.data());
  return keys;
}

Bytes frame_ad(const Digest& header_digest, std::uint64_t index, std::uint64_t count) {
  Bytes ad(header_digest.begin(), header_digest.end());
  put64(ad, index);
  put64(ad, count);
  return ad;
}

struct RawHeader {
  std::uint32_t version;
  Bytes salt;
  KdfCost cost;
  std::uint32_t cipher_id;
  BindingMode binding;
  Digest binding_digest;
  std::uint32_t chunk_size;
  std::uint64_t chunk_count;
  std::uint64_t payload_size;
  bool magic_ok;
};

RawHeader parse_header(const Bytes& vault) {
  if (vault.size() < kHeaderTotal) throw FormatError("too short to hold a vault header");
  Reader r{vault};
  RawHeader h{};
  auto magic = r.get_bytes(4, "magic");
  h.magic_ok = std::memcmp(magic.data(), kVaultMagic, 4) == 0;
  h.version = r.get32("version");
  h.salt = r.get_bytes(kSaltLen, "salt");
  h.cost.opslimit = r.get64("opslimit");
  h.cost.memlimit = r.get64("memlimit");
  h.cipher_id = r.get32("cipher");
  h.binding = static_cast<BindingMode>(r.get_bytes(1, "binding")[0]);
  auto digest = r.get_bytes(32, "binding digest");
  std::copy(digest.begin(), digest.end(), h.binding_digest.begin());
  h.chunk_size = r.get32("chunk size");
  h.chunk_count = r.get64("chunk count");
  h.payload_size = r.get64("payload size");
  return h;
}

}  // namespace

KdfCost KdfCost::interactive() {
  return {crypto_pwhash_OPSLIMIT_INTERACTIVE, crypto_pwhash_MEMLIMIT_INTERACTIVE};
}

KdfCost KdfCost::minimal() {
  return {crypto_pwhash_OPSLIMIT_MIN, crypto_pwhash_MEMLIMIT_MIN};
}

Bytes vault_encrypt(const Bytes& archive, const std::string& passphrase,
                    const VaultParams& params) {
  ensure_sodium();
  if (passphrase.empty()) throw Error("empty passphrase");
  if (params.binding == BindingMode::machine && params.machine_id.empty())
    throw Error("machine binding requires a machine id");
  if (params.chunk_size < kMinChunk)
    throw Error("chunk_size below the 4096-byte floor");
  if (params.cost.opslimit == 0 || params.cost.opslimit > kMaxOpslimit ||
      params.cost.memlimit > kMaxMemlimit)
    throw Error("KDF cost outside the supported policy bounds");

  const std::uint64_t chunk_count =
      (archive.size() + params.chunk_size - 1) / params.chunk_size;

  Bytes header;
  header.reserve(kHeaderTotal);
  header.insert(header.end(), kVaultMagic, kVaultMagic + 4);
  put32(header, kVaultVersion);
  Bytes salt(kSaltLen);
  randombytes_buf(salt.data(), salt.size());
  header.insert(header.end(), salt.begin(), salt.end());
  put64(header, params.cost.opslimit);
  put64(header, params.cost.memlimit);
  put32(header, kCipherXChaCha);
  header.push_back(static_cast<std::uint8_t>(params.binding));
  if (params.binding == BindingMode::machine) {
    auto d = bind_id_digest(params.machine_id);
    header.insert(header.end(), d.begin(), d.end());
  } else {
    header.insert(header.end(), 32, 0);
  }
  put32(header, params.chunk_size);
  put64(header, chunk_count);
  put64(header, archive.size());

  const auto keys = derive_keys(passphrase, salt.data(), params.cost, params.binding,
                                params.machine_id);
  const auto header_digest = sha256(header);
  const auto mac = hmac_sha256(keys.mac, header);
  header.insert(header.end(), mac.begin(), mac.end());

  Bytes out = std::move(header);
  for (std::uint64_t i = 0; i < chunk_count; ++i) {
    const std::size_t begin = static_cast<std::size_t>(i) * params.chunk_size;
    const std::size_t len = std::min<std::size_t>(params.chunk_size, archive.size() - begin);
    Bytes nonce(kNonceLen);
    randombytes_buf(nonce.data(), nonce.size());
    const auto ad = frame_ad(header_digest, i, chunk_count);
    Bytes cipher(len + kTagLen);
    unsigned long long cipher_len = 0;
    crypto_aead_xchacha20poly1305_ietf_encrypt(cipher.data(), &cipher_len, archive.data() + begin,
                                               len, ad.data(), ad.size(), nullptr, nonce.data(),
                                               keys.enc.data());
    cipher.resize(cipher_len);
    out.insert(out.end(), nonce.begin(), nonce.end());
    out.insert(out.end(), cipher.begin(), cipher.end());
  }
  return out;
}

Bytes vault_decrypt(const Bytes& vault, const std::string& passphrase,
                    const std::string& machine_id) {
  ensure_sodium();
  auto h = parse_header(vault);

  if (h.cost.opslimit == 0 || h.cost.opslimit > kMaxOpslimit ||
      h.cost.memlimit > kMaxMemlimit)
    throw AuthError("header cannot be authenticated: KDF parameters out of policy");
  if (h.binding == BindingMode::machine && machine_id.empty())
    throw AuthError("vault is machine-bound; no machine id supplied");

  const auto keys =
      derive_keys(passphrase, h.salt.data(), h.cost, h.binding, machine_id);
  const auto expected = hmac_sha256(keys.mac, Bytes(vault.begin(), vault.begin() + kHeaderLen));
  if (sodium_memcmp(expected.data(), vault.data() + kHeaderLen, expected.size()) != 0)
    throw AuthError("vault authentication failed");

  // Header is authentic; structural complaints are honest from here on.
  if (!h.magic_ok || h.version != kVaultVersion) throw FormatError("unsupported vault layout");
  if (h.cipher_id != kCipherXChaCha) throw FormatError("unsupported cipher id");
  if (h.chunk_size < kMinChunk) throw FormatError("chunk size below floor");
  if (h.binding == BindingMode::machine) {
    const auto d = bind_id_digest(machine_id);
    if (sodium_memcmp(d.data(), h.binding_digest.data(), d.size()) != 0)
      throw AuthError("vault is bound to a different machine");
  }

  const auto header_digest =
      sha256(std::span<const std::uint8_t>(vault.data(), kHeaderLen));
  Bytes payload;
  payload.reserve(static_cast<std::size_t>(h.payload_size));
  std::size_t pos = kHeaderTotal;
  for (std::uint64_t i = 0; i < h.chunk_count; ++i) {
    const std::size_t plain_len = static_cast<std::size_t>(
        i + 1 == h.chunk_count ? h.payload_size - i * h.chunk_size : h.chunk_size);
    const std::size_t frame_len = kNonceLen + plain_len + kTagLen;
    if (pos + frame_len > vault.size()) throw AuthError("vault truncated");
    const std::uint8_t* nonce = vault.data() + pos;
    const std::uint8_t* cipher = nonce + kNonceLen;
    const auto ad = frame_ad(header_digest, i, h.chunk_count);
    Bytes plain(plain_len);
    unsigned long long plain_out = 0;
    if (crypto_aead_xchacha20poly1305_ietf_decrypt(plain.data(), &plain_out, nullptr, cipher,
                                                   plain_len + kTagLen, ad.data(), ad.size(),
                                                   nonce, keys.enc.data()) != 0)
      throw AuthError("vault frame " + std::to_string(i) + " failed authentication");
    payload.insert(payload.end(), plain.begin(), plain.begin() + plain_out);
    pos += frame_len;
  }
  if (pos != vault.size()) throw AuthError("trailing bytes after the last frame");
  if (payload.size() != h.payload_size) throw FormatError("payload size mismatch");
  return payload;
}

VaultInfo vault_inspect(const Bytes& vault) {
  auto h = parse_header(vault);
  if (!h.magic_ok) throw FormatError("not a vault file");
  return {h.version, h.binding, h.cost, h.chunk_size, h.chunk_count, h.payload_size};
}

// ----------------------------- guarded session ------------------------------

namespace {

class VaultLock {
 public:
  explicit VaultLock(const stdfs::path& vault_path)
      : lock_path_(vault_path.string() + ".lock") {
    if (stdfs::exists(lock_path_))
      throw Error("vault is locked by another session: " + lock_path_.string());
    std::ofstream out(lock_path_);
    out << "pid " << ::getpid() << "\n";
  }
  ~VaultLock() {
    std::error_code ec;
    stdfs::remove(lock_path_, ec);
  }

 private:
  stdfs::path lock_path_;
};

Bytes read_whole_file(const stdfs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open " + p.string());
  return Bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_whole_file(const stdfs::path& p, const Bytes& data) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + p.string());
  out.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError("short write to " + p.string());
}

std::string substitute_profile(std::string command, const std::string& workdir) {
  const std::string placeholder = "{profile}";
  std::size_t pos = 0;
  while ((pos = command.find(placeholder, pos)) != std::string::npos) {
    command.replace(pos, placeholder.size(), workdir);
    pos += workdir.size();
  }
  return command;
}

void scrub_tree(const stdfs::path& dir) {
  std::error_code ec;
  // Zero file contents before unlinking; purely best effort.
  for (auto it = stdfs::recursive_directory_iterator(
           dir, stdfs::directory_options::skip_permission_denied, ec);
       !ec && it != stdfs::recursive_directory_iterator(); it.increment(ec)) {
    if (!it->is_regular_file() || it->is_symlink()) continue;
    std::error_code size_ec;
    const auto size = stdfs::file_size(it->path(), size_ec);
    if (size_ec || size == 0) continue;
    std::ofstream out(it->path(), std::ios::binary | std::ios::in);
    if (!out) continue;
    std::vector<char> zeros(std::min<std::uintmax_t>(size, 1 << 16), 0);
    std::uintmax_t left = size;
    while (left > 0 && out) {
      const auto n = std::min<std::uintmax_t>(left, zeros.size());
      out.write(zeros.data(), static_cast<std::streamsize>(n));
      left -= n;
    }
  }
  stdfs::remove_all(dir, ec);
}

}  // namespace

int guarded_session(const stdfs::path& vault_path, const std::string& passphrase,
                    const std::string& launch_command, const stdfs::path& workdir,
                    const std::string& machine_id) {
  VaultLock lock(vault_path);

  const Bytes vault_bytes = read_whole_file(vault_path);
  const VaultInfo info = vault_inspect(vault_bytes);
  const Bytes archive = vault_decrypt(vault_bytes, passphrase, machine_id);
  unpack_profile(archive, workdir);

  int exit_status = -1;
  try {
    const std::string command = substitute_profile(launch_command, workdir.string());
    const int rc = std::system(command.c_str());
    if (rc == -1)
      throw LaunchError("could not start: " + command);
    exit_status = WIFEXITED(rc) ? WEXITSTATUS(rc) : 128;
  } catch (const LaunchError&) {
    exit_status = 127;
  }

  try {
    auto packed = pack_profile(workdir);
    VaultParams params;
    params.binding = info.binding;
    params.machine_id = machine_id;
    params.cost = info.cost;
    params.chunk_size = info.chunk_size;
    const Bytes fresh = vault_encrypt(packed.archive, passphrase, params);
    const stdfs::path tmp = vault_path.string() + ".tmp";
    write_whole_file(tmp, fresh);
    stdfs::rename(tmp, vault_path);
  } catch (const std::exception& e) {
    std::cerr << "!! re-encryption failed: " << e.what() << "\n"
              << "!! the decrypted profile remains at " << workdir
              << " — secure it manually\n";
    throw ReencryptError(e.what());
  }

  scrub_tree(workdir);
  return exit_status;
}

// ------------------------------ sealed records ------------------------------

SealedRecord seal_record(const Bytes& plaintext, const std::string& origin, const Bytes& key) {
  ensure_sodium();
  if (origin.empty()) throw Error("empty origin");
  if (key.size() != crypto_aead_chacha20poly1305_ietf_KEYBYTES)
    throw Error("sealing key must be 32 bytes");
  SealedRecord rec;
  rec.origin = origin;
  randombytes_buf(rec.nonce.data(), rec.nonce.size());
  rec.ciphertext.resize(plaintext.size() + crypto_aead_chacha20poly1305_ietf_ABYTES);
  unsigned long long out_len = 0;
  crypto_aead_chacha20poly1305_ietf_encrypt(
      rec.ciphertext.data(), &out_len, plaintext.data(), plaintext.size(),
      reinterpret_cast<const std::uint8_t*>(origin.data()), origin.size(), nullptr,
      rec.nonce.data(), key.data());
  rec.ciphertext.resize(out_len);
  return rec;
}

Bytes open_record(const SealedRecord& sealed, const std::string& origin, const Bytes& key) {
  ensure_sodium();
  if (key.size() != crypto_aead_chacha20poly1305_ietf_KEYBYTES)
    throw Error("sealing key must be 32 bytes");
  if (sealed.ciphertext.size() < crypto_aead_chacha20poly1305_ietf_ABYTES)
    throw AuthError("sealed record too short");
  Bytes plain(sealed.ciphertext.size() - crypto_aead_chacha20poly1305_ietf_ABYTES);
  unsigned long long out_len = 0;
  if (crypto_aead_chacha20poly1305_ietf_decrypt(
          plain.data(), &out_len, nullptr, sealed.ciphertext.data(), sealed.ciphertext.size(),
          reinterpret_cast<const std::uint8_t*>(origin.data()), origin.size(),
          sealed.nonce.data(), key.data()) != 0)
    throw AuthError("record does not open under origin '" + origin + "'");
  plain.resize(out_len);
  return plain;
}

Bytes random_key() {
  ensure_sodium();
  Bytes key(32);
  randombytes_buf(key.data(), key.size());
  return key;
}

}  // namespace bpi::vault
