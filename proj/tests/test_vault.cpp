#include <doctest.h>

#include <fstream>

#include "bpi/attack_forge.hpp"
#include "bpi/errors.hpp"
#include "bpi/vault.hpp"
#include "support/oracles.hpp"

using namespace bpi;
using vault::BindingMode;
using vault::KdfCost;
using vault::VaultParams;

namespace {

VaultParams fast_params() {
  VaultParams p;
  p.cost = KdfCost::minimal();
  p.chunk_size = 4096;
  return p;
}

Bytes make_archive_of(const std::filesystem::path& dir) {
  return vault::pack_profile(dir).archive;
}

}  // namespace

TEST_SUITE("vault.pack") {
  TEST_CASE("an empty directory packs to a fixed header with zero entries") {
    oracle::TempDir tmp;
    std::filesystem::create_directories(tmp / "empty");
    auto a = vault::pack_profile(tmp / "empty");
    CHECK(a.archive.size() == 8);  // magic + count
    CHECK(a.warnings.empty());
    auto b = vault::pack_profile(tmp / "empty");
    CHECK(a.archive == b.archive);
  }

  TEST_CASE("fixture profiles round-trip byte-identically, symlinks and modes included") {
    oracle::TempDir tmp;
    auto m = forge::generate_fixture_profile(50, atlas::Engine::chromium, tmp / "p");
    forge::sim_strip_metadata(std::filesystem::path(m.profile_path) / "Extensions" /
                              m.planted.extension_ids[0] / "1.4.2");  // read-only dir in tree
    std::filesystem::create_symlink("Cookies", tmp / "p" / "cookie-alias");

    auto packed = vault::pack_profile(tmp / "p");
    vault::unpack_profile(packed.archive, tmp / "restored");
    CHECK(oracle::dir_fingerprint(tmp / "p") == oracle::dir_fingerprint(tmp / "restored"));

    auto repacked = vault::pack_profile(tmp / "restored");
    CHECK(repacked.archive == packed.archive);  // pack . unpack . pack fixpoint
  }

  TEST_CASE("escaping symlink targets are recorded with a warning, never followed") {
    oracle::TempDir tmp;
    std::filesystem::create_directories(tmp / "d/sub");
    std::ofstream(tmp / "d/sub/f.txt") << "x";
    std::filesystem::create_symlink("/etc", tmp / "d/etc-link");
    std::filesystem::create_symlink("../../outside", tmp / "d/sub/up-link");
    std::filesystem::create_symlink("sub/f.txt", tmp / "d/inside-link");

    auto packed = vault::pack_profile(tmp / "d");
    CHECK(packed.warnings.size() == 2);
    vault::unpack_profile(packed.archive, tmp / "r");
    CHECK(std::filesystem::read_symlink(tmp / "r/etc-link") == "/etc");
    CHECK(std::filesystem::read_symlink(tmp / "r/sub/up-link") == "../../outside");
  }

  TEST_CASE("unpack refuses traversal names and non-empty targets") {
    oracle::TempDir tmp;
    std::filesystem::create_directories(tmp / "filled");
    std::ofstream(tmp / "filled/x") << "x";
    Bytes archive = {'B', 'P', 'A', '1', 0, 0, 0, 0};
    CHECK_THROWS_AS(vault::unpack_profile(archive, tmp / "filled"), IoError);

    Bytes evil = {'B', 'P', 'A', '1', 1, 0, 0, 0};
    const std::string name = "../evil";
    evil.push_back(static_cast<std::uint8_t>(name.size()));
    evil.push_back(0);
    evil.insert(evil.end(), name.begin(), name.end());
    evil.push_back(1);  // dir
    evil.insert(evil.end(), {0, 0, 0, 0});
    CHECK_THROWS_AS(vault::unpack_profile(evil, tmp / "fresh"), FormatError);
  }
}

TEST_SUITE("vault.crypt") {
  TEST_CASE("decrypt is the inverse of encrypt across sizes and chunk boundaries") {
    SeededRng rng(60);
    for (std::size_t size :
         {std::size_t{0}, std::size_t{1}, std::size_t{4095}, std::size_t{4096},
          std::size_t{4097}, std::size_t{12288}, std::size_t{100000}}) {
      const Bytes archive = rng.blob(size);
      auto v = vault::vault_encrypt(archive, "pass", fast_params());
      CHECK(vault::vault_decrypt(v, "pass") == archive);
    }
  }

  TEST_CASE("wrong passphrase and sampled bit flips all fail authentication") {
    SeededRng rng(61);
    const Bytes archive = rng.blob(20000);
    auto v = vault::vault_encrypt(archive, "correct horse", fast_params());
    CHECK_THROWS_AS(vault::vault_decrypt(v, "wrong horse"), AuthError);

    for (int i = 0; i < 200; ++i) {
      auto mutant = v;
      const std::size_t bit = rng.below(mutant.size() * 8);
      mutant[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
      CHECK_THROWS_AS(vault::vault_decrypt(mutant, "correct horse"), AuthError);
    }
  }

  TEST_CASE("frame reordering and truncation fail authentication") {
    SeededRng rng(62);
    const Bytes archive = rng.blob(3 * 4096);  // three full chunks
    auto v = vault::vault_encrypt(archive, "pass", fast_params());
    const auto info = vault::vault_inspect(v);
    REQUIRE(info.chunk_count == 3);
    const std::size_t header = 129;
    const std::size_t frame = 24 + 4096 + 16;

    auto swapped = v;
    std::swap_ranges(swapped.begin() + header, swapped.begin() + header + frame,
                     swapped.begin() + header + frame);
    CHECK_THROWS_AS(vault::vault_decrypt(swapped, "pass"), AuthError);

    auto truncated = v;
    truncated.resize(truncated.size() - frame);
    CHECK_THROWS_AS(vault::vault_decrypt(truncated, "pass"), AuthError);

    auto extended = v;
    extended.push_back(0);
    CHECK_THROWS_AS(vault::vault_decrypt(extended, "pass"), AuthError);
  }

  TEST_CASE("frames cannot be spliced across vaults") {
    SeededRng rng(63);
    const Bytes archive = rng.blob(4096);
    auto v1 = vault::vault_encrypt(archive, "pass", fast_params());
    auto v2 = vault::vault_encrypt(archive, "pass", fast_params());
    // Same plaintext, same passphrase — but fresh salt, so frames differ.
    CHECK(v1 != v2);
    auto spliced = Bytes(v1.begin(), v1.begin() + 129);
    spliced.insert(spliced.end(), v2.begin() + 129, v2.end());
    CHECK_THROWS_AS(vault::vault_decrypt(spliced, "pass"), AuthError);
  }

  TEST_CASE("machine binding rejects other machines and missing ids") {
    SeededRng rng(64);
    const Bytes archive = rng.blob(5000);
    auto p = fast_params();
    p.binding = BindingMode::machine;
    p.machine_id = "machine-A";
    auto v = vault::vault_encrypt(archive, "pass", p);
    CHECK(vault::vault_decrypt(v, "pass", "machine-A") == archive);
    CHECK_THROWS_AS(vault::vault_decrypt(v, "pass", "machine-B"), AuthError);
    CHECK_THROWS_AS(vault::vault_decrypt(v, "pass"), AuthError);
  }

  TEST_CASE("parameter validation") {
    CHECK_THROWS_AS(vault::vault_encrypt({}, "", fast_params()), Error);
    auto p = fast_params();
    p.chunk_size = 100;
    CHECK_THROWS_AS(vault::vault_encrypt({}, "pass", p), Error);
    auto bound = fast_params();
    bound.binding = BindingMode::machine;
    CHECK_THROWS_AS(vault::vault_encrypt({}, "pass", bound), Error);
    CHECK_THROWS_AS(vault::vault_decrypt(Bytes(16, 0), "pass"), FormatError);
  }
}

TEST_SUITE("vault.session") {
  TEST_CASE("a trivial command re-encrypts, scrubs the workdir and reports exit 0") {
    oracle::TempDir tmp;
    forge::generate_fixture_profile(70, atlas::Engine::gecko, tmp / "p");
    auto v = vault::vault_encrypt(make_archive_of(tmp / "p"), "pass", fast_params());
    const auto vault_file = tmp / "profile.vault";
    {
      std::ofstream out(vault_file, std::ios::binary);
      out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size()));
    }

    const int status = vault::guarded_session(vault_file, "pass", "true", tmp / "work");
    CHECK(status == 0);
    CHECK_FALSE(std::filesystem::exists(tmp / "work"));
    CHECK_FALSE(std::filesystem::exists(vault_file.string() + ".lock"));

    std::ifstream in(vault_file, std::ios::binary);
    Bytes fresh((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    CHECK(fresh != v);  // fresh salt and nonces
    CHECK(vault::vault_decrypt(fresh, "pass") == vault::vault_decrypt(v, "pass"));

    // A second session over identical content still produces new bytes.
    CHECK(vault::guarded_session(vault_file, "pass", "true", tmp / "work2") == 0);
    std::ifstream in2(vault_file, std::ios::binary);
    Bytes fresh2((std::istreambuf_iterator<char>(in2)), std::istreambuf_iterator<char>());
    CHECK(fresh2 != fresh);
    CHECK(vault::vault_decrypt(fresh2, "pass") == vault::vault_decrypt(fresh, "pass"));
  }

  TEST_CASE("mutations made by the command survive into the next decrypt") {
    oracle::TempDir tmp;
    forge::generate_fixture_profile(71, atlas::Engine::gecko, tmp / "p");
    auto v = vault::vault_encrypt(make_archive_of(tmp / "p"), "pass", fast_params());
    const auto vault_file = tmp / "profile.vault";
    {
      std::ofstream out(vault_file, std::ios::binary);
      out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size()));
    }

    const std::string cmd = "echo mutated > '{profile}/prefs.js'";
    CHECK(vault::guarded_session(vault_file, "pass", cmd, tmp / "work") == 0);

    std::ifstream in(vault_file, std::ios::binary);
    Bytes fresh((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    vault::unpack_profile(vault::vault_decrypt(fresh, "pass"), tmp / "check");
    std::ifstream prefs(tmp / "check/prefs.js");
    std::string line;
    std::getline(prefs, line);
    CHECK(line == "mutated");
  }

  TEST_CASE("a failing command still re-encrypts and its status is reported") {
    oracle::TempDir tmp;
    forge::generate_fixture_profile(72, atlas::Engine::gecko, tmp / "p");
    auto v = vault::vault_encrypt(make_archive_of(tmp / "p"), "pass", fast_params());
    const auto vault_file = tmp / "profile.vault";
    {
      std::ofstream out(vault_file, std::ios::binary);
      out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size()));
    }
    const int status = vault::guarded_session(vault_file, "pass", "exit 3", tmp / "work");
    CHECK(status == 3);
    CHECK_FALSE(std::filesystem::exists(tmp / "work"));
    std::ifstream in(vault_file, std::ios::binary);
    Bytes fresh((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(fresh != v);
  }

  TEST_CASE("a held lock blocks a second session") {
    oracle::TempDir tmp;
    forge::generate_fixture_profile(73, atlas::Engine::gecko, tmp / "p");
    auto v = vault::vault_encrypt(make_archive_of(tmp / "p"), "pass", fast_params());
    const auto vault_file = tmp / "profile.vault";
    {
      std::ofstream out(vault_file, std::ios::binary);
      out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size()));
    }
    std::ofstream(vault_file.string() + ".lock") << "pid 1\n";
    CHECK_THROWS_AS(vault::guarded_session(vault_file, "pass", "true", tmp / "work"), Error);
    std::filesystem::remove(vault_file.string() + ".lock");
  }

  TEST_CASE("wrong passphrase aborts before anything launches") {
    oracle::TempDir tmp;
    forge::generate_fixture_profile(74, atlas::Engine::gecko, tmp / "p");
    auto v = vault::vault_encrypt(make_archive_of(tmp / "p"), "pass", fast_params());
    const auto vault_file = tmp / "profile.vault";
    {
      std::ofstream out(vault_file, std::ios::binary);
      out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size()));
    }
    const auto canary = tmp / "canary";
    CHECK_THROWS_AS(vault::guarded_session(vault_file, "wrong",
                                           "touch '" + canary.string() + "'", tmp / "work"),
                    AuthError);
    CHECK_FALSE(std::filesystem::exists(canary));
    CHECK_FALSE(std::filesystem::exists(tmp / "work"));
  }
}

TEST_SUITE("vault.seal") {
  TEST_CASE("records open only under their sealing origin") {
    const auto key = vault::random_key();
    const Bytes secret = to_bytes("v10 opaque password ciphertext");
    auto sealed = vault::seal_record(secret, "https://www.facebook.com/", key);
    CHECK(vault::open_record(sealed, "https://www.facebook.com/", key) == secret);
    CHECK_THROWS_AS(vault::open_record(sealed, "https://attacker.com", key), AuthError);
    CHECK_THROWS_AS(vault::open_record(sealed, "https://www.facebook.com/", vault::random_key()),
                    AuthError);

    auto tampered = sealed;
    tampered.ciphertext[0] ^= 1;
    CHECK_THROWS_AS(vault::open_record(tampered, "https://www.facebook.com/", key), AuthError);
  }

  TEST_CASE("single-character origin edits always fail") {
    const auto key = vault::random_key();
    const std::string origin = "https://bank.example.net";
    auto sealed = vault::seal_record(to_bytes("data"), origin, key);
    SeededRng rng(80);
    for (int i = 0; i < 200; ++i) {
      std::string other = origin;
      const std::size_t pos = rng.below(other.size());
      other[pos] = static_cast<char>('a' + rng.below(26));
      if (other == origin) continue;
      CHECK_THROWS_AS(vault::open_record(sealed, other, key), AuthError);
    }
  }

  TEST_CASE("nonces are fresh per record") {
    const auto key = vault::random_key();
    auto a = vault::seal_record(to_bytes("x"), "https://o", key);
    auto b = vault::seal_record(to_bytes("x"), "https://o", key);
    CHECK(a.nonce != b.nonce);
    CHECK(a.ciphertext != b.ciphertext);
  }

  TEST_CASE("empty origins are rejected up front") {
    CHECK_THROWS_AS(vault::seal_record(to_bytes("x"), "", vault::random_key()), Error);
  }
}
