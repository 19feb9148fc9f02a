#include <benchmark/benchmark.h>

#include <filesystem>

#include "bpi/attack_forge.hpp"
#include "bpi/hash.hpp"
#include "bpi/pathguard.hpp"
#include "bpi/profile_codec.hpp"
#include "bpi/sentinel.hpp"
#include "bpi/vault.hpp"

using namespace bpi;

namespace {

std::filesystem::path scratch_dir() {
  auto dir = std::filesystem::temp_directory_path() / "bpi-bench";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

vault::VaultParams fast_params(std::uint32_t chunk_size) {
  vault::VaultParams p;
  p.cost = vault::KdfCost::minimal();
  p.chunk_size = chunk_size;
  return p;
}

void BM_VaultEncrypt(benchmark::State& state) {
  SeededRng rng(1);
  const auto archive = rng.blob(static_cast<std::size_t>(state.range(0)));
  const auto params = fast_params(1u << 20);
  for (auto _ : state) {
    benchmark::DoNotOptimize(vault::vault_encrypt(archive, "bench", params));
  }
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations()) * state.range(0));
}
BENCHMARK(BM_VaultEncrypt)->Arg(1 << 20)->Arg(16 << 20);

void BM_VaultDecrypt(benchmark::State& state) {
  SeededRng rng(2);
  const auto archive = rng.blob(static_cast<std::size_t>(state.range(0)));
  const auto v = vault::vault_encrypt(archive, "bench", fast_params(1u << 20));
  for (auto _ : state) {
    benchmark::DoNotOptimize(vault::vault_decrypt(v, "bench"));
  }
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations()) * state.range(0));
}
BENCHMARK(BM_VaultDecrypt)->Arg(1 << 20)->Arg(16 << 20);

void BM_SealOpen(benchmark::State& state) {
  SeededRng rng(3);
  const auto key = vault::random_key();
  const auto plaintext = rng.blob(256);
  for (auto _ : state) {
    auto sealed = vault::seal_record(plaintext, "https://example.org", key);
    benchmark::DoNotOptimize(vault::open_record(sealed, "https://example.org", key));
  }
}
BENCHMARK(BM_SealOpen);

void BM_PackProfile(benchmark::State& state) {
  const auto dir = scratch_dir();
  forge::generate_fixture_profile(7, atlas::Engine::chromium, dir / "p");
  for (auto _ : state) {
    benchmark::DoNotOptimize(vault::pack_profile(dir / "p"));
  }
}
BENCHMARK(BM_PackProfile);

void BM_ScanFixture(benchmark::State& state) {
  const auto dir = scratch_dir();
  auto manifest = forge::generate_fixture_profile(8, atlas::Engine::chromium, dir / "p");
  forge::sim_cookie_rehome(dir / "p", "youtube.com", ".attacker.com");
  atlas::ProfileDescriptor desc;
  desc.engine = manifest.engine;
  desc.profile_path = manifest.profile_path;
  auto baseline = sentinel::snapshot(desc);
  sentinel::ScanConfig cfg;
  for (auto _ : state) {
    benchmark::DoNotOptimize(sentinel::scan(desc, baseline, cfg));
  }
}
BENCHMARK(BM_ScanFixture);

void BM_Verdict(benchmark::State& state) {
  MemFs fs;
  fs.add_dir("/home/u/Downloads");
  fs.add_symlink("/home/u/Downloads/link", "/");
  const auto rules = pathguard::default_blocklist(atlas::OsKind::linux_os, "/home/u");
  for (auto _ : state) {
    benchmark::DoNotOptimize(pathguard::verdict("/home/u/Downloads/link/etc/ssl", rules, fs));
  }
}
BENCHMARK(BM_Verdict);

void BM_PrefsParse(benchmark::State& state) {
  SeededRng rng(4);
  std::vector<codec::PrefEntry> entries;
  for (int i = 0; i < 200; ++i)
    entries.push_back({"pref." + rng.token(10), rng.token(24)});
  const auto text = codec::serialize_prefs_js(entries);
  for (auto _ : state) {
    benchmark::DoNotOptimize(codec::parse_prefs_js(text));
  }
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations()) *
                          static_cast<std::int64_t>(text.size()));
}
BENCHMARK(BM_PrefsParse);

}  // namespace

BENCHMARK_MAIN();
