#include <doctest.h>

#include <zlib.h>

#include <fstream>

#include "bpi/errors.hpp"
#include "bpi/fs.hpp"
#include "bpi/zipfile.hpp"
#include "support/oracles.hpp"

using namespace bpi;

TEST_SUITE("fs") {
  TEST_CASE("lexical normalization") {
    CHECK(lexical_normalize("a/./b//c") == "a/b/c");
    CHECK(lexical_normalize("/a/b/../c") == "/a/c");
    CHECK(lexical_normalize("/../..") == "/");
    CHECK(lexical_normalize("../x") == "../x");
    CHECK(lexical_normalize("a/b/../../../y") == "../y");
    CHECK(lexical_normalize("") == ".");
    CHECK(lexical_normalize("///") == "/");
  }

  TEST_CASE("path_under") {
    CHECK(path_under("/etc", "/etc"));
    CHECK(path_under("/etc", "/etc/ssl/certs"));
    CHECK_FALSE(path_under("/etc", "/etcetera"));
    CHECK(path_under("/", "/anything"));
  }

  TEST_CASE("MemFs structure") {
    MemFs fs;
    fs.add_file("/home/u/.mozilla/firefox/p1/prefs.js");
    fs.add_symlink("/home/u/link", "/etc");
    CHECK(fs.is_dir("/home/u/.mozilla"));
    CHECK(fs.is_file("/home/u/.mozilla/firefox/p1/prefs.js"));
    CHECK(fs.kind("/home/u/link") == NodeKind::symlink);
    CHECK(fs.read_link("/home/u/link") == "/etc");
    CHECK(fs.list_dir("/home/u") == std::vector<std::string>{".mozilla", "link"});
    CHECK_FALSE(fs.exists("/nope"));
  }
}

TEST_SUITE("zipfile") {
  TEST_CASE("write-read round trip with symlink and dir entries") {
    oracle::TempDir tmp;
    const auto file = tmp / "a.zip";
    {
      zip::Writer w(file);
      w.add_file("docs/readme.txt", to_bytes("hello"), 0600);
      w.add_dir("docs");
      w.add_symlink("rootlink", "/");
      w.finish();
    }
    auto entries = zip::read_entries(file);
    REQUIRE(entries.size() == 3);
    CHECK(entries[0].name == "docs/readme.txt");
    CHECK(entries[0].kind == zip::EntryKind::file);
    CHECK(to_string(entries[0].content) == "hello");
    CHECK(entries[0].mode == 0600);
    CHECK(entries[1].kind == zip::EntryKind::dir);
    CHECK(entries[2].kind == zip::EntryKind::symlink);
    CHECK(entries[2].link_target == "/");
  }

  TEST_CASE("same content twice produces identical bytes") {
    oracle::TempDir tmp;
    auto write_one = [&](const std::string& name) {
      zip::Writer w(tmp / name);
      w.add_file("x", to_bytes("payload"));
      w.finish();
      std::ifstream in(tmp / name, std::ios::binary);
      return std::string((std::istreambuf_iterator<char>(in)),
                         std::istreambuf_iterator<char>());
    };
    CHECK(write_one("a.zip") == write_one("b.zip"));
  }

  TEST_CASE("reader inflates DEFLATE entries") {
    // Hand-assembled single-entry archive using raw-deflate payload.
    const std::string text = "compressible compressible compressible";
    Bytes deflated(256);
    z_stream zs{};
    deflateInit2(&zs, Z_BEST_COMPRESSION, Z_DEFLATED, -15, 8, Z_DEFAULT_STRATEGY);
    zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(text.data()));
    zs.avail_in = static_cast<uInt>(text.size());
    zs.next_out = deflated.data();
    zs.avail_out = static_cast<uInt>(deflated.size());
    REQUIRE(deflate(&zs, Z_FINISH) == Z_STREAM_END);
    deflated.resize(deflated.size() - zs.avail_out);
    deflateEnd(&zs);
    const auto crc =
        crc32(0L, reinterpret_cast<const Bytef*>(text.data()), static_cast<uInt>(text.size()));

    Bytes raw;
    auto p16 = [&](std::uint16_t v) {
      raw.push_back(v & 0xff);
      raw.push_back(v >> 8);
    };
    auto p32 = [&](std::uint32_t v) {
      p16(v & 0xffff);
      p16(v >> 16);
    };
    const std::string name = "d.txt";
    p32(0x04034b50);
    p16(20); p16(0); p16(8); p16(0); p16(0x21);
    p32(static_cast<std::uint32_t>(crc));
    p32(static_cast<std::uint32_t>(deflated.size()));
    p32(static_cast<std::uint32_t>(text.size()));
    p16(static_cast<std::uint16_t>(name.size()));
    p16(0);
    raw.insert(raw.end(), name.begin(), name.end());
    raw.insert(raw.end(), deflated.begin(), deflated.end());
    const std::uint32_t cd_off = static_cast<std::uint32_t>(raw.size());
    p32(0x02014b50);
    p16((3 << 8) | 20); p16(20); p16(0); p16(8); p16(0); p16(0x21);
    p32(static_cast<std::uint32_t>(crc));
    p32(static_cast<std::uint32_t>(deflated.size()));
    p32(static_cast<std::uint32_t>(text.size()));
    p16(static_cast<std::uint16_t>(name.size()));
    p16(0); p16(0); p16(0); p16(0);
    p32(0100644u << 16);
    p32(0);
    raw.insert(raw.end(), name.begin(), name.end());
    const std::uint32_t cd_size = static_cast<std::uint32_t>(raw.size()) - cd_off;
    p32(0x06054b50);
    p16(0); p16(0); p16(1); p16(1);
    p32(cd_size);
    p32(cd_off);
    p16(0);

    oracle::TempDir tmp;
    std::ofstream out(tmp / "deflate.zip", std::ios::binary);
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    out.close();

    auto entries = zip::read_entries(tmp / "deflate.zip");
    REQUIRE(entries.size() == 1);
    CHECK(to_string(entries[0].content) == text);
  }

  TEST_CASE("garbage rejected") {
    oracle::TempDir tmp;
    std::ofstream(tmp / "junk.zip") << "this is not a zip file at all";
    CHECK_THROWS_AS(zip::read_entries(tmp / "junk.zip"), FormatError);
  }
}
