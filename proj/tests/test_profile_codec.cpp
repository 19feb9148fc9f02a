#include <doctest.h>

#include <fstream>

#include <nlohmann/json.hpp>

#include "bpi/attack_forge.hpp"
#include "bpi/errors.hpp"
#include "bpi/profile_codec.hpp"
#include "support/oracles.hpp"

using namespace bpi;
using codec::Engine;
using nlohmann::json;

namespace {

void mark_fixture(const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream(dir / ".sentinel-fixture") << "test\n";
}

codec::CookieRecord cookie(const std::string& host, const std::string& name,
                           const std::string& ct, int httponly) {
  codec::CookieRecord c;
  c.host_key = host;
  c.name = name;
  c.encrypted_value = to_bytes(ct);
  c.path = "/";
  c.is_httponly = httponly;
  c.is_secure = 1;
  c.creation_utc = 1;
  return c;
}

codec::LoginRecord login(const std::string& origin, const std::string& user,
                         const std::string& ct) {
  codec::LoginRecord r;
  r.origin_url = origin;
  r.action_url = origin;
  r.username_element = "login_email";
  r.username_value = user;
  r.password_element = "login_pass";
  r.password_value = to_bytes(ct);
  r.signon_realm = origin;
  r.date_created = 42;
  return r;
}

}  // namespace

TEST_SUITE("codec.cookies") {
  TEST_CASE("chromium store round trip keeps ciphertext bytes") {
    oracle::TempDir tmp;
    mark_fixture(tmp.path());
    const auto store = tmp / "Cookies";
    codec::write_chromium_cookies(store, {cookie("youtube.com", "sid", "v10\x01\x02", 1),
                                          cookie(".attacker.com", "x", "v10zz", 0)});
    auto rows = codec::read_chromium_cookies(store);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].host_key == "youtube.com");
    CHECK(rows[0].is_httponly == 1);
    CHECK(rows[0].encrypted_value == to_bytes("v10\x01\x02"));
    CHECK(rows[1].host_key == ".attacker.com");
    CHECK(rows[1].is_httponly == 0);
  }

  TEST_CASE("empty table reads as empty") {
    oracle::TempDir tmp;
    codec::write_chromium_cookies(tmp / "Cookies", {});
    CHECK(codec::read_chromium_cookies(tmp / "Cookies").empty());
  }

  TEST_CASE("missing table is a FormatError, not-a-db too") {
    oracle::TempDir tmp;
    codec::write_gecko_cookies(tmp / "wrong.sqlite", {});
    CHECK_THROWS_AS(codec::read_chromium_cookies(tmp / "wrong.sqlite"), FormatError);
    std::ofstream(tmp / "plain.txt") << "hello";
    CHECK_THROWS_AS(codec::read_chromium_cookies(tmp / "plain.txt"), FormatError);
    CHECK_THROWS_AS(codec::read_chromium_cookies(tmp / "absent"), IoError);
  }

  TEST_CASE("insert_cookie_copy duplicates each source row, downgrades HttpOnly") {
    oracle::TempDir tmp;
    mark_fixture(tmp.path());
    const auto store = tmp / "Cookies";
    codec::write_chromium_cookies(
        store, {cookie("youtube.com", "sid", "ct-a", 1), cookie("youtube.com", "ssid", "ct-b", 0),
                cookie("other.org", "o", "ct-c", 1)});
    const auto before = codec::read_chromium_cookies(store);

    const auto inserted = codec::insert_cookie_copy(store, "youtube.com", ".attacker.com", true);
    CHECK(inserted == 2);

    // Independent full-table scan straight through sqlite: every youtube row
    // must have an .attacker.com twin with identical ciphertext bytes and
    // is_httponly forced to 0.
    auto raw = oracle::raw_query(
        store, "SELECT host_key, name, is_httponly, encrypted_value FROM cookies");
    std::size_t twins = 0;
    for (const auto& src : raw) {
      if (src.text.at("host_key") != "youtube.com") continue;
      bool found = false;
      for (const auto& dst : raw) {
        if (dst.text.at("host_key") != ".attacker.com") continue;
        if (dst.blobs.at("encrypted_value") == src.blobs.at("encrypted_value") &&
            dst.ints.at("is_httponly") == 0 && dst.text.at("name") == src.text.at("name"))
          found = true;
      }
      CHECK(found);
      ++twins;
    }
    CHECK(twins == 2);

    // Append-only: the original rows are still byte-identical.
    auto after = codec::read_chromium_cookies(store);
    REQUIRE(after.size() == before.size() + inserted);
    for (std::size_t i = 0; i < before.size(); ++i) {
      CHECK(after[i].host_key == before[i].host_key);
      CHECK(after[i].encrypted_value == before[i].encrypted_value);
      CHECK(after[i].is_httponly == before[i].is_httponly);
    }
  }

  TEST_CASE("insert_cookie_copy with absent source inserts nothing") {
    oracle::TempDir tmp;
    mark_fixture(tmp.path());
    codec::write_chromium_cookies(tmp / "Cookies", {cookie("a.com", "n", "ct", 0)});
    CHECK(codec::insert_cookie_copy(tmp / "Cookies", "missing.com", ".x.com", true) == 0);
  }

  TEST_CASE("insert_cookie_copy refuses non-fixture stores") {
    oracle::TempDir tmp;  // no marker
    codec::write_chromium_cookies(tmp / "Cookies", {cookie("a.com", "n", "ct", 0)});
    CHECK_THROWS_AS(codec::insert_cookie_copy(tmp / "Cookies", "a.com", ".x.com", true),
                    GuardError);
  }
}

TEST_SUITE("codec.logins") {
  TEST_CASE("chromium login store round trip") {
    oracle::TempDir tmp;
    codec::write_chromium_logins(tmp / "Login Data",
                                 {login("https://www.facebook.com/", "u1@example.com", "pw-ct-1"),
                                  login("https://www.facebook.com/", "u2@example.com", "pw-ct-2")});
    auto rows = codec::read_login_store(tmp / "Login Data", Engine::chromium);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].origin_url == "https://www.facebook.com/");
    CHECK(rows[0].password_value == to_bytes("pw-ct-1"));
  }

  TEST_CASE("empty stores read as empty") {
    oracle::TempDir tmp;
    codec::write_chromium_logins(tmp / "Login Data", {});
    CHECK(codec::read_login_store(tmp / "Login Data", Engine::chromium).empty());
    codec::write_gecko_logins(tmp / "logins.json", {});
    CHECK(codec::read_login_store(tmp / "logins.json", Engine::gecko).empty());
  }

  TEST_CASE("insert_login_copy rewrites origin and element names per the rehome query") {
    oracle::TempDir tmp;
    mark_fixture(tmp.path());
    const auto store = tmp / "Login Data";
    codec::write_chromium_logins(store,
                                 {login("https://www.facebook.com/", "u1@example.com", "pw-ct-1"),
                                  login("https://other.net/", "u", "pw-ct-x")});
    CHECK(codec::insert_login_copy(store, "https://www.facebook.com/", "https://attacker.com") ==
          1);

    auto raw = oracle::raw_query(store,
                                 "SELECT origin_url, action_url, username_element, "
                                 "password_element, password_value, signon_realm FROM logins");
    REQUIRE(raw.size() == 3);
    const auto& copy = raw.back();
    CHECK(copy.text.at("origin_url") == "https://attacker.com");
    CHECK(copy.text.at("action_url") == "https://attacker.com/");
    CHECK(copy.text.at("signon_realm") == "https://attacker.com/");
    CHECK(copy.text.at("username_element") == "email");
    CHECK(copy.text.at("password_element") == "pass");
    CHECK(copy.blobs.at("password_value") == oracle::Bytes{'p', 'w', '-', 'c', 't', '-', '1'});
  }

  TEST_CASE("insert_login_copy on logins.json duplicates matching entries") {
    oracle::TempDir tmp;
    mark_fixture(tmp.path());
    const auto store = tmp / "logins.json";
    codec::write_gecko_logins(store, {login("https://www.facebook.com", "enc-user", "enc-pass")});
    CHECK(codec::insert_login_copy(store, "https://www.facebook.com", "https://attacker.com") ==
          1);
    auto rows = codec::read_login_store(store, Engine::gecko);
    REQUIRE(rows.size() == 2);
    CHECK(rows[1].origin_url == "https://attacker.com");
    CHECK(rows[1].username_element == "email");
    CHECK(rows[1].password_element == "pass");
    CHECK(rows[1].password_value == rows[0].password_value);
    CHECK(codec::insert_login_copy(store, "https://nobody.example", "https://x.example") == 0);
  }
}

TEST_SUITE("codec.permissions") {
  TEST_CASE("gecko row matching the camera-grant example reads back verbatim") {
    oracle::TempDir tmp;
    codec::PermissionRecord rec;
    rec.origin = "https://attacker.com";
    rec.type = "camera";
    rec.permission = 1;
    rec.expire_type = 0;
    rec.expire_time = 0;
    rec.modification_time = 1702964711537;
    codec::write_gecko_permissions(tmp / "permissions.sqlite", {rec});

    atlas::ProfileDescriptor profile;
    profile.engine = Engine::gecko;
    profile.profile_path = tmp.path().string();
    auto rows = codec::read_permissions(profile);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0] == rec);
  }

  TEST_CASE("empty moz_perms reads as empty") {
    oracle::TempDir tmp;
    codec::write_gecko_permissions(tmp / "permissions.sqlite", {});
    atlas::ProfileDescriptor profile;
    profile.engine = Engine::gecko;
    profile.profile_path = tmp.path().string();
    CHECK(codec::read_permissions(profile).empty());
  }

  TEST_CASE("grants are idempotent on (origin, type) for both engines") {
    oracle::TempDir tmp;
    codec::PermissionRecord rec;
    rec.origin = "https://attacker.com";
    rec.type = "camera";
    rec.permission = 1;
    rec.modification_time = 1000;

    SUBCASE("gecko") {
      codec::write_gecko_permissions(tmp / "permissions.sqlite", {});
      CHECK(codec::grant_permission(tmp.path().string(), Engine::gecko, rec) == 1);
      CHECK(codec::grant_permission(tmp.path().string(), Engine::gecko, rec) == 0);
      auto raw = oracle::raw_query(tmp / "permissions.sqlite", "SELECT origin FROM moz_perms");
      CHECK(raw.size() == 1);
    }
    SUBCASE("chromium") {
      std::ofstream(tmp / "Preferences") << "{}";
      CHECK(codec::grant_permission(tmp.path().string(), Engine::chromium, rec) == 1);
      CHECK(codec::grant_permission(tmp.path().string(), Engine::chromium, rec) == 0);
      atlas::ProfileDescriptor profile;
      profile.engine = Engine::chromium;
      profile.profile_path = tmp.path().string();
      auto rows = codec::read_permissions(profile);
      REQUIRE(rows.size() == 1);
      CHECK(rows[0].origin == "https://attacker.com");
      CHECK(rows[0].type == "camera");
      CHECK(rows[0].permission == 1);
    }
  }
}

TEST_SUITE("codec.prefs_js") {
  TEST_CASE("single-quoted proxy pref parses") {
    auto parsed = codec::parse_prefs_js("user_pref('network.proxy.type', 1);\n");
    REQUIRE(parsed.entries.size() == 1);
    CHECK(parsed.entries[0].name == "network.proxy.type");
    CHECK(std::get<std::int64_t>(parsed.entries[0].value) == 1);
  }

  TEST_CASE("empty text, comments and blank lines") {
    CHECK(codec::parse_prefs_js("").entries.empty());
    auto parsed = codec::parse_prefs_js("// header comment\n\nuser_pref(\"a.b\", true);\n");
    REQUIRE(parsed.entries.size() == 1);
    CHECK(std::get<bool>(parsed.entries[0].value) == true);
    CHECK(parsed.warnings.empty());
  }

  TEST_CASE("strict mode raises ParseError with the line number") {
    try {
      codec::parse_prefs_js("user_pref(\"ok\", 1);\nuser_pref(broken;\n", /*strict=*/true);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line == 2);
    }
  }

  TEST_CASE("lenient mode skips with a warning") {
    auto parsed = codec::parse_prefs_js("garbage line\nuser_pref(\"x\", \"y\");\n");
    CHECK(parsed.entries.size() == 1);
    CHECK(parsed.warnings.size() == 1);
  }

  TEST_CASE("escapes and negative integers round trip") {
    std::vector<codec::PrefEntry> entries = {
        {"quote.pref", std::string("say \"hi\"\tand \\ back\nnewline")},
        {"neg", std::int64_t{-42}},
        {"flag", false},
    };
    auto parsed = codec::parse_prefs_js(codec::serialize_prefs_js(entries), /*strict=*/true);
    CHECK(parsed.entries == entries);
  }

  TEST_CASE("1000 generated entry lists round trip exactly") {
    SeededRng rng(99);
    const std::string specials = "\\\"'\n\r\t";
    for (int doc = 0; doc < 1000; ++doc) {
      std::vector<codec::PrefEntry> entries;
      const std::size_t n = rng.below(8);
      for (std::size_t i = 0; i < n; ++i) {
        std::string name = "p" + std::to_string(i) + "." + rng.token(5);
        switch (rng.below(3)) {
          case 0: entries.push_back({name, rng.below(2) == 0}); break;
          case 1:
            entries.push_back(
                {name, static_cast<std::int64_t>(rng.next()) - (1ll << 62)});
            break;
          default: {
            std::string v = rng.token(6);
            const std::size_t extras = rng.below(4);
            for (std::size_t k = 0; k < extras; ++k)
              v.push_back(specials[rng.below(specials.size())]);
            entries.push_back({name, v});
          }
        }
      }
      auto parsed = codec::parse_prefs_js(codec::serialize_prefs_js(entries), /*strict=*/true);
      REQUIRE(parsed.entries == entries);
    }
  }
}

TEST_SUITE("codec.preferences") {
  TEST_CASE("set_path then get_path reads the written value") {
    codec::PreferenceTree tree;
    codec::set_path(tree, "homepage", "https://example.org");
    auto hp = codec::get_path(tree, "homepage");
    REQUIRE(hp.has_value());
    CHECK(hp->get<std::string>() == "https://example.org");
    CHECK_FALSE(codec::get_path(tree, "missing.path").has_value());
  }

  TEST_CASE("traversing through a scalar raises PathTypeError") {
    codec::PreferenceTree tree;
    codec::set_path(tree, "a.b", 5);
    CHECK_THROWS_AS(codec::get_path(tree, "a.b.c"), PathTypeError);
    CHECK_THROWS_AS(codec::set_path(tree, "a.b.c", 1), PathTypeError);
  }

  TEST_CASE("list_macs flattens the side-load shape") {
    auto tree = codec::parse_preferences(R"({
      "extensions": {"settings": {"fjjfbkngnepigchnpa": {"from_webstore": false,
        "path": "/tmp/mal-extension", "state": 1}}},
      "protection": {"macs": {"extensions": {"settings":
        {"fjjfbkngnepigchnpa": "6D4F0E88A85DDB4AA1A7"}}}}
    })");
    auto macs = codec::list_macs(tree);
    REQUIRE(macs.size() == 1);
    CHECK(macs.at("extensions.settings.fjjfbkngnepigchnpa") == "6D4F0E88A85DDB4AA1A7");
    CHECK(codec::list_macs(codec::parse_preferences("{}")).empty());
  }

  TEST_CASE("parse-serialize is identity up to key order on generated documents") {
    SeededRng rng(7);
    for (int doc = 0; doc < 1000; ++doc) {
      codec::PreferenceTree tree;
      const std::size_t n = 1 + rng.below(6);
      for (std::size_t i = 0; i < n; ++i) {
        const std::string path = rng.token(4) + "." + rng.token(4);
        switch (rng.below(4)) {
          case 0: codec::set_path(tree, path, rng.below(2) == 0); break;
          case 1: codec::set_path(tree, path, static_cast<std::int64_t>(rng.below(1u << 30))); break;
          case 2: codec::set_path(tree, path, rng.token(8)); break;
          default:
            codec::set_path(tree, path,
                            json::array({rng.token(3), static_cast<std::int64_t>(rng.below(9))}));
        }
      }
      auto text = codec::serialize_preferences(tree);
      auto reparsed = codec::parse_preferences(text);
      CHECK(codec::serialize_preferences(reparsed) == text);
      CHECK(reparsed.root() == tree.root());
    }
  }

  TEST_CASE("malformed document raises FormatError") {
    CHECK_THROWS_AS(codec::parse_preferences("{nope"), FormatError);
    CHECK_THROWS_AS(codec::parse_preferences("[1,2]"), FormatError);
  }
}

TEST_SUITE("codec.certs") {
  TEST_CASE("synthetic store reads the planted mitmproxy record") {
    oracle::TempDir tmp;
    SeededRng rng(5);
    codec::CertRecord rec{"mitmproxy", forge::synth_certificate("mitmproxy", rng), "C"};
    codec::append_cert_record(tmp / "cert9.db", rec);
    auto rows = codec::read_cert_store(tmp / "cert9.db", codec::CertMode::synthetic);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].label == "mitmproxy");
    CHECK(rows[0].trust_flags == "C");
    CHECK(rows[0].der == rec.der);
  }

  TEST_CASE("empty synthetic store reads as empty") {
    oracle::TempDir tmp;
    SeededRng rng(2);
    const auto store = tmp / "cert9.db";
    codec::append_cert_record(store, {"x", forge::synth_certificate("x", rng), "C"});
    oracle::raw_exec(store, "DELETE FROM cert_records");  // leaves the schema
    CHECK(codec::read_cert_store(store, codec::CertMode::synthetic).empty());
  }

  TEST_CASE("non-DER bytes are rejected") {
    oracle::TempDir tmp;
    CHECK_THROWS_AS(codec::append_cert_record(tmp / "cert9.db", {"bad", to_bytes("PEM?"), "C"}),
                    FormatError);
  }

  TEST_CASE("heuristic carve agrees with the standalone DER scan") {
    oracle::TempDir tmp;
    SeededRng rng(11);
    const auto store = tmp / "cert9.db";
    for (int i = 0; i < 4; ++i)
      codec::append_cert_record(store,
                                {"ca-" + std::to_string(i),
                                 forge::synth_certificate("ca-" + std::to_string(i), rng), "C"});
    auto carved = codec::read_cert_store(store, codec::CertMode::heuristic);

    std::ifstream in(store, std::ios::binary);
    oracle::Bytes raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(carved.size() == oracle::count_der_certificates(raw));
    CHECK(carved.size() >= 4);
    for (std::size_t i = 0; i < carved.size(); ++i)
      CHECK(carved[i].label == "recovered-" + std::to_string(i));
  }

  TEST_CASE("heuristic mode never throws on junk") {
    oracle::TempDir tmp;
    std::ofstream(tmp / "junk.bin") << "nothing DER-like here";
    CHECK(codec::read_cert_store(tmp / "junk.bin", codec::CertMode::heuristic).empty());
    CHECK(codec::read_cert_store(tmp / "missing.bin", codec::CertMode::heuristic).empty());
  }
}
