#include <catch_amalgamated.hpp>

#include "picsift/error.hpp"
#include "picsift/hash.hpp"
#include "test_support.hpp"
#include "text_util.hpp"

using namespace picsift;

TEST_CASE("sha256 matches published test vectors") {
  CHECK(to_hex(sha256(std::string_view(""))) ==
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(to_hex(sha256(std::string_view("abc"))) ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(to_hex(sha256(std::string_view("abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq"))) ==
        "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1");
}

TEST_CASE("incremental hashing equals one-shot hashing") {
  const std::string text(10000, 'x');
  Sha256 h;
  for (std::size_t i = 0; i < text.size(); i += 333) {
    h.update(std::string_view(text).substr(i, 333));
  }
  CHECK(h.finish() == sha256(std::string_view(text)));
}

TEST_CASE("file hash equals hash of the bytes") {
  testing::TempDir dir;
  testing::write_text(dir / "f.bin", "hello world");
  CHECK(sha256_file(dir / "f.bin") == sha256(std::string_view("hello world")));
  CHECK_THROWS_AS(sha256_file(dir / "missing"), Error);
}

TEST_CASE("hex round trip and rejection") {
  const auto d = sha256(std::string_view("round trip"));
  CHECK(digest_from_hex(to_hex(d)) == d);
  CHECK_THROWS_AS(digest_from_hex("abc"), Error);
  CHECK_THROWS_AS(digest_from_hex(std::string(64, 'g')), Error);
}

TEST_CASE("number parsing is strict") {
  using namespace picsift::detail;
  CHECK(parse_double("0.25") == 0.25);
  CHECK_FALSE(parse_double("0.25x"));
  CHECK_FALSE(parse_double(""));
  CHECK(parse_int("-3") == -3);
  CHECK_FALSE(parse_int("3.5"));
  CHECK(parse_uint("18446744073709551615") == 18446744073709551615ull);
  CHECK_FALSE(parse_uint("-1"));
}

TEST_CASE("key value parsing") {
  using namespace picsift::detail;
  const auto kv = parse_key_values("# comment\n\na = 1\n b=two words \n", "t");
  REQUIRE(kv.size() == 2);
  CHECK(kv[0].key == "a");
  CHECK(kv[0].value == "1");
  CHECK(kv[1].key == "b");
  CHECK(kv[1].value == "two words");
  CHECK(kv[1].line == 4);
  CHECK_THROWS_AS(parse_key_values("no equals sign\n", "t"), Error);
}

TEST_CASE("tsv parsing keeps line numbers") {
  using namespace picsift::detail;
  const auto rows = parse_tsv("# header\na\tb\n\nc\td\te\n");
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].first == std::vector<std::string>{"a", "b"});
  CHECK(rows[0].second == 2);
  CHECK(rows[1].first.size() == 3);
  CHECK(rows[1].second == 4);
}

TEST_CASE("atomic write replaces content") {
  testing::TempDir dir;
  detail::write_file_atomic(dir / "x.txt", "one");
  detail::write_file_atomic(dir / "x.txt", "two");
  CHECK(detail::read_text_file(dir / "x.txt") == "two");
  CHECK_THROWS_AS(detail::read_text_file(dir / "nope"), Error);
}
