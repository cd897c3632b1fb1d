#include <sstream>

#include "doctest.h"
#include "skg/embeddings.hpp"
#include "skg/errors.hpp"

using namespace skg;

namespace {

std::string row_text(const std::string& token, std::size_t n, double start) {
  std::ostringstream out;
  out << token;
  for (std::size_t i = 0; i < n; ++i) out << ' ' << start + 0.001 * static_cast<double>(i);
  out << '\n';
  return out.str();
}

EmbeddingTable toy_table() {
  std::istringstream in("red 1 2 3\ncar 3 0 -1\nblue 0.5 0.5 0.5\n");
  return parse_embeddings(in, 3);
}

}  // namespace

TEST_SUITE("embeddings") {
  TEST_CASE("300-float line loads") {
    std::istringstream in(row_text("cat", 300, 0.1));
    const EmbeddingTable t = parse_embeddings(in, 300);
    REQUIRE(t.size() == 1);
    const auto id = t.find("cat");
    REQUIRE(id);
    CHECK(t.row(*id).size() == 300);
    CHECK(t.row(*id)[0] == 0.1);
  }

  TEST_CASE("wrong float count names the line") {
    std::istringstream in(row_text("cat", 300, 0.1) + row_text("dog", 299, 0.2));
    try {
      parse_embeddings(in, 300, "vec.txt");
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line() == 2);
      CHECK(std::string(e.what()).find("vec.txt:2") != std::string::npos);
    }
  }

  TEST_CASE("empty file is an error") {
    std::istringstream in("");
    CHECK_THROWS(parse_embeddings(in, 3));
    std::istringstream blank("\n\n");
    CHECK_THROWS(parse_embeddings(blank, 3));
  }

  TEST_CASE("lookup is normalized") {
    std::istringstream in("Cat 1 2 3\n");
    const EmbeddingTable t = parse_embeddings(in, 3);
    CHECK(t.find("cat"));
    CHECK(t.find("  CAT "));
    CHECK(embed_phrase(t, "cat") == embed_phrase(t, "Cat"));
  }

  TEST_CASE("duplicates keep the first occurrence") {
    std::istringstream in("cat 1 2 3\nCAT 9 9 9\n");
    const EmbeddingTable t = parse_embeddings(in, 3);
    CHECK(t.size() == 1);
    CHECK(embed_phrase(t, "cat") == Tensor::vector({1, 2, 3}));
  }

  TEST_CASE("known word gives its vector") {
    const EmbeddingTable t = toy_table();
    CHECK(embed_phrase(t, "car") == Tensor::vector({3, 0, -1}));
  }

  TEST_CASE("phrase mean matches a hand average") {
    const EmbeddingTable t = toy_table();
    const Tensor v = embed_phrase(t, "red car");
    CHECK(v[0] == 2.0);
    CHECK(v[1] == 1.0);
    CHECK(v[2] == 1.0);
    CHECK(embed_phrase(t, "red_car") == v);
    // Unknown words are skipped, not averaged in as zeros.
    CHECK(embed_phrase(t, "red zqxjk car") == v);
  }

  TEST_CASE("fully unknown phrase is the zero vector of full width") {
    std::istringstream in(row_text("cat", 300, 0.1));
    const EmbeddingTable t = parse_embeddings(in, 300);
    const Tensor v = embed_phrase(t, "zqxjk");
    CHECK(v.size() == 300);
    for (double x : v.values()) CHECK(x == 0.0);
    CHECK(embed_phrase(t, "").size() == 300);
  }

  TEST_CASE("word order does not matter") {
    const EmbeddingTable t = toy_table();
    CHECK(embed_phrase(t, "red car") == embed_phrase(t, "car red"));
    CHECK(embed_phrase(t, "blue red car") == embed_phrase(t, "car blue red"));
  }

  TEST_CASE("write and parse round trip") {
    const EmbeddingTable t = toy_table();
    std::ostringstream out;
    t.write(out);
    std::istringstream in(out.str());
    const EmbeddingTable back = parse_embeddings(in, 3);
    CHECK(back.size() == t.size());
    CHECK(back.as_matrix() == t.as_matrix());
  }

  TEST_CASE("phrase words split on underscores and whitespace") {
    CHECK(phrase_words("part_of  Car") == std::vector<std::string>{"part", "of", "car"});
    CHECK(normalize_token("  Big   Red ") == "big red");
  }
}
