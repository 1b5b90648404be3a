#include <string>

#include "doctest.h"
#include "promptattrib/backend.hpp"
#include "promptattrib/error.hpp"
#include "promptattrib/serialize.hpp"

using namespace promptattrib;

namespace {

std::string words(std::size_t n, const std::string& w) {
  std::string s;
  for (std::size_t i = 0; i < n; ++i) s += (i ? " " : "") + w;
  return s;
}

}  // namespace

TEST_CASE("serialize golden strings") {
  const Entity bridge{"b1", {{"name", "McKees Rocks Bridge"}, {"postalCode", "15233"}}};
  CHECK(serialize_entity(bridge).text == "[COL] name [VAL] McKees Rocks Bridge [COL] postalCode [VAL] 15233");
  CHECK(serialize_entity(bridge).source_id == "b1");
  CHECK(serialize_entity({"x", {{"a", "x"}}}).text == "[COL] a [VAL] x");
  CHECK(serialize_entity({"x", {{"a", ""}}}).text == "[COL] a [VAL]");
  CHECK(serialize_entity({"x", {{"a", ""}, {"b", "1"}}}).text == "[COL] a [VAL] [COL] b [VAL] 1");
  CHECK(serialize_entity({"x", {{" a ", "  two  words "}}}).text == "[COL] a [VAL] two  words");
}

TEST_CASE("escaping and round trip") {
  const Entity e{"x", {{"note", "see [COL] here"}, {"v", "a\\[VAL] b"}, {"empty", ""}}};
  const auto s = serialize_entity(e);
  CHECK(s.text.find("\\[COL] here") != std::string::npos);
  const auto back = parse_serialized(s.text);
  REQUIRE(back.size() == 3);
  CHECK(back[0] == Attribute{"note", "see [COL] here"});
  CHECK(back[2] == Attribute{"empty", ""});
  CHECK(unescape_tags(escape_tags("[VAL][COL]")) == "[VAL][COL]");

  const Entity bridge{"b1", {{"name", "McKees Rocks Bridge"}, {"city", "Pittsburgh"}, {"postalCode", "15233"}}};
  CHECK(parse_serialized(serialize_entity(bridge).text) == bridge.attributes);
}

TEST_CASE("truncate_to_budget") {
  const auto backend = make_toy_backend(1);
  const Tokenizer& tok = backend->tokenizer();

  const SerializedEntity small = serialize_entity({"x", {{"name", "red phone"}}});
  CHECK(truncate_to_budget(small, 512, tok).text == small.text);

  const Entity big{"x", {{"title", words(600, "alpha")}, {"brand", words(10, "beta")}}};
  const auto s = serialize_entity(big);
  const auto t = truncate_to_budget(s, 128, tok);
  CHECK(tok.count(t.text) <= 128);
  const auto attrs = parse_serialized(t.text);
  REQUIRE(attrs.size() == 2);
  CHECK(attrs[0].name == "title");
  CHECK(attrs[1].name == "brand");
  CHECK(attrs[1].value == words(10, "beta"));
  CHECK(attrs[0].value.size() < big.attributes[0].value.size());
  CHECK(attrs[0].value.rfind("alpha", 0) == 0);
  // Idempotent and monotone.
  CHECK(truncate_to_budget(t, 128, tok).text == t.text);
  CHECK(tok.count(truncate_to_budget(t, 64, tok).text) <= 64);

  const auto three = serialize_entity({"x", {{"a", "1 2 3"}, {"b", "4"}, {"c", "5"}}});
  CHECK_THROWS_WITH_AS(truncate_to_budget(three, 11, tok), doctest::Contains("12"), Error);
  CHECK_NOTHROW(truncate_to_budget(three, 12, tok));
}
