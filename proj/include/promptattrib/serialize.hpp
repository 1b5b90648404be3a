#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "promptattrib/corpus.hpp"
#include "promptattrib/tokenizer.hpp"

namespace promptattrib {

// "[COL] <name> [VAL] <value> [COL] ..." with single-space separators.
struct SerializedEntity {
  std::string text;
  std::string source_id;
};

// Escapes literal "[COL]" / "[VAL]" occurrences as "\[COL]" / "\[VAL]".
std::string escape_tags(std::string_view s);
std::string unescape_tags(std::string_view s);

// Tagged form of one name/value pair; an empty value ends at "[VAL]".
std::string serialize_attribute(std::string_view name, std::string_view value);

SerializedEntity serialize_entity(const Entity& e);

// Splits a serialization back into (name, value) pairs, unescaping tags.
std::vector<Attribute> parse_serialized(std::string_view text);

// Smallest budget truncate_to_budget accepts for n attributes.
inline std::size_t min_budget(std::size_t attribute_count) { return attribute_count * 4; }

// Shortens attribute values until the tokenized serialization fits `budget`.
// Values are capped at a common token length chosen as large as possible, so
// the longest values lose tokens first and short values are untouched while
// the cap stays above them. Names, tags and attribute order are kept.
SerializedEntity truncate_to_budget(const SerializedEntity& s, std::size_t budget,
                                    const Tokenizer& tokenizer);

}  // namespace promptattrib
