#include "promptattrib/serialize.hpp"

#include <algorithm>

#include "promptattrib/error.hpp"
#include "promptattrib/text.hpp"

namespace promptattrib {
namespace {

constexpr std::string_view kEscCol = "\\[COL]";
constexpr std::string_view kEscVal = "\\[VAL]";

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
}

// Position of the next unescaped tag at or after `from`.
std::size_t find_tag(std::string_view s, std::string_view tag, std::size_t from) {
  while (true) {
    const std::size_t pos = s.find(tag, from);
    if (pos == std::string_view::npos) return pos;
    if (pos == 0 || s[pos - 1] != '\\') return pos;
    from = pos + 1;
  }
}

}  // namespace

std::string escape_tags(std::string_view s) {
  std::string out(s);
  replace_all(out, kColToken, kEscCol);
  replace_all(out, kValToken, kEscVal);
  return out;
}

std::string unescape_tags(std::string_view s) {
  std::string out(s);
  replace_all(out, kEscCol, kColToken);
  replace_all(out, kEscVal, kValToken);
  return out;
}

std::string serialize_attribute(std::string_view name, std::string_view value) {
  std::string out = "[COL] " + escape_tags(trim(name)) + " [VAL]";
  const std::string_view v = trim(value);
  if (!v.empty()) out += " " + escape_tags(v);
  return out;
}

SerializedEntity serialize_entity(const Entity& e) {
  std::vector<std::string> segs;
  segs.reserve(e.attributes.size());
  for (const Attribute& a : e.attributes) segs.push_back(serialize_attribute(a.name, a.value));
  return {join(segs, " "), e.id};
}

std::vector<Attribute> parse_serialized(std::string_view text) {
  std::vector<Attribute> out;
  std::size_t col = find_tag(text, kColToken, 0);
  if (col != 0) throw Error("serialization must start with [COL]");
  while (col != std::string_view::npos) {
    const std::size_t val = find_tag(text, kValToken, col);
    if (val == std::string_view::npos) throw Error("[COL] without matching [VAL]");
    const std::size_t next = find_tag(text, kColToken, val);
    const std::size_t name_begin = col + kColToken.size();
    const std::size_t value_begin = val + kValToken.size();
    const std::size_t value_end = next == std::string_view::npos ? text.size() : next;
    out.push_back({unescape_tags(trim(text.substr(name_begin, val - name_begin))),
                   unescape_tags(trim(text.substr(value_begin, value_end - value_begin)))});
    col = next;
  }
  return out;
}

namespace {

std::string serialize_with_cap(const std::vector<Attribute>& attrs,
                               const std::vector<std::vector<TokenSpan>>& value_spans,
                               std::size_t cap) {
  std::vector<std::string> segs;
  for (std::size_t i = 0; i < attrs.size(); ++i) {
    const std::string& v = attrs[i].value;
    const auto& spans = value_spans[i];
    std::string kept = v;
    if (spans.size() > cap) kept = cap == 0 ? std::string() : v.substr(0, spans[cap - 1].end);
    segs.push_back(serialize_attribute(attrs[i].name, kept));
  }
  return join(segs, " ");
}

}  // namespace

SerializedEntity truncate_to_budget(const SerializedEntity& s, std::size_t budget,
                                    const Tokenizer& tokenizer) {
  const std::vector<Attribute> attrs = parse_serialized(s.text);
  const std::size_t required = min_budget(attrs.size());
  if (budget < required) {
    throw Error("token budget " + std::to_string(budget) + " is below the minimum " +
                std::to_string(required) + " for " + std::to_string(attrs.size()) + " attributes");
  }
  if (tokenizer.count(s.text) <= budget) return s;
  std::vector<std::vector<TokenSpan>> spans;
  std::size_t longest = 0;
  for (const Attribute& a : attrs) {
    spans.push_back(tokenizer.tokenize_spans(a.value));
    longest = std::max(longest, spans.back().size());
  }
  // Token count is non-decreasing in the cap; find the largest cap that fits.
  const auto fits = [&](std::size_t cap) {
    return tokenizer.count(serialize_with_cap(attrs, spans, cap)) <= budget;
  };
  if (!fits(0)) {
    throw Error("attribute names and tags alone exceed the token budget " +
                std::to_string(budget) + " (minimum " + std::to_string(required) + ")");
  }
  std::size_t lo = 0, hi = longest;  // fits(lo) holds, fits(longest) does not
  while (hi - lo > 1) {
    const std::size_t mid = lo + (hi - lo) / 2;
    (fits(mid) ? lo : hi) = mid;
  }
  return {serialize_with_cap(attrs, spans, lo), s.source_id};
}

}  // namespace promptattrib
