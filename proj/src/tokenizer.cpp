#include "promptattrib/tokenizer.hpp"

#include <array>
#include <cctype>

#include "promptattrib/error.hpp"
#include "promptattrib/text.hpp"

namespace promptattrib {

std::vector<TokenId> Tokenizer::tokenize(std::string_view text) const {
  std::vector<TokenId> ids;
  for (const TokenSpan& s : tokenize_spans(text)) ids.push_back(s.id);
  return ids;
}

std::string Tokenizer::detokenize(const std::vector<TokenId>& ids) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += token_text(ids[i]);
  }
  return out;
}

TokenId Tokenizer::require(std::string_view word) const {
  auto id = lookup(word);
  if (!id) throw Error("token \"" + std::string(word) + "\" is not in the vocabulary");
  return *id;
}

namespace {

constexpr std::array<std::string_view, 5> kReserved = {kPadToken, kUnkToken, kMaskToken,
                                                       kColToken, kValToken};

bool is_word_char(char c) {
  const auto u = static_cast<unsigned char>(c);
  return u >= 0x80 || std::isalnum(u) != 0 || c == '_';
}

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

bool is_reserved(std::string_view chunk) {
  for (std::string_view r : kReserved) {
    if (chunk == r) return true;
  }
  return false;
}

// Calls fn(begin, end) for every piece of `text`.
template <typename Fn>
void for_each_piece(std::string_view text, Fn fn) {
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t end = i;
    while (end < text.size() && !is_space(text[end])) ++end;
    if (end == i) break;
    const std::string_view chunk = text.substr(i, end - i);
    if (is_reserved(chunk)) {
      fn(i, end);
    } else {
      std::size_t p = i;
      while (p < end) {
        std::size_t q = p + 1;
        if (is_word_char(text[p])) {
          while (q < end && is_word_char(text[q])) ++q;
        }
        fn(p, q);
        p = q;
      }
    }
    i = end;
  }
}

}  // namespace

WordTokenizer::WordTokenizer(std::vector<std::string> vocab) : vocab_(std::move(vocab)) {
  for (std::size_t i = 0; i < vocab_.size(); ++i) {
    if (!index_.emplace(vocab_[i], static_cast<TokenId>(i)).second) {
      throw Error("duplicate vocabulary entry \"" + vocab_[i] + "\"");
    }
  }
  for (std::string_view r : kReserved) {
    if (!index_.count(std::string(r))) {
      throw Error("vocabulary is missing reserved token " + std::string(r));
    }
  }
  unk_id_ = index_.at(std::string(kUnkToken));
}

std::optional<TokenId> WordTokenizer::lookup(std::string_view word) const {
  const auto it = index_.find(std::string(word));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const std::string& WordTokenizer::token_text(TokenId id) const {
  if (id >= vocab_.size()) throw Error("token id " + std::to_string(id) + " out of range");
  return vocab_[id];
}

std::vector<TokenSpan> WordTokenizer::tokenize_spans(std::string_view text) const {
  std::vector<TokenSpan> out;
  for_each_piece(text, [&](std::size_t b, std::size_t e) {
    const std::string_view piece = text.substr(b, e - b);
    TokenId id = unk_id_;
    if (auto it = index_.find(std::string(piece)); it != index_.end()) {
      id = it->second;
    } else if (auto lt = index_.find(to_lower(piece)); lt != index_.end()) {
      id = lt->second;
    }
    out.push_back({id, b, e});
  });
  return out;
}

std::vector<std::string> word_pieces(std::string_view text) {
  std::vector<std::string> out;
  for_each_piece(text, [&](std::size_t b, std::size_t e) { out.emplace_back(text.substr(b, e - b)); });
  return out;
}

}  // namespace promptattrib
