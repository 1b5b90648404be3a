#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace promptattrib {

using TokenId = std::uint32_t;

// A token and the byte range [begin, end) of the input it came from.
struct TokenSpan {
  TokenId id = 0;
  std::size_t begin = 0;
  std::size_t end = 0;
};

inline constexpr std::string_view kPadToken = "[PAD]";
inline constexpr std::string_view kUnkToken = "[UNK]";
inline constexpr std::string_view kMaskToken = "[MASK]";
inline constexpr std::string_view kColToken = "[COL]";
inline constexpr std::string_view kValToken = "[VAL]";

class Tokenizer {
 public:
  virtual ~Tokenizer() = default;

  virtual std::vector<TokenSpan> tokenize_spans(std::string_view text) const = 0;
  // Id of `word` when it is a single in-vocabulary token.
  virtual std::optional<TokenId> lookup(std::string_view word) const = 0;
  virtual const std::string& token_text(TokenId id) const = 0;
  virtual std::size_t vocab_size() const = 0;

  std::vector<TokenId> tokenize(std::string_view text) const;
  std::size_t count(std::string_view text) const { return tokenize_spans(text).size(); }
  // Space-joined token texts.
  std::string detokenize(const std::vector<TokenId>& ids) const;
  TokenId require(std::string_view word) const;
};

// Whitespace-then-word tokenizer over a fixed vocabulary. Each
// whitespace-delimited chunk is either a reserved tag or is split into runs
// of word characters (alphanumerics, '_', and non-ASCII bytes) and single
// punctuation characters. Pieces are looked up exactly, then lower-cased,
// then fall into the [UNK] bucket.
class WordTokenizer : public Tokenizer {
 public:
  explicit WordTokenizer(std::vector<std::string> vocab);

  std::vector<TokenSpan> tokenize_spans(std::string_view text) const override;
  std::optional<TokenId> lookup(std::string_view word) const override;
  const std::string& token_text(TokenId id) const override;
  std::size_t vocab_size() const override { return vocab_.size(); }

  const std::vector<std::string>& vocab() const { return vocab_; }
  TokenId unk_id() const { return unk_id_; }

 private:
  std::vector<std::string> vocab_;
  std::unordered_map<std::string, TokenId> index_;
  TokenId unk_id_ = 0;
};

// Splits text into word pieces using the WordTokenizer rules, without
// vocabulary lookup. Used to build vocabularies from data.
std::vector<std::string> word_pieces(std::string_view text);

}  // namespace promptattrib
