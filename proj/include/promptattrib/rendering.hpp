#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "promptattrib/tokenizer.hpp"

namespace promptattrib {

// One position of a prompt: a vocabulary token or a reference to a row of a
// soft-prompt bank.
struct TokenSlot {
  enum class Kind : std::uint8_t { kVocab, kSoft };

  Kind kind = Kind::kVocab;
  std::uint32_t index = 0;

  static TokenSlot vocab(TokenId id) { return {Kind::kVocab, id}; }
  static TokenSlot soft(std::uint32_t row) { return {Kind::kSoft, row}; }
  bool is_soft() const { return kind == Kind::kSoft; }

  friend bool operator==(const TokenSlot&, const TokenSlot&) = default;
};

// A prompt ready for the masked LM: T(x) with its [MASK] positions.
struct PromptRendering {
  std::vector<TokenSlot> tokens;
  std::vector<std::size_t> mask_positions;
  std::vector<std::size_t> soft_slot_ids;  // bank rows, in order of appearance

  std::size_t size() const { return tokens.size(); }
};

// Checks that at least one mask exists, mask positions are in range and point
// at vocabulary slots, and every soft reference is below bank_rows.
void validate_rendering(const PromptRendering& r, std::size_t bank_rows);

}  // namespace promptattrib
