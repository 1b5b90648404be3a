#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "promptattrib/autograd.hpp"
#include "promptattrib/backend.hpp"
#include "promptattrib/corpus.hpp"
#include "promptattrib/rendering.hpp"

namespace promptattrib {

// T1: "Are <e> and <e'> the [MASK]"
// T2: "<e> is [MASK] to <e'>"
// Continuous: "<p soft> <e> <p soft> [MASK] <p soft> <e'>"
enum class TemplateId { kT1, kT2, kContinuous };

TemplateId parse_template(std::string_view name);
std::string template_name(TemplateId id);

inline constexpr std::size_t kDefaultSoftPerSlot = 3;

// Number of template tokens (including soft slots and the mask) added around
// the two serialized entities.
std::size_t entity_template_overhead(TemplateId id, std::size_t soft_per_slot);

// Each entity is truncated to half of what remains of `budget` after the
// template tokens. Throws when that half cannot hold the entity's attributes.
PromptRendering render_entity_prompt(const CandidatePair& pair, TemplateId template_id,
                                     std::size_t budget, const Tokenizer& tokenizer,
                                     std::size_t soft_per_slot = kDefaultSoftPerSlot);

// "[COL] k [VAL] v1 is [MASK] to [COL] k [VAL] v2". In continuous mode each of
// the two segments and the "is [MASK] to" span is preceded by p soft slots.
PromptRendering render_attribute_prompt(const AlignedAttributePair& pair, std::size_t budget,
                                        const Tokenizer& tokenizer, bool continuous,
                                        std::size_t soft_per_slot = kDefaultSoftPerSlot);

// Learnable soft-prompt vectors plus their P-tuning encoder: a bidirectional
// LSTM followed by a two-layer feedforward head. The encoder output is added
// to the raw vectors, so a freshly initialized bank injects (almost exactly)
// its warm-start embeddings.
class SoftPromptBank {
 public:
  SoftPromptBank() = default;
  SoftPromptBank(std::string name, std::size_t rows, std::size_t dim, std::uint64_t seed);

  std::size_t rows() const { return vectors_.value.rows(); }
  std::size_t dim() const { return vectors_.value.cols(); }
  const std::string& name() const { return name_; }

  // Initializes row i from the backend embedding of words[i % words.size()].
  void warm_start(const MaskedLanguageModel& backend, const std::vector<std::string>& words);

  Parameter& vectors() { return vectors_; }
  const Parameter& vectors() const { return vectors_; }
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;

 private:
  struct Lstm {
    Parameter w_ih, w_hh, bias;
  };
  friend Var encode_soft_prompts(Tape& tape, SoftPromptBank& bank);

  std::string name_;
  Parameter vectors_;
  Lstm forward_, backward_;
  Parameter head_w1_, head_b1_, head_w2_, head_b2_;
};

// Contextualized soft embeddings, same shape as the bank. Throws on
// non-finite parameters.
Var encode_soft_prompts(Tape& tape, SoftPromptBank& bank);
Matrix encode_soft_prompts(const SoftPromptBank& bank);

// Label -> label-word sets and their single-token vocabulary ids.
class Verbalizer {
 public:
  // Words that are not a single in-vocabulary token are dropped; a label left
  // without ids, or a word shared by two labels, is an error.
  Verbalizer(std::vector<std::string> labels, std::vector<std::vector<std::string>> words,
             const Tokenizer& tokenizer);

  const std::vector<std::string>& labels() const { return labels_; }
  const std::vector<std::vector<std::string>>& label_words() const { return words_; }
  const std::vector<std::vector<std::string>>& resolved_words() const { return resolved_words_; }
  const std::vector<std::vector<TokenId>>& resolved_ids() const { return ids_; }
  std::size_t size() const { return labels_.size(); }

 private:
  std::vector<std::string> labels_;
  std::vector<std::vector<std::string>> words_;
  std::vector<std::vector<std::string>> resolved_words_;
  std::vector<std::vector<TokenId>> ids_;
};

struct BinaryLabelWords {
  std::vector<std::string> yes = {"matched", "similar", "relevant"};
  std::vector<std::string> no = {"mismatched", "different", "irrelevant"};
};

struct TernaryLabelWords {
  std::vector<std::string> same = {"same", "similar", "positive"};
  std::vector<std::string> different = {"mismatched", "different", "irrelevant"};
  std::vector<std::string> ambiguous = {"uncertain", "unclear", "neutral"};
};

// Labels {"yes", "no"}.
Verbalizer make_binary_verbalizer(const Tokenizer& tokenizer, const BinaryLabelWords& words = {});
// Labels {"Same", "Different", "Ambiguous"}.
Verbalizer make_ternary_verbalizer(const Tokenizer& tokenizer,
                                   const TernaryLabelWords& words = {});

// Sums the mask distribution over each label's ids and renormalizes over the
// labels. Output is aligned with verbalizer.labels().
std::vector<double> verbalize(std::span<const double> mask_distribution,
                              const Verbalizer& verbalizer);
// Same computation from a 1 x V logit row, differentiable.
Var verbalize(Var mask_logits_row, const Verbalizer& verbalizer);

// Row-wise softmax of a logit row.
std::vector<double> softmax(std::span<const double> logits);

}  // namespace promptattrib
