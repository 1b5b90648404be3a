#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "promptattrib/autograd.hpp"
#include "promptattrib/rendering.hpp"
#include "promptattrib/tokenizer.hpp"

namespace promptattrib {

struct BackendSpec {
  std::vector<std::string> vocab;
  std::size_t embedding_dim = 0;
  std::size_t max_length = 0;

  friend bool operator==(const BackendSpec&, const BackendSpec&) = default;
};

struct ForwardResult {
  Matrix hidden_states;  // sequence_length x embedding_dim
  Matrix mask_logits;    // num_masks x vocab_size
};

// Differentiable counterpart of ForwardResult.
struct ForwardVars {
  Var hidden_states;
  Var mask_logits;
};

enum class DropoutScope { kSoftOnly, kFullInput };

struct DropoutSpec {
  double ratio = 0.0;
  std::uint64_t seed = 0;
  DropoutScope scope = DropoutScope::kSoftOnly;
};

// What the prompt-tuning layers need from a masked LM: tokenization, the
// input embedding table, and a forward pass that accepts injected soft
// vectors and exposes hidden states and [MASK] logits.
class MaskedLanguageModel {
 public:
  virtual ~MaskedLanguageModel() = default;

  virtual const BackendSpec& spec() const = 0;
  virtual const Tokenizer& tokenizer() const = 0;
  // Row of the input embedding table.
  virtual std::vector<double> token_embedding(TokenId id) const = 0;

  // Records the forward pass on `tape`. `soft_embeddings` holds one row per
  // soft-bank slot referenced by the rendering.
  virtual ForwardVars forward(Tape& tape, const PromptRendering& rendering, Var soft_embeddings,
                              const std::optional<DropoutSpec>& dropout) = 0;

  virtual std::vector<Parameter*> parameters() = 0;
  // Freezes or unfreezes the backbone parameters.
  virtual void set_trainable(bool trainable) = 0;

  // Backend type tag and hyperparameters, stored in checkpoint manifests.
  virtual std::string kind() const = 0;

  // Value-level forward pass.
  ForwardResult forward_masked(const PromptRendering& rendering, const Matrix& soft_embeddings,
                               const std::optional<DropoutSpec>& dropout = std::nullopt);
};

struct ToyBackendOptions {
  std::uint64_t seed = 0;
  std::size_t embedding_dim = 32;
  std::size_t max_length = 128;
  std::size_t layers = 2;
  std::size_t ffn_dim = 64;
  // Appended to the built-in vocabulary (duplicates skipped) up to 512 entries.
  std::vector<std::string> extra_words;
};

inline constexpr std::size_t kToyMaxVocab = 512;

// Built-in toy vocabulary: reserved tags, template words, all label words,
// soft-prompt warm-start words, common attribute names, digits and
// punctuation.
std::vector<std::string> toy_base_vocabulary();

// Small pre-LN transformer masked LM with single-head self-attention and a
// tied-embedding MLM head. No internal dropout: all stochasticity comes from
// DropoutSpec.
class ToyMaskedLm : public MaskedLanguageModel {
 public:
  explicit ToyMaskedLm(ToyBackendOptions options);

  const BackendSpec& spec() const override { return spec_; }
  const Tokenizer& tokenizer() const override { return tokenizer_; }
  std::vector<double> token_embedding(TokenId id) const override;
  ForwardVars forward(Tape& tape, const PromptRendering& rendering, Var soft_embeddings,
                      const std::optional<DropoutSpec>& dropout) override;
  std::vector<Parameter*> parameters() override;
  void set_trainable(bool trainable) override;
  std::string kind() const override { return "toy"; }

  const ToyBackendOptions& options() const { return options_; }

 private:
  struct Block {
    Parameter ln1_gain, ln1_bias, wq, wk, wv, wo, ln2_gain, ln2_bias, w1, b1, w2, b2;
  };

  ToyBackendOptions options_;
  BackendSpec spec_;
  WordTokenizer tokenizer_;
  Parameter token_embeddings_;
  Parameter position_embeddings_;
  std::vector<Block> blocks_;
  Parameter final_gain_, final_bias_;
  Parameter output_bias_;
};

std::unique_ptr<ToyMaskedLm> make_toy_backend(std::uint64_t seed);
std::unique_ptr<ToyMaskedLm> make_toy_backend(ToyBackendOptions options);

}  // namespace promptattrib
