#include "promptattrib/backend.hpp"

#include <cmath>
#include <unordered_set>

#include "promptattrib/contrast.hpp"
#include "promptattrib/error.hpp"
#include "promptattrib/rng.hpp"

namespace promptattrib {

void validate_rendering(const PromptRendering& r, std::size_t bank_rows) {
  if (r.mask_positions.empty()) throw Error("rendering has no [MASK] position");
  for (std::size_t m : r.mask_positions) {
    if (m >= r.tokens.size()) {
      throw Error("mask position " + std::to_string(m) + " out of range for length " +
                  std::to_string(r.tokens.size()));
    }
    if (r.tokens[m].is_soft()) throw Error("mask position " + std::to_string(m) + " is a soft slot");
  }
  for (const TokenSlot& s : r.tokens) {
    if (s.is_soft() && s.index >= bank_rows) {
      throw Error("soft slot " + std::to_string(s.index) + " does not resolve in a bank of " +
                  std::to_string(bank_rows) + " rows");
    }
  }
}

ForwardResult MaskedLanguageModel::forward_masked(const PromptRendering& rendering,
                                                  const Matrix& soft_embeddings,
                                                  const std::optional<DropoutSpec>& dropout) {
  Tape tape;
  const Var soft = tape.constant(soft_embeddings);
  const ForwardVars out = forward(tape, rendering, soft, dropout);
  return {out.hidden_states.value(), out.mask_logits.value()};
}

std::vector<std::string> toy_base_vocabulary() {
  std::vector<std::string> v = {
      "[PAD]", "[UNK]", "[MASK]", "[COL]", "[VAL]", "__rest__",
      // templates
      "Are", "are", "and", "the", "is", "to",
      // binary label words
      "matched", "similar", "relevant", "mismatched", "different", "irrelevant",
      // ternary label words not already listed
      "same", "positive", "uncertain", "unclear", "neutral",
      // soft-prompt warm start
      "entity", "match", "question",
      // common attribute names
      "name", "title", "brand", "color", "city", "state", "country", "address", "street",
      "postalCode", "postalcode", "zip", "phone", "price", "category", "description",
      "manufacturer", "model", "year", "type", "size", "id", "url", "author", "venue",
  };
  for (char c = '0'; c <= '9'; ++c) v.emplace_back(1, c);
  for (const char* p : {".", ",", "-", "/", ":", ";", "(", ")", "'", "\"", "&", "+", "#", "!",
                        "?", "[", "]", "\\", "$", "%"}) {
    v.emplace_back(p);
  }
  return v;
}

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, double std, Rng& rng) {
  Matrix m(rows, cols);
  for (double& x : m.values()) x = std * standard_normal(rng);
  return m;
}

std::vector<std::string> build_vocab(const std::vector<std::string>& extra) {
  std::vector<std::string> vocab = toy_base_vocabulary();
  std::unordered_set<std::string> seen(vocab.begin(), vocab.end());
  for (const std::string& w : extra) {
    if (vocab.size() >= kToyMaxVocab) break;
    if (w.empty() || !seen.insert(w).second) continue;
    vocab.push_back(w);
  }
  return vocab;
}

}  // namespace

ToyMaskedLm::ToyMaskedLm(ToyBackendOptions options)
    : options_(std::move(options)),
      spec_{build_vocab(options_.extra_words), options_.embedding_dim, options_.max_length},
      tokenizer_(spec_.vocab) {
  if (options_.embedding_dim == 0 || options_.max_length == 0 || options_.layers == 0 ||
      options_.ffn_dim == 0) {
    throw Error("toy backend dimensions must be positive");
  }
  const std::size_t d = options_.embedding_dim;
  const std::size_t f = options_.ffn_dim;
  const std::size_t v = spec_.vocab.size();
  Rng rng(options_.seed);
  const double wstd = 1.0 / std::sqrt(static_cast<double>(d));
  token_embeddings_ = Parameter("tok_emb", random_matrix(v, d, 0.5, rng));
  position_embeddings_ = Parameter("pos_emb", random_matrix(options_.max_length, d, 0.1, rng));
  for (std::size_t l = 0; l < options_.layers; ++l) {
    const std::string p = "block" + std::to_string(l) + ".";
    Block b;
    b.ln1_gain = Parameter(p + "ln1_gain", Matrix(1, d, 1.0));
    b.ln1_bias = Parameter(p + "ln1_bias", Matrix(1, d));
    b.wq = Parameter(p + "wq", random_matrix(d, d, wstd, rng));
    b.wk = Parameter(p + "wk", random_matrix(d, d, wstd, rng));
    b.wv = Parameter(p + "wv", random_matrix(d, d, wstd, rng));
    b.wo = Parameter(p + "wo", random_matrix(d, d, wstd, rng));
    b.ln2_gain = Parameter(p + "ln2_gain", Matrix(1, d, 1.0));
    b.ln2_bias = Parameter(p + "ln2_bias", Matrix(1, d));
    b.w1 = Parameter(p + "w1", random_matrix(d, f, wstd, rng));
    b.b1 = Parameter(p + "b1", Matrix(1, f));
    b.w2 = Parameter(p + "w2", random_matrix(f, d, 1.0 / std::sqrt(static_cast<double>(f)), rng));
    b.b2 = Parameter(p + "b2", Matrix(1, d));
    blocks_.push_back(std::move(b));
  }
  final_gain_ = Parameter("final_gain", Matrix(1, d, 1.0));
  final_bias_ = Parameter("final_bias", Matrix(1, d));
  output_bias_ = Parameter("output_bias", Matrix(1, v));
  set_trainable(false);
}

std::vector<double> ToyMaskedLm::token_embedding(TokenId id) const {
  if (id >= spec_.vocab.size()) throw Error("token id " + std::to_string(id) + " out of range");
  const auto r = token_embeddings_.value.row(id);
  return {r.begin(), r.end()};
}

std::vector<Parameter*> ToyMaskedLm::parameters() {
  std::vector<Parameter*> out = {&token_embeddings_, &position_embeddings_};
  for (Block& b : blocks_) {
    for (Parameter* p : {&b.ln1_gain, &b.ln1_bias, &b.wq, &b.wk, &b.wv, &b.wo, &b.ln2_gain,
                         &b.ln2_bias, &b.w1, &b.b1, &b.w2, &b.b2}) {
      out.push_back(p);
    }
  }
  out.push_back(&final_gain_);
  out.push_back(&final_bias_);
  out.push_back(&output_bias_);
  return out;
}

void ToyMaskedLm::set_trainable(bool trainable) {
  for (Parameter* p : parameters()) p->trainable = trainable;
}

ForwardVars ToyMaskedLm::forward(Tape& tape, const PromptRendering& rendering, Var soft,
                                 const std::optional<DropoutSpec>& dropout) {
  const std::size_t d = spec_.embedding_dim;
  const std::size_t n = rendering.size();
  if (n > spec_.max_length) {
    throw Error("rendering length " + std::to_string(n) + " exceeds max_length " +
                std::to_string(spec_.max_length));
  }
  if (soft.value().cols() != d && soft.value().rows() != 0) {
    throw Error("soft embeddings have " + std::to_string(soft.value().cols()) +
                " columns, backend embedding_dim is " + std::to_string(d));
  }
  validate_rendering(rendering, soft.value().rows());
  for (const TokenSlot& s : rendering.tokens) {
    if (!s.is_soft() && s.index >= spec_.vocab.size()) {
      throw Error("token id " + std::to_string(s.index) + " out of range");
    }
  }

  const bool drop = dropout.has_value() && dropout->ratio > 0.0;
  Var injected = soft;
  if (drop && dropout->scope == DropoutScope::kSoftOnly && soft.value().rows() > 0) {
    injected = ag::mul_const(soft, dropout_mask(soft.value().rows(), d, dropout->ratio, dropout->seed));
  }

  const Var table = tape.parameter(token_embeddings_);
  std::vector<RowRef> refs;
  refs.reserve(n);
  for (const TokenSlot& s : rendering.tokens) {
    refs.push_back(s.is_soft() ? RowRef{injected, s.index} : RowRef{table, s.index});
  }
  Var x = ag::pick_rows(refs);
  if (drop && dropout->scope == DropoutScope::kFullInput) {
    x = ag::mul_const(x, dropout_mask(n, d, dropout->ratio, dropout->seed));
  }
  const Var pos_table = tape.parameter(position_embeddings_);
  std::vector<RowRef> pos_refs;
  pos_refs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) pos_refs.push_back({pos_table, i});
  x = ag::add(x, ag::pick_rows(pos_refs));

  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  for (Block& b : blocks_) {
    const Var h = ag::layer_norm(x, tape.parameter(b.ln1_gain), tape.parameter(b.ln1_bias));
    const Var q = ag::matmul(h, tape.parameter(b.wq));
    const Var k = ag::matmul(h, tape.parameter(b.wk));
    const Var v = ag::matmul(h, tape.parameter(b.wv));
    const Var attn = ag::softmax_rows(ag::scale(ag::matmul_bt(q, k), inv_sqrt_d));
    x = ag::add(x, ag::matmul(ag::matmul(attn, v), tape.parameter(b.wo)));
    const Var h2 = ag::layer_norm(x, tape.parameter(b.ln2_gain), tape.parameter(b.ln2_bias));
    const Var ff = ag::gelu(ag::add_row(ag::matmul(h2, tape.parameter(b.w1)), tape.parameter(b.b1)));
    x = ag::add(x, ag::add_row(ag::matmul(ff, tape.parameter(b.w2)), tape.parameter(b.b2)));
  }
  const Var hidden = ag::layer_norm(x, tape.parameter(final_gain_), tape.parameter(final_bias_));

  std::vector<RowRef> mask_refs;
  for (std::size_t m : rendering.mask_positions) mask_refs.push_back({hidden, m});
  const Var mask_hidden = ag::pick_rows(mask_refs);
  const Var logits = ag::add_row(ag::matmul_bt(mask_hidden, table), tape.parameter(output_bias_));
  return {hidden, logits};
}

std::unique_ptr<ToyMaskedLm> make_toy_backend(std::uint64_t seed) {
  ToyBackendOptions o;
  o.seed = seed;
  return std::make_unique<ToyMaskedLm>(std::move(o));
}

std::unique_ptr<ToyMaskedLm> make_toy_backend(ToyBackendOptions options) {
  return std::make_unique<ToyMaskedLm>(std::move(options));
}

}  // namespace promptattrib
