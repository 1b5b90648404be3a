#include "promptattrib/prompt.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "promptattrib/error.hpp"
#include "promptattrib/rng.hpp"
#include "promptattrib/serialize.hpp"

namespace promptattrib {

TemplateId parse_template(std::string_view name) {
  if (name == "T1" || name == "t1") return TemplateId::kT1;
  if (name == "T2" || name == "t2") return TemplateId::kT2;
  if (name == "continuous") return TemplateId::kContinuous;
  throw UsageError("unknown template \"" + std::string(name) + "\" (expected T1, T2 or continuous)");
}

std::string template_name(TemplateId id) {
  switch (id) {
    case TemplateId::kT1: return "T1";
    case TemplateId::kT2: return "T2";
    case TemplateId::kContinuous: return "continuous";
  }
  return "?";
}

std::size_t entity_template_overhead(TemplateId id, std::size_t soft_per_slot) {
  switch (id) {
    case TemplateId::kT1: return 4;  // Are, and, the, [MASK]
    case TemplateId::kT2: return 3;  // is, [MASK], to
    case TemplateId::kContinuous: return 3 * soft_per_slot + 1;
  }
  return 0;
}

namespace {

class Builder {
 public:
  explicit Builder(const Tokenizer& tok) : tok_(tok) {}

  void text(std::string_view s) {
    for (TokenId id : tok_.tokenize(s)) r_.tokens.push_back(TokenSlot::vocab(id));
  }
  void mask() {
    r_.mask_positions.push_back(r_.tokens.size());
    r_.tokens.push_back(TokenSlot::vocab(tok_.require(kMaskToken)));
  }
  void soft(std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) {
      const auto row = static_cast<std::uint32_t>(next_soft_++);
      r_.soft_slot_ids.push_back(row);
      r_.tokens.push_back(TokenSlot::soft(row));
    }
  }
  PromptRendering finish(std::size_t budget) {
    if (r_.tokens.size() > budget) {
      throw Error("rendered prompt has " + std::to_string(r_.tokens.size()) +
                  " tokens, over the budget of " + std::to_string(budget));
    }
    return std::move(r_);
  }

 private:
  const Tokenizer& tok_;
  PromptRendering r_;
  std::size_t next_soft_ = 0;
};

std::size_t half_budget(std::size_t budget, std::size_t overhead) {
  if (budget <= overhead) {
    throw Error("token budget " + std::to_string(budget) + " leaves no room after " +
                std::to_string(overhead) + " template tokens");
  }
  return (budget - overhead) / 2;
}

std::string fit_entity(const Entity& e, std::size_t half, const Tokenizer& tok) {
  try {
    return truncate_to_budget(serialize_entity(e), half, tok).text;
  } catch (const Error& err) {
    throw Error("entity \"" + e.id + "\" does not fit its half of the prompt budget: " +
                err.what());
  }
}

}  // namespace

PromptRendering render_entity_prompt(const CandidatePair& pair, TemplateId template_id,
                                     std::size_t budget, const Tokenizer& tokenizer,
                                     std::size_t soft_per_slot) {
  const std::size_t half =
      half_budget(budget, entity_template_overhead(template_id, soft_per_slot));
  const std::string left = fit_entity(pair.left, half, tokenizer);
  const std::string right = fit_entity(pair.right, half, tokenizer);
  Builder b(tokenizer);
  switch (template_id) {
    case TemplateId::kT1:
      b.text("Are");
      b.text(left);
      b.text("and");
      b.text(right);
      b.text("the");
      b.mask();
      break;
    case TemplateId::kT2:
      b.text(left);
      b.text("is");
      b.mask();
      b.text("to");
      b.text(right);
      break;
    case TemplateId::kContinuous:
      b.soft(soft_per_slot);
      b.text(left);
      b.soft(soft_per_slot);
      b.mask();
      b.soft(soft_per_slot);
      b.text(right);
      break;
  }
  return b.finish(budget);
}

PromptRendering render_attribute_prompt(const AlignedAttributePair& pair, std::size_t budget,
                                        const Tokenizer& tokenizer, bool continuous,
                                        std::size_t soft_per_slot) {
  const std::size_t overhead = 3 + (continuous ? 3 * soft_per_slot : 0);
  const std::size_t half = half_budget(budget, overhead);
  const auto segment = [&](const Attribute& a) {
    const SerializedEntity s{serialize_attribute(pair.key, a.value), ""};
    return truncate_to_budget(s, half, tokenizer).text;
  };
  const std::string left = segment(pair.left);
  const std::string right = segment(pair.right);
  Builder b(tokenizer);
  if (continuous) b.soft(soft_per_slot);
  b.text(left);
  if (continuous) b.soft(soft_per_slot);
  b.text("is");
  b.mask();
  b.text("to");
  if (continuous) b.soft(soft_per_slot);
  b.text(right);
  return b.finish(budget);
}

namespace {

Matrix gaussian(std::size_t r, std::size_t c, double std, Rng& rng) {
  Matrix m(r, c);
  for (double& x : m.values()) x = std * standard_normal(rng);
  return m;
}

}  // namespace

SoftPromptBank::SoftPromptBank(std::string name, std::size_t rows, std::size_t dim,
                               std::uint64_t seed)
    : name_(std::move(name)) {
  if (dim == 0) throw Error("soft prompt dimension must be positive");
  Rng rng(seed);
  const std::size_t h = std::max<std::size_t>(1, dim / 2);
  const double s_in = 1.0 / std::sqrt(static_cast<double>(dim));
  const double s_h = 1.0 / std::sqrt(static_cast<double>(h));
  vectors_ = Parameter(name_ + ".vectors", gaussian(rows, dim, 0.5, rng));
  for (Lstm* l : {&forward_, &backward_}) {
    const std::string p = name_ + (l == &forward_ ? ".lstm_fwd." : ".lstm_bwd.");
    l->w_ih = Parameter(p + "w_ih", gaussian(dim, 4 * h, s_in, rng));
    l->w_hh = Parameter(p + "w_hh", gaussian(h, 4 * h, s_h, rng));
    Matrix bias(1, 4 * h);
    for (std::size_t j = h; j < 2 * h; ++j) bias(0, j) = 1.0;  // forget gate
    l->bias = Parameter(p + "bias", std::move(bias));
  }
  head_w1_ = Parameter(name_ + ".head_w1", gaussian(2 * h, dim, 1.0 / std::sqrt(2.0 * h), rng));
  head_b1_ = Parameter(name_ + ".head_b1", Matrix(1, dim));
  head_w2_ = Parameter(name_ + ".head_w2", gaussian(dim, dim, 0.01 * s_in, rng));
  head_b2_ = Parameter(name_ + ".head_b2", Matrix(1, dim));
}

void SoftPromptBank::warm_start(const MaskedLanguageModel& backend,
                                const std::vector<std::string>& words) {
  if (words.empty()) return;
  if (backend.spec().embedding_dim != dim()) {
    throw Error("soft bank dimension " + std::to_string(dim()) +
                " does not match backend embedding_dim " +
                std::to_string(backend.spec().embedding_dim));
  }
  for (std::size_t i = 0; i < rows(); ++i) {
    const std::vector<double> e =
        backend.token_embedding(backend.tokenizer().require(words[i % words.size()]));
    std::copy(e.begin(), e.end(), vectors_.value.row(i).begin());
  }
}

std::vector<Parameter*> SoftPromptBank::parameters() {
  return {&vectors_,       &forward_.w_ih,  &forward_.w_hh,  &forward_.bias,
          &backward_.w_ih, &backward_.w_hh, &backward_.bias, &head_w1_,
          &head_b1_,       &head_w2_,       &head_b2_};
}

std::vector<const Parameter*> SoftPromptBank::parameters() const {
  auto ps = const_cast<SoftPromptBank*>(this)->parameters();
  return {ps.begin(), ps.end()};
}

namespace {

struct LstmVars {
  Var w_ih, w_hh, bias;
};

std::vector<Var> run_lstm(Tape& tape, const LstmVars& l, Var inputs, bool reverse) {
  const std::size_t n = inputs.value().rows();
  const std::size_t h = l.w_hh.value().rows();
  std::vector<Var> out(n);
  Var hs = tape.constant(Matrix(1, h));
  Var cs = tape.constant(Matrix(1, h));
  const Var projected = ag::matmul(inputs, l.w_ih);
  for (std::size_t step = 0; step < n; ++step) {
    const std::size_t t = reverse ? n - 1 - step : step;
    const Var gates = ag::add(ag::add_row(ag::row(projected, t), l.bias), ag::matmul(hs, l.w_hh));
    const Var i = ag::sigmoid(ag::slice_cols(gates, 0, h));
    const Var f = ag::sigmoid(ag::slice_cols(gates, h, 2 * h));
    const Var g = ag::tanh(ag::slice_cols(gates, 2 * h, 3 * h));
    const Var o = ag::sigmoid(ag::slice_cols(gates, 3 * h, 4 * h));
    cs = ag::add(ag::mul(f, cs), ag::mul(i, g));
    hs = ag::mul(o, ag::tanh(cs));
    out[t] = hs;
  }
  return out;
}

}  // namespace

Var encode_soft_prompts(Tape& tape, SoftPromptBank& bank) {
  for (const Parameter* p : bank.parameters()) {
    if (!p->value.all_finite()) {
      throw Error("soft prompt parameter " + p->name + " has non-finite values");
    }
  }
  const Var raw = tape.parameter(bank.vectors_);
  if (bank.rows() == 0) return raw;
  const LstmVars fwd{tape.parameter(bank.forward_.w_ih), tape.parameter(bank.forward_.w_hh),
                     tape.parameter(bank.forward_.bias)};
  const LstmVars bwd{tape.parameter(bank.backward_.w_ih), tape.parameter(bank.backward_.w_hh),
                     tape.parameter(bank.backward_.bias)};
  const std::vector<Var> hf = run_lstm(tape, fwd, raw, false);
  const std::vector<Var> hb = run_lstm(tape, bwd, raw, true);
  std::vector<RowRef> rows;
  std::vector<Var> cat;
  cat.reserve(hf.size());
  for (std::size_t t = 0; t < hf.size(); ++t) cat.push_back(ag::concat_cols(hf[t], hb[t]));
  for (const Var& c : cat) rows.push_back({c, 0});
  const Var context = ag::pick_rows(rows);
  const Var hidden = ag::tanh(
      ag::add_row(ag::matmul(context, tape.parameter(bank.head_w1_)), tape.parameter(bank.head_b1_)));
  const Var delta =
      ag::add_row(ag::matmul(hidden, tape.parameter(bank.head_w2_)), tape.parameter(bank.head_b2_));
  return ag::add(raw, delta);
}

Matrix encode_soft_prompts(const SoftPromptBank& bank) {
  SoftPromptBank copy = bank;
  Tape tape;
  return encode_soft_prompts(tape, copy).value();
}

Verbalizer::Verbalizer(std::vector<std::string> labels, std::vector<std::vector<std::string>> words,
                       const Tokenizer& tokenizer)
    : labels_(std::move(labels)), words_(std::move(words)) {
  if (labels_.size() != words_.size() || labels_.empty()) {
    throw Error("verbalizer needs one word set per label");
  }
  const auto unk = tokenizer.lookup(kUnkToken);
  std::set<std::string> seen_words;
  std::set<TokenId> seen_ids;
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (words_[i].empty()) throw Error("label \"" + labels_[i] + "\" has an empty word set");
    std::vector<std::string> kept;
    std::vector<TokenId> ids;
    for (const std::string& w : words_[i]) {
      if (!seen_words.insert(w).second) {
        throw Error("label word \"" + w + "\" appears under more than one label");
      }
      const auto toks = tokenizer.tokenize(w);
      if (toks.size() != 1 || (unk && toks[0] == *unk)) continue;
      if (!seen_ids.insert(toks[0]).second) {
        throw Error("label word \"" + w + "\" resolves to a token already used by another word");
      }
      kept.push_back(w);
      ids.push_back(toks[0]);
    }
    if (ids.empty()) {
      throw Error("no word of label \"" + labels_[i] + "\" is a single vocabulary token");
    }
    resolved_words_.push_back(std::move(kept));
    ids_.push_back(std::move(ids));
  }
}

Verbalizer make_binary_verbalizer(const Tokenizer& tokenizer, const BinaryLabelWords& words) {
  return Verbalizer({"yes", "no"}, {words.yes, words.no}, tokenizer);
}

Verbalizer make_ternary_verbalizer(const Tokenizer& tokenizer, const TernaryLabelWords& words) {
  return Verbalizer({"Same", "Different", "Ambiguous"},
                    {words.same, words.different, words.ambiguous}, tokenizer);
}

std::vector<double> verbalize(std::span<const double> dist, const Verbalizer& verbalizer) {
  double total = 0.0;
  for (double p : dist) {
    if (!(p >= 0.0)) throw Error("mask distribution has a negative or NaN entry");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-6) {
    throw Error("mask distribution sums to " + std::to_string(total) + ", expected 1");
  }
  std::vector<double> scores;
  double z = 0.0;
  for (const auto& ids : verbalizer.resolved_ids()) {
    double s = 0.0;
    for (TokenId id : ids) {
      if (id >= dist.size()) throw Error("verbalizer id out of range for the distribution");
      s += dist[id];
    }
    scores.push_back(s);
    z += s;
  }
  if (z <= 0.0) throw Error("all label scores are zero; verbalizer and vocabulary disagree");
  for (double& s : scores) s /= z;
  return scores;
}

Var verbalize(Var mask_logits_row, const Verbalizer& verbalizer) {
  return ag::group_probs(mask_logits_row, verbalizer.resolved_ids());
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) s += (out[i] = std::exp(logits[i] - mx));
  for (double& v : out) v /= s;
  return out;
}

}  // namespace promptattrib
