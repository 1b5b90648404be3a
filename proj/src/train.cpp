#include "promptattrib/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>

#include "json.hpp"
#include "promptattrib/contrast.hpp"
#include "promptattrib/error.hpp"
#include "promptattrib/optim.hpp"
#include "promptattrib/rng.hpp"
#include "promptattrib/text.hpp"

namespace promptattrib {
namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string scope_name(DropoutScope s) {
  return s == DropoutScope::kSoftOnly ? "soft_only" : "full_input";
}

DropoutScope parse_scope(const std::string& s) {
  if (s == "soft_only") return DropoutScope::kSoftOnly;
  if (s == "full_input") return DropoutScope::kFullInput;
  throw UsageError("config key dropout_scope: expected soft_only or full_input, got \"" + s + "\"");
}

std::size_t get_size(const Config& c, const std::string& key, std::size_t fallback) {
  const std::int64_t v = c.get_int(key, static_cast<std::int64_t>(fallback));
  if (v < 0) throw UsageError("config key " + key + " must be non-negative");
  return static_cast<std::size_t>(v);
}

const std::vector<std::string> kWarmStartWords = {"entity", "match", "question"};

}  // namespace

const std::vector<std::string>& train_config_keys() {
  static const std::vector<std::string> keys = {
      "train.learning_rate", "train.epochs", "train.batch_size", "seed", "train.alpha",
      "contrastive.lambda", "contrastive.enabled", "contrastive.ratio", "dropout_scope",
      "train.low_resource_fraction", "fuzzy.ambiguous_policy", "prompt.template",
      "prompt.soft_tokens", "prompt.token_budget", "backbone.trainable", "prompt.shared_bank",
      "fuzzy.smooth_max_tau", "train.grad_clip", "train.patience", "verbalizer.yes",
      "verbalizer.no", "verbalizer.same", "verbalizer.different", "verbalizer.ambiguous"};
  return keys;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw UsageError("train.learning_rate must be positive");
  if (epochs == 0) throw UsageError("train.epochs must be positive");
  if (batch_size == 0) throw UsageError("train.batch_size must be positive");
  if (!(alpha >= 0.0)) throw UsageError("train.alpha must be >= 0");
  if (!(lambda >= 0.0)) throw UsageError("contrastive.lambda must be >= 0");
  if (!(dropout_ratio >= 0.0 && dropout_ratio < 1.0)) {
    throw UsageError("contrastive.ratio must be in [0, 1)");
  }
  if (!(low_resource_fraction > 0.0 && low_resource_fraction <= 1.0)) {
    throw UsageError("train.low_resource_fraction must be in (0, 1]");
  }
  if (template_id == TemplateId::kContinuous && soft_tokens == 0) {
    throw UsageError("prompt.soft_tokens must be positive for the continuous template");
  }
  if (token_budget == 0) throw UsageError("prompt.token_budget must be positive");
  if (!(smooth_max_tau >= 0.0)) throw UsageError("fuzzy.smooth_max_tau must be >= 0");
  if (!(grad_clip >= 0.0)) throw UsageError("train.grad_clip must be >= 0");
}

TrainConfig TrainConfig::from_config(const Config& c) {
  TrainConfig t;
  t.learning_rate = c.get_double("train.learning_rate", t.learning_rate);
  t.epochs = get_size(c, "train.epochs", t.epochs);
  t.batch_size = get_size(c, "train.batch_size", t.batch_size);
  t.seed = static_cast<std::uint64_t>(c.get_int("seed", static_cast<std::int64_t>(t.seed)));
  t.alpha = c.get_double("train.alpha", t.alpha);
  t.lambda = c.get_double("contrastive.lambda", t.lambda);
  t.contrastive_enabled = c.get_bool("contrastive.enabled", t.contrastive_enabled);
  t.dropout_ratio = c.get_double("contrastive.ratio", t.dropout_ratio);
  t.dropout_scope = parse_scope(c.get_string("dropout_scope", scope_name(t.dropout_scope)));
  t.low_resource_fraction = c.get_double("train.low_resource_fraction", t.low_resource_fraction);
  t.ambiguous_policy = parse_ambiguous_policy(
      c.get_string("fuzzy.ambiguous_policy", ambiguous_policy_name(t.ambiguous_policy)));
  t.template_id = parse_template(c.get_string("prompt.template", template_name(t.template_id)));
  t.soft_tokens = get_size(c, "prompt.soft_tokens", t.soft_tokens);
  t.token_budget = get_size(c, "prompt.token_budget", t.token_budget);
  t.train_backbone = c.get_bool("backbone.trainable", t.train_backbone);
  t.shared_bank = c.get_bool("prompt.shared_bank", t.shared_bank);
  t.smooth_max_tau = c.get_double("fuzzy.smooth_max_tau", t.smooth_max_tau);
  t.grad_clip = c.get_double("train.grad_clip", t.grad_clip);
  t.patience = get_size(c, "train.patience", t.patience);
  t.binary_words.yes = c.get_list("verbalizer.yes", t.binary_words.yes);
  t.binary_words.no = c.get_list("verbalizer.no", t.binary_words.no);
  t.ternary_words.same = c.get_list("verbalizer.same", t.ternary_words.same);
  t.ternary_words.different = c.get_list("verbalizer.different", t.ternary_words.different);
  t.ternary_words.ambiguous = c.get_list("verbalizer.ambiguous", t.ternary_words.ambiguous);
  t.validate();
  return t;
}

Config TrainConfig::to_config() const {
  Config c;
  c.set("train.learning_rate", format_double(learning_rate));
  c.set("train.epochs", std::to_string(epochs));
  c.set("train.batch_size", std::to_string(batch_size));
  c.set("seed", std::to_string(seed));
  c.set("train.alpha", format_double(alpha));
  c.set("contrastive.lambda", format_double(lambda));
  c.set("contrastive.enabled", contrastive_enabled ? "true" : "false");
  c.set("contrastive.ratio", format_double(dropout_ratio));
  c.set("dropout_scope", scope_name(dropout_scope));
  c.set("train.low_resource_fraction", format_double(low_resource_fraction));
  c.set("fuzzy.ambiguous_policy", ambiguous_policy_name(ambiguous_policy));
  c.set("prompt.template", template_name(template_id));
  c.set("prompt.soft_tokens", std::to_string(soft_tokens));
  c.set("prompt.token_budget", std::to_string(token_budget));
  c.set("backbone.trainable", train_backbone ? "true" : "false");
  c.set("prompt.shared_bank", shared_bank ? "true" : "false");
  c.set("fuzzy.smooth_max_tau", format_double(smooth_max_tau));
  c.set("train.grad_clip", format_double(grad_clip));
  c.set("train.patience", std::to_string(patience));
  c.set("verbalizer.yes", join(binary_words.yes, ","));
  c.set("verbalizer.no", join(binary_words.no, ","));
  c.set("verbalizer.same", join(ternary_words.same, ","));
  c.set("verbalizer.different", join(ternary_words.different, ","));
  c.set("verbalizer.ambiguous", join(ternary_words.ambiguous, ","));
  return c;
}

std::string loss_record_line(const LossRecord& r) {
  nlohmann::ordered_json j;
  j["epoch"] = r.epoch;
  j["total"] = r.total;
  j["entity"] = r.entity;
  if (r.fuzzy) j["fuzzy"] = *r.fuzzy;
  if (r.contrast) j["contrast"] = *r.contrast;
  if (r.valid_f1) j["valid_f1"] = *r.valid_f1;
  return j.dump();
}

double fuse_match_score(double entity_head_prob, double fuzzy_match_prob) {
  return 0.5 * (entity_head_prob + fuzzy_match_prob);
}

int decide_label(double match_score) { return match_score >= 0.5 ? 1 : 0; }

namespace {

std::size_t bank_rows(const TrainConfig& c) {
  return c.template_id == TemplateId::kContinuous ? 3 * c.soft_tokens : 0;
}

SoftPromptBank make_bank(const std::string& name, const TrainConfig& c,
                         const MaskedLanguageModel& backend, std::uint64_t salt) {
  SoftPromptBank bank(name, bank_rows(c), backend.spec().embedding_dim, mix_seed(c.seed, salt));
  bank.warm_start(backend, kWarmStartWords);
  return bank;
}

}  // namespace

PromptAttribModel::PromptAttribModel(std::unique_ptr<MaskedLanguageModel> backend,
                                     TrainConfig config)
    : backend_(std::move(backend)),
      config_(std::move(config)),
      entity_bank_(make_bank("entity_bank", config_, *backend_, 101)),
      attribute_bank_(make_bank("attribute_bank", config_, *backend_, 202)),
      binary_(make_binary_verbalizer(backend_->tokenizer(), config_.binary_words)),
      ternary_(make_ternary_verbalizer(backend_->tokenizer(), config_.ternary_words)) {
  config_.validate();
  if (config_.token_budget > backend_->spec().max_length) {
    throw UsageError("prompt.token_budget " + std::to_string(config_.token_budget) +
                     " exceeds the backend max_length " +
                     std::to_string(backend_->spec().max_length));
  }
  backend_->set_trainable(config_.train_backbone);
}

std::vector<Parameter*> PromptAttribModel::bank_parameters() {
  std::vector<Parameter*> out = entity_bank_.parameters();
  if (!config_.shared_bank) {
    for (Parameter* p : attribute_bank_.parameters()) out.push_back(p);
  }
  return out;
}

std::vector<Parameter*> PromptAttribModel::parameters() {
  std::vector<Parameter*> out = backend_->parameters();
  for (Parameter* p : bank_parameters()) out.push_back(p);
  return out;
}

PromptRendering PromptAttribModel::entity_rendering(const CandidatePair& pair) const {
  return render_entity_prompt(pair, config_.template_id, config_.token_budget,
                              backend_->tokenizer(), config_.soft_tokens);
}

std::vector<PromptRendering> PromptAttribModel::attribute_renderings(
    const std::vector<AlignedAttributePair>& aligned) const {
  std::vector<PromptRendering> out;
  out.reserve(aligned.size());
  const bool continuous = config_.template_id == TemplateId::kContinuous;
  for (const auto& ap : aligned) {
    out.push_back(render_attribute_prompt(ap, config_.token_budget, backend_->tokenizer(),
                                          continuous, config_.soft_tokens));
  }
  return out;
}

namespace {

struct EncodedBanks {
  Var entity;
  Var attribute;
};

EncodedBanks encode_banks(Tape& tape, PromptAttribModel& model) {
  EncodedBanks b;
  b.entity = encode_soft_prompts(tape, model.entity_bank());
  b.attribute = model.config().shared_bank ? b.entity
                                           : encode_soft_prompts(tape, model.attribute_bank());
  return b;
}

// Renderings for one pair, computed once per run.
struct PreparedPair {
  const CandidatePair* pair = nullptr;
  PromptRendering entity;
  std::vector<AlignedAttributePair> aligned;
  std::vector<PromptRendering> attributes;
};

PreparedPair prepare(const PromptAttribModel& model, const CandidatePair& pair) {
  PreparedPair p;
  p.pair = &pair;
  p.entity = model.entity_rendering(pair);
  p.aligned = align_attributes(pair);
  p.attributes = model.attribute_renderings(p.aligned);
  return p;
}

// K x 3 ternary beliefs for the aligned attribute pairs.
Var attribute_beliefs(Tape& tape, PromptAttribModel& model, const PreparedPair& p, Var bank) {
  std::vector<Var> rows;
  for (const PromptRendering& r : p.attributes) {
    const ForwardVars f = model.backend().forward(tape, r, bank, std::nullopt);
    rows.push_back(verbalize(ag::row(f.mask_logits, 0), model.ternary_verbalizer()));
  }
  std::vector<RowRef> refs;
  for (const Var& v : rows) refs.push_back({v, 0});
  return ag::pick_rows(refs);
}

struct PairLoss {
  Var total;
  double entity = 0.0;
  std::optional<double> fuzzy;
  std::optional<double> contrast;
};

PairLoss pair_loss(Tape& tape, PromptAttribModel& model, const PreparedPair& p,
                   const EncodedBanks& banks, std::uint64_t view_seed) {
  const TrainConfig& cfg = model.config();
  const int y = *p.pair->label;
  PairLoss out;

  const ForwardVars ent = model.backend().forward(tape, p.entity, banks.entity, std::nullopt);
  const Var probs = verbalize(ag::row(ent.mask_logits, 0), model.binary_verbalizer());
  const Var l_entity = ag::scale(ag::log_clamped(ag::element(probs, 0, y == 1 ? 0 : 1), kFuzzyEps), -1.0);
  out.entity = l_entity.value()(0, 0);
  std::vector<Var> terms = {l_entity};

  if (cfg.alpha > 0.0 && !p.attributes.empty()) {
    const Var beliefs = attribute_beliefs(tape, model, p, banks.attribute);
    const Var post = induce_posterior(beliefs, FuzzyOptions{cfg.smooth_max_tau});
    const TernaryLabel t = y == 1 ? TernaryLabel::kSame : TernaryLabel::kDifferent;
    const Var l_fuzzy = ag::scale(
        ag::log_clamped(ag::element(post, 0, static_cast<std::size_t>(t)), kFuzzyEps), -1.0);
    out.fuzzy = l_fuzzy.value()(0, 0);
    terms.push_back(ag::scale(l_fuzzy, cfg.alpha));
  } else if (cfg.alpha > 0.0) {
    out.fuzzy = 0.0;
  }

  if (cfg.lambda > 0.0 && cfg.contrastive_enabled) {
    const std::size_t m = p.entity.mask_positions.front();
    Var z[2];
    for (int v = 0; v < 2; ++v) {
      const DropoutSpec spec{cfg.dropout_ratio, mix_seed(view_seed, static_cast<std::uint64_t>(v) + 1),
                             cfg.dropout_scope};
      const ForwardVars f = model.backend().forward(tape, p.entity, banks.entity, spec);
      z[v] = ag::row(f.hidden_states, m);
    }
    const Var l_contrast = contrastive_loss(z[0], z[1]);
    out.contrast = l_contrast.value()(0, 0);
    terms.push_back(ag::scale(l_contrast, cfg.lambda));
  }
  out.total = ag::add_scalars(terms);
  return out;
}

}  // namespace

std::vector<LossRecord> train(PromptAttribModel& model, const Dataset& train_set,
                              const Dataset* valid_set, const EpochCallback& on_epoch) {
  const TrainConfig& cfg = model.config();
  for (std::size_t i = 0; i < train_set.pairs.size(); ++i) {
    const CandidatePair& p = train_set.pairs[i];
    if (!p.label) {
      throw Error("training pair " + std::to_string(i) + " (" + p.left.id + ", " + p.right.id +
                  ") has no label");
    }
  }
  if (train_set.pairs.empty()) throw Error("training set is empty");

  Dataset train_split = train_set;
  train_split.split = Split::kTrain;
  const Dataset sampled = cfg.low_resource_fraction < 1.0
                              ? sample_low_resource(train_split, cfg.low_resource_fraction,
                                                    mix_seed(cfg.seed, 303))
                              : train_split;

  std::vector<PreparedPair> prepared;
  prepared.reserve(sampled.pairs.size());
  for (const CandidatePair& p : sampled.pairs) prepared.push_back(prepare(model, p));

  std::vector<Parameter*> params = model.parameters();
  Adam optimizer(params, AdamOptions{cfg.learning_rate});
  optimizer.zero_grad();

  std::vector<LossRecord> trace;
  std::optional<double> best_f1;
  std::size_t since_best = 0;
  const std::size_t n = prepared.size();
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(mix_seed(cfg.seed, 404, epoch));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[uniform_below(rng, i)]);

    double sum_total = 0.0, sum_entity = 0.0, sum_fuzzy = 0.0, sum_contrast = 0.0;
    bool has_fuzzy = false, has_contrast = false;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t end = std::min(n, start + cfg.batch_size);
      Tape tape;
      const EncodedBanks banks = encode_banks(tape, model);
      std::vector<Var> losses;
      for (std::size_t b = start; b < end; ++b) {
        const PairLoss pl = pair_loss(tape, model, prepared[order[b]], banks,
                                      mix_seed(cfg.seed, 505, epoch, order[b]));
        losses.push_back(pl.total);
        sum_total += pl.total.value()(0, 0);
        sum_entity += pl.entity;
        if (pl.fuzzy) {
          has_fuzzy = true;
          sum_fuzzy += *pl.fuzzy;
        }
        if (pl.contrast) {
          has_contrast = true;
          sum_contrast += *pl.contrast;
        }
      }
      const Var batch_loss =
          ag::scale(ag::add_scalars(losses), 1.0 / static_cast<double>(losses.size()));
      if (!std::isfinite(batch_loss.value()(0, 0))) {
        throw Error("training diverged (non-finite loss) at epoch " + std::to_string(epoch));
      }
      tape.backward(batch_loss);
      clip_grad_norm(params, cfg.grad_clip);
      optimizer.step();
      optimizer.zero_grad();
    }

    LossRecord rec;
    rec.epoch = epoch;
    const auto dn = static_cast<double>(n);
    rec.total = sum_total / dn;
    rec.entity = sum_entity / dn;
    if (has_fuzzy) rec.fuzzy = sum_fuzzy / dn;
    if (has_contrast) rec.contrast = sum_contrast / dn;
    if (!std::isfinite(rec.total)) {
      throw Error("training diverged (non-finite loss) at epoch " + std::to_string(epoch));
    }
    if (valid_set != nullptr && !valid_set->pairs.empty()) {
      const auto preds = predict_all(model, valid_set->pairs);
      rec.valid_f1 = evaluate_predictions(preds, valid_set->pairs).f1;
    }
    trace.push_back(rec);
    if (on_epoch && !on_epoch(rec)) break;
    if (cfg.patience > 0 && rec.valid_f1) {
      if (!best_f1 || *rec.valid_f1 > *best_f1) {
        best_f1 = rec.valid_f1;
        since_best = 0;
      } else if (++since_best >= cfg.patience) {
        break;
      }
    }
  }
  return trace;
}

PredictionRecord PromptAttribModel::predict(const CandidatePair& pair) {
  const PreparedPair p = prepare(*this, pair);
  Tape tape;
  const EncodedBanks banks = encode_banks(tape, *this);

  PredictionRecord rec;
  rec.left_id = pair.left.id;
  rec.right_id = pair.right.id;
  const ForwardVars ent = backend_->forward(tape, p.entity, banks.entity, std::nullopt);
  const auto logits = ent.mask_logits.value().row(0);
  const std::vector<double> yes_no = verbalize(softmax(logits), binary_);
  rec.entity_head_prob = yes_no[0];

  std::vector<AttributeBelief> beliefs;
  for (std::size_t k = 0; k < p.attributes.size(); ++k) {
    const ForwardVars f = backend_->forward(tape, p.attributes[k], banks.attribute, std::nullopt);
    const std::vector<double> t = verbalize(softmax(f.mask_logits.value().row(0)), ternary_);
    beliefs.push_back({t[0], t[1], t[2]});
    rec.attributes.push_back({p.aligned[k], beliefs.back()});
  }
  if (beliefs.empty()) {
    // No aligned attributes: the fuzzy head abstains and defers to the entity head.
    rec.fuzzy_match_prob = rec.entity_head_prob;
  } else {
    const FuzzyOptions opt{config_.smooth_max_tau};
    rec.scores = induce_scores(beliefs, opt);
    rec.posterior = normalize_scores(rec.scores);
    rec.fuzzy_match_prob = map_ambiguous_to_binary(rec.posterior, config_.ambiguous_policy);
  }
  rec.match_score = fuse_match_score(rec.entity_head_prob, rec.fuzzy_match_prob);
  rec.label = decide_label(rec.match_score);
  return rec;
}

std::vector<PredictionRecord> predict_all(PromptAttribModel& model,
                                          const std::vector<CandidatePair>& pairs) {
  std::vector<PredictionRecord> out;
  out.reserve(pairs.size());
  for (const CandidatePair& p : pairs) out.push_back(model.predict(p));
  return out;
}

MetricsReport evaluate_predictions(const std::vector<PredictionRecord>& predictions,
                                   const std::vector<CandidatePair>& pairs) {
  std::vector<ScoredPrediction> scored;
  std::vector<int> gold;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (!pairs[i].label) throw Error("evaluation pair " + std::to_string(i) + " has no label");
    gold.push_back(*pairs[i].label);
  }
  for (const PredictionRecord& r : predictions) scored.push_back({r.match_score, r.label});
  return evaluate(scored, gold);
}

std::unique_ptr<ToyMaskedLm> make_toy_backend_for(const std::vector<const EntityMap*>& entities,
                                                  std::uint64_t seed) {
  std::map<std::string, std::size_t> counts;
  for (const EntityMap* m : entities) {
    for (const auto& [id, e] : *m) {
      for (const Attribute& a : e.attributes) {
        for (const std::string& w : word_pieces(a.name)) ++counts[w];
        for (const std::string& w : word_pieces(a.value)) ++counts[w];
      }
    }
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  ToyBackendOptions o;
  o.seed = seed;
  for (const auto& [w, c] : ranked) o.extra_words.push_back(w);
  return make_toy_backend(std::move(o));
}

}  // namespace promptattrib
