#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "promptattrib/backend.hpp"
#include "promptattrib/config.hpp"
#include "promptattrib/corpus.hpp"
#include "promptattrib/fuzzy.hpp"
#include "promptattrib/metrics.hpp"
#include "promptattrib/prompt.hpp"

namespace promptattrib {

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t epochs = 30;
  std::size_t batch_size = 8;
  std::uint64_t seed = 7;
  double alpha = 1.0;   // weight of the fuzzy-induction loss
  double lambda = 0.1;  // weight of the dropout-view contrastive loss
  bool contrastive_enabled = true;
  double dropout_ratio = 0.35;
  DropoutScope dropout_scope = DropoutScope::kSoftOnly;
  double low_resource_fraction = 1.0;
  AmbiguousPolicy ambiguous_policy = AmbiguousPolicy::kAsDifferent;
  TemplateId template_id = TemplateId::kContinuous;
  std::size_t soft_tokens = kDefaultSoftPerSlot;  // p, soft tokens per slot
  std::size_t token_budget = 128;
  bool train_backbone = false;
  bool shared_bank = false;
  double smooth_max_tau = 0.0;
  double grad_clip = 1.0;
  std::size_t patience = 0;  // epochs without validation-F1 gain before stopping; 0 = off
  BinaryLabelWords binary_words;
  TernaryLabelWords ternary_words;

  // Throws UsageError naming the offending key.
  void validate() const;
  static TrainConfig from_config(const Config& c);
  // Writes every field; from_config(to_config()) round-trips.
  Config to_config() const;
};

// Config keys TrainConfig understands.
const std::vector<std::string>& train_config_keys();

struct LossRecord {
  std::size_t epoch = 0;  // 1-based
  double total = 0.0;
  double entity = 0.0;
  std::optional<double> fuzzy;     // absent when alpha = 0
  std::optional<double> contrast;  // absent when lambda = 0 or contrast disabled
  std::optional<double> valid_f1;
};

std::string loss_record_line(const LossRecord& r);

struct AttributeExplanation {
  AlignedAttributePair pair;
  AttributeBelief belief;
};

struct PredictionRecord {
  std::string left_id;
  std::string right_id;
  int label = 0;
  double match_score = 0.0;
  double entity_head_prob = 0.0;
  double fuzzy_match_prob = 0.0;
  EntityScores scores;
  EntityPosterior posterior;
  std::vector<AttributeExplanation> attributes;
};

// Average of the entity head's P(yes) and the fuzzy match probability; label 1
// iff the average is >= 0.5.
double fuse_match_score(double entity_head_prob, double fuzzy_match_prob);
int decide_label(double match_score);

// Backend + soft-prompt banks + verbalizers, configured by a TrainConfig.
class PromptAttribModel {
 public:
  PromptAttribModel(std::unique_ptr<MaskedLanguageModel> backend, TrainConfig config);

  MaskedLanguageModel& backend() { return *backend_; }
  const MaskedLanguageModel& backend() const { return *backend_; }
  const TrainConfig& config() const { return config_; }
  SoftPromptBank& entity_bank() { return entity_bank_; }
  SoftPromptBank& attribute_bank() { return config_.shared_bank ? entity_bank_ : attribute_bank_; }
  const Verbalizer& binary_verbalizer() const { return binary_; }
  const Verbalizer& ternary_verbalizer() const { return ternary_; }

  // Backbone parameters followed by bank parameters (one copy when shared).
  std::vector<Parameter*> parameters();
  std::vector<Parameter*> bank_parameters();

  PromptRendering entity_rendering(const CandidatePair& pair) const;
  std::vector<PromptRendering> attribute_renderings(
      const std::vector<AlignedAttributePair>& aligned) const;

  PredictionRecord predict(const CandidatePair& pair);

 private:
  std::unique_ptr<MaskedLanguageModel> backend_;
  TrainConfig config_;
  SoftPromptBank entity_bank_;
  SoftPromptBank attribute_bank_;
  Verbalizer binary_;
  Verbalizer ternary_;
};

// Called after each epoch; return false to stop early.
using EpochCallback = std::function<bool(const LossRecord&)>;

// Minimizes L_entity + alpha * L_fuzzy + lambda * L_contrast with Adam. The
// training pairs are first subsampled to config.low_resource_fraction.
// Throws on unlabeled pairs and on non-finite loss (naming the epoch).
std::vector<LossRecord> train(PromptAttribModel& model, const Dataset& train_set,
                              const Dataset* valid_set = nullptr,
                              const EpochCallback& on_epoch = nullptr);

std::vector<PredictionRecord> predict_all(PromptAttribModel& model,
                                          const std::vector<CandidatePair>& pairs);
MetricsReport evaluate_predictions(const std::vector<PredictionRecord>& predictions,
                                   const std::vector<CandidatePair>& pairs);

// Checkpoint directory: manifest.json, backend.bin, banks.bin, run.cfg.
void save_checkpoint(PromptAttribModel& model, const std::filesystem::path& dir);
PromptAttribModel load_checkpoint(const std::filesystem::path& dir);

// Toy backend whose vocabulary is extended with the word pieces of every
// entity in `entities`, most frequent first (ties alphabetical).
std::unique_ptr<ToyMaskedLm> make_toy_backend_for(const std::vector<const EntityMap*>& entities,
                                                  std::uint64_t seed);

}  // namespace promptattrib
