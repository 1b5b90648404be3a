#include "promptattrib/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"
#include "promptattrib/error.hpp"
#include "promptattrib/synthetic.hpp"
#include "promptattrib/text.hpp"
#include "promptattrib/train.hpp"

namespace promptattrib {
namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

const std::vector<std::string> kPathKeys = {"data.entities_left", "data.entities_right",
                                            "data.pairs_train", "data.pairs_valid",
                                            "data.pairs_test"};

struct CommonFlags {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out;
  std::optional<std::int64_t> seed;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path, "key=value config file");
  cmd->add_option("--set", f.overrides, "override a config key (key=value), repeatable");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--seed", f.seed, "global seed (overrides the config and PROMPTATTRIB_SEED)");
}

// File config, then --set overrides, then --seed. PROMPTATTRIB_SEED only
// fills a missing seed. Relative data paths in the file resolve against the
// file's directory.
Config build_config(const CommonFlags& f) {
  Config c;
  if (!f.config_path.empty()) {
    if (!fs::exists(f.config_path)) throw UsageError("config file not found: " + f.config_path);
    c = Config::load(f.config_path);
    const fs::path base = fs::path(f.config_path).parent_path();
    for (const auto& key : kPathKeys) {
      if (auto v = c.find(key); v && !v->empty() && fs::path(*v).is_relative()) {
        c.set(key, (base / *v).lexically_normal().string());
      }
    }
  }
  for (const auto& a : f.overrides) c.set_assignment(a);
  if (f.seed) {
    c.set("seed", std::to_string(*f.seed));
  } else if (!c.has("seed")) {
    if (const char* env = std::getenv("PROMPTATTRIB_SEED"); env != nullptr && *env != '\0') {
      c.set("seed", env);
    }
  }
  std::vector<std::string> known = train_config_keys();
  for (const auto& k : kPathKeys) known.push_back(k);
  for (const char* k : {"backend", "out", "sweep.ratios"}) known.emplace_back(k);
  c.require_known(known);
  // Parse early so bad values surface as usage errors naming the key.
  (void)TrainConfig::from_config(c);
  return c;
}

fs::path out_dir(const CommonFlags& f, const Config& c) {
  const fs::path dir = !f.out.empty() ? fs::path(f.out) : fs::path(c.get_string("out", "out"));
  fs::create_directories(dir);
  return dir;
}

std::string require_path(const Config& c, const std::string& key) {
  const auto v = c.find(key);
  if (!v || v->empty()) throw UsageError("missing config key " + key);
  if (!fs::exists(*v)) throw UsageError("config key " + key + ": file not found: " + *v);
  return *v;
}

std::optional<std::string> optional_path(const Config& c, const std::string& key) {
  const auto v = c.find(key);
  if (!v || v->empty()) return std::nullopt;
  if (!fs::exists(*v)) throw UsageError("config key " + key + ": file not found: " + *v);
  return v;
}

void require_toy_backend(const Config& c) {
  const std::string b = c.get_string("backend", "toy");
  if (b != "toy") throw UsageError("config key backend: \"" + b + "\" is not available (toy)");
}

struct Sources {
  EntityMap left;
  EntityMap right;
};

Sources load_sources(const Config& c) {
  return {load_entities(require_path(c, "data.entities_left")),
          load_entities(require_path(c, "data.entities_right"))};
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

PromptAttribModel train_model(const Config& c, const Sources& src, const std::vector<CandidatePair>& train_pairs,
                              const std::vector<CandidatePair>* valid_pairs, std::ostream* trace) {
  const TrainConfig cfg = TrainConfig::from_config(c);
  PromptAttribModel model(make_toy_backend_for({&src.left, &src.right}, cfg.seed), cfg);
  const Dataset train_set = make_dataset(src.left, src.right, train_pairs, Split::kTrain);
  std::optional<Dataset> valid_set;
  if (valid_pairs != nullptr) valid_set = make_dataset(src.left, src.right, *valid_pairs, Split::kValid);
  train(model, train_set, valid_set ? &*valid_set : nullptr, [trace](const LossRecord& r) {
    if (trace != nullptr) *trace << loss_record_line(r) << "\n" << std::flush;
    return true;
  });
  return model;
}

std::string prediction_line(const PredictionRecord& r) {
  ordered_json j;
  j["left_id"] = r.left_id;
  j["right_id"] = r.right_id;
  j["match_score"] = r.match_score;
  j["label"] = r.label;
  j["entity_head_prob"] = r.entity_head_prob;
  j["fuzzy_posterior"] = {r.posterior.p_same, r.posterior.p_different, r.posterior.p_ambiguous};
  return j.dump();
}

std::vector<ScoredPrediction> read_predictions(const std::string& path) {
  std::vector<ScoredPrediction> out;
  std::istringstream in(read_file(path));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      const auto j = ordered_json::parse(line);
      out.push_back({j.at("match_score").get<double>(), j.at("label").get<int>()});
    } catch (const nlohmann::json::exception& e) {
      throw Error(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

fs::path checkpoint_dir(const std::string& flag, const CommonFlags& f, const Config& c) {
  const fs::path dir = !flag.empty() ? fs::path(flag) : out_dir(f, c) / "checkpoint";
  if (!fs::exists(dir / "manifest.json")) throw UsageError("no checkpoint at " + dir.string());
  return dir;
}

// Pairs from --pairs when given, else from the config key.
std::vector<CandidatePair> eval_pairs(const std::string& flag, const Config& c, const Sources& src,
                                      const std::string& key) {
  if (!flag.empty()) {
    if (!fs::exists(flag)) throw UsageError("--pairs: file not found: " + flag);
    return load_pairs(flag, src.left, src.right);
  }
  return load_pairs(require_path(c, key), src.left, src.right);
}

ordered_json explain_json(const PredictionRecord& r, AmbiguousPolicy policy) {
  ordered_json j;
  j["left_id"] = r.left_id;
  j["right_id"] = r.right_id;
  j["attributes"] = ordered_json::array();
  for (const auto& a : r.attributes) {
    j["attributes"].push_back({{"key", a.pair.key},
                               {"left", a.pair.left.value},
                               {"right", a.pair.right.value},
                               {"same", a.belief.p_same},
                               {"different", a.belief.p_different},
                               {"ambiguous", a.belief.p_ambiguous}});
  }
  j["scores"] = {{"same", r.scores.s_same},
                 {"different", r.scores.s_different},
                 {"ambiguous", r.scores.s_ambiguous}};
  j["posterior"] = {{"same", r.posterior.p_same},
                    {"different", r.posterior.p_different},
                    {"ambiguous", r.posterior.p_ambiguous}};
  j["ambiguous_policy"] = ambiguous_policy_name(policy);
  j["entity_head_prob"] = r.entity_head_prob;
  j["fuzzy_match_prob"] = r.fuzzy_match_prob;
  j["match_score"] = r.match_score;
  j["label"] = r.label;
  return j;
}

struct SweepRow {
  std::string ratio;
  MetricsReport metrics;
};

std::string sweep_table(const std::vector<SweepRow>& rows) {
  std::string s = "ratio\tF\tP\tA\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s\t%.2f\t%.2f\t%.2f\n", r.ratio.c_str(), 100.0 * r.metrics.f1,
                  100.0 * r.metrics.average_precision, 100.0 * r.metrics.accuracy);
    s += buf;
  }
  return s;
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Prompt-based entity matching with fuzzy attribute induction"};
  app.name(args.empty() ? "promptattrib" : fs::path(args[0]).filename().string());
  app.require_subcommand(1);

  CommonFlags train_f, eval_f, predict_f, explain_f, sweep_f;
  std::string eval_checkpoint, eval_predictions, eval_pairs_flag;
  std::string predict_checkpoint, predict_pairs_flag;
  std::string explain_checkpoint;
  std::vector<std::string> explain_ids;
  std::string sweep_ratios;
  std::string gen_out;
  std::int64_t gen_seed = 7;
  std::size_t gen_train = 200, gen_valid = 100, gen_test = 100;

  auto* train_cmd = app.add_subcommand("train", "train a model and write checkpoint/ and trace.log");
  add_common(train_cmd, train_f);

  auto* eval_cmd = app.add_subcommand("eval", "score predictions against gold labels, write metrics.txt");
  add_common(eval_cmd, eval_f);
  eval_cmd->add_option("--checkpoint", eval_checkpoint, "checkpoint directory (default <out>/checkpoint)");
  eval_cmd->add_option("--predictions", eval_predictions, "existing prediction file to score");
  eval_cmd->add_option("--pairs", eval_pairs_flag, "gold pair file (default data.pairs_test)");

  auto* predict_cmd = app.add_subcommand("predict", "write predictions.txt");
  add_common(predict_cmd, predict_f);
  predict_cmd->add_option("--checkpoint", predict_checkpoint, "checkpoint directory");
  predict_cmd->add_option("--pairs", predict_pairs_flag, "pair file (default data.pairs_test)");

  auto* explain_cmd = app.add_subcommand("explain", "print per-attribute beliefs and the fused decision");
  add_common(explain_cmd, explain_f);
  explain_cmd->add_option("--checkpoint", explain_checkpoint, "checkpoint directory");
  explain_cmd->add_option("--pair", explain_ids, "left_id,right_id (repeatable)")->required();

  auto* sweep_cmd = app.add_subcommand("sweep-dropout", "train and evaluate once per dropout ratio");
  add_common(sweep_cmd, sweep_f);
  sweep_cmd->add_option("--ratios", sweep_ratios, "comma-separated ratios; \"no\" disables the regularizer");

  auto* gen_cmd = app.add_subcommand("gen-synthetic", "write a rule-labeled toy dataset and run.cfg");
  gen_cmd->add_option("--out", gen_out, "output directory")->required();
  gen_cmd->add_option("--seed", gen_seed, "generator seed");
  gen_cmd->add_option("--train-pairs", gen_train, "training pairs");
  gen_cmd->add_option("--valid-pairs", gen_valid, "validation pairs");
  gen_cmd->add_option("--test-pairs", gen_test, "test pairs");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  if (!rev.empty()) rev.pop_back();
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (train_cmd->parsed()) {
      const Config c = build_config(train_f);
      require_toy_backend(c);
      const Sources src = load_sources(c);
      const auto train_pairs = load_pairs(require_path(c, "data.pairs_train"), src.left, src.right);
      std::optional<std::vector<CandidatePair>> valid_pairs;
      if (auto v = optional_path(c, "data.pairs_valid")) valid_pairs = load_pairs(*v, src.left, src.right);
      const fs::path dir = out_dir(train_f, c);
      std::ofstream trace(dir / "trace.log");
      if (!trace) throw Error("cannot write " + (dir / "trace.log").string());
      PromptAttribModel model =
          train_model(c, src, train_pairs, valid_pairs ? &*valid_pairs : nullptr, &trace);
      save_checkpoint(model, dir / "checkpoint");
      out << "checkpoint written to " << (dir / "checkpoint").string() << "\n";
      return 0;
    }
    if (eval_cmd->parsed()) {
      const Config c = build_config(eval_f);
      const Sources src = load_sources(c);
      const auto pairs = eval_pairs(eval_pairs_flag, c, src, "data.pairs_test");
      std::vector<int> gold;
      for (std::size_t i = 0; i < pairs.size(); ++i) {
        if (!pairs[i].label) throw Error("gold pair " + std::to_string(i + 1) + " has no label");
        gold.push_back(*pairs[i].label);
      }
      std::vector<ScoredPrediction> scored;
      if (!eval_predictions.empty()) {
        if (!fs::exists(eval_predictions)) {
          throw UsageError("--predictions: file not found: " + eval_predictions);
        }
        scored = read_predictions(eval_predictions);
      } else {
        PromptAttribModel model = load_checkpoint(checkpoint_dir(eval_checkpoint, eval_f, c));
        for (const auto& r : predict_all(model, pairs)) scored.push_back({r.match_score, r.label});
      }
      const MetricsReport m = evaluate(scored, gold);
      const std::string text = metrics_json(m) + "\n";
      write_text(out_dir(eval_f, c) / "metrics.txt", text);
      out << text;
      return 0;
    }
    if (predict_cmd->parsed()) {
      const Config c = build_config(predict_f);
      const Sources src = load_sources(c);
      const auto pairs = eval_pairs(predict_pairs_flag, c, src, "data.pairs_test");
      PromptAttribModel model = load_checkpoint(checkpoint_dir(predict_checkpoint, predict_f, c));
      std::string text;
      for (const auto& r : predict_all(model, pairs)) text += prediction_line(r) + "\n";
      const fs::path path = out_dir(predict_f, c) / "predictions.txt";
      write_text(path, text);
      out << pairs.size() << " predictions written to " << path.string() << "\n";
      return 0;
    }
    if (explain_cmd->parsed()) {
      const Config c = build_config(explain_f);
      const Sources src = load_sources(c);
      PromptAttribModel model = load_checkpoint(checkpoint_dir(explain_checkpoint, explain_f, c));
      for (const auto& spec : explain_ids) {
        const auto parts = split(spec, ',');
        if (parts.size() != 2) throw UsageError("--pair expects left_id,right_id, got \"" + spec + "\"");
        const auto l = src.left.find(parts[0]);
        if (l == src.left.end()) throw UsageError("--pair: unknown left id \"" + parts[0] + "\"");
        const auto r = src.right.find(parts[1]);
        if (r == src.right.end()) throw UsageError("--pair: unknown right id \"" + parts[1] + "\"");
        const PredictionRecord rec = model.predict({l->second, r->second, std::nullopt});
        out << explain_json(rec, model.config().ambiguous_policy).dump(2) << "\n";
      }
      return 0;
    }
    if (sweep_cmd->parsed()) {
      const Config base = build_config(sweep_f);
      require_toy_backend(base);
      const std::string list =
          !sweep_ratios.empty() ? sweep_ratios : base.get_string("sweep.ratios", "no,0.35,0.4,0.45");
      const Sources src = load_sources(base);
      const auto train_pairs = load_pairs(require_path(base, "data.pairs_train"), src.left, src.right);
      const std::string eval_key = base.find("data.pairs_test") ? "data.pairs_test" : "data.pairs_valid";
      const auto test_pairs = load_pairs(require_path(base, eval_key), src.left, src.right);
      std::vector<SweepRow> rows;
      for (const auto& item : split(list, ',')) {
        const std::string r{trim(item)};
        if (r.empty()) continue;
        Config c = base;
        if (r == "no" || r == "none" || r == "off") {
          c.set("contrastive.enabled", "false");
        } else {
          c.set("contrastive.enabled", "true");
          c.set("contrastive.ratio", r);
        }
        try {
          (void)TrainConfig::from_config(c);
        } catch (const UsageError& e) {
          throw UsageError(std::string("--ratios: ") + e.what());
        }
        PromptAttribModel model = train_model(c, src, train_pairs, nullptr, nullptr);
        const auto preds = predict_all(model, test_pairs);
        rows.push_back({r, evaluate_predictions(preds, test_pairs)});
        err << "ratio " << r << ": F1 " << fmt(rows.back().metrics.f1) << "\n";
      }
      if (rows.empty()) throw UsageError("--ratios: no ratios given");
      const std::string table = sweep_table(rows);
      write_text(out_dir(sweep_f, base) / "sweep.txt", table);
      out << table;
      return 0;
    }
    if (gen_cmd->parsed()) {
      SyntheticOptions o;
      o.seed = static_cast<std::uint64_t>(gen_seed);
      o.train_pairs = gen_train;
      o.valid_pairs = gen_valid;
      o.test_pairs = gen_test;
      const SyntheticData data = generate_synthetic(o);
      write_synthetic(data, gen_out);
      write_text(fs::path(gen_out) / "run.cfg",
                 "data.entities_left=entities_left.jsonl\n"
                 "data.entities_right=entities_right.jsonl\n"
                 "data.pairs_train=train.jsonl\n"
                 "data.pairs_valid=valid.jsonl\n"
                 "data.pairs_test=test.jsonl\n"
                 "seed=" + std::to_string(gen_seed) + "\n");
      out << "wrote " << data.train.size() << "/" << data.valid.size() << "/" << data.test.size()
          << " train/valid/test pairs to " << gen_out << "\n";
      return 0;
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace promptattrib
