// Acceptance run: one PASS/FAIL line per criterion. Exit status is non-zero
// when any criterion fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>

#include "promptattrib/contrast.hpp"
#include "promptattrib/error.hpp"
#include "promptattrib/fuzzy.hpp"
#include "promptattrib/metrics.hpp"
#include "promptattrib/rng.hpp"
#include "promptattrib/serialize.hpp"
#include "promptattrib/synthetic.hpp"
#include "promptattrib/train.hpp"
#include "test_support.hpp"

using namespace promptattrib;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void report(int id, bool ok, const std::string& detail) {
  std::printf("%s criterion %d: %s\n", ok ? "PASS" : "FAIL", id, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

void run_criterion(int id, const std::function<void()>& body) {
  try {
    body();
  } catch (const std::exception& e) {
    report(id, false, std::string("exception: ") + e.what());
  }
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

AttributeBelief random_belief(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double a = u(rng), b = u(rng), c = u(rng);
  return {a / (a + b + c), b / (a + b + c), c / (a + b + c)};
}

// Direct formula evaluation, independent of the library.
std::array<double, 3> direct(const std::vector<AttributeBelief>& b) {
  double logsum = 0.0, md = 0.0, ma = 0.0;
  for (const auto& x : b) {
    logsum += std::log(std::max(x.p_same, 1e-12));
    md = std::max(md, x.p_different);
    ma = std::max(ma, x.p_ambiguous);
  }
  return {std::exp(logsum / static_cast<double>(b.size())), md, ma * (1.0 - md)};
}

void criterion1() {
  const auto t0 = Clock::now();
  const std::vector<AttributeBelief> b = {{0.9, 0.05, 0.05}, {0.4, 0.1, 0.5}};
  const EntityScores s = induce_scores(b);
  const EntityPosterior p = normalize_scores(s);
  const double loss = fuzzy_loss(p, TernaryLabel::kSame);
  bool ok = std::abs(s.s_same - 0.6) <= 1e-5 && std::abs(s.s_different - 0.1) <= 1e-5 &&
            std::abs(s.s_ambiguous - 0.45) <= 1e-5 && std::abs(p.p_same - 0.52174) <= 1e-5 &&
            std::abs(p.p_different - 0.08696) <= 1e-5 && std::abs(p.p_ambiguous - 0.39130) <= 1e-5 &&
            std::abs(loss - 0.65059) <= 1e-5;

  std::vector<AttributeBelief> grid;
  for (int i = 0; i <= 10; ++i)
    for (int j = 0; i + j <= 10; ++j) grid.push_back({i / 10.0, j / 10.0, (10 - i - j) / 10.0});
  double worst = 0.0;
  std::size_t cases = 0;
  auto check = [&](const std::vector<AttributeBelief>& x) {
    const auto d = direct(x);
    const EntityPosterior q = induce_posterior(x);
    const EntityScores r = induce_scores(x);
    const double z = d[0] + d[1] + d[2];
    worst = std::max({worst, std::abs(r.s_same - d[0]), std::abs(r.s_different - d[1]),
                      std::abs(r.s_ambiguous - d[2]), std::abs(q.p_same - d[0] / z),
                      std::abs(q.p_different - d[1] / z), std::abs(q.p_ambiguous - d[2] / z)});
    ++cases;
  };
  for (const auto& x : grid) check({x});
  for (const auto& x : grid)
    for (const auto& y : grid) check({x, y});
  for (const auto& x : grid)
    for (const auto& y : grid)
      for (const auto& z : grid) check({x, y, z});
  const double secs = seconds_since(t0);
  ok = ok && worst <= 1e-9 && secs < 10.0;
  report(1, ok,
         "worked example S=(" + fmt("%.5f", s.s_same) + "," + fmt("%.5f", s.s_different) + "," +
             fmt("%.5f", s.s_ambiguous) + ") P(Same)=" + fmt("%.5f", p.p_same) + " loss=" + fmt("%.5f", loss) +
             "; exhaustive grid K<=3: " + std::to_string(cases) + " cases, max error " + fmt("%.2e", worst) +
             ", " + fmt("%.2f", secs) + " s");
}

void criterion2() {
  std::mt19937_64 rng(2);
  double worst = 0.0;
  bool nonneg = true;
  for (int it = 0; it < 1000; ++it) {
    const std::size_t k = 1 + rng() % 8;
    std::vector<AttributeBelief> b;
    for (std::size_t i = 0; i < k; ++i) b.push_back(random_belief(rng));
    const EntityPosterior p = induce_posterior(b);
    worst = std::max(worst, std::abs(p.p_same + p.p_different + p.p_ambiguous - 1.0));
    nonneg = nonneg && p.p_same >= 0 && p.p_different >= 0 && p.p_ambiguous >= 0;
  }
  report(2, worst <= 1e-9 && nonneg,
         "1000 random lists, max |sum-1| = " + fmt("%.2e", worst) + (nonneg ? ", all >= 0" : ", negative component"));
}

void criterion3() {
  std::mt19937_64 rng(3);
  const double h = 1e-5;
  double worst = 0.0;
  int n = 0;
  while (n < 100) {
    const std::size_t k = 1 + rng() % 5;
    std::vector<AttributeBelief> b;
    for (std::size_t i = 0; i < k; ++i) b.push_back(random_belief(rng));
    bool separated = true;
    for (int c = 1; c < 3; ++c) {
      std::vector<double> v;
      for (const auto& x : b) v.push_back(c == 1 ? x.p_different : x.p_ambiguous);
      std::sort(v.rbegin(), v.rend());
      if (v.size() > 1 && v[0] - v[1] <= 1e-3) separated = false;
    }
    if (!separated) continue;
    const auto t = static_cast<TernaryLabel>(rng() % 3);
    const auto g = fuzzy_loss_gradient(b, t);
    auto loss = [&](const std::vector<AttributeBelief>& x) {
      const auto d = direct(x);
      const double pt = d[static_cast<std::size_t>(t)] / (d[0] + d[1] + d[2]);
      return -std::log(std::max(pt, 1e-12));
    };
    for (std::size_t i = 0; i < k; ++i) {
      for (int c = 0; c < 3; ++c) {
        auto at = [c](AttributeBelief& x) -> double& { return c == 0 ? x.p_same : c == 1 ? x.p_different : x.p_ambiguous; };
        auto plus = b, minus = b;
        at(plus[i]) += h;
        at(minus[i]) -= h;
        const double fd = (loss(plus) - loss(minus)) / (2 * h);
        AttributeBelief gi = g[i];
        const double an = at(gi);
        worst = std::max(worst, std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-8}));
      }
    }
    ++n;
  }
  report(3, worst <= 1e-4, "100 non-tie instances, max relative error " + fmt("%.2e", worst));
}

void criterion4() {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int violations = 0;
  for (int it = 0; it < 1000; ++it) {
    const std::size_t k = 1 + rng() % 8;
    std::vector<AttributeBelief> b;
    for (std::size_t i = 0; i < k; ++i) b.push_back(random_belief(rng));
    double mean = 0.0;
    for (const auto& x : b) mean += x.p_same / static_cast<double>(k);
    if (score_same(b) > mean + 1e-12) ++violations;
    auto up = b;
    const std::size_t j = rng() % k;
    const double d = u(rng) * up[j].p_same;
    up[j].p_same -= d;
    up[j].p_different += d;
    if (score_different(up) < score_different(b)) ++violations;
    if (score_ambiguous(up) > score_ambiguous(b)) ++violations;
  }
  report(4, violations == 0, "1000 instances, " + std::to_string(violations) + " AM-GM/monotonicity violations");
}

void criterion5() {
  const double zero = contrastive_loss(ViewEmbedding{{0.3, -2.0, 1.0}}, ViewEmbedding{{0.3, -2.0, 1.0}});
  const double hand = contrastive_loss(ViewEmbedding{{1, 0}}, ViewEmbedding{{0, 1}});

  // Pipeline: two ratio-0 views of the same rendering.
  const auto data = testing::small_synthetic();
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 4;
  auto model = testing::model_for(data, cfg);
  const PromptRendering r = model.entity_rendering(data.train[0]);
  Tape tape;
  const Var soft = encode_soft_prompts(tape, model.entity_bank());
  auto z = [&](std::uint64_t seed) {
    return ag::row(model.backend().forward(tape, r, soft, DropoutSpec{0.0, seed}).hidden_states, r.mask_positions[0]);
  };
  const double p0 = contrastive_loss(z(1), z(2)).value()(0, 0);

  std::vector<Matrix> before;
  for (const Parameter* p : model.backend().parameters()) before.push_back(p->value);
  std::vector<Matrix> banks_before;
  for (const Parameter* p : model.bank_parameters()) banks_before.push_back(p->value);
  train(model, testing::train_dataset(data));
  std::size_t backbone_changed = 0, bank_changed = 0;
  const auto bp = model.backend().parameters();
  for (std::size_t i = 0; i < bp.size(); ++i) backbone_changed += !(bp[i]->value == before[i]);
  const auto kp = model.bank_parameters();
  for (std::size_t i = 0; i < kp.size(); ++i) bank_changed += !(kp[i]->value == banks_before[i]);

  const bool ok = zero == 0.0 && p0 == 0.0 && std::abs(hand - std::sqrt(2.0)) <= 1e-12 && backbone_changed == 0 &&
                  bank_changed == kp.size();
  report(5, ok,
         "p=0 loss " + fmt("%g", p0) + ", |(1,0)-(0,1)| = " + fmt("%.12f", hand) + ", frozen training changed " +
             std::to_string(backbone_changed) + "/" + std::to_string(bp.size()) + " backbone and " +
             std::to_string(bank_changed) + "/" + std::to_string(kp.size()) + " prompt tensors");
}

void criterion6() {
  const Entity two{"b1", {{"name", "McKees Rocks Bridge"}, {"postalCode", "15233"}}};
  const Entity full{"b1", {{"name", "McKees Rocks Bridge"}, {"city", "McKees Rocks"}, {"postalCode", "15233"}}};
  const std::string s2 = serialize_entity(two).text;
  const std::string s3 = serialize_entity(full).text;
  const bool ok = s2 == "[COL] name [VAL] McKees Rocks Bridge [COL] postalCode [VAL] 15233" &&
                  s3 == "[COL] name [VAL] McKees Rocks Bridge [COL] city [VAL] McKees Rocks [COL] postalCode [VAL] 15233" &&
                  parse_serialized(s2) == two.attributes && parse_serialized(s3) == full.attributes;
  report(6, ok, "\"" + s2 + "\" and round-trip parse");
}

void criterion7() {
  const auto backend = make_toy_backend(7);
  const Tokenizer& tok = backend->tokenizer();
  const Verbalizer v = make_binary_verbalizer(tok);
  std::vector<double> d(tok.vocab_size(), 0.0);
  const std::pair<const char*, double> mass[] = {{"matched", 0.3}, {"similar", 0.1},   {"relevant", 0.05},
                                                 {"mismatched", 0.2}, {"different", 0.1}, {"irrelevant", 0.05}};
  for (const auto& [w, p] : mass) d[*tok.lookup(w)] = p;
  d[*tok.lookup("entity")] = 0.2;
  const auto out = verbalize(d, v);
  Rng rng(7);
  const Verbalizer t = make_ternary_verbalizer(tok);
  double worst = 0.0;
  for (int it = 0; it < 1000; ++it) {
    std::vector<double> logits(tok.vocab_size());
    for (double& x : logits) x = 6.0 * (uniform01(rng) - 0.5);
    const auto dist = softmax(logits);
    for (const Verbalizer* verb : {&v, &t}) {
      double s = 0.0;
      for (double p : verbalize(dist, *verb)) s += p;
      worst = std::max(worst, std::abs(s - 1.0));
    }
  }
  report(7, std::abs(out[0] - 0.5625) <= 1e-9 && worst <= 1e-9,
         "P(yes) = " + fmt("%.12f", out[0]) + ", max |sum-1| over 2000 outputs " + fmt("%.2e", worst));
}

void criterion8() {
  const std::vector<ScoredPrediction> p = {{0.9, 1}, {0.8, 1}, {0.4, 0}, {0.1, 0}};
  const std::vector<int> g = {1, 0, 0, 1};
  const MetricsReport m = evaluate(p, g);
  report(8, m.f1 == 0.5 && m.accuracy == 0.5 && m.average_precision == 0.75,
         "F1=" + fmt("%g", m.f1) + " Acc=" + fmt("%g", m.accuracy) + " AP=" + fmt("%g", m.average_precision));
}

// Settings for the toy end-to-end runs. The backbone is unfrozen: with a
// randomly initialized toy LM, prompt parameters alone cannot fit the data.
TrainConfig toy_run_config(std::uint64_t seed) {
  TrainConfig c;
  c.seed = seed;
  c.train_backbone = true;
  c.epochs = 200;
  return c;
}

void criterion9() {
  const auto t0 = Clock::now();
  const SyntheticData data = generate_synthetic(SyntheticOptions{});
  const Dataset train_set = make_dataset(data.left, data.right, data.train, Split::kTrain);
  auto model = testing::model_for(data, toy_run_config(7));
  double train_f1 = 0.0;
  std::size_t reached_at = 0;
  const auto trace = train(model, train_set, nullptr, [&](const LossRecord& r) {
    if (r.epoch % 5 != 0) return true;
    train_f1 = evaluate_predictions(predict_all(model, data.train), data.train).f1;
    if (train_f1 >= 0.95) {
      reached_at = r.epoch;
      return false;
    }
    return true;
  });
  const double full_secs = seconds_since(t0);
  const bool loss_down = trace.back().total < trace.front().total;
  const bool full_ok = reached_at > 0 && reached_at <= 200 && loss_down && full_secs < 300.0;

  // 5% of the training pairs, ratio 0.35 against the regularizer disabled.
  int wins = 0;
  std::string detail;
  const Dataset test_set = make_dataset(data.left, data.right, data.test, Split::kTest);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    double f1[2];
    for (int variant = 0; variant < 2; ++variant) {
      TrainConfig c = toy_run_config(seed);
      c.epochs = 40;
      c.low_resource_fraction = 0.05;
      c.contrastive_enabled = variant == 1;
      c.dropout_ratio = 0.35;
      auto m = testing::model_for(data, c);
      train(m, train_set);
      f1[variant] = evaluate_predictions(predict_all(m, test_set.pairs), test_set.pairs).f1;
    }
    wins += f1[1] >= f1[0];
    detail += " s" + std::to_string(seed) + ":" + fmt("%.3f", f1[1]) + "/" + fmt("%.3f", f1[0]);
  }
  report(9, full_ok && wins >= 3,
         "fraction 1.0: train F1 " + fmt("%.3f", train_f1) + " at epoch " + std::to_string(reached_at) +
             ", loss " + fmt("%.4f", trace.front().total) + " -> " + fmt("%.4f", trace.back().total) + ", " +
             fmt("%.1f", full_secs) + " s; fraction 0.05 held-out F1 (0.35/off):" + detail + " -> " +
             std::to_string(wins) + "/5 seeds");
}

void criterion10() {
  const auto data = testing::small_synthetic(24);
  TrainConfig cfg;
  cfg.epochs = 3;
  const auto dir = testing::fresh_dir("acceptance_repro");
  std::string traces[2], preds[2];
  for (int run = 0; run < 2; ++run) {
    auto m = testing::model_for(data, cfg);
    for (const auto& r : train(m, testing::train_dataset(data))) traces[run] += loss_record_line(r) + "\n";
    save_checkpoint(m, dir / std::to_string(run));
    for (const auto& p : predict_all(m, data.test)) {
      preds[run] += fmt("%.17g", p.match_score) + " " + fmt("%.17g", p.entity_head_prob) + "\n";
    }
  }
  bool same_ckpt = true;
  for (const char* f : {"manifest.json", "run.cfg", "backend.bin", "banks.bin"}) {
    same_ckpt = same_ckpt && testing::slurp(dir / "0" / f) == testing::slurp(dir / "1" / f);
  }
  auto reloaded = load_checkpoint(dir / "0");
  std::string reloaded_preds;
  for (const auto& p : predict_all(reloaded, data.test)) {
    reloaded_preds += fmt("%.17g", p.match_score) + " " + fmt("%.17g", p.entity_head_prob) + "\n";
  }
  const bool ok = traces[0] == traces[1] && same_ckpt && preds[0] == preds[1] && reloaded_preds == preds[0];
  report(10, ok,
         std::string("traces ") + (traces[0] == traces[1] ? "identical" : "differ") + ", checkpoints " +
             (same_ckpt ? "identical" : "differ") + ", predictions " + (preds[0] == preds[1] ? "identical" : "differ") +
             ", reload " + (reloaded_preds == preds[0] ? "bit-exact" : "differs"));
}

}  // namespace

int main() {
  run_criterion(1, criterion1);
  run_criterion(2, criterion2);
  run_criterion(3, criterion3);
  run_criterion(4, criterion4);
  run_criterion(5, criterion5);
  run_criterion(6, criterion6);
  run_criterion(7, criterion7);
  run_criterion(8, criterion8);
  run_criterion(9, criterion9);
  run_criterion(10, criterion10);
  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
