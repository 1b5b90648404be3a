#include "doctest.h"
#include "promptattrib/config.hpp"
#include "promptattrib/error.hpp"
#include "promptattrib/train.hpp"

using namespace promptattrib;

TEST_CASE("config parsing and overrides") {
  Config c = Config::parse("# comment\ncontrastive.ratio = 0.35\n\ntrain.epochs=5\nverbalizer.yes=a, b,,c\n");
  CHECK(c.get_double("contrastive.ratio", 0) == 0.35);
  CHECK(c.get_int("train.epochs", 0) == 5);
  CHECK(c.get_list("verbalizer.yes", {}) == std::vector<std::string>{"a", "b", "c"});
  c.set_assignment("train.epochs=9");
  CHECK(c.get_int("train.epochs", 0) == 9);
  CHECK(Config::parse(c.dump()).entries() == c.entries());
  CHECK_THROWS_AS(Config::parse("no equals sign"), UsageError);
  CHECK_THROWS_WITH_AS(c.get_int("contrastive.ratio", 0), doctest::Contains("contrastive.ratio"), UsageError);
  CHECK_THROWS_WITH_AS(c.require_known({"train.epochs"}), doctest::Contains("contrastive.ratio"), UsageError);
  CHECK(Config::parse("x=true").get_bool("x", false));
  CHECK_THROWS_AS(Config::parse("x=maybe").get_bool("x", false), UsageError);
}

TEST_CASE("train config round trip and validation") {
  TrainConfig t;
  t.learning_rate = 0.0123456789012345;
  t.dropout_ratio = 0.4;
  t.template_id = TemplateId::kT2;
  t.binary_words.yes = {"matched"};
  const TrainConfig back = TrainConfig::from_config(t.to_config());
  CHECK(back.to_config().dump() == t.to_config().dump());
  CHECK(back.learning_rate == t.learning_rate);
  CHECK(back.template_id == TemplateId::kT2);

  for (const char* bad : {"contrastive.ratio=1", "train.learning_rate=0", "train.epochs=0",
                          "train.low_resource_fraction=0", "train.low_resource_fraction=1.5",
                          "dropout_scope=everything", "fuzzy.ambiguous_policy=maybe",
                          "prompt.template=T7", "train.alpha=-1"}) {
    Config c;
    c.set_assignment(bad);
    CHECK_THROWS_AS(TrainConfig::from_config(c), UsageError);
  }
  for (const auto& k : train_config_keys()) CHECK(t.to_config().has(k));
}
