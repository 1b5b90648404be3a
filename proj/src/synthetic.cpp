#include "promptattrib/synthetic.hpp"

#include <array>
#include <fstream>

#include "json.hpp"
#include "promptattrib/error.hpp"
#include "promptattrib/rng.hpp"

namespace promptattrib {
namespace {

const std::array<std::vector<std::string>, 3> kPools = {{
    {"phone", "laptop", "camera", "tablet", "monitor", "printer", "speaker", "router", "keyboard",
     "headset", "watch", "drone"},
    {"acme", "zenith", "orbit", "nova", "apex", "vertex", "lumen", "quark", "delta", "pulse",
     "summit", "cobalt"},
    {"red", "blue", "green", "black", "white", "silver", "gold", "orange", "purple", "gray",
     "yellow", "pink"},
}};
const std::array<const char*, 3> kNames = {"name", "brand", "color"};

std::size_t draw(Rng& rng, std::size_t n) { return static_cast<std::size_t>(uniform_below(rng, n)); }

void add_pairs(SyntheticData& out, std::vector<CandidatePair>& dest, std::size_t count,
               double positive_rate, Rng& rng) {
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t n = out.left.size();
    Entity l{"L" + std::to_string(n), {}};
    Entity r{"R" + std::to_string(n), {}};
    const bool positive = uniform01(rng) < positive_rate;
    std::array<bool, 3> changed{};
    if (!positive) {
      // Non-empty subset of attributes to contradict.
      const std::size_t mask = 1 + draw(rng, 7);
      for (std::size_t k = 0; k < 3; ++k) changed[k] = ((mask >> k) & 1U) != 0;
    }
    for (std::size_t k = 0; k < 3; ++k) {
      const auto& pool = kPools[k];
      const std::size_t a = draw(rng, pool.size());
      std::size_t b = a;
      if (changed[k]) b = (a + 1 + draw(rng, pool.size() - 1)) % pool.size();
      l.attributes.push_back({kNames[k], pool[a]});
      r.attributes.push_back({kNames[k], pool[b]});
    }
    out.left.emplace(l.id, l);
    out.right.emplace(r.id, r);
    dest.push_back({std::move(l), std::move(r), positive ? 1 : 0});
  }
}

void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& l : lines) out << l << "\n";
}

std::vector<std::string> entity_lines(const EntityMap& m) {
  std::vector<std::string> out;
  for (const auto& [id, e] : m) {
    nlohmann::ordered_json j;
    j["id"] = id;
    j["attributes"] = nlohmann::ordered_json::array();
    for (const auto& a : e.attributes) j["attributes"].push_back({{"name", a.name}, {"value", a.value}});
    out.push_back(j.dump());
  }
  return out;
}

std::vector<std::string> pair_lines(const std::vector<CandidatePair>& pairs) {
  std::vector<std::string> out;
  for (const auto& p : pairs) {
    nlohmann::ordered_json j;
    j["left_id"] = p.left.id;
    j["right_id"] = p.right.id;
    j["label"] = *p.label;
    out.push_back(j.dump());
  }
  return out;
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticOptions& options) {
  if (!(options.positive_rate > 0.0 && options.positive_rate < 1.0)) {
    throw UsageError("positive_rate must be in (0, 1)");
  }
  if (options.train_pairs == 0) throw UsageError("train_pairs must be positive");
  SyntheticData out;
  Rng rng(mix_seed(options.seed, 0x5e7));
  add_pairs(out, out.train, options.train_pairs, options.positive_rate, rng);
  add_pairs(out, out.valid, options.valid_pairs, options.positive_rate, rng);
  add_pairs(out, out.test, options.test_pairs, options.positive_rate, rng);
  return out;
}

void write_synthetic(const SyntheticData& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_lines(dir / "entities_left.jsonl", entity_lines(data.left));
  write_lines(dir / "entities_right.jsonl", entity_lines(data.right));
  write_lines(dir / "train.jsonl", pair_lines(data.train));
  write_lines(dir / "valid.jsonl", pair_lines(data.valid));
  write_lines(dir / "test.jsonl", pair_lines(data.test));
}

}  // namespace promptattrib
