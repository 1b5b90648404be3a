#include "promptattrib/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_map>

#include "json.hpp"

#include "promptattrib/error.hpp"
#include "promptattrib/rng.hpp"
#include "promptattrib/text.hpp"

namespace promptattrib {
namespace {

using ordered_json = nlohmann::ordered_json;

std::string where(std::string_view source, std::size_t line) {
  return std::string(source) + ":" + std::to_string(line);
}

std::string scalar_text(const ordered_json& v) {
  if (v.is_null()) return "";
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

template <typename Fn>
void for_each_line(std::string_view text, Fn fn) {
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    ++line_no;
    std::string_view line = trim(text.substr(start, end - start));
    if (!line.empty()) fn(line, line_no);
    if (end == text.size()) break;
    start = end + 1;
  }
}

ordered_json parse_object(std::string_view line, std::string_view source, std::size_t line_no) {
  ordered_json obj;
  try {
    obj = ordered_json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(where(source, line_no) + ": parse error: " + e.what());
  }
  if (!obj.is_object()) throw Error(where(source, line_no) + ": expected a JSON object");
  return obj;
}

Entity entity_from_json(const ordered_json& obj, std::string_view source, std::size_t line_no) {
  if (!obj.contains("id")) throw Error(where(source, line_no) + ": missing field \"id\"");
  Entity e;
  e.id = scalar_text(obj.at("id"));
  if (obj.contains("attributes")) {
    const ordered_json& attrs = obj.at("attributes");
    if (attrs.is_array()) {
      for (const auto& a : attrs) {
        if (!a.is_object() || !a.contains("name")) {
          throw Error(where(source, line_no) + ": attribute entries need a \"name\" field");
        }
        e.attributes.push_back(
            {scalar_text(a.at("name")), a.contains("value") ? scalar_text(a.at("value")) : ""});
      }
    } else if (attrs.is_object()) {
      for (const auto& [k, v] : attrs.items()) e.attributes.push_back({k, scalar_text(v)});
    } else {
      throw Error(where(source, line_no) + ": \"attributes\" must be a list or an object");
    }
  } else {
    for (const auto& [k, v] : obj.items()) {
      if (k != "id") e.attributes.push_back({k, scalar_text(v)});
    }
  }
  try {
    validate_entity(e);
  } catch (const Error& err) {
    throw Error(where(source, line_no) + ": " + err.what());
  }
  return e;
}

}  // namespace

void validate_entity(const Entity& e) {
  if (trim(e.id).empty()) throw Error("entity id is empty");
  if (e.attributes.empty()) throw Error("entity \"" + e.id + "\" has no attributes");
  for (const Attribute& a : e.attributes) {
    if (trim(a.name).empty()) throw Error("entity \"" + e.id + "\" has a blank attribute name");
  }
}

EntityMap parse_entities(std::string_view text, std::string_view source) {
  EntityMap out;
  for_each_line(text, [&](std::string_view line, std::size_t line_no) {
    Entity e = entity_from_json(parse_object(line, source, line_no), source, line_no);
    const std::string id = e.id;
    if (!out.emplace(id, std::move(e)).second) {
      throw Error(where(source, line_no) + ": duplicate entity id \"" + id + "\"");
    }
  });
  return out;
}

EntityMap load_entities(const std::filesystem::path& path) {
  return parse_entities(read_file(path.string()), path.string());
}

std::vector<CandidatePair> parse_pairs(std::string_view text, const EntityMap& left,
                                       const EntityMap& right, std::string_view source) {
  std::vector<CandidatePair> out;
  for_each_line(text, [&](std::string_view line, std::size_t line_no) {
    const ordered_json obj = parse_object(line, source, line_no);
    for (const char* key : {"left_id", "right_id"}) {
      if (!obj.contains(key)) {
        throw Error(where(source, line_no) + ": missing field \"" + key + "\"");
      }
    }
    const std::string lid = scalar_text(obj.at("left_id"));
    const std::string rid = scalar_text(obj.at("right_id"));
    const auto li = left.find(lid);
    if (li == left.end()) throw Error(where(source, line_no) + ": unknown entity id \"" + lid + "\"");
    const auto ri = right.find(rid);
    if (ri == right.end()) throw Error(where(source, line_no) + ": unknown entity id \"" + rid + "\"");
    CandidatePair p{li->second, ri->second, std::nullopt};
    if (obj.contains("label") && !obj.at("label").is_null()) {
      const ordered_json& l = obj.at("label");
      if (!l.is_number_integer() || (l.get<long long>() != 0 && l.get<long long>() != 1)) {
        throw Error(where(source, line_no) + ": label must be 0 or 1, got " + l.dump());
      }
      p.label = static_cast<int>(l.get<long long>());
    }
    out.push_back(std::move(p));
  });
  return out;
}

std::vector<CandidatePair> load_pairs(const std::filesystem::path& path, const EntityMap& left,
                                      const EntityMap& right) {
  return parse_pairs(read_file(path.string()), left, right, path.string());
}

std::vector<CandidatePair> load_pairs(const std::filesystem::path& path,
                                      const EntityMap& entities) {
  return load_pairs(path, entities, entities);
}

Dataset make_dataset(const EntityMap& left, const EntityMap& right,
                     std::vector<CandidatePair> pairs, Split split) {
  Dataset d;
  d.entities = left;
  for (const auto& [id, e] : right) {
    auto [it, inserted] = d.entities.emplace(id, e);
    if (!inserted && !(it->second == e)) {
      throw Error("entity id \"" + id + "\" names different records in the two sources");
    }
  }
  d.pairs = std::move(pairs);
  d.split = split;
  return d;
}

std::size_t low_resource_size(std::size_t n, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw Error("low-resource fraction must be in (0, 1], got " + std::to_string(fraction));
  }
  if (n == 0) return 0;
  // Guard against 0.05 * 100 landing a hair above 5.
  const double raw = fraction * static_cast<double>(n);
  auto k = static_cast<std::size_t>(std::ceil(raw - 1e-9));
  return std::clamp<std::size_t>(k, 1, n);
}

namespace {

// Partial Fisher-Yates: k distinct indices from `pool`.
std::vector<std::size_t> draw(std::vector<std::size_t> pool, std::size_t k, Rng& rng) {
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + uniform_below(rng, pool.size() - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return pool;
}

}  // namespace

Dataset sample_low_resource(const Dataset& dataset, double fraction, std::uint64_t seed) {
  if (dataset.split != Split::kTrain) throw Error("low-resource sampling applies to the train split");
  const std::size_t n = dataset.pairs.size();
  const std::size_t k = low_resource_size(n, fraction);
  Rng rng(seed);

  std::vector<std::size_t> pos, neg;
  bool all_labeled = true;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& l = dataset.pairs[i].label;
    if (!l) {
      all_labeled = false;
    } else {
      (*l == 1 ? pos : neg).push_back(i);
    }
  }

  std::vector<std::size_t> chosen;
  if (all_labeled && !pos.empty() && !neg.empty()) {
    const std::size_t k_pos = k * pos.size() / n;
    const std::size_t k_neg = k * neg.size() / n;
    std::size_t rem = k - k_pos - k_neg;
    const bool pos_majority = pos.size() > neg.size();
    const std::size_t take_pos = k_pos + (pos_majority ? rem : 0);
    const std::size_t take_neg = k_neg + (pos_majority ? 0 : rem);
    chosen = draw(pos, take_pos, rng);
    const auto more = draw(neg, take_neg, rng);
    chosen.insert(chosen.end(), more.begin(), more.end());
  } else {
    std::vector<std::size_t> all(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = i;
    chosen = draw(std::move(all), k, rng);
  }
  std::sort(chosen.begin(), chosen.end());

  Dataset out;
  out.entities = dataset.entities;
  out.split = dataset.split;
  out.pairs.reserve(chosen.size());
  for (std::size_t i : chosen) out.pairs.push_back(dataset.pairs[i]);
  return out;
}

namespace {

std::string residual_text(const std::vector<const Attribute*>& attrs) {
  std::vector<std::string> segs;
  for (const Attribute* a : attrs) {
    const std::string_view name = trim(a->name);
    const std::string_view value = trim(a->value);
    segs.emplace_back(value.empty() ? std::string(name) : std::string(name) + " " + std::string(value));
  }
  return join(segs, " ");
}

}  // namespace

std::vector<AlignedAttributePair> align_attributes(const CandidatePair& pair,
                                                   AlignmentPolicy policy) {
  if (policy != AlignmentPolicy::kNameMatch) throw Error("unsupported alignment policy");
  if (pair.left.attributes.empty() || pair.right.attributes.empty()) {
    throw Error("align_attributes: both entities need attributes");
  }

  // First occurrence of each normalized name on the right.
  std::unordered_map<std::string, std::size_t> right_first;
  for (std::size_t j = 0; j < pair.right.attributes.size(); ++j) {
    right_first.emplace(to_lower(trim(pair.right.attributes[j].name)), j);
  }

  std::vector<AlignedAttributePair> out;
  std::vector<bool> right_used(pair.right.attributes.size(), false);
  std::set<std::string> seen_left;
  std::vector<const Attribute*> left_rest;
  for (const Attribute& a : pair.left.attributes) {
    const std::string key = to_lower(trim(a.name));
    const bool first = seen_left.insert(key).second;
    const auto it = right_first.find(key);
    if (first && it != right_first.end() && key != kResidualKey) {
      right_used[it->second] = true;
      out.push_back({key, a, pair.right.attributes[it->second]});
    } else {
      left_rest.push_back(&a);
    }
  }
  std::vector<const Attribute*> right_rest;
  for (std::size_t j = 0; j < pair.right.attributes.size(); ++j) {
    if (!right_used[j]) right_rest.push_back(&pair.right.attributes[j]);
  }
  if (!left_rest.empty() && !right_rest.empty()) {
    const std::string key(kResidualKey);
    out.push_back({key, {key, residual_text(left_rest)}, {key, residual_text(right_rest)}});
  }
  return out;
}

}  // namespace promptattrib
