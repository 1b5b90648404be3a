#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace promptattrib {

struct Attribute {
  std::string name;
  std::string value;

  friend bool operator==(const Attribute&, const Attribute&) = default;
};

// A record with its attributes in ingestion order.
struct Entity {
  std::string id;
  std::vector<Attribute> attributes;

  friend bool operator==(const Entity&, const Entity&) = default;
};

struct CandidatePair {
  Entity left;
  Entity right;
  std::optional<int> label;  // 0 or 1 when present
};

struct AlignedAttributePair {
  std::string key;
  Attribute left;
  Attribute right;
};

enum class Split { kTrain, kValid, kTest };

using EntityMap = std::map<std::string, Entity>;

struct Dataset {
  EntityMap entities;
  std::vector<CandidatePair> pairs;
  Split split = Split::kTrain;
};

enum class AlignmentPolicy { kNameMatch };

inline constexpr std::string_view kResidualKey = "__rest__";

// Throws Error when an entity violates its invariants (empty id, no
// attributes, blank attribute name).
void validate_entity(const Entity& e);

// Parses one JSON-lines entity file. Each line is an object with "id" and
// "attributes", either a list of {"name","value"} objects or an
// order-preserving name -> value object. Lines without "attributes" treat
// every key other than "id" as an attribute. Blank lines are skipped.
EntityMap parse_entities(std::string_view text, std::string_view source = "<memory>");
EntityMap load_entities(const std::filesystem::path& path);

// Parses pair lines {"left_id", "right_id", optional "label"}. Left ids are
// resolved in `left`, right ids in `right`.
std::vector<CandidatePair> parse_pairs(std::string_view text, const EntityMap& left,
                                       const EntityMap& right,
                                       std::string_view source = "<memory>");
std::vector<CandidatePair> load_pairs(const std::filesystem::path& path, const EntityMap& left,
                                      const EntityMap& right);
std::vector<CandidatePair> load_pairs(const std::filesystem::path& path,
                                      const EntityMap& entities);

// Builds a dataset, merging both entity sources into one map. An id present
// in both sources with different content is rejected.
Dataset make_dataset(const EntityMap& left, const EntityMap& right,
                     std::vector<CandidatePair> pairs, Split split);

// Number of pairs kept by sample_low_resource: ceil(fraction * n), at least 1
// for non-empty input.
std::size_t low_resource_size(std::size_t n, double fraction);

// Seeded draw without replacement, stratified by label when both labels are
// present. Selected pairs keep their original relative order.
Dataset sample_low_resource(const Dataset& dataset, double fraction, std::uint64_t seed);

std::vector<AlignedAttributePair> align_attributes(
    const CandidatePair& pair, AlignmentPolicy policy = AlignmentPolicy::kNameMatch);

}  // namespace promptattrib
