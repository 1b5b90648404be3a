#pragma once

#include <cstdint>
#include <filesystem>

#include "promptattrib/corpus.hpp"

namespace promptattrib {

struct SyntheticOptions {
  std::uint64_t seed = 7;
  std::size_t train_pairs = 200;
  std::size_t valid_pairs = 100;
  std::size_t test_pairs = 100;
  double positive_rate = 0.5;
};

// Rule-labeled toy data. Every entity has name, brand and color. A matching
// pair repeats all three values; a non-matching pair replaces one to three of
// them with a different value from the same pool.
struct SyntheticData {
  EntityMap left;
  EntityMap right;
  std::vector<CandidatePair> train;
  std::vector<CandidatePair> valid;
  std::vector<CandidatePair> test;
};

SyntheticData generate_synthetic(const SyntheticOptions& options);

// Writes entities_left.jsonl, entities_right.jsonl, train.jsonl, valid.jsonl
// and test.jsonl into `dir`.
void write_synthetic(const SyntheticData& data, const std::filesystem::path& dir);

}  // namespace promptattrib
