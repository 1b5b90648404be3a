#pragma once

#include <cstddef>
#include <span>
#include <string>

namespace promptattrib {

struct ScoredPrediction {
  double match_score = 0.0;
  int label = 0;
};

struct MetricsReport {
  double f1 = 0.0;
  double average_precision = 0.0;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

// F1 and accuracy from predicted labels; average precision from the ranking
// by descending match_score (stable, so ties keep input order). F1, precision,
// recall and AP are 0 when undefined.
MetricsReport evaluate(std::span<const ScoredPrediction> predictions, std::span<const int> gold);

// One-line JSON object with every MetricsReport field.
std::string metrics_json(const MetricsReport& m);

}  // namespace promptattrib
