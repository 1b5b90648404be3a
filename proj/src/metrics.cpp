#include "promptattrib/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

#include "json.hpp"
#include "promptattrib/error.hpp"

namespace promptattrib {

MetricsReport evaluate(std::span<const ScoredPrediction> predictions, std::span<const int> gold) {
  if (predictions.size() != gold.size()) {
    throw Error("prediction count " + std::to_string(predictions.size()) +
                " does not match gold count " + std::to_string(gold.size()));
  }
  MetricsReport m;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const double s = predictions[i].match_score;
    if (!(s >= 0.0 && s <= 1.0)) throw Error("match score outside [0, 1] at index " + std::to_string(i));
    const int y = gold[i];
    const int p = predictions[i].label;
    if ((y != 0 && y != 1) || (p != 0 && p != 1)) throw Error("labels must be 0 or 1");
    if (p == 1 && y == 1) ++m.tp;
    if (p == 1 && y == 0) ++m.fp;
    if (p == 0 && y == 1) ++m.fn;
    if (p == 0 && y == 0) ++m.tn;
  }
  if (m.tp + m.fp > 0) m.precision = static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp);
  if (m.tp + m.fn > 0) m.recall = static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn);
  if (m.precision + m.recall > 0.0) m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
  if (!gold.empty()) {
    m.accuracy = static_cast<double>(m.tp + m.tn) / static_cast<double>(gold.size());
  }

  std::vector<std::size_t> order(gold.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return predictions[a].match_score > predictions[b].match_score;
  });
  std::size_t hits = 0;
  double sum = 0.0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (gold[order[rank]] == 1) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(rank + 1);
    }
  }
  if (hits > 0) m.average_precision = sum / static_cast<double>(hits);
  return m;
}

std::string metrics_json(const MetricsReport& m) {
  nlohmann::ordered_json j;
  j["f1"] = m.f1;
  j["average_precision"] = m.average_precision;
  j["accuracy"] = m.accuracy;
  j["precision"] = m.precision;
  j["recall"] = m.recall;
  j["tp"] = m.tp;
  j["fp"] = m.fp;
  j["fn"] = m.fn;
  j["tn"] = m.tn;
  return j.dump();
}

}  // namespace promptattrib
