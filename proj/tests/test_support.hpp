#pragma once

#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include "promptattrib/synthetic.hpp"
#include "promptattrib/train.hpp"

namespace testing {

inline std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("promptattrib_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline promptattrib::SyntheticData small_synthetic(std::size_t train_pairs = 12) {
  promptattrib::SyntheticOptions o;
  o.train_pairs = train_pairs;
  o.valid_pairs = 6;
  o.test_pairs = 6;
  return promptattrib::generate_synthetic(o);
}

inline promptattrib::Dataset train_dataset(const promptattrib::SyntheticData& d) {
  return promptattrib::make_dataset(d.left, d.right, d.train, promptattrib::Split::kTrain);
}

inline promptattrib::PromptAttribModel model_for(const promptattrib::SyntheticData& d,
                                                 const promptattrib::TrainConfig& cfg) {
  return promptattrib::PromptAttribModel(promptattrib::make_toy_backend_for({&d.left, &d.right}, cfg.seed),
                                         cfg);
}

}  // namespace testing
